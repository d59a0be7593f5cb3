"""Command-line entry point.

Exit codes: 0 success, 1 invalid model, 2 usage/config error, 3 numerical
non-convergence, 4 io failure.  All randomness flows from the single config
seed (optionally overridden); worker counts never change results.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import fractional_pde, harness, kinetic_det, kinetic_mc, stable_limit
from .config import load_config
from .errors import (ConfigError, KinfracError, ModelError, NotConverged,
                     UsageError)
from .initialdata import CompactBump
from .sampling import substream


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")


def _out_dir(cfg, args):
    out = args.out or cfg.out_dir
    os.makedirs(out, exist_ok=True)
    return out


def _load(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.workers is not None:
        cfg.workers = args.workers
    return cfg


def _bump(cfg):
    exp = cfg.experiment
    return CompactBump(exp.get("bump_center", 2.5), exp.get("bump_width", 2.0),
                       exp.get("bump_amplitude", 1.0),
                       offset=cfg.model_params.bath_temperature)


def cmd_validate(args):
    cfg = _load(args)
    try:
        model = cfg.build_model()
    except ModelError as exc:
        report = {"valid": False, "error": type(exc).__name__,
                  "detail": str(exc)}
        print(json.dumps(report, indent=2, sort_keys=True))
        return 1
    c = model.levy_constants()
    residuals = {f"theta={th}": model.levy_symbol_check(th)
                 for th in (0.5, 1.0, 2.0, 5.0)}
    report = {
        "valid": True,
        "model_digest": cfg.digest(),
        "alpha_stable": c.alpha_stable,
        "c_beta": c.c_beta,
        "c_hat": c.c_hat,
        "tau_bar": c.tau_bar,
        "r_bar": c.r_bar,
        "symbol_residuals": residuals,
    }
    print(json.dumps(report, indent=2, sort_keys=True, default=float))
    return 0


def _probes(cfg):
    exp = cfg.experiment
    ys = exp.get("probes_y", (0.4, 0.8, 1.5, -0.6, 2.2))
    k = exp.get("probe_k", 0.2)
    t = exp.get("t", 0.5)
    return t, list(ys), k


def cmd_simulate(kind, args):
    cfg = _load(args)
    if args.samples is not None and args.samples <= 0:
        raise UsageError("--samples must be a positive integer")
    samples = args.samples or cfg.experiment.get("samples", 10_000)
    model = cfg.build_model()
    out = _out_dir(cfg, args)
    t, ys, k = _probes(cfg)
    bump = _bump(cfg)
    rows = []
    if kind == "kinetic":
        scale_n = args.scale_n or 1.0
        for j, y in enumerate(ys):
            est = kinetic_mc.estimate_W_N(t, y, k, bump, samples, model,
                                          cfg.seed + j, scale_n=scale_n,
                                          workers=cfg.workers)
            rows.append([t, y, k, est.mean, est.std_error, est.n_samples,
                         est.seed])
        path = os.path.join(out, "kinetic_estimates.csv")
        _write_csv(path, ["t", "y", "k", "mean", "stderr", "n", "seed"], rows)
    else:
        a = cfg.stable.get("a")
        config = stable_limit.RegularizedLevyConfig.from_model(
            model, a=a, jump_budget=cfg.stable.get("jump_budget", 1e4),
            t_end=t)
        for j, y in enumerate(ys):
            est = stable_limit.estimate_W_limit(t, y, bump, samples, config,
                                                model, cfg.seed + j,
                                                workers=cfg.workers)
            rows.append([t, y, "", est.mean, est.std_error, est.n_samples,
                         est.seed])
        path = os.path.join(out, "stable_estimates.csv")
        _write_csv(path, ["t", "y", "k", "mean", "stderr", "n", "seed"], rows)
    if args.record_paths:
        _record_paths(kind, cfg, model, bump, out, args)
    print(path)
    return 0


def _record_paths(kind, cfg, model, bump, out, args):
    t, ys, k = _probes(cfg)
    rng = substream(cfg.seed, 0xFFFF)
    rows = []
    if kind == "kinetic":
        for s in range(args.record_paths):
            path = kinetic_mc.simulate_path(ys[0], k, t, args.scale_n or 1.0,
                                            model, rng)
            for tt, kk, yy in zip(path.times, path.momenta, path.positions):
                rows.append([s, "jump", tt, yy, kk,
                             int(np.sign(kk) or 1), ""])
            for c in path.crossings:
                rows.append([s, "crossing", c.continuous_time, 0.0,
                             c.momentum_at_crossing, "", c.outcome])
        _write_csv(os.path.join(out, "kinetic_paths.csv"),
                   ["sample", "event_type", "t", "y", "k", "sign", "outcome"],
                   rows)
    else:
        a = cfg.stable.get("a", 0.01)
        config = stable_limit.RegularizedLevyConfig.from_model(model, a=a)
        for s in range(args.record_paths):
            path = stable_limit.simulate_eta(ys[0], t, config,
                                             model.interface, rng)
            crossings = {round(tc, 12): outcome
                         for _, tc, outcome in path.crossings}
            for tt, yb, ya in zip(path.jump_times, path.positions_before,
                                  path.positions_after):
                outcome = crossings.get(round(tt, 12), "")
                rows.append([s, tt, yb, ya, bool(outcome), outcome])
        _write_csv(os.path.join(out, "stable_paths.csv"),
                   ["sample", "t", "y_before", "y_after", "crossing",
                    "outcome"], rows)


def cmd_solve(kind, args):
    cfg = _load(args)
    model = cfg.build_model()
    out = _out_dir(cfg, args)
    T = model.params.bath_temperature
    bump = _bump(cfg)
    t, ys, k = _probes(cfg)
    if kind == "duhamel":
        d = cfg.duhamel
        grid = kinetic_det.PhaseGrid.build(d.get("y_max", 4.0),
                                           int(d.get("cells", 512)),
                                           k_panels=int(d.get("k_panels", 6)),
                                           k_points=int(d.get("k_points", 6)))
        trajectory = kinetic_det.duhamel_solve(
            lambda y, kk: bump.profile(y), t, model, grid,
            tolerance=float(d.get("tolerance", 1e-8)),
            n_steps=d.get("n_steps"), return_trajectory=True)
        rows = []
        tt, field = trajectory[-1]
        for i, kk in enumerate(grid.k_nodes):
            for j, yy in enumerate(grid.y_nodes):
                rows.append([yy, kk, field.values[i, j] + T])
        _write_csv(os.path.join(out, "duhamel_field.csv"),
                   ["y", "k", "value"], rows)
        res = kinetic_det.classical_residuals(trajectory, model)
        _write_json(os.path.join(out, "duhamel_report.json"), {
            "time": tt, "transport_residual": res["transport"],
            "interface_residual": res["interface"],
            "model_digest": cfg.digest(),
        })
        print(os.path.join(out, "duhamel_field.csv"))
        return 0
    d = cfg.pde
    grid = fractional_pde.SpatialGrid.build(d.get("y_max", 8.0),
                                            float(d.get("h", 1 / 256)))
    a = float(d.get("a", 2 * grid.h))
    op = fractional_pde.build_operator(grid, a, model, temperature=T,
                                       far_field=float(d.get("far_field", T)))
    times, fields = fractional_pde.solve_trajectory(
        bump(grid.nodes), float(d.get("t_end", t)), float(d.get("dt", 1e-3)),
        op, store_every=int(d.get("store_every", 1)))
    rows = [[tt, yy, vv] for tt, field in zip(times, fields)
            for yy, vv in zip(grid.nodes, field)]
    _write_csv(os.path.join(out, "pde_trajectory.csv"), ["t", "y", "value"],
               rows)
    report = fractional_pde.energy_audit(times, fields, op, model)
    _write_json(os.path.join(out, "pde_energy.json"), {
        "times": list(report.times), "l2": list(report.l2),
        "h_form": list(report.h_form),
        "balance_residual": list(report.balance_residual),
        "dissipation": report.dissipation, "monotone": report.monotone,
        "l1_slack": report.l1_slack, "model_digest": cfg.digest(),
    })
    print(os.path.join(out, "pde_trajectory.csv"))
    return 0


_EXPERIMENTS = {
    "stable_index_fit": lambda spec: harness.stable_index_fit(spec),
    "crossing_time_convergence":
        lambda spec: harness.crossing_time_convergence(spec),
    "macroscopic_jump": lambda spec: harness.macroscopic_jump_check(spec),
    "coupling_rate": lambda spec: harness.coupling_rate_check(spec),
    "oracle_equivalence": lambda spec: harness.oracle_equivalence(
        spec, samples=spec.samples),
    "three_way_agreement": lambda spec: harness.three_way_agreement(spec),
    "scaling_limit": lambda spec: harness.scaling_limit_experiment(spec),
}


def cmd_converge(args):
    cfg = _load(args)
    model = cfg.build_model()
    spec = cfg.build_spec(model)
    out = _out_dir(cfg, args)
    names = [args.only] if args.only else list(_EXPERIMENTS)
    if args.only and args.only not in _EXPERIMENTS:
        raise UsageError(f"unknown experiment {args.only!r}; "
                         f"choose from {sorted(_EXPERIMENTS)}")
    summary = {}
    ok = True
    for name in names:
        table = _EXPERIMENTS[name](spec)
        table.to_csv(os.path.join(out, f"{name}.csv"))
        table.to_json(os.path.join(out, f"{name}.json"))
        summary[name] = {"all_passed": table.all_passed,
                         "checks": table.checks}
        ok = ok and table.all_passed
    _write_json(os.path.join(out, "converge_summary.json"),
                {"experiments": summary, "all_passed": ok,
                 "seed": cfg.seed, "model_digest": cfg.digest()})
    print(os.path.join(out, "converge_summary.json"))
    return 0 if ok else 3


def cmd_crossings(args):
    cfg = _load(args)
    model = cfg.build_model()
    out = _out_dir(cfg, args)
    t, ys, k = _probes(cfg)
    samples = args.samples or cfg.experiment.get("samples", 10_000)
    scale_n = args.scale_n or max(cfg.experiment.get("n_ladder", [1000]))
    cs = kinetic_mc.crossing_statistics(
        ys[0], k, float(scale_n), 3, samples, model, cfg.seed,
        time_cap=cfg.experiment.get("time_cap", 16.0), workers=cfg.workers)
    rows = []
    for i in range(samples):
        for m in range(3):
            if np.isfinite(cs["s_chain"][i, m]):
                rows.append([i, m + 1, cs["s_chain"][i, m],
                             cs["s_cont"][i, m], cs["z_post"][i, m],
                             cs["k_cross"][i, m], cs["flight_len"][i, m]])
    path = os.path.join(out, "crossings.csv")
    _write_csv(path, ["sample", "m", "s_chain", "s_cont", "z_post",
                      "k_cross", "flight_len"], rows)
    print(path)
    return 0


def cmd_report(args):
    path = os.path.join(args.dir, "converge_summary.json")
    try:
        with open(path) as fh:
            summary = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path!r}: {exc}")
    ok = summary.get("all_passed", False)
    for name, block in sorted(summary.get("experiments", {}).items()):
        status = "PASS" if block["all_passed"] else "FAIL"
        print(f"[{status}] {name}")
        for check in block["checks"]:
            mark = "ok " if check["passed"] else "FAIL"
            detail = f"  {check['detail']}" if check.get("detail") else ""
            print(f"    {mark} {check['name']}{detail}")
    return 0 if ok else 3


def build_parser():
    parser = argparse.ArgumentParser(
        prog="kinfrac",
        description="Interface kinetic transport and its fractional limit: "
                    "cross-validating Monte Carlo and deterministic solvers.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="TOML run config")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--workers", type=int, default=None)
        p.add_argument("--out", default=None)

    p = sub.add_parser("validate", help="check the model and print constants")
    common(p)
    p.set_defaults(func=cmd_validate)

    for kind in ("kinetic", "stable"):
        p = sub.add_parser(f"simulate-{kind}",
                           help=f"Monte Carlo estimates ({kind} route)")
        common(p)
        p.add_argument("--samples", type=int, default=None)
        p.add_argument("--scale-n", dest="scale_n", type=float, default=None)
        p.add_argument("--record-paths", dest="record_paths", type=int,
                       default=0)
        p.set_defaults(func=lambda a, kind=kind: cmd_simulate(kind, a))

    for kind in ("duhamel", "pde"):
        p = sub.add_parser(f"solve-{kind}",
                           help=f"deterministic solve ({kind})")
        common(p)
        p.set_defaults(func=lambda a, kind=kind: cmd_solve(kind, a))

    p = sub.add_parser("converge", help="run the experiment battery")
    common(p)
    p.add_argument("--only", default=None)
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("crossings", help="dump crossing statistics")
    common(p)
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--scale-n", dest="scale_n", type=float, default=None)
    p.set_defaults(func=cmd_crossings)

    p = sub.add_parser("report", help="render a converge summary")
    p.add_argument("--dir", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ModelError as exc:
        print(f"invalid model: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except NotConverged as exc:
        print(f"not converged: {exc} (achieved {exc.achieved})",
              file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 4
    except KinfracError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
