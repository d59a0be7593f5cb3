"""Strict TOML run configuration.

Sectioned key-value files (TOML: comments allowed, '.' decimals).  Parsing is
strict: unknown keys anywhere fail fast with the offending key path and, when
the key text can be located, its line number.  Interface coefficients accept
either constants, tables over a frequency grid (linear interpolation), or a
Holder-perturbed family for coupling experiments.
"""

from __future__ import annotations

import dataclasses
import hashlib

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

import numpy as np

from .errors import ConfigError
from .harness import ExperimentSpec
from .model import InterfaceCoefficients, ModelParams, validate

_SCHEMA = {
    "seed": None,
    "workers": None,
    "model": {
        "beta": None, "gamma0": None, "r0": None, "omega0p": None,
        "bath_temperature": None, "kernel_form": None, "mixture_weight": None,
        "interface": {
            "kind": None, "p_plus": None, "p_minus": None, "g": None,
            "k": None, "amplitude": None, "exponent": None,
            "holder_c0": None, "holder_gamma": None,
        },
    },
    "solver": {
        "duhamel": {"y_max": None, "cells": None, "k_panels": None,
                    "k_points": None, "n_steps": None, "tolerance": None},
        "pde": {"y_max": None, "h": None, "dt": None, "a": None,
                "t_end": None, "store_every": None, "far_field": None},
    },
    "stable": {"a": None, "jump_budget": None},
    "experiment": {
        "n_ladder": None, "samples": None, "t": None, "probes_y": None,
        "probe_k": None, "bump_center": None, "bump_width": None,
        "bump_amplitude": None, "reference_a": None, "time_cap": None,
    },
    "io": {"out_dir": None},
}

_REQUIRED_SECTIONS = ("model",)


def _check_keys(data, schema, path, raw_text):
    for key, value in data.items():
        here = f"{path}.{key}" if path else key
        if key not in schema:
            line = _find_line(raw_text, key)
            where = f" (line {line})" if line else ""
            raise ConfigError(f"unknown key {here!r}{where}")
        sub = schema[key]
        if isinstance(value, dict):
            if not isinstance(sub, dict):
                raise ConfigError(f"{here!r} should be a value, not a section")
            _check_keys(value, sub, here, raw_text)
        elif isinstance(sub, dict):
            raise ConfigError(f"{here!r} should be a section, not a value")


def _find_line(text, key):
    for i, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0]
        if stripped.strip().startswith(key):
            return i
    return None


@dataclasses.dataclass
class RunConfig:
    """Parsed, schema-checked run configuration."""

    seed: int
    workers: int
    model_params: ModelParams
    duhamel: dict
    pde: dict
    stable: dict
    experiment: dict
    out_dir: str
    raw: dict

    def build_model(self):
        return validate(self.model_params)

    def build_spec(self, model=None):
        model = model or self.build_model()
        exp = dict(self.experiment)
        kwargs = {
            "model": model,
            "seed": self.seed,
            "workers": self.workers,
            "pde_h": self.pde.get("h", 1.0 / 256.0),
            "pde_dt": self.pde.get("dt", 1e-3),
            "pde_y_max": self.pde.get("y_max", 8.0),
            "duhamel_cells": self.duhamel.get("cells", 512),
            "duhamel_y_max": self.duhamel.get("y_max", 4.0),
        }
        if "a" in self.stable:
            kwargs["stable_a"] = float(self.stable["a"])
        for name in ("samples", "t", "probe_k", "bump_center", "bump_width",
                     "bump_amplitude", "reference_a", "time_cap"):
            if name in exp:
                kwargs[name] = exp[name]
        if "n_ladder" in exp:
            kwargs["n_ladder"] = tuple(int(n) for n in exp["n_ladder"])
        if "probes_y" in exp:
            kwargs["probes_y"] = tuple(float(y) for y in exp["probes_y"])
        return ExperimentSpec(**kwargs)

    def digest(self):
        """Stable hash of the model section, for artifact provenance."""
        p = self.model_params
        items = [p.beta, p.gamma0, p.r0, p.omega0p, p.bath_temperature,
                 p.kernel_form, p.mixture_weight, p.interface.kind,
                 repr(p.interface._data), p.interface.holder_c0,
                 p.interface.holder_gamma]
        return hashlib.sha256(repr(items).encode()).hexdigest()[:16]


def _build_interface(section):
    kind = section.get("kind")
    if kind is None:
        kind = "table" if "k" in section else "constant"
    holder = {k: section[k] for k in ("holder_c0", "holder_gamma")
              if k in section}
    if kind == "constant":
        try:
            coeffs = InterfaceCoefficients.constant(
                section["p_plus"], section["p_minus"], section["g"])
        except KeyError as exc:
            raise ConfigError(f"interface constants need p_plus/p_minus/g "
                              f"(missing {exc})")
        if holder:
            coeffs.holder_c0 = float(holder.get("holder_c0", 0.0))
            coeffs.holder_gamma = float(holder.get("holder_gamma", 1.0))
        return coeffs
    if kind == "table":
        for key in ("k", "p_plus", "p_minus", "g"):
            if key not in section:
                raise ConfigError(f"interface tables need key {key!r}")
        return InterfaceCoefficients.from_tables(
            np.asarray(section["k"], dtype=float),
            np.asarray(section["p_plus"], dtype=float),
            np.asarray(section["p_minus"], dtype=float),
            np.asarray(section["g"], dtype=float),
            holder_c0=holder.get("holder_c0"),
            holder_gamma=holder.get("holder_gamma", 1.0))
    if kind == "perturbed":
        for key in ("p_plus", "p_minus", "g", "amplitude"):
            if key not in section:
                raise ConfigError(f"perturbed interface needs key {key!r}")
        return InterfaceCoefficients.perturbed(
            section["p_plus"], section["p_minus"], section["g"],
            section["amplitude"], section.get("exponent", 1.0))
    raise ConfigError(f"unknown interface kind {kind!r}")


def load_config(path):
    """Read and strictly validate a TOML run configuration."""
    try:
        with open(path, "rb") as fh:
            raw_bytes = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}")
    text = raw_bytes.decode("utf-8", errors="replace")
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config parse error in {path!r}: {exc}")
    _check_keys(data, _SCHEMA, "", text)
    for section in _REQUIRED_SECTIONS:
        if section not in data:
            raise ConfigError(f"missing required section [{section}]")
    msec = data["model"]
    for key in ("beta", "gamma0", "r0", "omega0p"):
        if key not in msec:
            line = _find_line(text, "[model]")
            raise ConfigError(f"[model] is missing key {key!r}"
                              + (f" (section at line {line})" if line else ""))
    if "interface" not in msec:
        raise ConfigError("missing required section [model.interface]")
    params = ModelParams(
        beta=float(msec["beta"]),
        gamma0=float(msec["gamma0"]),
        r0=float(msec["r0"]),
        omega0p=float(msec["omega0p"]),
        interface=_build_interface(msec["interface"]),
        bath_temperature=float(msec.get("bath_temperature", 0.0)),
        kernel_form=msec.get("kernel_form", "product"),
        mixture_weight=float(msec.get("mixture_weight", 0.25)),
    )
    solver = data.get("solver", {})
    return RunConfig(
        seed=int(data.get("seed", 20240801)),
        workers=int(data.get("workers", 1)),
        model_params=params,
        duhamel=dict(solver.get("duhamel", {})),
        pde=dict(solver.get("pde", {})),
        stable=dict(data.get("stable", {})),
        experiment=dict(data.get("experiment", {})),
        out_dir=str(data.get("io", {}).get("out_dir", "out")),
        raw=data,
    )
