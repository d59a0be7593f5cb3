import copy
import math

import numpy as np
import pytest

from kinfrac import fractional_pde as fp
from kinfrac import initialdata, model
from kinfrac.errors import SupportTouchesInterface, TruncationTooFine


@pytest.fixture(scope="module")
def grid():
    return fp.SpatialGrid.build(4.0, 1.0 / 64.0)


@pytest.fixture(scope="module")
def operator(default_model, grid):
    return fp.build_operator(grid, 2.0 / 64.0, default_model)


def _with_interface(base_model, p_plus, p_minus, g):
    """Clone a validated model with replaced interface limits (structural
    comparisons need parameter corners the validator rejects, e.g. g = 0)."""
    clone = copy.copy(base_model)
    clone.interface = model.InterfaceCoefficients.constant(p_plus, p_minus, g)
    return clone


class TestGrid:
    def test_symmetric_no_zero(self, grid):
        assert grid.n % 2 == 0
        assert np.all(grid.nodes[grid.mirror()] == -grid.nodes)
        assert np.min(np.abs(grid.nodes)) == pytest.approx(grid.h / 2)

    def test_interp_same_side(self, grid):
        vals = np.where(grid.nodes > 0, 1.0, -1.0)
        out = grid.interp(vals, np.array([0.001, -0.001, 3.0, -3.0, 9.0]),
                          far_field=0.5)
        assert out[0] == pytest.approx(1.0)
        assert out[1] == pytest.approx(-1.0)
        assert out[4] == pytest.approx(0.5)


class TestOperator:
    def test_truncation_guard(self, default_model, grid):
        with pytest.raises(TruncationTooFine):
            fp.build_operator(grid, grid.h, default_model)

    def test_equilibrium_annihilation(self, default_model, grid, operator):
        T = default_model.params.bath_temperature
        out = operator.apply(np.full(grid.n, T))
        assert np.max(np.abs(out)) < 1e-12

    def test_sign_structure(self, operator):
        off = operator.matrix - np.diag(np.diag(operator.matrix))
        assert np.min(off) >= 0.0
        assert np.max(np.diag(operator.matrix)) < 0.0

    def test_row_sums_equal_minus_absorption(self, default_model, grid):
        op = fp.build_operator(grid, 2.0 / 64.0, default_model,
                               temperature=0.0, far_field=0.0)
        # for T = 0 each row returns exactly minus its killing mass on the
        # constant-1 field (tails included)
        ones = np.ones(grid.n)
        c = default_model.levy_constants()
        coeffs = default_model.interface
        y = grid.nodes
        opp_tail = fp._tail_mass(grid.L + np.abs(y), op.a, c.c_beta,
                                 c.alpha_stable)
        same_tail = fp._tail_mass(grid.L - np.abs(y), op.a, c.c_beta,
                                  c.alpha_stable)
        loss = (coeffs.g_0 * (op.absorb_mass / coeffs.g_0)
                + same_tail + (coeffs.p_plus_0 + coeffs.p_minus_0) * opp_tail)
        expect = -(op.absorb_mass + same_tail
                   + (1.0 - coeffs.g_0) * opp_tail + 0.0 * loss)
        # absorb_mass already includes the opposite tail's killing share
        got = op.matrix @ ones
        assert np.max(np.abs(got - (-(op.absorb_mass + same_tail
                                      + (coeffs.p_plus_0 + coeffs.p_minus_0)
                                      * opp_tail)))) < 1e-12

    def test_pure_transmission_is_plain_truncated_laplacian(self,
                                                            default_model,
                                                            grid):
        free = _with_interface(default_model, 1.0, 0.0, 0.0)
        op_free = fp.build_operator(grid, 2.0 / 64.0, free, temperature=0.0,
                                    far_field=0.0)
        # reference: assemble with no interface splitting at all
        c = default_model.levy_constants()
        q = fp._kernel_lags(grid, 2.0 / 64.0, c.c_beta, c.alpha_stable) * grid.h
        n = grid.n
        ref = np.zeros((n, n))
        idx = np.arange(n)
        dist = np.abs(idx[:, None] - idx[None, :])
        ref = q[dist]
        np.fill_diagonal(ref, 0.0)
        row = ref.sum(axis=1)
        tails = (fp._tail_mass(grid.L - np.abs(grid.nodes), 2.0 / 64.0,
                               c.c_beta, c.alpha_stable)
                 + fp._tail_mass(grid.L + np.abs(grid.nodes), 2.0 / 64.0,
                                 c.c_beta, c.alpha_stable))
        ref[idx, idx] = -(row + tails)
        assert np.max(np.abs(op_free.matrix - ref)) < 1e-12


class TestStep:
    def test_equilibrium_fixed_point(self, default_model, grid, operator):
        T = default_model.params.bath_temperature
        w = np.full(grid.n, T)
        for dt in (1e-3, 1e-2, 1e-1):
            w2 = fp.step(w, dt, operator)
            assert np.max(np.abs(w2 - T)) < 1e-12

    def test_maximum_principle(self, default_model, grid, operator, rng):
        lo, hi = 0.3, 1.7   # bath temperature 1.0 sits inside
        w = rng.uniform(lo, hi, grid.n)
        for _ in range(20):
            w = fp.step(w, 2e-3, operator)
            assert w.min() >= lo - 1e-10
            assert w.max() <= hi + 1e-10

    def test_first_order_in_time(self, default_model, grid):
        op = fp.build_operator(grid, 2.0 / 64.0, default_model)
        w0 = initialdata.CompactBump(1.5, 1.0, 1.0, offset=1.0)(grid.nodes)
        t_end = 0.04
        sols = {}
        for dt in (4e-3, 2e-3, 1e-3):
            _, fields = fp.solve_trajectory(w0, t_end, dt, op,
                                            store_every=1 << 30)
            sols[dt] = fields[-1]
        e1 = np.max(np.abs(sols[4e-3] - sols[1e-3]))
        e2 = np.max(np.abs(sols[2e-3] - sols[1e-3]))
        # halving dt should roughly halve the defect (backward Euler is
        # first order); the Richardson ratio e1/e2 approaches 3 as dt -> 0
        assert 2.0 < e1 / e2 < 4.5

    def test_comparison_principle(self, default_model, grid, operator):
        w_small = initialdata.CompactBump(1.5, 1.0, 0.5, offset=1.0)(grid.nodes)
        w_big = initialdata.CompactBump(1.5, 1.0, 0.9, offset=1.0)(grid.nodes)
        for _ in range(30):
            w_small = fp.step(w_small, 2e-3, operator)
            w_big = fp.step(w_big, 2e-3, operator)
            assert np.all(w_big - w_small >= -1e-12)


class TestEnergyForm:
    def test_zero_field(self, default_model, grid):
        assert fp.h_norm(np.zeros(grid.n), grid, 2.0 / 64.0,
                         default_model) == 0.0

    def test_matches_dirichlet_form(self, default_model, grid, rng):
        op = fp.build_operator(grid, 2.0 / 64.0, default_model,
                               temperature=0.0, far_field=0.0)
        for _ in range(5):
            w = rng.standard_normal(grid.n) * np.exp(-0.5 * np.abs(grid.nodes))
            h = fp.h_norm(w, grid, 2.0 / 64.0, default_model)
            e = op.dirichlet_form(w)
            assert h == pytest.approx(2.0 * e, rel=1e-12)

    def test_domination_by_absorption(self, default_model, grid, rng):
        # the transmitted/reflected cross terms are controlled by the
        # absorption term: (u - v)^2 <= 2 u^2 + 2 v^2 pairwise
        coeffs = default_model.interface
        bound_factor = 2.0 * (coeffs.p_plus_0 + 2.0 * coeffs.p_minus_0) \
            / coeffs.g_0
        for _ in range(5):
            w = rng.standard_normal(grid.n) * np.exp(-0.4 * np.abs(grid.nodes))
            parts = fp.h_norm_parts(w, grid, 2.0 / 64.0, default_model)
            assert parts["cross"] <= bound_factor * parts["absorption"] + 1e-12

    def test_even_field_pairing(self, default_model, grid):
        # for even fields the mirrored difference equals the transmitted
        # difference, so the cross term collapses to (p+ + p-) times the
        # transmitted quadratic form
        w = np.exp(-np.abs(np.abs(grid.nodes) - 1.2))
        coeffs = default_model.interface
        parts = fp.h_norm_parts(w, grid, 2.0 / 64.0, default_model)
        free = _with_interface(default_model, coeffs.p_plus_0
                               + coeffs.p_minus_0, 0.0, coeffs.g_0)
        parts_free = fp.h_norm_parts(w, grid, 2.0 / 64.0, free)
        assert parts["cross"] == pytest.approx(parts_free["cross"], rel=1e-12)

    def test_a_zero_variant_close_to_small_a(self, default_model, grid):
        w = initialdata.CompactBump(1.2, 0.8, 1.0)(grid.nodes)
        h_small = fp.h_norm(w, grid, 2.0 / 64.0, default_model)
        h_zero = fp.h_norm(w, grid, 0.0, default_model)
        assert h_zero > h_small          # more pairs counted
        assert abs(h_zero - h_small) < 0.35 * h_small


class TestEnergyAudit:
    def test_exact_discrete_balance(self, cold_model):
        grid = fp.SpatialGrid.build(4.0, 1.0 / 128.0)
        op = fp.build_operator(grid, 2.0 / 128.0, cold_model,
                               temperature=0.0, far_field=0.0)
        w0 = np.exp(-(grid.nodes - 1.0) ** 2 / 0.25)
        times, fields = fp.solve_trajectory(w0, 0.03, 1e-3, op)
        rep = fp.energy_audit(times, fields, op, cold_model)
        assert np.max(np.abs(rep.balance_residual)) < 1e-12 * rep.l2[0]
        assert rep.monotone

    def test_balance_with_temperature_and_matching_far_field(self,
                                                             default_model):
        grid = fp.SpatialGrid.build(4.0, 1.0 / 64.0)
        op = fp.build_operator(grid, 2.0 / 64.0, default_model)
        w0 = initialdata.CompactBump(1.5, 1.0, 1.0, offset=1.0)(grid.nodes)
        times, fields = fp.solve_trajectory(w0, 0.03, 1e-3, op)
        rep = fp.energy_audit(times, fields, op, default_model)
        assert np.max(np.abs(rep.balance_residual)) < 1e-12 * max(rep.l2[0], 1)
        assert rep.monotone

    def test_interface_free_reduction(self, default_model):
        # transmission-only interface: the energy identity reduces to the
        # plain truncated-kernel heat decay
        grid = fp.SpatialGrid.build(4.0, 1.0 / 64.0)
        free = _with_interface(default_model, 1.0, 0.0, 0.0)
        op = fp.build_operator(grid, 2.0 / 64.0, free, temperature=0.0,
                               far_field=0.0)
        w0 = np.exp(-(grid.nodes) ** 2 / 0.5)
        times, fields = fp.solve_trajectory(w0, 0.02, 1e-3, op)
        rep = fp.energy_audit(times, fields, op, free)
        assert np.max(np.abs(rep.balance_residual)) < 1e-12 * rep.l2[0]

    def test_l1_inequality_slack(self, default_model):
        grid = fp.SpatialGrid.build(4.0, 1.0 / 64.0)
        op = fp.build_operator(grid, 2.0 / 64.0, default_model,
                               far_field=0.0)
        w0 = initialdata.CompactBump(1.5, 1.0, 1.0)(grid.nodes)
        times, fields = fp.solve_trajectory(w0, 0.1, 2e-3, op)
        rep = fp.energy_audit(times, fields, op, default_model)
        assert rep.l1_slack is not None
        assert rep.l1_slack > 0.0


class TestWeakResidual:
    def _setup(self, m, h=1.0 / 64.0, t_end=0.1, dt=2e-3, a=None):
        grid = fp.SpatialGrid.build(4.0, h)
        a = a or 2.0 * h
        op = fp.build_operator(grid, a, m, temperature=0.0, far_field=0.0)
        w0 = initialdata.CompactBump(1.2, 0.8, 1.0)(grid.nodes)
        times, fields = fp.solve_trajectory(w0, t_end, dt, op)
        return grid, times, fields

    def test_support_guard(self, cold_model):
        grid, times, fields = self._setup(cold_model)
        bump = initialdata.CompactBump(0.02, 0.01, 1.0)
        with pytest.raises(SupportTouchesInterface):
            fp.weak_residual(times, fields, bump.profile, bump.d2_profile,
                             lambda t: 1.0, lambda t: 0.0, grid, cold_model,
                             support=(0.01, 0.03))

    def test_equilibrium_cancels(self, default_model):
        grid = fp.SpatialGrid.build(4.0, 1.0 / 64.0)
        T = default_model.params.bath_temperature
        times = np.linspace(0.0, 0.1, 11)
        fields = np.tile(np.full(grid.n, T), (11, 1))
        bump = initialdata.CompactBump(1.5, 0.8, 1.0)
        res = fp.weak_residual(times, fields, bump.profile, bump.d2_profile,
                               lambda t: 1.0 + 0.3 * t,
                               lambda t: 0.3 + 0.0 * t,
                               grid, default_model, temperature=T,
                               far_field=T, support=(0.7, 0.8))
        assert abs(res) < 1e-6

    def test_negative_control(self, cold_model):
        grid, times, fields = self._setup(cold_model, h=1.0 / 128.0, dt=1e-3)
        bump = initialdata.CompactBump(1.4, 0.9, 1.0)
        kwargs = dict(grid=grid, model=cold_model, temperature=0.0,
                      far_field=0.0, support=(0.5, 0.9))
        res = fp.weak_residual(times, fields, bump.profile, bump.d2_profile,
                               lambda t: 1.0 + 0.5 * t, lambda t: 0.5,
                               **kwargs)
        # a time-reversed trajectory violates the formulation grossly
        res_rev = fp.weak_residual(times, fields[::-1].copy(), bump.profile,
                                   bump.d2_profile, lambda t: 1.0 + 0.5 * t,
                                   lambda t: 0.5, **kwargs)
        assert abs(res_rev) > 10.0 * abs(res)
        # a time shift is a weaker corruption but still detectable
        shifted = fields.copy()
        shifted[10:] = fields[:-10]
        res_shift = fp.weak_residual(times, shifted, bump.profile,
                                     bump.d2_profile, lambda t: 1.0 + 0.5 * t,
                                     lambda t: 0.5, **kwargs)
        assert abs(res_shift) > 1.5 * abs(res)


class TestBoundaryTrace:
    def test_monotone_approach(self, default_model):
        grid = fp.SpatialGrid.build(4.0, 1.0 / 128.0)
        op = fp.build_operator(grid, 2.0 / 128.0, default_model)
        w0 = initialdata.CompactBump(2.0, 1.0, 1.0, offset=1.0)(grid.nodes)
        _, fields = fp.solve_trajectory(w0, 0.5, 2e-3, op,
                                        store_every=1 << 30)
        trace = fp.boundary_trace(fields[-1], grid,
                                  default_model.params.bath_temperature)
        dev = trace["deviation_pos"]
        assert np.all(np.diff(dev) > 0.0)   # |W - T| grows away from 0

    def test_t0_trace_is_initial_data(self, default_model):
        grid = fp.SpatialGrid.build(4.0, 1.0 / 64.0)
        w0 = initialdata.CompactBump(2.0, 1.0, 1.0, offset=1.0)(grid.nodes)
        trace = fp.boundary_trace(w0, grid, 1.0)
        assert np.max(trace["deviation_pos"]) == 0.0  # bump far from 0
