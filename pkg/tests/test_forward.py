import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import optimize

from vicontrol.exact import default_params, make_exact
from vicontrol.fem_core import GridFunction, Mesh, error_norm, function_l2_distance
from vicontrol.forward import (
    NewtonConfig,
    NonConvergence,
    beta_gamma,
    beta_gamma_prime,
    beta_gamma_second,
    control_load,
    geometric_gammas,
    solve_state,
    state_path,
)

gammas = st.floats(1e-3, 1e12)
args = st.floats(-1e3, 1e3)


class TestRegularization:
    def test_values(self):
        assert beta_gamma(0.0, 7.0) == 0.0
        assert beta_gamma(1 / 3.0, 3.0) == pytest.approx(0.5, rel=1e-15)
        assert abs(beta_gamma(1e10, 1.0) - 1.0) < 1e-9

    def test_prime_at_origin(self):
        assert beta_gamma_prime(0.0, 5.0) == pytest.approx(10 / math.pi, rel=1e-15)

    def test_prime_far_field(self):
        g, s = 1e20, 0.01
        v = beta_gamma_prime(s, g)
        assert np.isfinite(v)
        assert v == pytest.approx(2 / (math.pi * g * s * s), rel=1e-6)

    def test_second_far_field_finite(self):
        v = beta_gamma_second(np.array([1e-3, -1.0]), 1e20)
        assert np.all(np.isfinite(v))
        assert v[0] < 0 < v[1]

    @given(args, gammas)
    def test_prime_even(self, s, g):
        assert beta_gamma_prime(-s, g) == beta_gamma_prime(s, g)

    @given(args, gammas)
    def test_bounded_and_odd(self, s, g):
        v = beta_gamma(s, g)
        assert abs(v) <= 1.0
        assert beta_gamma(-s, g) == -v
        if abs(g * s) < 1e15:
            assert abs(v) < 1.0

    @given(st.floats(-10, 10), st.floats(1e-6, 1.0), st.floats(1e-2, 1e6))
    def test_increasing(self, s, ds, g):
        assert beta_gamma(s + ds, g) >= beta_gamma(s, g)

    @pytest.mark.parametrize("g", [0.5, 3.0, 1e4, 1e9])
    def test_derivatives_by_differences(self, g):
        s = np.array([-2.0, -0.3, 0.0, 0.4, 1.5]) / g
        d = 1e-6 / g
        fd1 = (beta_gamma(s + d, g) - beta_gamma(s - d, g)) / (2 * d)
        fd2 = (beta_gamma_prime(s + d, g) - beta_gamma_prime(s - d, g)) / (2 * d)
        np.testing.assert_allclose(beta_gamma_prime(s, g), fd1, rtol=1e-6)
        np.testing.assert_allclose(beta_gamma_second(s, g), fd2, rtol=1e-5, atol=1e-6 * g * g)

    def test_safe_branch_continuous(self):
        g = 1e10
        s = np.array([1e8 / g * (1 - 1e-12), 1e8 / g * (1 + 1e-12)])
        p = beta_gamma_prime(s, g)
        q = beta_gamma_second(s, g)
        assert p[0] == pytest.approx(p[1], rel=1e-9)
        assert q[0] == pytest.approx(q[1], rel=1e-9)


class TestConfig:
    @pytest.mark.parametrize("kw", [{"abs_tol": 0.0}, {"max_iter": 0}, {"damping": 1.0},
                                    {"max_backtracks": -1}, {"quadrature_points": 0}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            NewtonConfig(**kw)

    def test_default_tolerance_scales(self):
        cfg = NewtonConfig()
        assert cfg.tolerance(0.0) == 1e-11
        assert cfg.tolerance(9.0) == pytest.approx(1e-10)
        assert NewtonConfig(abs_tol=1e-6).tolerance(9.0) == 1e-6


def continuation(top, factor=2.0):
    return geometric_gammas(1.0, top, factor)


class TestSolveState:
    def test_zero_control(self):
        y, rep = solve_state(0.0, 10.0, Mesh(20))
        assert rep.converged and rep.iterations <= 1
        assert not np.any(y.values)

    def test_converged_implies_tolerance(self):
        _, rep = solve_state(lambda x: np.cos(x), 50.0, Mesh(40))
        assert rep.converged and rep.final_residual <= rep.tolerance

    def test_small_control_gives_tiny_state(self):
        y, reps = state_path(0.5, continuation(1e12), Mesh(400))
        assert all(r.converged for r in reps)
        assert np.max(np.abs(y.values)) <= 1e-3

    def test_dense_oracle(self):
        # independent residual: dense stiffness, midpoint rule for beta, exact mass pairing
        m, g = Mesh(12), 4.0
        u = m.interpolate(lambda x: 3 * np.cos(2 * x) + x)
        h, n = m.h, m.n_interior
        A = (np.diag(np.full(n, 2.0)) - np.diag(np.ones(n - 1), 1) - np.diag(np.ones(n - 1), -1)) / h
        Mfull = np.zeros((n, n + 2))
        for i in range(n):
            Mfull[i, i:i + 3] = [h / 6, 2 * h / 3, h / 6]
        rhs = Mfull @ u.values

        def res(z):
            full = np.r_[0.0, z, 0.0]
            mid = beta_gamma(0.5 * (full[:-1] + full[1:]), g) * h / 2
            return A @ z + mid[:-1] + mid[1:] - rhs

        ref = optimize.root(res, np.zeros(n), tol=1e-14).x
        y, _ = solve_state(u, g, m)
        np.testing.assert_allclose(y.interior, ref, atol=1e-11)

    def test_monotone_in_constant_control(self):
        m = Mesh(100)
        gam = continuation(1e6)
        ys = [state_path(t, gam, m)[0].values for t in (0.0, 0.5, 1.0, 2.0)]
        for lo, hi in zip(ys, ys[1:]):
            assert np.all(hi >= lo - 1e-14)

    def test_energy_inequality(self):
        m = Mesh(60)
        u1 = m.interpolate(lambda x: 2 + np.sin(3 * x))
        u2 = m.interpolate(lambda x: 1 + 0.5 * np.cos(x))
        y1, _ = solve_state(u1, 100.0, m)
        y2, _ = solve_state(u2, 100.0, m)
        d = control_load(m, GridFunction(m, u1.values - u2.values))
        assert np.dot(y1.interior - y2.interior, d) >= 0

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.sampled_from([40, 160]))
    def test_lipschitz_in_l2(self, seed, n):
        # monotone beta and the Dirichlet Poincare constant give K = 4/pi^2 on (-1, 1)
        rng = np.random.default_rng(seed)
        m = Mesh(n)
        c = rng.normal(size=(2, 4))
        u1 = m.interpolate(lambda x: sum(c[0, k] * np.cos(k * x) for k in range(4)))
        u2 = m.interpolate(lambda x: sum(c[1, k] * np.sin((k + 1) * x) for k in range(4)))
        g = 10.0
        y1, _ = solve_state(u1, g, m)
        y2, _ = solve_state(u2, g, m)
        dy = error_norm(y1, y2)
        du = error_norm(GridFunction(m, u1.values - u2.values), lambda x: np.zeros_like(x))
        assert dy <= 4 / math.pi**2 * du * (1 + 1e-10)

    def test_symmetric_for_even_control(self):
        ex = make_exact(default_params())
        y, _ = state_path(ex.u, continuation(1e8), Mesh(200), breakpoints=ex.breakpoints)
        assert np.max(np.abs(y.values - y.values[::-1])) <= 1e-12

    def test_nonconvergence_reported(self):
        with pytest.raises(NonConvergence) as info:
            solve_state(lambda x: 5 + 0 * x, 1e12, Mesh(200), NewtonConfig(max_iter=1))
        assert info.value.gamma == 1e12
        assert not info.value.report.converged

    def test_rounding_floor_on_coarse_mesh(self):
        # a dip narrower than the mesh makes the state oscillate about zero; at
        # gamma = 1e12 the residual cannot be resolved below the rounding level
        def u(x):
            return 1.0 - 2.35 * np.maximum(0.0, 1.0 - np.abs(x + 0.0157) / 0.0343)

        y, reps = state_path(u, continuation(1e12, 4.0), Mesh(20), breakpoints=(-0.05, -0.0157, 0.0186))
        assert all(r.converged and r.final_residual <= r.tolerance for r in reps)
        assert reps[-1].tolerance >= NewtonConfig().tolerance(0.0)

    def test_rejects_bad_gamma(self):
        with pytest.raises(ValueError):
            solve_state(1.0, 0.0, Mesh(4))

    def test_warm_start_is_cheaper(self):
        m = Mesh(200)
        cold_y, cold = solve_state(3.0, 100.0, m)
        _, warm = solve_state(3.0, 150.0, m, initial=cold_y)
        _, cold2 = solve_state(3.0, 150.0, m)
        assert warm.iterations <= cold2.iterations


class TestRates:
    def test_regularization_rate(self):
        ex = make_exact(default_params())
        m = Mesh(800)
        bps = ex.breakpoints
        ref, _ = state_path(ex.u, continuation(1e12), m, breakpoints=bps)
        gs = np.logspace(1, 4, 13)
        y, errs = None, []
        for g in gs:
            y, _ = solve_state(ex.u, g, m, initial=y, breakpoints=bps)
            errs.append(function_l2_distance(m, y, ref))
        errs = np.array(errs)
        assert np.all(errs[1:] <= errs[:-1])
        assert np.polyfit(np.log(gs), np.log(errs), 1)[0] <= -1 / 3

    def test_geometric_gammas(self):
        g = geometric_gammas(1.0, 10.0, 1.5)
        assert g[0] == 1.0 and g[-1] == 10.0
        assert all(a < b for a, b in zip(g, g[1:]))
        with pytest.raises(ValueError):
            geometric_gammas(1.0, 10.0, 1.0)
