import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from vicontrol.exact import (
    ALPHA_MAX,
    ExactParams,
    ExactSolution,
    default_params,
    l1_norm_of_control,
    make_exact,
)


@pytest.fixture(scope="module")
def ex():
    return make_exact(default_params())


def params(alpha=ALPHA_MAX, m=1.0, nu=1.0, eps=1.0, beta=None):
    if beta is None:
        beta = 0.5 * m * (68 * alpha + math.sqrt(2) * eps + 4)
    return ExactParams(alpha=alpha, beta=beta, m=m, nu=nu, eps=eps)


def test_default_parameters():
    p = default_params()
    assert p.alpha == pytest.approx(0.0208333, abs=1e-7)
    assert p.alpha == 11 / 528
    assert p.beta == pytest.approx(0.5 * (17 / 12 + math.sqrt(2) + 4), rel=1e-15)
    assert (p.m, p.nu, p.eps) == (1.0, 1.0, 1.0)


def test_origin_values(ex):
    assert ex.y(0.0) == 0.0
    assert ex.dy(0.0) == 0.0
    assert ex.p(0.0) == pytest.approx(ex.params.beta, rel=1e-15)


@pytest.mark.parametrize("side", ["left", "right"])
def test_c2_matching_at_half(ex, side):
    a = ex.params.alpha
    assert ex.y(0.5) == pytest.approx(a, rel=1e-13)
    assert ex.dy(0.5, side) == pytest.approx(8 * a, rel=1e-13)
    assert ex.d2y(0.5, side) == pytest.approx(48 * a, rel=1e-13)
    assert ex.dy(-0.5, side) == pytest.approx(-8 * a, rel=1e-13)
    assert ex.d2y(-0.5, side) == pytest.approx(48 * a, rel=1e-13)


def test_control_at_left_end(ex):
    assert ex.u(-1.0) == pytest.approx(216 * ex.params.alpha + 1, rel=1e-14)


def test_dirichlet(ex):
    for f in (ex.y, ex.p):
        assert f(-1.0) == pytest.approx(0.0, abs=1e-15)
        assert f(1.0) == pytest.approx(0.0, abs=1e-15)


def test_state_sign_and_zeros(ex):
    x = np.linspace(-1, 1, 4001)
    y = ex.y(x)
    assert np.all(y >= 0)
    inner = (np.abs(x) < 1) & (x != 0)
    assert np.all(y[inner] > 0)


def test_adjoint_sign(ex):
    x = np.linspace(-1, 1, 4001)
    p = ex.p(x)
    assert np.all(p >= -1e-15)
    near = np.abs(x) < 1e-3
    assert np.all(p[near] >= ex.params.beta - 1e-3 * ex.params.m - 1e-15)


def test_data_relations(ex):
    x = np.linspace(-0.99, 0.99, 97)
    b, m, nu = ex.params.beta, ex.params.m, ex.params.nu
    np.testing.assert_allclose(ex.y_d(x), ex.y(x) - 2 * (m + b), rtol=1e-15)
    np.testing.assert_allclose(ex.u_d(x), ex.p(x) / nu + ex.u(x), rtol=1e-15)
    np.testing.assert_array_equal(ex.q(x), 1.0)


def test_strong_residuals(ex):
    x = np.linspace(-1, 1, 1003)[1:-1]
    x = x[~np.isin(x, ex.breakpoints)]
    assert np.max(np.abs(-ex.d2y(x) + ex.q(x) - ex.u(x))) < 1e-12
    adj = -ex.d2p(x) - (ex.y(x) - ex.y_d(x))
    assert np.max(np.abs(adj)) < 1e-12
    assert np.max(np.abs(ex.p(x) + ex.params.nu * (ex.u(x) - ex.u_d(x)))) < 1e-12


def test_kink_identity(ex):
    jump = ex.dp(0.0, "right") - ex.dp(0.0, "left")
    assert jump == pytest.approx(2 * ex.params.m, rel=1e-15)
    assert jump == ex.multiplier_mass


def test_regularity_markers(ex):
    assert ex.dp(0.0, "right") != ex.dp(0.0, "left")
    assert ex.du(0.5, "right") != ex.du(0.5, "left")
    assert ex.d2y(0.5, "right") == pytest.approx(ex.d2y(0.5, "left"))


def test_derivatives_by_finite_differences(ex):
    x = np.array([-0.8, -0.3, 0.2, 0.7])
    d = 1e-6
    np.testing.assert_allclose(ex.dy(x), (ex.y(x + d) - ex.y(x - d)) / (2 * d), rtol=1e-7)
    np.testing.assert_allclose(ex.dp(x), (ex.p(x + d) - ex.p(x - d)) / (2 * d), rtol=1e-7)


def test_multiplier_pairing(ex):
    assert ex.multiplier_pairing(lambda x: 3.0 + x) == pytest.approx(2 * ex.params.m * 3.0)


def test_rejects_large_alpha():
    with pytest.raises(ValueError, match=r"alpha <= 11/528"):
        make_exact(params(alpha=0.05))


def test_rejects_small_beta():
    with pytest.raises(ValueError, match=r"beta >= m\*\(68\*alpha"):
        make_exact(params(beta=1.0))


def test_rejects_nonpositive():
    with pytest.raises(ValueError, match="nu must be positive"):
        make_exact(params(nu=0.0))


def test_l1_norm_closed_form():
    assert l1_norm_of_control(default_params()) == pytest.approx(187 / 132 + 2, rel=1e-15)
    assert l1_norm_of_control(params(alpha=1e-12)) == pytest.approx(2.0)


def test_l1_norm_against_quadrature():
    ex = make_exact(params(alpha=0.01))
    ref = sum(integrate.quad(lambda x: abs(ex.u(x)), a, b, epsabs=1e-14, epsrel=1e-13)[0]
              for a, b in [(-1, -0.5), (-0.5, 0.5), (0.5, 1)])
    assert l1_norm_of_control(ex.params) == pytest.approx(ref, abs=1e-12)


@given(st.floats(1e-4, ALPHA_MAX), st.floats(0.1, 5.0), st.floats(0.1, 3.0))
def test_control_nonnegative_for_admissible_alpha(alpha, m, eps):
    ex = make_exact(params(alpha=alpha, m=m, eps=eps))
    x = np.linspace(-1, 1, 401)
    assert np.all(ex.u(x) >= -1e-12)


def test_inconsistent_multiplier_mass_is_representable():
    ex = ExactSolution(params(m=2.0), multiplier_mass=2.0)
    jump = ex.dp(0.0, "right") - ex.dp(0.0, "left")
    assert jump - ex.multiplier_mass == pytest.approx(2.0)
