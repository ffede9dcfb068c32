"""Closed-form locally optimal solution on (-1, 1) with a kinked adjoint.

The state is C^2 and vanishes to fourth order at x = 0; the adjoint has a kink
there, carried by the multiplier ``multiplier_mass * delta_0``.  Data ``y_d``
and ``u_d`` are chosen so that the optimality system holds exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numpy.polynomial import Polynomial as P

ALPHA_MAX = 11.0 / 528.0
BREAKPOINTS = (-0.5, 0.0, 0.5)


class PiecewisePolynomial:
    """Polynomials on the cells cut out of [-1, 1] by ``breaks``.

    At a breakpoint ``side='right'`` evaluates the piece starting there and
    ``side='left'`` the piece ending there.
    """

    def __init__(self, breaks, pieces):
        self.breaks = tuple(float(b) for b in breaks)
        self.pieces = tuple(pieces)
        assert len(self.pieces) == len(self.breaks) + 1

    def __call__(self, x, side: str = "right"):
        if side not in ("left", "right"):
            raise ValueError("side must be 'left' or 'right'")
        xa = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.breaks, xa, side="right" if side == "right" else "left")
        out = np.empty_like(xa)
        for k, poly in enumerate(self.pieces):
            mask = idx == k
            out[mask] = poly(xa[mask])
        return out if out.ndim else float(out)

    def deriv(self, k: int = 1) -> "PiecewisePolynomial":
        return PiecewisePolynomial(self.breaks, [p.deriv(k) for p in self.pieces])

    def __add__(self, other):
        if isinstance(other, PiecewisePolynomial):
            assert other.breaks == self.breaks
            return PiecewisePolynomial(self.breaks, [a + b for a, b in zip(self.pieces, other.pieces)])
        return PiecewisePolynomial(self.breaks, [a + other for a in self.pieces])

    __radd__ = __add__

    def __rmul__(self, c):
        return PiecewisePolynomial(self.breaks, [c * a for a in self.pieces])

    def __neg__(self):
        return (-1.0) * self


@dataclass(frozen=True)
class ExactParams:
    alpha: float
    beta: float
    m: float
    nu: float
    eps: float

    def beta_lower_bound(self) -> float:
        return 0.5 * self.m * (68.0 * self.alpha + math.sqrt(2.0) * self.eps + 4.0)

    def violations(self) -> list[str]:
        msgs = []
        for name in ("alpha", "beta", "m", "nu", "eps"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                msgs.append(f"{name} must be positive and finite (got {v})")
        if self.alpha > ALPHA_MAX * (1 + 1e-14):
            msgs.append(f"alpha <= 11/528 violated: alpha = {self.alpha:.6g} > {ALPHA_MAX:.6g}")
        bound = self.beta_lower_bound()
        if self.beta < bound * (1 - 1e-14):
            msgs.append(
                "beta >= m*(68*alpha + sqrt(2)*eps + 4)/2 violated: "
                f"beta = {self.beta:.6g} < {bound:.6g}"
            )
        return msgs


def default_params() -> ExactParams:
    m, alpha, nu, eps = 1.0, 11.0 / 528.0, 1.0, 1.0
    beta = 0.5 * m * (68.0 * alpha + math.sqrt(2.0) * eps + 4.0)
    return ExactParams(alpha=alpha, beta=beta, m=m, nu=nu, eps=eps)


@dataclass(frozen=True)
class ExactSolution:
    """State, adjoint, control and data of the exact solution.

    ``multiplier_mass`` is the weight of the Dirac multiplier at 0 (``2 m``
    when built by :func:`make_exact`); it is a field so that inconsistent
    variants can be fed to the verifiers.
    """

    params: ExactParams
    multiplier_mass: float

    breakpoints = BREAKPOINTS

    @cached_property
    def _y(self) -> PiecewisePolynomial:
        a = self.params.alpha
        left = P([14 * a, 82 * a, 156 * a, 88 * a])
        mid = P([0, 0, 0, 0, 16 * a])
        right = P([14 * a, -82 * a, 156 * a, -88 * a])
        return PiecewisePolynomial((-0.5, 0.0, 0.5), [left, mid, mid, right])

    @cached_property
    def _p(self) -> PiecewisePolynomial:
        m, b = self.params.m, self.params.beta
        left = P([b, -m, -(m + b)])
        right = P([b, m, -(m + b)])
        return PiecewisePolynomial((-0.5, 0.0, 0.5), [left, left, right, right])

    @cached_property
    def _u(self) -> PiecewisePolynomial:
        return 1.0 + (-self._y.deriv(2))

    def y(self, x):
        return self._y(x)

    def dy(self, x, side="right"):
        return self._y.deriv(1)(x, side)

    def d2y(self, x, side="right"):
        return self._y.deriv(2)(x, side)

    def p(self, x):
        return self._p(x)

    def dp(self, x, side="right"):
        return self._p.deriv(1)(x, side)

    def d2p(self, x, side="right"):
        return self._p.deriv(2)(x, side)

    def u(self, x):
        return self._u(x)

    def du(self, x, side="right"):
        return self._u.deriv(1)(x, side)

    def q(self, x):
        return np.ones(np.shape(x)) if np.ndim(x) else 1.0

    def y_d(self, x):
        return self._y(x) - 2.0 * (self.params.m + self.params.beta)

    def u_d(self, x):
        return self._p(x) / self.params.nu + self._u(x)

    def multiplier_pairing(self, v) -> float:
        """``<mu, v>`` for a continuous ``v``: the multiplier is a point mass at 0."""
        return self.multiplier_mass * float(v(0.0))


def make_exact(params: ExactParams) -> ExactSolution:
    problems = params.violations()
    if problems:
        raise ValueError("invalid exact-solution parameters: " + "; ".join(problems))
    return ExactSolution(params, 2.0 * params.m)


def l1_norm_of_control(params: ExactParams) -> float:
    """``||u||_{L1(-1,1)}``; closed form valid while the control stays nonnegative."""
    if params.alpha > ALPHA_MAX * (1 + 1e-14):
        raise ValueError("closed form needs alpha <= 11/528 (nonnegative control)")
    return 68.0 * params.alpha + 2.0
