"""Regularized discrete state equation and the shared Newton driver.

The subdifferential of the L1 norm is replaced by ``(2/pi) arctan(gamma s)``;
the P1 state then solves the smooth monotone system

    A y + (beta_gamma(y_h), phi_i) = <u, phi_i>,   i interior.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .fem_core import (
    GridFunction,
    Mesh,
    TridiagonalMatrix,
    assemble_stiffness,
    assemble_weighted_mass,
    load_vector,
    quadrature,
    solve_banded,
)

log = logging.getLogger(__name__)

_BIG = 1e8


def beta_gamma(s, gamma: float):
    """``(2/pi) arctan(gamma s)``, the smoothed sign."""
    with np.errstate(over="ignore"):
        return (2.0 / np.pi) * np.arctan(gamma * np.asarray(s, dtype=float))


def beta_gamma_prime(s, gamma: float):
    """``2 gamma / (pi (1 + gamma^2 s^2))`` without intermediate overflow."""
    s = np.asarray(s, dtype=float)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        gs = gamma * s
        near = 2.0 * gamma / (np.pi * (1.0 + gs * gs))
        far = 2.0 / (np.pi * gamma * (1.0 / gamma**2 + s * s))
    return np.where(np.abs(gs) > _BIG, far, near)


def beta_gamma_second(s, gamma: float):
    """``-4 gamma^3 s / (pi (1 + gamma^2 s^2)^2)`` without intermediate overflow."""
    s = np.asarray(s, dtype=float)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        gs = gamma * s
        near = -4.0 * gamma**3 * s / (np.pi * (1.0 + gs * gs) ** 2)
        far = -4.0 * s / (np.pi * gamma * (1.0 / gamma**2 + s * s) ** 2)
    return np.where(np.abs(gs) > _BIG, far, near)


@dataclass(frozen=True)
class NewtonConfig:
    """Newton settings.

    ``abs_tol=None`` means ``1e-11 * (1 + ||load||_inf)``.  ``quadrature_points``
    is the per-element Gauss rule for the arctan terms (1 = midpoint).
    """

    abs_tol: float | None = None
    max_iter: int = 50
    damping: float = 0.5
    max_backtracks: int = 30
    quadrature_points: int = 1

    def __post_init__(self):
        if self.abs_tol is not None and not self.abs_tol > 0:
            raise ValueError("abs_tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not 0.0 < self.damping < 1.0:
            raise ValueError("damping must lie in (0, 1)")
        if self.max_backtracks < 0:
            raise ValueError("max_backtracks must be nonnegative")
        if self.quadrature_points < 1:
            raise ValueError("quadrature_points must be at least 1")

    def tolerance(self, load_scale: float) -> float:
        if self.abs_tol is not None:
            return self.abs_tol
        return 1e-11 * (1.0 + load_scale)


@dataclass
class NewtonReport:
    iterations: int
    final_residual: float
    converged: bool
    backtrack_total: int = 0
    fallback_steps: int = 0
    tolerance: float = float("nan")
    gamma: float | None = None


class NonConvergence(RuntimeError):
    def __init__(self, message: str, report: NewtonReport, gamma: float | None = None):
        super().__init__(message)
        self.report = report
        self.gamma = gamma


def newton(residual: Callable[[np.ndarray], np.ndarray],
           directions: Sequence[Callable[[np.ndarray, np.ndarray], np.ndarray]],
           z0: np.ndarray, tol: float, cfg: NewtonConfig,
           gamma: float | None = None,
           floor: Callable[[np.ndarray], float] | None = None) -> tuple[np.ndarray, NewtonReport]:
    """Damped Newton iteration with backtracking on ``||residual||_inf``.

    ``directions[0]`` computes the Newton step from ``(z, r)``; later entries
    are fallbacks tried only when backtracking along the previous one fails.
    ``floor(z)``, if given, estimates the rounding level of the residual at
    ``z``; the tolerance actually used (and reported) is never below it.
    """
    def effective(z):
        return tol if floor is None else max(tol, floor(z))

    z = np.array(z0, dtype=float)
    r = residual(z)
    res = float(np.max(np.abs(r), initial=0.0))
    tol_z = effective(z)
    report = NewtonReport(0, res, res <= tol_z, tolerance=tol_z, gamma=gamma)
    while res > tol_z:
        if report.iterations >= cfg.max_iter:
            raise NonConvergence(
                f"Newton did not converge in {cfg.max_iter} iterations "
                f"(residual {res:.3e} > {tol:.3e}, gamma={gamma})", report, gamma)
        report.iterations += 1
        accepted = False
        for k, direction in enumerate(directions):
            dz = direction(z, r)
            t = 1.0
            for _ in range(cfg.max_backtracks + 1):
                zt = z + t * dz
                rt = residual(zt)
                rest = float(np.max(np.abs(rt), initial=0.0))
                if np.isfinite(rest) and (rest < res or rest <= tol_z):
                    accepted = True
                    break
                t *= cfg.damping
                report.backtrack_total += 1
            if accepted:
                if k > 0:
                    report.fallback_steps += 1
                    log.debug("fallback direction %d accepted at gamma=%s", k, gamma)
                break
        if not accepted:
            report.final_residual = res
            raise NonConvergence(
                f"line search failed (residual {res:.3e}, gamma={gamma})", report, gamma)
        z, r, res = zt, rt, rest
        tol_z = effective(z)
        report.final_residual = res
        report.tolerance = tol_z
    report.converged = True
    return z, report


def control_load(mesh: Mesh, u, breakpoints: Sequence[float] = ()) -> np.ndarray:
    """``<u, phi_i>``: exact P1 pairing for grid functions, quadrature otherwise."""
    if isinstance(u, GridFunction):
        v = u.values
        h = mesh.h
        return (2.0 * h / 3.0) * v[1:-1] + (h / 6.0) * (v[:-2] + v[2:])
    if not callable(u):
        u = float(u)
        return load_vector(mesh, lambda x: np.full_like(x, u))
    return load_vector(mesh, u, breakpoints=breakpoints)


def solve_state(u, gamma: float, mesh: Mesh, cfg: NewtonConfig | None = None,
                initial: GridFunction | None = None,
                breakpoints: Sequence[float] = ()) -> tuple[GridFunction, NewtonReport]:
    """Solve the regularized discrete state equation for a control ``u``.

    ``u`` may be a GridFunction, a callable of x (with kinks listed in
    ``breakpoints``) or a constant.
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    cfg = cfg or NewtonConfig()
    A = assemble_stiffness(mesh)
    b = control_load(mesh, u, breakpoints)
    quad = quadrature(mesh, cfg.quadrature_points)
    tol = cfg.tolerance(float(np.max(np.abs(b), initial=0.0)))

    def full(z):
        v = np.zeros(mesh.n_elements + 1)
        v[1:-1] = z
        return v

    def residual(z):
        yq = quad.evaluate(GridFunction(mesh, full(z)))
        return A @ z + quad.scatter(beta_gamma(yq, gamma)) - b

    def jacobian(z):
        yq = quad.evaluate(GridFunction(mesh, full(z)))
        return A + assemble_weighted_mass(mesh, beta_gamma_prime(yq, gamma), quad=quad)

    def step(z, r):
        return solve_banded(jacobian(z), -r)

    def floor(z):
        J = jacobian(z)
        scale = TridiagonalMatrix(np.abs(J.diag), np.abs(J.off)) @ np.abs(z) + np.abs(b)
        return 8.0 * np.finfo(float).eps * float(np.max(scale, initial=0.0))

    z0 = np.zeros(mesh.n_interior) if initial is None else np.array(initial.interior)
    z, report = newton(residual, [step], z0, tol, cfg, gamma, floor)
    return GridFunction.from_interior(mesh, z), report


def state_path(u, gammas: Iterable[float], mesh: Mesh, cfg: NewtonConfig | None = None,
               initial: GridFunction | None = None,
               breakpoints: Sequence[float] = ()) -> tuple[GridFunction, list[NewtonReport]]:
    """Warm-started sequence of :func:`solve_state` along increasing ``gammas``."""
    y = initial
    reports = []
    for g in gammas:
        y, rep = solve_state(u, g, mesh, cfg, y, breakpoints)
        reports.append(rep)
    if y is None:
        raise ValueError("empty gamma sequence")
    return y, reports


def geometric_gammas(gamma0: float, gamma_max: float, factor: float) -> list[float]:
    """``gamma0, gamma0*factor, ...`` capped at ``gamma_max`` (included)."""
    if not (gamma0 > 0 and factor > 1 and gamma_max >= gamma0):
        raise ValueError("need gamma0 > 0, factor > 1 and gamma_max >= gamma0")
    out = [float(gamma0)]
    while out[-1] < gamma_max:
        out.append(min(out[-1] * factor, float(gamma_max)))
    return out
