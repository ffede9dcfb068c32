"""First-order system of the regularized discrete control problem.

Unknowns are the interior nodal values of the state ``y`` and adjoint ``p``;
the control is eliminated through ``u = u_d - p/nu`` (variational
discretization: ``u`` is not restricted to the finite element space).

    R1 = A y + (beta_gamma(y), phi_i) - (u_d, phi_i) + M p / nu
    R2 = A p + W_gamma(y) p - M y + (y_d, phi_i)

``W_gamma(y)`` is the mass matrix weighted by ``beta_gamma'(y)``.  The Newton
matrix interleaves ``(y_i, p_i)`` per node and is solved as a banded system
with three sub- and super-diagonals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg

from .fem_core import (
    GridFunction,
    LinearSolveFailure,
    Mesh,
    TridiagonalMatrix,
    assemble_mass,
    assemble_stiffness,
    assemble_weighted_mass,
    load_vector,
    quadrature,
)
from .forward import (
    NewtonConfig,
    NewtonReport,
    NonConvergence,
    beta_gamma,
    beta_gamma_prime,
    beta_gamma_second,
    geometric_gammas,
    newton,
)


@dataclass(frozen=True)
class ProblemData:
    """Desired state ``y_d``, desired control ``u_d`` and Tikhonov weight ``nu``.

    ``breakpoints`` lists kinks of the data; quadrature cells are split there.
    """

    y_d: Callable
    u_d: Callable
    nu: float
    breakpoints: tuple = ()

    def __post_init__(self):
        if not (math.isfinite(self.nu) and self.nu > 0):
            raise ValueError(f"nu must be positive, got {self.nu}")
        object.__setattr__(self, "breakpoints", tuple(float(b) for b in self.breakpoints))

    @classmethod
    def from_exact(cls, exact) -> "ProblemData":
        return cls(exact.y_d, exact.u_d, exact.params.nu, exact.breakpoints)


@dataclass(frozen=True)
class ContinuationSchedule:
    gamma0: float = 1.0
    factor: float = 1.5
    gamma_max: float = 1e20

    def __post_init__(self):
        if not self.gamma0 > 0:
            raise ValueError("gamma0 must be positive")
        if not self.factor > 1:
            raise ValueError("factor must exceed 1")
        if not self.gamma_max >= self.gamma0:
            raise ValueError("gamma_max must be at least gamma0")

    def gammas(self) -> list[float]:
        return geometric_gammas(self.gamma0, self.gamma_max, self.factor)


@dataclass
class KktState:
    """Discrete state, adjoint and control at one regularization parameter.

    ``u`` holds the nodal values of ``u_d - p/nu``; the control itself is the
    function :meth:`control`.
    """

    y: GridFunction
    p: GridFunction
    u: GridFunction
    gamma: float
    report: NewtonReport
    data: ProblemData
    history: list = field(default_factory=list)

    @property
    def mesh(self) -> Mesh:
        return self.y.mesh

    def control(self, x):
        return self.data.u_d(x) - self.p(x) / self.data.nu

    def multiplier_pairing(self, cfg: NewtonConfig | None = None) -> float:
        """``(mu_h, p_h)`` with ``mu_h = beta_gamma'(y_h) p_h`` in the discrete pairing."""
        cfg = cfg or NewtonConfig()
        quad = quadrature(self.mesh, cfg.quadrature_points)
        W = assemble_weighted_mass(self.mesh, beta_gamma_prime(quad.evaluate(self.y), self.gamma),
                                   quad=quad)
        return W.quadratic_form(self.p.interior)


def _interleave(blocks: dict, n: int) -> np.ndarray:
    """Pack 2x2 blocks of tridiagonal matrices into LAPACK band storage (3, 3)."""
    ab = np.zeros((7, 2 * n))
    idx = np.arange(n)
    for (bi, bj), T in blocks.items():
        rows, cols = 2 * idx + bi, 2 * idx + bj
        ab[3 + rows - cols, cols] = T.diag
        r, c = 2 * idx[:-1] + bi, 2 * idx[1:] + bj
        ab[3 + r - c, c] = T.off
        r, c = 2 * idx[1:] + bi, 2 * idx[:-1] + bj
        ab[3 + r - c, c] = T.off
    return ab


class _System:
    def __init__(self, data: ProblemData, mesh: Mesh, cfg: NewtonConfig):
        self.data, self.mesh, self.cfg = data, mesh, cfg
        self.A = assemble_stiffness(mesh)
        self.M = assemble_mass(mesh)
        self.load_ud = load_vector(mesh, data.u_d, breakpoints=data.breakpoints)
        self.load_yd = load_vector(mesh, data.y_d, breakpoints=data.breakpoints)
        self.quad = quadrature(mesh, cfg.quadrature_points)
        self.n = mesh.n_interior
        scale = max(np.max(np.abs(self.load_ud), initial=0.0),
                    np.max(np.abs(self.load_yd), initial=0.0))
        self.tol = cfg.tolerance(float(scale))

    def _at_quad(self, v: np.ndarray) -> np.ndarray:
        full = np.zeros(self.n + 2)
        full[1:-1] = v
        q = self.quad
        return full[q.element] * (1.0 - q.t) + full[q.element + 1] * q.t

    def residual(self, z: np.ndarray, gamma: float) -> np.ndarray:
        y, p = z[0::2], z[1::2]
        yq = self._at_quad(y)
        nu = self.data.nu
        r1 = self.A @ y + self.quad.scatter(beta_gamma(yq, gamma)) - self.load_ud + (self.M @ p) / nu
        W = assemble_weighted_mass(self.mesh, beta_gamma_prime(yq, gamma), quad=self.quad)
        r2 = self.A @ p + W @ p - self.M @ y + self.load_yd
        r = np.empty(2 * self.n)
        r[0::2], r[1::2] = r1, r2
        return r

    def direction(self, z: np.ndarray, r: np.ndarray, gamma: float, exact: bool = True):
        y, p = z[0::2], z[1::2]
        yq = self._at_quad(y)
        W = assemble_weighted_mass(self.mesh, beta_gamma_prime(yq, gamma), quad=self.quad)
        AW = self.A + W
        if exact:
            D = assemble_weighted_mass(self.mesh, beta_gamma_second(yq, gamma) * self._at_quad(p),
                                       quad=self.quad)
        else:
            D = TridiagonalMatrix(np.zeros(self.n), np.zeros(self.n - 1))
        blocks = {
            (0, 0): AW,
            (0, 1): self.M.scaled(1.0 / self.data.nu),
            (1, 0): D - self.M,
            (1, 1): AW,
        }
        ab = _interleave(blocks, self.n)
        try:
            return scipy.linalg.solve_banded((3, 3), ab, -r)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise LinearSolveFailure(f"block Newton system singular at gamma={gamma}: {exc}") from exc

    def state(self, z: np.ndarray, gamma: float, report: NewtonReport) -> KktState:
        y = GridFunction.from_interior(self.mesh, z[0::2])
        p = GridFunction.from_interior(self.mesh, z[1::2])
        u = GridFunction(self.mesh, self.data.u_d(self.mesh.nodes) - p.values / self.data.nu)
        return KktState(y, p, u, gamma, report, self.data)


def _solve(system: _System, gamma: float, z0: np.ndarray) -> KktState:
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    directions = [
        lambda z, r: system.direction(z, r, gamma, exact=True),
        lambda z, r: system.direction(z, r, gamma, exact=False),
    ]
    z, report = newton(lambda z: system.residual(z, gamma), directions, z0,
                       system.tol, system.cfg, gamma)
    return system.state(z, gamma, report)


def _pack(state: KktState | None, n: int) -> np.ndarray:
    z = np.zeros(2 * n)
    if state is not None:
        z[0::2], z[1::2] = state.y.interior, state.p.interior
    return z


def solve_kkt_fixed_gamma(data: ProblemData, gamma: float, mesh: Mesh,
                          cfg: NewtonConfig | None = None,
                          warm: KktState | None = None) -> KktState:
    """Newton solve of the coupled system at one ``gamma``; ``warm=None`` starts at zero."""
    system = _System(data, mesh, cfg or NewtonConfig())
    return _solve(system, gamma, _pack(warm, mesh.n_interior))


def solve_kkt_continuation(data: ProblemData, schedule: ContinuationSchedule, mesh: Mesh,
                           cfg: NewtonConfig | None = None) -> KktState:
    """Continuation in ``gamma`` along ``schedule``, each step warm-started.

    Starts from ``y = p = 0`` (equivalently ``u = u_d``).  A failed step is
    retried once through the intermediate value ``gamma_prev * sqrt(factor)``.
    The per-step reports are collected in ``history``.
    """
    system = _System(data, mesh, cfg or NewtonConfig())
    z = _pack(None, mesh.n_interior)
    history: list[NewtonReport] = []
    prev = None
    state = None
    for g in schedule.gammas():
        try:
            state = _solve(system, g, z)
        except (NonConvergence, LinearSolveFailure) as exc:
            if prev is None or prev * math.sqrt(schedule.factor) >= g:
                raise _tag(exc, g) from exc
            try:
                mid = _solve(system, prev * math.sqrt(schedule.factor), z)
                history.append(mid.report)
                state = _solve(system, g, _pack(mid, mesh.n_interior))
            except (NonConvergence, LinearSolveFailure) as exc2:
                raise _tag(exc2, g) from exc2
        history.append(state.report)
        z = _pack(state, mesh.n_interior)
        prev = g
    state.history = history
    return state


def _tag(exc: Exception, gamma: float) -> Exception:
    if isinstance(exc, NonConvergence):
        return NonConvergence(f"continuation failed at gamma={gamma:.4g}: {exc}", exc.report, gamma)
    err = LinearSolveFailure(f"continuation failed at gamma={gamma:.4g}: {exc}")
    err.gamma = gamma
    return err
