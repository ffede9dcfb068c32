"""Numerical certificates for the exact solution.

:func:`check_strong_stationarity` evaluates the pointwise residuals of the
optimality system.  :func:`check_growth_condition` samples controls near the
optimal one and evaluates the sign condition

    2 m y(0) + int p(x) (1 - q(x)) dx >= 0,

with ``y`` the (regularized, discrete) state of the sampled control and
``q = beta_gamma(y)`` its slack.  Sampling can only falsify the condition.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .exact import ExactSolution
from .fem_core import GridFunction, LinearSolveFailure, Mesh, quadrature
from .forward import NewtonConfig, NonConvergence, beta_gamma, geometric_gammas, state_path


@dataclass
class StationarityReport:
    max_state_residual: float
    max_adjoint_residual: float
    gradient_residual: float
    kink_mismatch: float
    cone_value: float
    tolerance: float
    passed: bool


def check_strong_stationarity(exact: ExactSolution, n_samples: int = 1001,
                              tol: float = 1e-12, u_d=None) -> StationarityReport:
    """Residuals of the optimality system at equispaced non-breakpoint samples.

    ``u_d`` overrides the desired control (to probe the gradient equation).
    Residuals are relative to ``1 + |magnitude|`` of the terms involved;
    ``cone_value`` is ``p(0) - beta``.
    """
    if n_samples < 10:
        raise ValueError("n_samples must be at least 10")
    x = np.linspace(-1.0, 1.0, n_samples + 2)[1:-1]
    x = x[~np.isin(x, exact.breakpoints)]
    prm = exact.params
    u_d = exact.u_d if u_d is None else u_d

    u = exact.u(x)
    state = np.abs(-exact.d2y(x) + exact.q(x) - u) / (1.0 + np.abs(u))
    away = x != 0.0
    rhs = exact.y(x[away]) - exact.y_d(x[away])
    adjoint = np.abs(-exact.d2p(x[away]) - rhs) / (1.0 + np.abs(rhs))
    gradient = np.abs(exact.p(x) + prm.nu * (u - u_d(x)))
    kink = exact.dp(0.0, "right") - exact.dp(0.0, "left") - exact.multiplier_mass
    cone = exact.p(0.0) - prm.beta

    report = StationarityReport(
        max_state_residual=float(state.max()),
        max_adjoint_residual=float(adjoint.max()),
        gradient_residual=float(gradient.max()),
        kink_mismatch=float(abs(kink)),
        cone_value=float(cone),
        tolerance=tol,
        passed=False,
    )
    report.passed = bool(
        max(report.max_state_residual, report.max_adjoint_residual,
            report.gradient_residual, report.kink_mismatch) <= tol
        and abs(report.cone_value) <= tol * (1.0 + prm.beta)
        and exact.p(0.0) > 0.0
    )
    return report


@dataclass(frozen=True)
class Perturbation:
    """``kind`` in {'zero', 'constant', 'bump', 'alternating'}."""

    kind: str
    amplitude: float = 0.0
    center: float = 0.0
    width: float = 1.0
    frequency: int = 0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(x)
        if self.kind == "constant":
            return np.full_like(x, self.amplitude)
        if self.kind == "bump":
            return self.amplitude * np.maximum(0.0, 1.0 - np.abs(x - self.center) / self.width)
        if self.kind == "alternating":
            return self.amplitude * np.cos(self.frequency * math.pi * x)
        raise ValueError(f"unknown perturbation kind {self.kind!r}")

    @property
    def breakpoints(self) -> tuple:
        if self.kind == "bump":
            c, w = self.center, self.width
            return (c - w, c, c + w)
        return ()

    def l2_norm(self) -> float:
        a = abs(self.amplitude)
        if self.kind == "zero":
            return 0.0
        if self.kind == "constant":
            return a * math.sqrt(2.0)
        if self.kind == "bump":
            return a * math.sqrt(2.0 * self.width / 3.0)
        return a  # cos(k pi x), k >= 1, has unit L2 norm on (-1, 1)


def perturbation_family(n_samples: int, radius: float, seed: int) -> list[Perturbation]:
    """Deterministic mix of constants, bumps near 0 and oscillating profiles.

    Sample 0 is the zero perturbation.  Bumps are mostly negative and narrow
    so that some sampled states dip below zero at the origin.
    """
    rng = np.random.default_rng(seed)
    out = [Perturbation("zero")]
    kinds = ("bump", "constant", "alternating")
    for k in range(1, n_samples):
        kind = kinds[(k - 1) % 3]
        r = radius * rng.uniform(0.2, 1.0)
        if kind == "constant":
            sign = rng.choice((-1.0, 1.0))
            out.append(Perturbation("constant", amplitude=sign * r / math.sqrt(2.0)))
        elif kind == "bump":
            w = rng.uniform(0.01, 0.1)
            c = rng.uniform(-0.5, 0.5) * w
            sign = -1.0 if rng.uniform() < 0.75 else 1.0
            out.append(Perturbation("bump", amplitude=sign * r / math.sqrt(2.0 * w / 3.0),
                                    center=c, width=w))
        else:
            freq = int(rng.integers(1, 9))
            sign = rng.choice((-1.0, 1.0))
            out.append(Perturbation("alternating", amplitude=sign * r, frequency=freq))
    return out[:n_samples]


@dataclass
class GrowthSample:
    descriptor: dict
    y_at_zero: float
    integral_term: float
    total: float
    perturbation_norm: float
    lipschitz_slope: float
    lipschitz_bound: float
    max_abs_slack: float


@dataclass
class GrowthSampleReport:
    samples: list
    min_total: float
    tolerance: float
    passed: bool
    gamma_oracle: float
    n_elements: int

    @property
    def negative_state_samples(self) -> int:
        return sum(1 for s in self.samples if s.y_at_zero < 0)

    def to_dict(self) -> dict:
        return asdict(self)


def _slack_integral(exact: ExactSolution, y: GridFunction, gamma: float) -> float:
    """``int p (1 - beta_gamma(y)) dx`` with cells split at sign changes of ``y``."""
    mesh = y.mesh
    v = y.values
    crossing = (v[:-1] * v[1:] < 0.0)
    roots = mesh.nodes[:-1][crossing] - v[:-1][crossing] * mesh.h / (v[1:] - v[:-1])[crossing]
    quad = quadrature(mesh, 10, tuple(roots) + tuple(exact.breakpoints))
    q = beta_gamma(quad.evaluate(y), gamma)
    return quad.integrate(exact.p(quad.x) * (1.0 - q))


def evaluate_perturbation(exact: ExactSolution, mesh: Mesh, pert: Perturbation,
                          gamma_oracle: float = 1e12, cfg: NewtonConfig | None = None,
                          lipschitz_tol: float = 1e-6, index: int = 0) -> GrowthSample:
    """Oracle state for ``u = u_bar + pert`` and the terms of the sign condition."""
    gammas = geometric_gammas(1.0, gamma_oracle, 4.0)
    bps = tuple(exact.breakpoints) + pert.breakpoints
    control = (lambda x: exact.u(x) + pert(x))
    try:
        y, _ = state_path(control, gammas, mesh, cfg, breakpoints=bps)
    except NonConvergence as exc:
        raise NonConvergence(f"sample {index} ({pert.kind}): {exc}", exc.report, exc.gamma) from exc
    except LinearSolveFailure as exc:
        raise LinearSolveFailure(f"sample {index} ({pert.kind}): {exc}") from exc
    y0 = y.at_node(0.0)
    integral = _slack_integral(exact, y, gamma_oracle)
    return GrowthSample(
        descriptor={"index": index, **asdict(pert)},
        y_at_zero=y0,
        integral_term=integral,
        total=2.0 * exact.params.m * y0 + integral,
        perturbation_norm=pert.l2_norm(),
        lipschitz_slope=float(np.max(np.abs(y.slopes()))),
        lipschitz_bound=_l1_norm(mesh, control, bps) + 2.0 + lipschitz_tol,
        max_abs_slack=float(np.max(np.abs(beta_gamma(y.values, gamma_oracle)))),
    )


def check_growth_condition(exact: ExactSolution, mesh: Mesh, gamma_oracle: float = 1e12,
                           n_samples: int = 64, radius: float = 0.5, seed: int = 0,
                           cfg: NewtonConfig | None = None,
                           lipschitz_tol: float = 1e-6) -> GrowthSampleReport:
    """Sample the second-order sign condition around the exact control.

    ``pass`` means no sample had ``total < -1e-8 (1 + beta)``.
    """
    if radius > exact.params.eps * (1 + 1e-12):
        raise ValueError(f"radius {radius} exceeds the growth neighbourhood eps={exact.params.eps}")
    if not gamma_oracle >= 1e10:
        raise ValueError("gamma_oracle must be at least 1e10")
    samples = [evaluate_perturbation(exact, mesh, pert, gamma_oracle, cfg, lipschitz_tol, k)
               for k, pert in enumerate(perturbation_family(n_samples, radius, seed))]
    tol = 1e-8 * (1.0 + exact.params.beta)
    min_total = min(s.total for s in samples)
    return GrowthSampleReport(samples, min_total, tol, bool(min_total >= -tol),
                              gamma_oracle, mesh.n_elements)


def _l1_norm(mesh: Mesh, f, breakpoints) -> float:
    quad = quadrature(mesh, 10, breakpoints)
    return quad.integrate(np.abs(f(quad.x)))
