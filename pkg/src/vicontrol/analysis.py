"""Mesh-refinement and regularization studies, EOC columns and result files."""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .exact import ExactSolution
from .fem_core import LinearSolveFailure, Mesh, error_norm, function_l2_distance
from .forward import NewtonConfig, NonConvergence, geometric_gammas
from .kkt import ContinuationSchedule, KktState, ProblemData, solve_kkt_continuation, \
    solve_kkt_fixed_gamma

TABLE_COLUMNS = ("h", "e_y", "eoc_y", "e_p", "eoc_p", "e_u", "eoc_u")
STUDY_COLUMNS = ("h", "gamma", "e_y", "e_p", "e_u")
REFINEMENT_HS = tuple(1.0 / n for n in (50, 100, 200, 400, 800, 1600))
GAMMA_STUDY_HS = tuple(1.0 / n for n in (50, 100, 200))


def default_gamma_grid(gamma_max: float = 1e16, factor: float = 1.5) -> list[float]:
    """``1, 1.5, 1.5**2, ...`` up to ``gamma_max`` (the last point is ``gamma_max``)."""
    return geometric_gammas(1.0, gamma_max, factor)


def compute_eoc(e1: float, e2: float, h1: float, h2: float) -> float:
    """Log-ratio slope of errors ``e1, e2`` on meshes ``h1, h2``."""
    if not (e1 > 0 and e2 > 0):
        raise ValueError(f"errors must be positive for an EOC (got {e1!r}, {e2!r})")
    if not (h1 > 0 and h2 > 0):
        raise ValueError("mesh sizes must be positive")
    if h1 == h2:
        raise ValueError("EOC needs two different mesh sizes")
    return (math.log(e1) - math.log(e2)) / (math.log(h1) - math.log(h2))


def parse_h(value) -> float:
    """Accept ``0.01``, ``'0.01'`` or ``'1/100'``."""
    if isinstance(value, str):
        return float(Fraction(value.strip()))
    return float(value)


@dataclass
class EocRow:
    h: float
    e_y: float
    eoc_y: float | None
    e_p: float
    eoc_p: float | None
    e_u: float
    eoc_u: float | None


@dataclass
class NodalSolution:
    h: float
    x: np.ndarray
    y: np.ndarray
    p: np.ndarray
    u: np.ndarray


@dataclass
class EocTable:
    rows: list = field(default_factory=list)
    solutions: list = field(default_factory=list)

    @classmethod
    def from_errors(cls, hs, errors, solutions=()) -> "EocTable":
        """Build rows from ``(e_y, e_p, e_u)`` triples, ``hs`` decreasing."""
        rows = []
        for k, (h, (ey, ep, eu)) in enumerate(zip(hs, errors)):
            if k == 0:
                rows.append(EocRow(h, ey, None, ep, None, eu, None))
                continue
            prev = rows[-1]
            rows.append(EocRow(
                h,
                ey, compute_eoc(prev.e_y, ey, prev.h, h),
                ep, compute_eoc(prev.e_p, ep, prev.h, h),
                eu, compute_eoc(prev.e_u, eu, prev.h, h),
            ))
        return cls(rows, list(solutions))

    def column(self, name: str) -> list:
        return [getattr(r, name) for r in self.rows]

    def to_dict(self) -> dict:
        return {"kind": "eoc_table", "rows": [asdict(r) for r in self.rows]}


@dataclass
class GammaPoint:
    gamma: float
    e_y: float
    e_p: float
    e_u: float


@dataclass
class GammaStudy:
    """Per-mesh series of errors along increasing ``gamma``; keys are ``h``."""

    series: dict = field(default_factory=dict)

    def errors(self, h: float, name: str = "e_y") -> np.ndarray:
        return np.array([getattr(pt, name) for pt in self.series[h]])

    def gammas(self, h: float) -> np.ndarray:
        return np.array([pt.gamma for pt in self.series[h]])

    def to_dict(self) -> dict:
        return {"kind": "gamma_study",
                "series": [{"h": h, "points": [asdict(pt) for pt in pts]}
                           for h, pts in self.series.items()]}


def measure_errors(state: KktState, exact: ExactSolution, n_points: int = 5) -> tuple:
    """L2 errors of state, adjoint and control against the exact solution."""
    bps = tuple(exact.breakpoints) + tuple(state.data.breakpoints)
    e_y = error_norm(state.y, exact.y, "L2", breakpoints=bps, n_points=n_points)
    e_p = error_norm(state.p, exact.p, "L2", breakpoints=bps, n_points=n_points)
    e_u = function_l2_distance(state.mesh, state.control, exact.u, bps, n_points)
    return e_y, e_p, e_u


def _mesh_for(h: float) -> Mesh:
    try:
        return Mesh.from_label(h)
    except ValueError as exc:
        raise ValueError(f"h={h:.6g}: {exc}") from exc


def _retag(exc: Exception, h: float) -> Exception:
    msg = f"h={h:.6g}: {exc}"
    if isinstance(exc, NonConvergence):
        return NonConvergence(msg, exc.report, exc.gamma)
    return LinearSolveFailure(msg)


def _map(fn, items, workers: int):
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def run_h_study(data: ProblemData, exact: ExactSolution, hs=REFINEMENT_HS,
                schedule: ContinuationSchedule | None = None,
                cfg: NewtonConfig | None = None, keep_solutions: bool = True,
                workers: int = 1) -> EocTable:
    """Continuation solve on each mesh and the resulting EOC table.

    ``hs`` must be strictly decreasing; each ``h = 1/n`` is a mesh of ``n``
    elements.  Solver failures are re-raised with the offending ``h``.
    """
    hs = [parse_h(h) for h in hs]
    if any(a <= b for a, b in zip(hs, hs[1:])):
        raise ValueError("hs must be strictly decreasing")
    meshes = [_mesh_for(h) for h in hs]
    schedule = schedule or ContinuationSchedule()

    def one(mesh):
        try:
            return solve_kkt_continuation(data, schedule, mesh, cfg)
        except (NonConvergence, LinearSolveFailure) as exc:
            raise _retag(exc, mesh.label) from exc

    states = _map(one, meshes, workers)
    errors = [measure_errors(s, exact) for s in states]
    sols = [_nodal(s) for s in states] if keep_solutions else []
    return EocTable.from_errors([m.label for m in meshes], errors, sols)


def _nodal(state: KktState) -> NodalSolution:
    return NodalSolution(state.mesh.label, state.mesh.nodes.copy(), state.y.values.copy(),
                         state.p.values.copy(), state.u.values.copy())


def run_gamma_study(data: ProblemData, exact: ExactSolution, hs=GAMMA_STUDY_HS,
                    gammas=None, cfg: NewtonConfig | None = None,
                    workers: int = 1) -> GammaStudy:
    """Errors along ``gammas`` for each mesh, warm-starting from the previous ``gamma``.

    Between recorded values the solver walks through intermediate steps of
    factor at most 1.5 so that large gaps in ``gammas`` stay reachable.
    """
    gammas = default_gamma_grid() if gammas is None else [float(g) for g in gammas]
    if not gammas:
        raise ValueError("empty gamma list")
    if gammas[0] <= 0 or any(a >= b for a, b in zip(gammas, gammas[1:])):
        raise ValueError("gammas must be positive and strictly increasing")
    hs = [parse_h(h) for h in hs]
    meshes = [_mesh_for(h) for h in hs]

    def one(mesh):
        points, state, last = [], None, None
        try:
            for g in gammas:
                path = [g] if last is None else geometric_gammas(last, g, 1.5)[1:]
                if last is None and g > 1.0:
                    path = geometric_gammas(1.0, g, 1.5)
                for gi in path:
                    state = solve_kkt_fixed_gamma(data, gi, mesh, cfg, warm=state)
                last = g
                points.append(GammaPoint(g, *measure_errors(state, exact)))
        except (NonConvergence, LinearSolveFailure) as exc:
            raise _retag(exc, mesh.label) from exc
        return points

    series = _map(one, meshes, workers)
    return GammaStudy({m.label: pts for m, pts in zip(meshes, series)})


def _fmt(v) -> str:
    return "" if v is None else f"{v:.4e}"


def emit_results(obj, path, fmt: str = "csv") -> list[Path]:
    """Write an :class:`EocTable` or :class:`GammaStudy` to ``path``.

    Tables additionally get one nodal file ``<stem>_n<elements>.csv`` with
    columns ``x,y,p,u`` per stored solution.  Returns all written paths.
    """
    if fmt not in ("csv", "json"):
        raise ValueError(f"format must be 'csv' or 'json', got {fmt!r}")
    path = Path(path)
    written = [path]
    if fmt == "json":
        path.write_text(json.dumps(obj.to_dict(), indent=1) + "\n")
    elif isinstance(obj, EocTable):
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TABLE_COLUMNS)
            for r in obj.rows:
                w.writerow([_fmt(getattr(r, c)) for c in TABLE_COLUMNS])
    elif isinstance(obj, GammaStudy):
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(STUDY_COLUMNS)
            for h, pts in obj.series.items():
                for pt in pts:
                    w.writerow([_fmt(h), _fmt(pt.gamma), _fmt(pt.e_y), _fmt(pt.e_p), _fmt(pt.e_u)])
    else:
        raise TypeError(f"cannot emit {type(obj).__name__}")
    for sol in getattr(obj, "solutions", ()):
        n = round(1.0 / sol.h)
        written.append(write_nodal(path.with_name(f"{path.stem}_n{n}.csv"), sol))
    return written


def write_nodal(path, sol) -> Path:
    """Columns ``x,y,p,u`` at the mesh nodes, full double precision."""
    path = Path(path)
    data = np.column_stack([sol.x, sol.y, sol.p, sol.u])
    np.savetxt(path, data, delimiter=",", header="x,y,p,u", comments="", fmt="%.17g")
    return path


def load_results(path):
    """Parse a JSON file written by :func:`emit_results`."""
    d = json.loads(Path(path).read_text())
    if d.get("kind") == "eoc_table":
        return EocTable([EocRow(**r) for r in d["rows"]])
    if d.get("kind") == "gamma_study":
        return GammaStudy({s["h"]: [GammaPoint(**pt) for pt in s["points"]] for s in d["series"]})
    raise ValueError(f"{path}: unknown result kind {d.get('kind')!r}")
