"""P1 finite elements on a uniform partition of (-1, 1).

Matrices act on the interior nodes only (homogeneous Dirichlet data), so an
``n_elements`` mesh gives systems of order ``n_elements - 1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

DEFAULT_POINTS = 5
LINF_SAMPLES = 17


class LinearSolveFailure(RuntimeError):
    """Raised when a banded factorization breaks down."""


@dataclass(frozen=True)
class Mesh:
    """Uniform mesh of (-1, 1) with ``n_elements`` cells.

    Node 0 sits at x = 0 because ``n_elements`` must be even.  Tables label a
    mesh by ``1/n_elements`` (see :attr:`label`); the element diameter is
    ``h = 2/n_elements``.
    """

    n_elements: int

    def __post_init__(self):
        n = self.n_elements
        if isinstance(n, bool) or not isinstance(n, (int, np.integer)):
            raise TypeError(f"n_elements must be an integer, got {n!r}")
        if n < 2 or n % 2:
            raise ValueError(
                f"inadmissible mesh: n_elements={n} must be a positive even "
                "integer so that x = 0 is a node"
            )

    @classmethod
    def from_label(cls, label: float) -> "Mesh":
        """Mesh for a table label ``1/n`` (``n`` elements on (-1, 1))."""
        if not label > 0:
            raise ValueError(f"mesh label must be positive, got {label}")
        n = int(round(1.0 / label))
        if n < 1 or abs(n * label - 1.0) > 1e-9:
            raise ValueError(f"mesh label {label} is not of the form 1/n")
        return cls(n)

    @property
    def h(self) -> float:
        return 2.0 / self.n_elements

    @property
    def label(self) -> float:
        return 1.0 / self.n_elements

    @property
    def n_interior(self) -> int:
        return self.n_elements - 1

    @cached_property
    def nodes(self) -> np.ndarray:
        x = -1.0 + 2.0 * np.arange(self.n_elements + 1) / self.n_elements
        x[-1] = 1.0
        x.flags.writeable = False
        return x

    def has_node(self, x: float, tol: float = 1e-12) -> bool:
        k = (x + 1.0) / self.h
        return abs(k - round(k)) < tol

    def interpolate(self, f: Callable, dirichlet: bool = False) -> "GridFunction":
        values = np.asarray(f(self.nodes), dtype=float) * np.ones(self.n_elements + 1)
        if dirichlet:
            values[0] = values[-1] = 0.0
        return GridFunction(self, values, dirichlet)

    def zero(self) -> "GridFunction":
        return GridFunction(self, np.zeros(self.n_elements + 1), True)


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Continuous piecewise linear function given by its nodal values."""

    mesh: Mesh
    values: np.ndarray
    dirichlet: bool = False

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.mesh.n_elements + 1,):
            raise ValueError(
                f"expected {self.mesh.n_elements + 1} nodal values, got shape {v.shape}"
            )
        if self.dirichlet and (v[0] != 0.0 or v[-1] != 0.0):
            raise ValueError("Dirichlet grid function must vanish at x = -1 and x = 1")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def from_interior(cls, mesh: Mesh, interior: np.ndarray) -> "GridFunction":
        v = np.zeros(mesh.n_elements + 1)
        v[1:-1] = interior
        return cls(mesh, v, True)

    @property
    def interior(self) -> np.ndarray:
        return self.values[1:-1]

    def __call__(self, x):
        return np.interp(x, self.mesh.nodes, self.values)

    def slopes(self) -> np.ndarray:
        """Derivative on each element."""
        return np.diff(self.values) / self.mesh.h

    def at_node(self, x: float) -> float:
        if not self.mesh.has_node(x):
            raise ValueError(f"x = {x} is not a mesh node")
        return float(self.values[int(round((x + 1.0) / self.mesh.h))])


@dataclass(frozen=True, eq=False)
class TridiagonalMatrix:
    """Symmetric tridiagonal matrix stored by its two diagonals."""

    diag: np.ndarray
    off: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.diag, dtype=float)
        o = np.asarray(self.off, dtype=float)
        if o.shape != (max(d.size - 1, 0),):
            raise ValueError("off-diagonal must have length order - 1")
        object.__setattr__(self, "diag", d)
        object.__setattr__(self, "off", o)

    @property
    def order(self) -> int:
        return self.diag.size

    def __matmul__(self, v):
        v = np.asarray(v, dtype=float)
        r = self.diag * v
        r[:-1] += self.off * v[1:]
        r[1:] += self.off * v[:-1]
        return r

    def __add__(self, other: "TridiagonalMatrix") -> "TridiagonalMatrix":
        return TridiagonalMatrix(self.diag + other.diag, self.off + other.off)

    def __sub__(self, other: "TridiagonalMatrix") -> "TridiagonalMatrix":
        return TridiagonalMatrix(self.diag - other.diag, self.off - other.off)

    def scaled(self, c: float) -> "TridiagonalMatrix":
        return TridiagonalMatrix(c * self.diag, c * self.off)

    def quadratic_form(self, v) -> float:
        return float(np.dot(v, self @ v))

    def to_dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.off, 1) + np.diag(self.off, -1)


# -- quadrature ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Quadrature:
    """Composite rule over the mesh.

    ``element[k]`` is the cell holding point ``x[k]`` and ``t[k]`` its local
    coordinate in [0, 1], so the hat functions of the cell's left and right
    nodes evaluate to ``1 - t`` and ``t``.
    """

    x: np.ndarray
    w: np.ndarray
    element: np.ndarray
    t: np.ndarray
    n_elements: int

    def scatter(self, f: np.ndarray) -> np.ndarray:
        """Interior load vector ``(f, phi_i)`` from values of f at the points."""
        n = self.n_elements
        wf = self.w * f
        r = np.bincount(self.element, wf * (1.0 - self.t), minlength=n + 1)
        r += np.bincount(self.element + 1, wf * self.t, minlength=n + 1)
        return r[1:-1]

    def integrate(self, f: np.ndarray) -> float:
        return float(np.dot(self.w, f))

    def evaluate(self, g: GridFunction) -> np.ndarray:
        v = g.values
        return v[self.element] * (1.0 - self.t) + v[self.element + 1] * self.t


@lru_cache(maxsize=None)
def _gauss_unit(n_points: int):
    s, w = np.polynomial.legendre.leggauss(n_points)
    return 0.5 * (s + 1.0), 0.5 * w


@lru_cache(maxsize=64)
def _quadrature(n_elements: int, n_points: int, breakpoints: tuple) -> Quadrature:
    mesh = Mesh(n_elements)
    t_ref, w_ref = _gauss_unit(n_points)
    nodes, h = mesh.nodes, mesh.h
    cuts = [b for b in breakpoints if -1.0 < b < 1.0 and not mesh.has_node(b)]
    pts = np.union1d(nodes, cuts)
    lo, hi = pts[:-1], pts[1:]
    elem = np.minimum(((0.5 * (lo + hi) + 1.0) / h).astype(int), n_elements - 1)
    width = hi - lo
    x = (lo[:, None] + width[:, None] * t_ref[None, :]).ravel()
    w = (width[:, None] * w_ref[None, :]).ravel()
    element = np.repeat(elem, n_points)
    t = (x - nodes[element]) / h
    return Quadrature(x, w, element, np.clip(t, 0.0, 1.0), n_elements)


def quadrature(mesh: Mesh, n_points: int = DEFAULT_POINTS,
               breakpoints: Sequence[float] = ()) -> Quadrature:
    """Gauss-Legendre rule with ``n_points`` per (sub-)cell.

    Cells containing one of ``breakpoints`` in their interior are split there,
    so piecewise smooth integrands are integrated piece by piece.
    """
    return _quadrature(mesh.n_elements, int(n_points), tuple(float(b) for b in breakpoints))


def _coefficient_values(f, quad: Quadrature) -> np.ndarray:
    if callable(f):
        vals = f(quad.x)
    else:
        vals = f
    return np.broadcast_to(np.asarray(vals, dtype=float), quad.x.shape)


# -- assembly -----------------------------------------------------------------


def assemble_stiffness(mesh: Mesh) -> TridiagonalMatrix:
    n = mesh.n_interior
    return TridiagonalMatrix(np.full(n, 2.0 / mesh.h), np.full(n - 1, -1.0 / mesh.h))


def assemble_mass(mesh: Mesh) -> TridiagonalMatrix:
    """Exact P1 mass matrix on the interior nodes."""
    n = mesh.n_interior
    return TridiagonalMatrix(np.full(n, 2.0 * mesh.h / 3.0), np.full(n - 1, mesh.h / 6.0))


def assemble_weighted_mass(mesh: Mesh, weight, n_points: int = DEFAULT_POINTS,
                           breakpoints: Sequence[float] = (),
                           quad: Quadrature | None = None) -> TridiagonalMatrix:
    """Matrix of ``(weight * phi_j, phi_i)`` by composite Gauss quadrature.

    ``weight`` is a callable of x, a scalar, or an array of its values at the
    points of ``quad``.
    """
    if quad is None:
        quad = quadrature(mesh, n_points, breakpoints)
    wt = _coefficient_values(weight, quad)
    if not np.all(np.isfinite(wt)):
        bad = quad.x[~np.isfinite(wt)][0]
        raise ValueError(f"weight is not finite at quadrature point x = {bad:.6g}")
    n = mesh.n_elements
    a = quad.w * wt
    t = quad.t
    d = np.bincount(quad.element, a * (1.0 - t) ** 2, minlength=n + 1)
    d += np.bincount(quad.element + 1, a * t * t, minlength=n + 1)
    o = np.bincount(quad.element, a * t * (1.0 - t), minlength=n)
    return TridiagonalMatrix(d[1:-1], o[1:-1])


def load_vector(mesh: Mesh, f, n_points: int = DEFAULT_POINTS,
                breakpoints: Sequence[float] = ()) -> np.ndarray:
    """Interior vector ``(f, phi_i)``."""
    quad = quadrature(mesh, n_points, breakpoints)
    return quad.scatter(_coefficient_values(f, quad))


def solve_banded(A: TridiagonalMatrix, rhs) -> np.ndarray:
    """Solve ``A x = rhs`` for symmetric positive definite tridiagonal ``A``."""
    rhs = np.asarray(rhs, dtype=float)
    if A.order == 1:  # LAPACK band routines reject a single column
        if not A.diag[0] > 0:
            raise LinearSolveFailure("Cholesky factorization failed: 1x1 matrix not positive")
        return rhs / A.diag[0]
    ab = np.zeros((2, A.order))
    ab[0, 1:] = A.off
    ab[1] = A.diag
    try:
        return scipy.linalg.solveh_banded(ab, rhs, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise LinearSolveFailure(f"Cholesky factorization failed: {exc}") from exc


# -- norms --------------------------------------------------------------------


def _as_callable(f):
    return f if callable(f) else (lambda x: np.full_like(x, float(f)))


def error_norm(f_h, f_exact, which: str = "L2", *, derivative=None,
               breakpoints: Sequence[float] = (),
               n_points: int = DEFAULT_POINTS) -> float:
    """Distance between a grid function and a piecewise smooth reference.

    ``breakpoints`` are the kinks of ``f_exact``; cells are split there.
    ``which='H1'`` is the full norm and needs ``derivative`` of ``f_exact``.
    """
    which = which.upper()
    f_exact = _as_callable(f_exact)
    if not isinstance(f_h, GridFunction):
        raise TypeError("f_h must be a GridFunction; use function_l2_distance for callables")
    mesh, fh = f_h.mesh, f_h
    if which == "LINF":
        return _linf(mesh, fh, f_exact, breakpoints)
    quad = quadrature(mesh, n_points, breakpoints)
    diff = quad.evaluate(fh) - f_exact(quad.x)
    l2sq = quad.integrate(diff * diff)
    if which == "L2":
        return float(np.sqrt(l2sq))
    if which == "H1":
        if derivative is None:
            raise ValueError("H1 error needs the derivative of the exact function")
        ddiff = fh.slopes()[quad.element] - _as_callable(derivative)(quad.x)
        return float(np.sqrt(l2sq + quad.integrate(ddiff * ddiff)))
    raise ValueError(f"unknown norm {which!r}; expected L2, Linf or H1")


def _linf(mesh: Mesh, fh: GridFunction, f_exact, breakpoints) -> float:
    s = np.linspace(0.0, 1.0, LINF_SAMPLES)
    x = (mesh.nodes[:-1, None] + mesh.h * s[None, :]).ravel()
    extra = [b for b in breakpoints if -1.0 <= b <= 1.0]
    x = np.concatenate([x, mesh.nodes, np.asarray(extra, dtype=float)])
    return float(np.max(np.abs(fh(x) - f_exact(x))))


def function_l2_distance(mesh: Mesh, f, g, breakpoints: Sequence[float] = (),
                         n_points: int = DEFAULT_POINTS) -> float:
    """``||f - g||_{L2(-1,1)}`` for callables, integrated cell by cell."""
    quad = quadrature(mesh, n_points, breakpoints)
    d = _as_callable(f)(quad.x) - _as_callable(g)(quad.x)
    return float(np.sqrt(quad.integrate(d * d)))
