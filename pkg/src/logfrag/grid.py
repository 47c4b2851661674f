"""
Uniform node-centred grids on the unit square/interval with Neumann boundaries.

Fields are plain NumPy arrays of shape ``grid.shape`` (``(n,)`` in 1D,
``(n, n)`` in 2D with axis 0 along x).  Flattening uses C order, so the flat
node index is also the "coordinate order" used for deterministic tie-breaks.

Discrete calculus
-----------------
The Laplacian uses the centred three-point stencil per axis, with mirrored
ghost nodes at the boundary (``u[-1] = u[1]``).  With the trapezoid weights
``W`` this gives ``W @ lap = -D.T @ diag(omega) @ D`` where ``D`` is the
edge-difference operator, so the discrete Green identity

    sum(W * v * lap(u)) == -sum(omega * D(u) * D(v)) / h**2

holds to round-off.  :func:`dirichlet_energy`, :func:`tv_norm` and the
weighted energies below are all built on the same edges.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy import ndimage

__all__ = [
    "Grid",
    "build_grid",
    "apply_neumann_laplacian",
    "integrate",
    "inner",
    "dirichlet_energy",
    "weighted_dirichlet_energy",
    "weighted_dirichlet_bilinear",
    "tv_norm",
    "bv_norm",
    "mollify",
    "mollifier_kernel",
    "indicator",
    "is_bang_bang",
]


@dataclass(frozen=True)
class Grid:
    """Node-centred tensor grid on ``(0, 1)**dim`` including the endpoints."""

    dim: int
    n_per_axis: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"unsupported dimension {self.dim!r}; expected 1 or 2")
        if int(self.n_per_axis) != self.n_per_axis or self.n_per_axis < 8:
            raise ValueError(f"n_per_axis must be an integer >= 8, got {self.n_per_axis!r}")

    @property
    def spacing(self) -> float:
        return 1.0 / (self.n_per_axis - 1)

    @property
    def node_count(self) -> int:
        return self.n_per_axis**self.dim

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_per_axis,) * self.dim

    @cached_property
    def axis(self) -> np.ndarray:
        """1D node coordinates ``i * spacing``."""
        x = np.arange(self.n_per_axis) * self.spacing
        x[-1] = 1.0
        return x

    @cached_property
    def axis_weights(self) -> np.ndarray:
        w = np.full(self.n_per_axis, self.spacing)
        w[0] = w[-1] = 0.5 * self.spacing
        return w

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        """Coordinate arrays of shape ``self.shape``, one per axis."""
        return tuple(np.meshgrid(*([self.axis] * self.dim), indexing="ij"))

    @cached_property
    def weights(self) -> np.ndarray:
        """Trapezoid quadrature weights, shape ``self.shape``; they sum to 1."""
        if self.dim == 1:
            return self.axis_weights.copy()
        return np.multiply.outer(self.axis_weights, self.axis_weights)

    @cached_property
    def laplacian(self) -> sp.csr_matrix:
        """Sparse Neumann Laplacian acting on C-ordered flat fields."""
        n, h = self.n_per_axis, self.spacing
        main = np.full(n, -2.0)
        upper = np.ones(n - 1)
        lower = np.ones(n - 1)
        upper[0] = 2.0
        lower[-1] = 2.0
        lap1 = sp.diags([lower, main, upper], [-1, 0, 1], format="csr") / h**2
        if self.dim == 1:
            return lap1
        eye = sp.identity(n, format="csr")
        return (sp.kron(lap1, eye) + sp.kron(eye, lap1)).tocsr()

    @cached_property
    def stiffness(self) -> sp.csr_matrix:
        """Symmetric matrix ``-W @ laplacian``; ``u @ stiffness @ u`` is the Dirichlet energy."""
        k = -sp.diags(self.weights.ravel()) @ self.laplacian
        k = 0.5 * (k + k.T)
        return k.tocsr()

    @cached_property
    def mass_matrix(self) -> sp.csr_matrix:
        return sp.diags(self.weights.ravel(), format="csr")

    def check(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape != self.shape:
            if u.size == self.node_count and u.ndim == 1:
                return u.reshape(self.shape)
            raise ValueError(f"field of shape {u.shape} does not live on grid {self.shape}")
        return u

    def full(self, value: float) -> np.ndarray:
        return np.full(self.shape, float(value))

    def _edge_terms(self, u):
        """Yield ``(difference, transverse_weight, left, right)`` for each axis."""
        u = self.check(u)
        if self.dim == 1:
            yield np.diff(u), 1.0, u[:-1], u[1:]
            return
        wx = self.axis_weights
        yield np.diff(u, axis=0), wx[None, :], u[:-1, :], u[1:, :]
        yield np.diff(u, axis=1), wx[:, None], u[:, :-1], u[:, 1:]


def build_grid(dim: int, n_per_axis: int) -> Grid:
    """Build the uniform node-centred grid on the unit interval or square."""
    return Grid(int(dim), int(n_per_axis))


def apply_neumann_laplacian(g: Grid, u) -> np.ndarray:
    u = g.check(u)
    return (g.laplacian @ u.ravel()).reshape(g.shape)


def integrate(g: Grid, u) -> float:
    """Trapezoid rule over the unit domain."""
    return float(np.sum(g.weights * g.check(u)))


def inner(g: Grid, u, v) -> float:
    return float(np.sum(g.weights * g.check(u) * g.check(v)))


def dirichlet_energy(g: Grid, u) -> float:
    """Discrete ``int |grad u|^2`` over cell edges (no factor 1/2)."""
    h = g.spacing
    total = 0.0
    for d, wt, _, _ in g._edge_terms(u):
        total += float(np.sum(wt * d * d)) / h
    return total


def weighted_dirichlet_bilinear(g: Grid, coef, u, v) -> float:
    """Discrete ``int coef * grad u . grad v`` with ``coef`` averaged onto edges.

    Edge averaging makes the discrete product rule exact, which is what the
    second-derivative identities in :mod:`logfrag.sensitivity` rely on.
    """
    h = g.spacing
    coef = g.check(coef)
    total = 0.0
    for (du, wt, _, _), (dv, _, _, _), (_, _, cl, cr) in zip(
        g._edge_terms(u), g._edge_terms(v), g._edge_terms(coef)
    ):
        total += float(np.sum(wt * 0.5 * (cl + cr) * du * dv)) / h
    return total


def weighted_dirichlet_energy(g: Grid, coef, u) -> float:
    return weighted_dirichlet_bilinear(g, coef, u, u)


def tv_norm(g: Grid, u) -> float:
    """Anisotropic discrete total variation (interior jumps only).

    Each axis-adjacent node pair contributes ``|u_{i+1} - u_i|`` times the
    transverse trapezoid weight, so a 1D unit jump counts 1 and the indicator
    of ``{x < 1/2}`` in 2D has TV exactly 1.
    """
    total = 0.0
    for d, wt, _, _ in g._edge_terms(u):
        total += float(np.sum(wt * np.abs(d)))
    return total


def bv_norm(g: Grid, u) -> float:
    return integrate(g, np.abs(g.check(u))) + tv_norm(g, u)


def mollifier_kernel(g: Grid, eps: float) -> np.ndarray:
    """Sampled bump ``(1 - |x/eps|^2)^2`` on the grid, normalised to unit sum."""
    h = g.spacing
    r = int(np.floor(eps / h))
    offs = np.arange(-r, r + 1) * h
    if g.dim == 1:
        rho2 = (offs / eps) ** 2
    else:
        ox, oy = np.meshgrid(offs, offs, indexing="ij")
        rho2 = (ox**2 + oy**2) / eps**2
    k = np.where(rho2 < 1.0, (1.0 - rho2) ** 2, 0.0)
    return k / k.sum()


def mollify(g: Grid, m, eps: float) -> np.ndarray:
    """Convolve ``m`` with the bump kernel of radius ``eps``.

    ``m`` is extended outside the domain by even reflection about the
    boundary nodes; with trapezoid weights this conserves the integral exactly
    and keeps values inside ``[min m, max m]``.
    """
    if not 0.0 < eps < 0.5:
        raise ValueError(f"eps must lie in (0, 0.5), got {eps!r}")
    m = g.check(m)
    out = ndimage.convolve(m, mollifier_kernel(g, eps), mode="mirror")
    # convex combinations stay in range; clip the last-ulp overshoot
    return np.clip(out, m.min(), m.max())


def _cell_fraction_1d(x: np.ndarray, h: float, a: float, b: float) -> np.ndarray:
    lo = np.clip(x - 0.5 * h, 0.0, 1.0)
    hi = np.clip(x + 0.5 * h, 0.0, 1.0)
    overlap = np.clip(np.minimum(hi, b) - np.maximum(lo, a), 0.0, None)
    return overlap / (hi - lo)


def _node_fraction_1d(x: np.ndarray, a: float, b: float) -> np.ndarray:
    return ((x >= a - 1e-12) & (x <= b + 1e-12)).astype(float)


def indicator(g: Grid, sets, mode: str = "cell") -> np.ndarray:
    """Indicator of a union of intervals (1D) or rectangles (2D).

    ``mode="cell"`` gives each node the fraction of its dual cell covered by
    the set, so the trapezoid integral equals the exact measure; nodes are
    0/1 exactly when every endpoint sits on a node midpoint.
    ``mode="node"`` samples the closed set at the nodes: always 0/1, with the
    mass off by at most ``spacing/2`` per endpoint.

    ``sets`` is a list of ``(a, b)`` pairs in 1D or ``((ax, bx), (ay, by))``
    pairs in 2D; the pieces must not overlap.
    """
    if mode not in ("cell", "node"):
        raise ValueError(f"unknown indicator mode {mode!r}")
    h = g.spacing

    def frac(a, b):
        if mode == "cell":
            return _cell_fraction_1d(g.axis, h, float(a), float(b))
        return _node_fraction_1d(g.axis, float(a), float(b))

    out = np.zeros(g.shape)
    for piece in sets:
        if g.dim == 1:
            out += frac(*piece)
        else:
            (ax, bx), (ay, by) = piece
            out += np.multiply.outer(frac(ax, bx), frac(ay, by))
    return np.clip(out, 0.0, 1.0)


def is_bang_bang(values, tol: float = 1e-9) -> bool:
    v = np.asarray(values)
    return bool(np.all((np.abs(v) <= tol) | (np.abs(v - 1.0) <= tol)))
