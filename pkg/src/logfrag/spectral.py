"""
Eigenpairs of the linearised operator ``L_m = -mu*lap - (m - 2 theta)`` and the
two constructive non-optimality tests built from them.

Eigenproblems are posed as the symmetric generalized problem
``(W @ L) psi = lambda W psi`` so eigenfunctions come out orthonormal for the
quadrature inner product.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh

from .grid import Grid, apply_neumann_laplacian, dirichlet_energy, integrate, inner
from .sensitivity import (
    gateaux_theta_dot,
    second_derivative_energy_form,
    solve_adjoint,
)
from .state import PopulationState, SolverConfig, linearized_matrix, solve_state

__all__ = [
    "IterationFailure",
    "InactiveSetTooSmall",
    "GeometryError",
    "SpectralDecomposition",
    "operator_eigenpairs",
    "eigenpairs",
    "principal_eigenvalue",
    "high_mode_perturbation",
    "CertificateReport",
    "bang_bang_certificate",
    "OscillatoryPerturbation",
    "oscillatory_perturbation",
    "K_SCHEDULE",
]

K_SCHEDULE = (4, 8, 16, 32, 64)
DENSE_LIMIT = 2500


class IterationFailure(RuntimeError):
    """Eigen-solver missed its residual target."""


class InactiveSetTooSmall(ValueError):
    """Too few nodes in ``{0 < m < 1}`` to satisfy the orthogonality constraints."""


class GeometryError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray  # shape (K, *grid.shape)
    residuals: np.ndarray
    operator_tag: str
    grid: Grid

    @property
    def count(self) -> int:
        return len(self.eigenvalues)


def operator_eigenpairs(
    g: Grid, mu: float, potential, K: int, tag: str = "", rtol: float = 1e-8
) -> SpectralDecomposition:
    """``K`` smallest eigenpairs of ``-mu*lap - potential``.

    Dense symmetric solve for small grids, shift-invert Lanczos otherwise.
    The shift sits below ``min(-potential)``, which bounds the spectrum from
    below because ``-lap`` is non-negative.
    """
    if K < 1 or K > max(1, g.node_count // 4):
        raise ValueError(f"K must lie in [1, node_count/4], got {K}")
    pot = g.check(potential)
    kmat = linearized_matrix(g, None, None, mu, shift=pot)
    w = g.weights.ravel()
    if g.node_count <= DENSE_LIMIT:
        vals, vecs = sla.eigh(kmat.toarray(), np.diag(w), subset_by_index=[0, K - 1])
    else:
        sigma = float(np.min(-pot)) - 1.0
        vals, vecs = eigsh(kmat.tocsc(), k=K, M=sp.diags(w).tocsc(), sigma=sigma, which="LM")
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
    # fix signs so each eigenfunction has a positive weighted sum or first nonzero entry
    for i in range(K):
        v = vecs[:, i]
        s = np.dot(w, v)
        if abs(s) < 1e-10:
            s = v[np.flatnonzero(np.abs(v) > 1e-12)[0]]
        if s < 0:
            vecs[:, i] = -v
    resid = np.empty(K)
    for i in range(K):
        r = (kmat @ vecs[:, i]) / w - vals[i] * vecs[:, i]
        resid[i] = np.sqrt(np.dot(w, r * r))
    if np.any(resid > rtol * (1.0 + np.abs(vals))):
        raise IterationFailure(f"eigen-residual {resid.max():.3e} above target")
    funcs = vecs.T.reshape((K, *g.shape))
    return SpectralDecomposition(vals, funcs, resid, tag, g)


def eigenpairs(state: PopulationState, K: int) -> SpectralDecomposition:
    """``K`` smallest eigenpairs of ``-mu*lap - (m - 2 theta)``."""
    pot = state.m - 2.0 * state.theta
    tag = f"L_m: mu={state.mu!r}, n={state.grid.n_per_axis}, dim={state.grid.dim}"
    return operator_eigenpairs(state.grid, state.mu, pot, K, tag)


def principal_eigenvalue(g: Grid, mu: float, potential) -> float:
    """Smallest eigenvalue of ``-mu*lap - potential``."""
    return float(operator_eigenpairs(g, mu, potential, 1).eigenvalues[0])


def high_mode_perturbation(
    state: PopulationState,
    spec: SpectralDecomposition,
    K: int,
    inactive_mask,
    seed: int = 0,
) -> np.ndarray:
    """Direction supported on the inactive set with ``h*theta`` free of the first ``K`` modes.

    A seeded Gaussian field on the inactive nodes is projected onto the joint
    kernel of ``h -> int h`` and ``h -> int theta psi_k h`` (``k <= K``), then
    scaled so that ``int (h theta)^2 = 1``.
    """
    g = state.grid
    mask = np.asarray(inactive_mask, dtype=bool).reshape(g.shape)
    idx = np.flatnonzero(mask.ravel())
    if K > spec.count:
        raise ValueError(f"decomposition holds {spec.count} pairs, {K} requested")
    if idx.size <= K + 1:
        raise InactiveSetTooSmall(f"{idx.size} inactive nodes cannot host {K + 1} constraints")
    w = g.weights.ravel()[idx]
    th = state.theta.ravel()[idx]
    rows = [w] + [w * th * spec.eigenfunctions[k].ravel()[idx] for k in range(K)]
    q, _ = np.linalg.qr(np.array(rows).T)
    rng = np.random.default_rng(seed)
    s = rng.standard_normal(g.node_count)[idx]
    for _ in range(2):
        s = s - q @ (q.T @ s)
    h = np.zeros(g.node_count)
    h[idx] = s
    h = h.reshape(g.shape)
    return h / np.sqrt(integrate(g, (h * state.theta) ** 2))


@dataclass(frozen=True, eq=False)
class CertificateReport:
    applicable: bool
    found: bool
    message: str
    K: int | None = None
    direction: np.ndarray | None = None
    second_derivative: float | None = None
    first_derivative: float | None = None
    step: float | None = None
    ascent: float | None = None
    lambda_next: float | None = None
    potential_bound: float | None = None
    gradient_energy: float | None = None
    theta_dot_sq: float | None = None
    tried: list = field(default_factory=list)

    def scalars(self) -> dict:
        keys = (
            "applicable", "found", "message", "K", "second_derivative", "first_derivative",
            "step", "ascent", "lambda_next", "potential_bound", "gradient_energy", "theta_dot_sq",
        )
        out = {k: getattr(self, k) for k in keys}
        out["tried"] = [list(t) for t in self.tried]
        return out


def _max_step(mv: np.ndarray, h: np.ndarray) -> float:
    with np.errstate(divide="ignore"):
        up = np.where(h > 0, (1.0 - mv) / h, np.inf)
        dn = np.where(h < 0, -mv / h, np.inf)
    return float(min(up.min(), dn.min()))


def bang_bang_certificate(
    g: Grid,
    m,
    mu: float,
    K_max: int = 64,
    seed: int = 0,
    tol_active: float = 1e-3,
    cfg: SolverConfig | None = None,
    schedule=K_SCHEDULE,
    max_backtrack: int = 60,
) -> CertificateReport:
    """Search for an ascent direction showing ``m`` is not a local maximiser.

    For each ``K`` in the schedule, build :func:`high_mode_perturbation` and
    evaluate the second derivative in energy form.  On the first positive
    value, orient ``h`` so the first derivative is non-negative and halve
    ``eps`` from the largest feasible step until ``F(m + eps h) > F(m)``.
    """
    mv = m.values if hasattr(m, "values") else g.check(m)
    inactive = (mv > tol_active) & (mv < 1.0 - tol_active)
    if not inactive.any():
        return CertificateReport(False, False, "already bang-bang, test not applicable")
    n_in = int(inactive.sum())
    ks = [k for k in schedule if k <= K_max and k + 1 < n_in]
    if not ks:
        raise InactiveSetTooSmall(f"{n_in} inactive nodes leave no room for K >= {min(schedule)}")
    state = solve_state(g, mv, mu, cfg)
    adj = solve_adjoint(state)
    spec = eigenpairs(state, min(max(ks) + 1, g.node_count // 4))
    bound = float(np.max(np.abs(mv - 2.0 * state.theta))) + 1.0
    tried = []
    for K in ks:
        if K + 1 > spec.count:
            break
        h = high_mode_perturbation(state, spec, K, inactive, seed)
        td = gateaux_theta_dot(state, h)
        f2 = second_derivative_energy_form(state, adj, h, td)
        tried.append((K, f2))
        if f2 <= 0.0:
            continue
        f1 = inner(g, adj.switching, h)
        if f1 < 0.0:
            h, td, f1 = -h, -td, -f1
        eps = _max_step(mv, h)
        gain = -np.inf
        for _ in range(max_backtrack):
            cand = np.clip(mv + eps * h, 0.0, 1.0)
            gain = solve_state(g, cand, mu, cfg, initial=state.theta).total_population - state.total_population
            if gain > 0.0:
                break
            eps *= 0.5
        return CertificateReport(
            True,
            bool(gain > 0.0),
            "certificate found" if gain > 0.0 else "positive curvature but no realised ascent",
            K=K,
            direction=h,
            second_derivative=f2,
            first_derivative=f1,
            step=eps,
            ascent=float(gain),
            lambda_next=float(spec.eigenvalues[K]),
            potential_bound=bound,
            gradient_energy=mu * dirichlet_energy(g, td),
            theta_dot_sq=integrate(g, td * td),
            tried=tried,
        )
    return CertificateReport(True, False, "K schedule exhausted without positive curvature", tried=tried)


@dataclass(frozen=True, eq=False)
class OscillatoryPerturbation:
    psi: np.ndarray
    h: np.ndarray
    support: np.ndarray
    grad_energy: float
    mean_correction: float


def _bump(rho: np.ndarray, r: float) -> np.ndarray:
    """Radial bump with value 1 at the centre and compact support in the ball of radius ``r``."""
    s = np.clip(rho / r, 0.0, 1.0)
    out = np.zeros_like(s)
    inside = s < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
    return out


def oscillatory_perturbation(
    state: PopulationState, x0, y0, r: float, k: float, tol_active: float = 1e-3
) -> OscillatoryPerturbation:
    """Antisymmetric pair of oscillating bumps and the matching resource direction.

    ``psi = chi(x - x0) cos(k|x - x0|) - chi(x - y0) cos(k|x - y0|)`` and
    ``h = L_m(psi) / theta``, mean-corrected on the two balls when needed.
    """
    g = state.grid
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    y0 = np.atleast_1d(np.asarray(y0, dtype=float))
    if x0.size != g.dim or y0.size != g.dim:
        raise GeometryError("centres must have one coordinate per axis")
    if not r > 0 or np.linalg.norm(x0 - y0) <= 2.0 * r:
        raise GeometryError("balls must have positive radius and be disjoint")
    if np.any(x0 - r < 0) or np.any(x0 + r > 1) or np.any(y0 - r < 0) or np.any(y0 + r > 1):
        raise GeometryError("balls must lie inside the domain")
    dist = [np.sqrt(sum((c - z) ** 2 for c, z in zip(g.coords, ctr))) for ctr in (x0, y0)]
    balls = [d <= r + 1e-12 for d in dist]
    inactive = (state.m > tol_active) & (state.m < 1.0 - tol_active)
    if not all(np.all(inactive[b]) for b in balls):
        raise GeometryError("balls must sit inside the inactive set {0 < m < 1}")
    psi = _bump(dist[0], r) * np.cos(k * dist[0]) - _bump(dist[1], r) * np.cos(k * dist[1])
    lpsi = -state.mu * apply_neumann_laplacian(g, psi) - (state.m - 2.0 * state.theta) * psi
    h = lpsi / state.theta
    # the discrete stencil reaches one node past each ball
    support = np.zeros(g.shape, dtype=bool)
    for d in dist:
        support |= d <= r + g.spacing * np.sqrt(g.dim) + 1e-12
    h = np.where(support, h, 0.0)
    mean = integrate(g, h)
    corr = mean / integrate(g, support.astype(float))
    if abs(mean) > 1e-14:
        h = np.where(support, h - corr, 0.0)
    else:
        corr = 0.0
    return OscillatoryPerturbation(psi, h, support, dirichlet_energy(g, psi), float(corr))
