"""
Steady logistic-diffusive equation ``mu * lap(theta) + theta * (m - theta) = 0``
with homogeneous Neumann data, and the variational energies attached to it.

Two independent solvers are provided:

* :func:`solve_state` -- damped Newton on the discrete residual (the workhorse);
* :func:`minimize_energy_oracle` -- accelerated projected gradient descent on the
  discrete energy over ``{u >= 0}``, used only to cross-check Newton.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve, splu

from .grid import Grid, dirichlet_energy, integrate, is_bang_bang

__all__ = [
    "SolverConfig",
    "NonConvergence",
    "ResourceDistribution",
    "PopulationState",
    "Criterion",
    "CRITERIA",
    "solve_state",
    "minimize_energy_oracle",
    "energy",
    "shifted_energy",
    "criterion_j",
    "state_residual",
]

THETA_FLOOR = 1e-12


class NonConvergence(RuntimeError):
    """Newton hit its iteration or line-search cap."""


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-10
    max_newton: int = 200
    max_linesearch: int = 40
    fallback_gradient_flow: bool = False


@dataclass(frozen=True, eq=False)
class ResourceDistribution:
    """Admissible resource field: ``0 <= m <= 1``, ``int m = m0``, ``m != 0``."""

    grid: Grid
    values: np.ndarray
    mass: float

    @classmethod
    def from_values(cls, grid: Grid, values, m0: float | None = None, rtol: float = 1e-10):
        v = grid.check(values).copy()
        if not np.all(np.isfinite(v)):
            raise ValueError("resource distribution has non-finite values")
        if v.min() < 0.0 or v.max() > 1.0:
            raise ValueError(f"resource distribution leaves [0, 1]: range [{v.min()}, {v.max()}]")
        mass = integrate(grid, v)
        if mass <= 0.0:
            raise ValueError("resource distribution is identically zero")
        if m0 is not None and abs(mass - m0) > rtol * max(abs(m0), 1e-300):
            raise ValueError(f"resource mass {mass!r} differs from prescribed m0={m0!r}")
        v.setflags(write=False)
        return cls(grid, v, mass)

    @classmethod
    def constant(cls, grid: Grid, m0: float):
        return cls.from_values(grid, grid.full(m0))

    @property
    def m0(self) -> float:
        return self.mass

    def is_bang_bang(self, tol: float = 1e-9) -> bool:
        return is_bang_bang(self.values, tol)

    def inactive_mask(self, tol: float = 1e-3) -> np.ndarray:
        return (self.values > tol) & (self.values < 1.0 - tol)


def _values(grid: Grid, m) -> np.ndarray:
    if isinstance(m, ResourceDistribution):
        return m.values
    return grid.check(m)


@dataclass(frozen=True, eq=False)
class PopulationState:
    grid: Grid
    m: np.ndarray
    theta: np.ndarray
    mu: float
    total_population: float
    energy: float
    shifted_energy: float
    newton_iters: int
    residual_norm: float
    method: str = "newton"

    @cached_property
    def linearized(self):
        """LU factor of ``W @ L_m`` with ``L_m = -mu*lap - (m - 2 theta)``.

        ``W @ L_m`` is symmetric; solving ``L_m x = r`` amounts to
        ``(W @ L_m) x = W r``.  Cached per state and read-only afterwards.
        """
        return splu(linearized_matrix(self.grid, self.m, self.theta, self.mu).tocsc())

    @cached_property
    def _refinement_operator(self):
        # diffusion and reaction kept apart in extended precision: summing them
        # into one double diagonal rounds away the small reaction term
        ld = np.longdouble
        stiff = (self.mu * self.grid.stiffness).astype(ld).tocsr()
        w = self.grid.weights.ravel().astype(ld)
        react = w * (self.m.ravel().astype(ld) - 2 * self.theta.ravel().astype(ld))
        return stiff, react, w

    def solve_linearized(self, rhs, refine: int = 3) -> np.ndarray:
        """Solve ``L_m x = rhs``, then refine with extended-precision residuals."""
        rhs = self.grid.check(rhs)
        stiff, react, w = self._refinement_operator
        b = w * rhs.ravel().astype(np.longdouble)
        x = self.linearized.solve(np.asarray(b, dtype=float))
        best = np.inf
        for _ in range(refine):
            xl = x.astype(np.longdouble)
            r = b - (stiff @ xl - react * xl)
            rn = float(np.max(np.abs(r)))
            if rn == 0.0 or rn >= best:
                break
            best = rn
            x = x + self.linearized.solve(np.asarray(r, dtype=float))
        return x.reshape(self.grid.shape)


def linearized_matrix(grid: Grid, m, theta, mu: float, shift=None) -> sp.csr_matrix:
    """Symmetric matrix ``W @ (-mu*lap - diag(potential))``.

    ``potential`` defaults to ``m - 2*theta``.
    """
    pot = (m - 2.0 * theta) if shift is None else shift
    w = grid.weights.ravel()
    return (mu * grid.stiffness - sp.diags(w * np.asarray(pot).ravel())).tocsr()


def state_residual(grid: Grid, m, mu: float, theta) -> np.ndarray:
    th = grid.check(theta)
    return (mu * (grid.laplacian @ th.ravel())).reshape(grid.shape) + th * (m - th)


def _noise_floor(grid: Grid, mu: float, scale: float) -> float:
    # round-off in mu*lap(theta) grows like mu/h^2; below this the residual is noise
    return 64.0 * np.finfo(float).eps * (mu * 4.0 * grid.dim / grid.spacing**2 + 1.0) * max(scale, 1.0)


def energy(grid: Grid, m, mu: float, u) -> float:
    """``(mu/2) int |grad u|^2 - (1/2) int m u^2 + (1/3) int u^3`` for ``u >= 0``."""
    u = grid.check(u)
    if np.any(u < 0.0):
        raise ValueError("energy is defined on non-negative fields only")
    m = _values(grid, m)
    return (
        0.5 * mu * dirichlet_energy(grid, u)
        - 0.5 * integrate(grid, m * u * u)
        + integrate(grid, u**3) / 3.0
    )


def shifted_energy(grid: Grid, m, mu: float, u) -> float:
    """Energy plus ``(1/6) int m^3``; vanishes at ``u = m`` for constant ``m``."""
    m = _values(grid, m)
    return energy(grid, m, mu, u) + integrate(grid, m**3) / 6.0


def _make_state(grid, m, mu, theta, iters, method) -> PopulationState:
    res = state_residual(grid, m, mu, theta)
    theta = theta.copy()
    theta.setflags(write=False)
    return PopulationState(
        grid=grid,
        m=m,
        theta=theta,
        mu=float(mu),
        total_population=integrate(grid, theta),
        energy=energy(grid, m, mu, theta),
        shifted_energy=shifted_energy(grid, m, mu, theta),
        newton_iters=iters,
        residual_norm=float(np.max(np.abs(res))),
        method=method,
    )


def solve_state(
    grid: Grid,
    m,
    mu: float,
    cfg: SolverConfig | None = None,
    initial=None,
) -> PopulationState:
    """Solve for the positive steady state by damped Newton.

    The initial guess is ``max(m, 0.1*m0)`` unless ``initial`` is given (warm
    starts inside the optimiser).  Each step is halved until the max-norm
    residual decreases and iterates are clipped at ``1e-12``.  Convergence is
    declared when the residual drops below ``cfg.tol`` or, for stiff
    ``mu/h^2``, below the round-off floor of the discrete Laplacian.
    """
    cfg = cfg or SolverConfig()
    if not mu > 0.0:
        raise ValueError(f"diffusivity mu must be positive, got {mu!r}")
    mv = _values(grid, m)
    if np.any(mv < 0.0) or not np.any(mv > 0.0):
        raise ValueError("resource field must be non-negative and not identically zero")
    m0 = integrate(grid, mv)
    if initial is None:
        theta = np.maximum(mv, 0.1 * m0)
    else:
        theta = np.maximum(grid.check(initial), THETA_FLOOR)
    th = theta.ravel().copy()
    mflat = mv.ravel()
    lap = grid.laplacian

    def resid(t):
        return mu * (lap @ t) + t * (mflat - t)

    r = resid(th)
    rn = float(np.max(np.abs(r)))
    tol = max(cfg.tol, _noise_floor(grid, mu, float(np.max(th))))
    it = 0
    while rn > tol:
        if it >= cfg.max_newton:
            break
        jac = (mu * lap + sp.diags(mflat - 2.0 * th)).tocsc()
        step = spsolve(jac, -r)
        t = 1.0
        for _ in range(cfg.max_linesearch):
            cand = np.maximum(th + t * step, THETA_FLOOR)
            rc = resid(cand)
            rcn = float(np.max(np.abs(rc)))
            if rcn < rn:
                break
            t *= 0.5
        else:
            it = cfg.max_newton
            break
        th, r, rn = cand, rc, rcn
        it += 1
        tol = max(cfg.tol, _noise_floor(grid, mu, float(np.max(th))))
    if rn <= tol and it > 0:
        # one extra step is nearly free and takes the iterate to round-off
        jac = (mu * lap + sp.diags(mflat - 2.0 * th)).tocsc()
        cand = np.maximum(th + spsolve(jac, -r), THETA_FLOOR)
        rc = resid(cand)
        if np.max(np.abs(rc)) <= rn:
            th = cand
            it += 1
    if rn > tol:
        if initial is not None:
            # a poor warm start must not cost the solve
            return solve_state(grid, mv, mu, cfg)
        if cfg.fallback_gradient_flow:
            u = minimize_energy_oracle(grid, mv, mu)
            return _make_state(grid, mv, mu, u, it, "gradient_flow")
        raise NonConvergence(f"Newton stalled after {it} iterations, residual {rn:.3e} > {tol:.3e}")
    return _make_state(grid, mv, mu, th.reshape(grid.shape), it, "newton")


def minimize_energy_oracle(
    grid: Grid,
    m,
    mu: float,
    tol: float = 1e-11,
    max_iter: int = 2_000_000,
    initial=None,
) -> np.ndarray:
    """Minimise the discrete energy over ``{u >= 0}`` by projected gradient descent.

    Nesterov momentum with gradient-based restarts; step ``1/L`` with ``L`` a
    bound on the Hessian spectrum.  Stops when the projected gradient (max
    norm, nodal metric) falls below ``tol``.  Starts from ``u = 1`` so that it
    shares nothing with the Newton path.
    """
    mv = _values(grid, m)
    lap = grid.laplacian
    mflat = mv.ravel()
    x = np.ones(grid.node_count) if initial is None else grid.check(initial).ravel().copy()
    lip = mu * 4.0 * grid.dim / grid.spacing**2 + 2.0 * max(1.0, float(np.max(x))) + 1.0
    step = 1.0 / lip
    floor = _noise_floor(grid, mu, 1.0)

    def grad(u):
        return -mu * (lap @ u) - mflat * u + u * u

    y = x.copy()
    t = 1.0
    for k in range(max_iter):
        x_new = np.maximum(y - step * grad(y), 0.0)
        if np.dot(y - x_new, x_new - x) > 0.0:
            t = 1.0
            y = x_new.copy()
        else:
            t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            y = x_new + ((t - 1.0) / t_new) * (x_new - x)
            t = t_new
        x = x_new
        if k % 50 == 0:
            pg = (x - np.maximum(x - step * grad(x), 0.0)) / step
            if np.max(np.abs(pg)) <= max(tol, floor):
                break
    return x.reshape(grid.shape)


def _zeros(t):
    return np.zeros_like(t)


@dataclass(frozen=True)
class Criterion:
    """A criterion ``int j(theta)`` with ``j`` increasing on ``[0, 1]``."""

    name: str
    j: Callable[[np.ndarray], np.ndarray]
    dj: Callable[[np.ndarray], np.ndarray]
    d2j: Callable[[np.ndarray], np.ndarray] = field(default=_zeros)

    def check_increasing(self, lo: float = 0.0, hi: float = 1.0, samples: int = 129) -> None:
        t = np.linspace(lo, hi, samples)
        if np.any(np.asarray(self.dj(t)) <= 0.0):
            raise ValueError(f"criterion {self.name!r}: j' must be positive on [{lo}, {hi}]")


def _ones(t):
    return np.ones_like(t)


def _ident(t):
    return np.asarray(t, dtype=float)


def _quad(t):
    return t - 0.25 * t * t


def _dquad(t):
    return 1.0 - 0.5 * t


def _d2quad(t):
    return np.full_like(t, -0.5)


def _dlog1p(t):
    return 1.0 / (1.0 + t)


def _d2log1p(t):
    return -1.0 / (1.0 + t) ** 2


CRITERIA = {
    "identity": Criterion("identity", _ident, _ones, _zeros),
    "quadratic": Criterion("quadratic", _quad, _dquad, _d2quad),
    "log1p": Criterion("log1p", np.log1p, _dlog1p, _d2log1p),
}


def criterion_j(state: PopulationState, crit: Criterion) -> float:
    """``int j(theta)``; rejects ``j`` unless ``j' > 0`` across the range of theta."""
    th = state.theta
    crit.check_increasing(float(th.min()), float(th.max()))
    return integrate(state.grid, crit.j(th))
