"""
Invariant suite run by ``logfrag verify``: one pass/fail line per property.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Grid, apply_neumann_laplacian, dirichlet_energy, integrate, inner
from .sensitivity import (
    derivative_report,
    fd_gradient_errors,
    fd_hessian_error,
    solve_adjoint,
)
from .spectral import eigenpairs, principal_eigenvalue
from .state import SolverConfig, minimize_energy_oracle, solve_state

__all__ = ["Check", "random_interior_resource", "random_smooth_direction", "random_direction", "run_invariant_suite"]


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""


def random_interior_resource(
    g: Grid, rng: np.random.Generator, m0: float, spread: float = 0.3, smooth: bool = False
) -> np.ndarray:
    """Random field with mass ``m0`` and values strictly inside ``(0, 1)``.

    ``smooth=True`` draws from the lowest cosine modes instead of white noise.
    """
    if smooth:
        v = random_smooth_direction(g, rng)
    else:
        v = rng.uniform(-1.0, 1.0, g.shape)
        v -= integrate(g, v)
    amp = spread * min(m0, 1.0 - m0) / max(float(np.max(np.abs(v))), 1e-300)
    return m0 + amp * v


def random_direction(g: Grid, rng: np.random.Generator) -> np.ndarray:
    """Gaussian nodal field with zero mean."""
    h = rng.standard_normal(g.shape)
    return h - integrate(g, h)


def random_smooth_direction(g: Grid, rng: np.random.Generator, modes: int = 6) -> np.ndarray:
    """Zero-mean random combination of the lowest Neumann cosines."""
    h = np.zeros(g.shape)
    for k in range(1, modes + 1):
        if g.dim == 1:
            h += rng.standard_normal() * np.cos(k * np.pi * g.coords[0]) / k
        else:
            for l in range(modes + 1 - k):
                h += rng.standard_normal() * np.cos(k * np.pi * g.coords[0]) * np.cos(l * np.pi * g.coords[1]) / (k + l)
    return h - integrate(g, h)


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(abs(b), 1e-300)


def run_invariant_suite(
    g: Grid, m, mu: float, seed: int = 0, cfg: SolverConfig | None = None
):
    """Run the property checks on ``(g, m, mu)`` and a seeded random interior instance.

    Returns the list of :class:`Check` and the derivative report along a
    random direction at ``m``.
    """
    rng = np.random.default_rng(seed)
    m = g.check(m)
    checks: list[Check] = []

    def add(name, value, threshold, ok=None, detail=""):
        passed = bool(value <= threshold) if ok is None else bool(ok)
        checks.append(Check(name, passed, float(value), float(threshold), detail))

    u, v = rng.standard_normal(g.shape), rng.standard_normal(g.shape)
    lhs = inner(g, v, apply_neumann_laplacian(g, u))
    rhs = -0.5 * (dirichlet_energy(g, u + v) - dirichlet_energy(g, u) - dirichlet_energy(g, v))
    add("green_identity", _rel(lhs, rhs), 1e-10)

    state = solve_state(g, m, mu, cfg)
    th = state.theta
    m0 = integrate(g, m)
    cube = integrate(g, th**3) / 6.0
    add("energy_identity", _rel(state.energy, -cube), 1e-8)
    add("theta_positive", -float(th.min()), 0.0, ok=th.min() > 0)
    theta0 = np.maximum(m, 0.1 * m0)
    add("max_principle", float(th.max()), max(1.0, float(theta0.max())) + 1e-12)
    oracle = minimize_energy_oracle(g, m, mu)
    add("oracle_agreement_linf", float(np.max(np.abs(oracle - th))), 1e-6)

    adj = solve_adjoint(state)
    add("adjoint_positive", -float(adj.p.min()), 0.0, ok=adj.p.min() > 0)
    lam1 = float(eigenpairs(state, 1).eigenvalues[0])
    add("lambda1_positive", -lam1, 0.0, ok=lam1 > 0)
    add("principal_eigenvalue_zero", abs(principal_eigenvalue(g, mu, m - th)), 1e-6)

    h = random_direction(g, rng)
    rep = derivative_report(state, h, adj)
    add("duality", _rel(rep.first_deriv, rep.first_deriv_dual), 1e-8)
    add("second_derivative_forms", _rel(rep.second_deriv_energy_form, rep.second_deriv_direct), 1e-6)
    add("u_ratio_positive", -rep.inf_u, 0.0, ok=rep.inf_u > 0)

    # forward differences need a gradient well away from zero: smooth non-critical m
    mr = random_interior_resource(g, rng, min(max(m0, 0.05), 0.95), spread=0.75, smooth=True)
    hs = random_direction(g, rng)
    add("fd_gradient_best", min(fd_gradient_errors(g, mr, mu, hs, cfg=cfg)), 1e-4)
    add("fd_hessian", fd_hessian_error(g, mr, mu, hs, cfg=cfg), 1e-3)

    if g.dim == 1:
        add("efficiency_bound", state.total_population / m0, 3.0)
    return checks, rep
