"""
Adjoint states and Gateaux derivatives of ``m -> int j(theta_m)``.

All linear solves go through the cached factor of the symmetric matrix
``W @ L_m`` held by :class:`~logfrag.state.PopulationState`, with
``L_m = -mu*lap - (m - 2 theta)``.

Second derivative in energy form
--------------------------------
With ``u = p / theta`` the direct second derivative ``int theta_ddot`` (or its
``j`` analogue) can be rewritten as

    2 mu int u |grad theta_dot|^2  -  int V theta_dot^2,
    V = 2 u (m - theta) + mu lap(u) - j''(theta).

Using the edge-averaged ``u`` in the gradient term makes the discrete product
rule exact, so both expressions agree to round-off on the grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Grid, apply_neumann_laplacian, integrate, weighted_dirichlet_bilinear
from .state import CRITERIA, Criterion, PopulationState, SolverConfig, solve_state

__all__ = [
    "PositivityViolation",
    "AdjointState",
    "DerivativeReport",
    "KKTReport",
    "solve_adjoint",
    "gateaux_theta_dot",
    "gateaux_theta_ddot",
    "second_derivative_direct",
    "second_derivative_energy_form",
    "second_derivative_bilinear",
    "derivative_report",
    "first_order_kkt_report",
    "fd_gradient_errors",
    "fd_hessian_error",
]

DIVISION_GUARD = 1e-12


class PositivityViolation(RuntimeError):
    """Adjoint state failed to stay positive."""


@dataclass(frozen=True, eq=False)
class AdjointState:
    p: np.ndarray
    criterion: str
    switching: np.ndarray
    residual_norm: float
    crit: Criterion

    @property
    def tag(self) -> str:
        return "total_population" if self.criterion == "identity" else "general_j"


def _crit(criterion) -> Criterion:
    if criterion is None:
        return CRITERIA["identity"]
    if isinstance(criterion, str):
        try:
            return CRITERIA[criterion]
        except KeyError:
            raise ValueError(f"unknown criterion {criterion!r}") from None
    return criterion


def solve_adjoint(state: PopulationState, criterion=None) -> AdjointState:
    """Solve ``mu*lap(p) + p*(m - 2 theta) = -j'(theta)``.

    Raises
    ------
    PositivityViolation
        If ``min p <= 0``.
    """
    crit = _crit(criterion)
    g = state.grid
    th = state.theta
    crit.check_increasing(float(th.min()), float(th.max()))
    rhs = np.asarray(crit.dj(th), dtype=float) * np.ones(g.shape)
    p = state.solve_linearized(rhs)
    res = state.mu * apply_neumann_laplacian(g, p) + p * (state.m - 2.0 * th) + rhs
    if not np.all(np.isfinite(p)) or p.min() <= 0.0:
        raise PositivityViolation(f"adjoint state has min p = {p.min():.3e}")
    p.setflags(write=False)
    sw = th * p
    sw.setflags(write=False)
    return AdjointState(p, crit.name, sw, float(np.max(np.abs(res))), crit)


def gateaux_theta_dot(state: PopulationState, h) -> np.ndarray:
    """First variation: ``L_m theta_dot = h * theta``."""
    h = state.grid.check(h)
    return state.solve_linearized(h * state.theta)


def gateaux_theta_ddot(state: PopulationState, h, theta_dot=None) -> np.ndarray:
    """Second variation: ``L_m theta_ddot = 2 h theta_dot - 2 theta_dot^2``."""
    h = state.grid.check(h)
    td = gateaux_theta_dot(state, h) if theta_dot is None else theta_dot
    return state.solve_linearized(2.0 * h * td - 2.0 * td * td)


def second_derivative_direct(state: PopulationState, h, criterion=None) -> float:
    """``int j''(theta) theta_dot^2 + j'(theta) theta_ddot``."""
    crit = _crit(criterion)
    g, th = state.grid, state.theta
    td = gateaux_theta_dot(state, h)
    tdd = gateaux_theta_ddot(state, h, td)
    return integrate(g, crit.d2j(th) * td * td + crit.dj(th) * tdd)


def _ratio_and_potential(state: PopulationState, adjoint: AdjointState):
    th, p = state.theta, adjoint.p
    if th.min() < DIVISION_GUARD or p.min() < DIVISION_GUARD:
        raise PositivityViolation("theta or p too close to zero to form p/theta")
    u = p / th
    pot = (
        2.0 * u * (state.m - th)
        + state.mu * apply_neumann_laplacian(state.grid, u)
        - adjoint.crit.d2j(th)
    )
    return u, pot


def second_derivative_bilinear(state: PopulationState, adjoint: AdjointState, h1, h2) -> float:
    """Polarised energy form evaluated at ``(h1, h2)``."""
    g = state.grid
    u, pot = _ratio_and_potential(state, adjoint)
    t1 = gateaux_theta_dot(state, h1)
    t2 = t1 if h2 is h1 else gateaux_theta_dot(state, h2)
    return 2.0 * state.mu * weighted_dirichlet_bilinear(g, u, t1, t2) - integrate(g, pot * t1 * t2)


def second_derivative_energy_form(
    state: PopulationState, adjoint: AdjointState, h, theta_dot=None
) -> float:
    """Second derivative along ``h`` written as gradient term minus potential term."""
    g = state.grid
    u, pot = _ratio_and_potential(state, adjoint)
    td = gateaux_theta_dot(state, h) if theta_dot is None else theta_dot
    return 2.0 * state.mu * weighted_dirichlet_bilinear(g, u, td, td) - integrate(g, pot * td * td)


@dataclass(frozen=True, eq=False)
class DerivativeReport:
    direction: np.ndarray
    first_deriv: float
    first_deriv_dual: float
    second_deriv_direct: float
    second_deriv_energy_form: float
    theta_dot: np.ndarray
    u_ratio: np.ndarray
    potential: np.ndarray
    inf_u: float
    sup_potential: float

    def scalars(self) -> dict:
        return {
            "first_deriv": self.first_deriv,
            "first_deriv_dual": self.first_deriv_dual,
            "second_deriv_direct": self.second_deriv_direct,
            "second_deriv_energy_form": self.second_deriv_energy_form,
            "inf_u": self.inf_u,
            "sup_abs_potential": self.sup_potential,
        }


def derivative_report(state: PopulationState, h, adjoint: AdjointState | None = None) -> DerivativeReport:
    g = state.grid
    h = g.check(h)
    adjoint = adjoint or solve_adjoint(state)
    crit = adjoint.crit
    th = state.theta
    td = gateaux_theta_dot(state, h)
    tdd = gateaux_theta_ddot(state, h, td)
    u, pot = _ratio_and_potential(state, adjoint)
    direct = integrate(g, crit.d2j(th) * td * td + crit.dj(th) * tdd)
    return DerivativeReport(
        direction=h,
        first_deriv=integrate(g, crit.dj(th) * td),
        first_deriv_dual=integrate(g, adjoint.switching * h),
        second_deriv_direct=direct,
        second_deriv_energy_form=second_derivative_energy_form(state, adjoint, h, td),
        theta_dot=td,
        u_ratio=u,
        potential=pot,
        inf_u=float(u.min()),
        sup_potential=float(np.max(np.abs(pot))),
    )


@dataclass(frozen=True)
class KKTReport:
    c: float
    max_deviation: float
    inactive_fraction: float
    sign_consistent: bool
    level_bracket: tuple[float, float]
    message: str


def first_order_kkt_report(
    g: Grid, m, adjoint: AdjointState, tol_active: float = 1e-3, sign_rtol: float = 1e-4
) -> KKTReport:
    """Check the level-set structure of the switching function ``theta * p``.

    ``c`` is the median of the switching function over the inactive set.  When
    that set is empty, ``c`` is the midpoint of the bracket
    ``[max over {m=0}, min over {m=1}]``.
    """
    mv = m.values if hasattr(m, "values") else g.check(m)
    sw = adjoint.switching
    slack = sign_rtol * float(np.max(np.abs(sw)))
    inactive = (mv > tol_active) & (mv < 1.0 - tol_active)
    upper = mv >= 1.0 - tol_active
    lower = mv <= tol_active
    lo = float(sw[lower].max()) if lower.any() else -np.inf
    hi = float(sw[upper].min()) if upper.any() else np.inf
    frac = integrate(g, inactive.astype(float))
    if inactive.any():
        c = float(np.median(sw[inactive]))
        dev = float(np.max(np.abs(sw[inactive] - c)))
        ok = lo <= c + slack and hi >= c - slack
        msg = "inactive set present"
    else:
        c = 0.5 * (lo + hi)
        dev = max(0.0, lo - hi)
        ok = lo <= hi + slack
        msg = "bang-bang, c bracketed by level sets"
    return KKTReport(c, dev, frac, bool(ok), (lo, hi), msg)


def _unit_sup(g: Grid, h) -> np.ndarray:
    h = g.check(h)
    top = float(np.max(np.abs(h)))
    if top == 0.0:
        raise ValueError("finite-difference direction must be nonzero")
    return h / top


def fd_gradient_errors(
    g: Grid, m, mu: float, h, eps_list=(1e-3, 1e-4, 1e-5), cfg: SolverConfig | None = None
) -> list[float]:
    """Relative errors of forward differences of ``F`` against ``int theta_dot``.

    ``h`` is rescaled to ``max|h| = 1`` so that ``eps`` is the largest change
    of the resource at any node.
    """
    m = g.check(m)
    h = _unit_sup(g, h)
    base = solve_state(g, m, mu, cfg)
    exact = integrate(g, gateaux_theta_dot(base, h))
    out = []
    for eps in eps_list:
        fp = solve_state(g, m + eps * h, mu, cfg, initial=base.theta).total_population
        out.append(abs((fp - base.total_population) / eps - exact) / abs(exact))
    return out


def fd_hessian_error(
    g: Grid, m, mu: float, h, eps: float = 1e-3, cfg: SolverConfig | None = None
) -> float:
    """Relative error of the central second difference of ``F`` against ``int theta_ddot``.

    ``h`` is rescaled to ``max|h| = 1`` as in :func:`fd_gradient_errors`.
    """
    m = g.check(m)
    h = _unit_sup(g, h)
    base = solve_state(g, m, mu, cfg)
    exact = second_derivative_direct(base, h)
    fp = solve_state(g, m + eps * h, mu, cfg, initial=base.theta).total_population
    fm = solve_state(g, m - eps * h, mu, cfg, initial=base.theta).total_population
    fd = (fp - 2.0 * base.total_population + fm) / eps**2
    return abs(fd - exact) / abs(exact)
