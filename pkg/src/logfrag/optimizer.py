"""
Maximisation of ``m -> int j(theta_m)`` over ``{0 <= m <= 1, int m = m0}``.

The scheme alternates two phases until neither moves ``m``:

1. projected gradient ascent ``m <- P(m + tau * theta p)`` with Armijo
   backtracking, inner products taken with the quadrature weights;
2. a bathtub polish ``m <- 1{theta p > c}`` with the mass matched exactly,
   iterated to a fixed point and kept only if it does not lose objective.

Every start (the constant ``m0`` plus seeded random fields) runs this loop
independently; the best final objective wins.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import Grid, integrate
from .parallel import parallel_map
from .sensitivity import first_order_kkt_report, solve_adjoint
from .state import (
    CRITERIA,
    Criterion,
    NonConvergence,
    ResourceDistribution,
    SolverConfig,
    solve_state,
)

__all__ = [
    "CycleDetected",
    "OptimizerConfig",
    "OptimizationResult",
    "ThresholdResult",
    "project_onto_constraints",
    "bathtub",
    "threshold_fixed_point",
    "optimize",
    "optimize_general_j",
    "inactive_measure",
]


class CycleDetected(RuntimeError):
    """Bathtub iteration fell into a period-2 orbit."""


@dataclass(frozen=True)
class OptimizerConfig:
    n_restarts: int = 5
    seed: int = 0
    max_iter: int = 400
    max_rounds: int = 20
    max_polish: int = 50
    max_backtrack: int = 40
    armijo_factor: float = 0.5
    armijo_sigma: float = 1e-4
    step_tol: float = 1e-10
    tol_active: float = 1e-3
    workers: int | None = None
    solver: SolverConfig = field(default_factory=SolverConfig)


def _check_m0(m0: float) -> None:
    if not 0.0 < m0 < 1.0:
        raise ValueError(f"m0 must lie in (0,1), got {m0!r}")


def project_onto_constraints(g: Grid, v, m0: float, tol: float = 1e-12) -> ResourceDistribution:
    """Quadrature-weighted projection onto ``{0 <= m <= 1, int m = m0}``.

    The projection is ``clip(v - l, 0, 1)``; the scalar ``l`` is bracketed
    by bisection on the (monotone) mass and then finished exactly on the
    final free set.
    """
    _check_m0(m0)
    v = g.check(v)
    if not np.all(np.isfinite(v)):
        raise ValueError("cannot project a field with non-finite values")
    w = g.weights
    if v.min() >= 0.0 and v.max() <= 1.0 and abs(integrate(g, v) - m0) <= tol:
        return ResourceDistribution.from_values(g, v)

    def mass(level):
        return float(np.sum(w * np.clip(v - level, 0.0, 1.0)))

    lo, hi = float(v.min()) - 1.0, float(v.max())
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mass(mid) > m0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * max(1.0, abs(mid)):
            break
    level = 0.5 * (lo + hi)
    shifted = v - level
    free = (shifted > 0.0) & (shifted < 1.0)
    if free.any():
        top = shifted >= 1.0
        exact = (np.sum(w[free] * v[free]) + np.sum(w[top]) - m0) / np.sum(w[free])
        trial = np.clip(v - exact, 0.0, 1.0)
        if abs(float(np.sum(w * trial)) - m0) <= abs(mass(level) - m0):
            level = exact
    out = np.clip(v - level, 0.0, 1.0)
    err = abs(float(np.sum(w * out)) - m0)
    if err > tol:
        # a tiny residual can remain when v has huge jumps; spread it on the free set
        free = (out > 0.0) & (out < 1.0)
        if free.any():
            out[free] += (m0 - float(np.sum(w * out))) / np.sum(w[free])
            out = np.clip(out, 0.0, 1.0)
    return ResourceDistribution.from_values(g, out)


def bathtub(g: Grid, score, m0: float, tie_rtol: float = 1e-9) -> np.ndarray:
    """Fill nodes by decreasing ``score`` until the mass reaches ``m0``.

    Scores within ``tie_rtol * max|score|`` of each other count as equal and
    are filled in flat (coordinate) order.  At most one node ends up
    fractional.
    """
    _check_m0(m0)
    s = g.check(score).ravel()
    w = g.weights.ravel()
    q = max(float(np.max(np.abs(s))), 1e-300) * tie_rtol
    key = np.round(s / q) if q > 0 else s
    order = np.lexsort((np.arange(s.size), -key))
    cum = np.cumsum(w[order])
    full = int(np.searchsorted(cum, m0, side="right"))
    out = np.zeros(s.size)
    out[order[:full]] = 1.0
    if full < s.size:
        rest = m0 - (cum[full - 1] if full > 0 else 0.0)
        if rest > 0.0:
            out[order[full]] = min(1.0, rest / w[order[full]])
    return out.reshape(g.shape)


@dataclass(frozen=True, eq=False)
class ThresholdResult:
    m: ResourceDistribution
    objective: float
    trace: list
    iterations: int
    cycled: bool
    converged: bool


def _evaluate(g, mv, mu, crit, cfg, initial=None):
    state = solve_state(g, mv, mu, cfg, initial=initial)
    adj = solve_adjoint(state, crit)
    obj = state.total_population if crit.name == "identity" else integrate(g, crit.j(state.theta))
    return state, adj, obj


def threshold_fixed_point(
    g: Grid,
    m_init,
    mu: float,
    m0: float | None = None,
    max_iter: int = 50,
    criterion: Criterion | str | None = None,
    cfg: SolverConfig | None = None,
    raise_on_cycle: bool = False,
) -> ThresholdResult:
    """Iterate ``m <- bathtub(theta_m p_m)`` until it stops moving.

    Iteration also stops, keeping the best iterate, when the objective would
    decrease or a period-2 orbit appears.  With ``raise_on_cycle`` the orbit
    raises :class:`CycleDetected` instead.
    """
    crit = CRITERIA["identity"] if criterion is None else (
        CRITERIA[criterion] if isinstance(criterion, str) else criterion
    )
    mv = m_init.values if isinstance(m_init, ResourceDistribution) else g.check(m_init)
    m0 = integrate(g, mv) if m0 is None else m0
    state, adj, obj = _evaluate(g, mv, mu, crit, cfg)
    best_m, best_obj = mv, obj
    trace = [obj]
    prev = None
    cycled = converged = False
    it = 0
    for it in range(1, max_iter + 1):
        nxt = bathtub(g, adj.switching, m0)
        if np.array_equal(nxt, mv):
            converged = True
            break
        if prev is not None and np.array_equal(nxt, prev):
            cycled = True
            if raise_on_cycle:
                raise CycleDetected(f"period-2 orbit after {it} bathtub steps")
            break
        try:
            n_state, n_adj, n_obj = _evaluate(g, nxt, mu, crit, cfg, initial=state.theta)
        except NonConvergence:
            break
        if n_obj < best_obj - 1e-12:
            break
        prev, mv, state, adj, obj = mv, nxt, n_state, n_adj, n_obj
        trace.append(obj)
        if obj >= best_obj:
            best_m, best_obj = mv, obj
    return ThresholdResult(
        ResourceDistribution.from_values(g, best_m), best_obj, trace, it, cycled, converged
    )


def inactive_measure(g: Grid, mv, eps: float = 1e-3) -> float:
    return integrate(g, ((mv > eps) & (mv < 1.0 - eps)).astype(float))


@dataclass(frozen=True, eq=False)
class OptimizationResult:
    m_star: ResourceDistribution
    objective_trace: list
    final_objective: float
    bang_bang_fraction: float
    kkt_deviation: float
    kkt_sign_consistent: bool
    restarts_used: int
    mu: float
    m0: float
    criterion: str
    restart_objectives: list
    best_restart: int

    @property
    def spread(self) -> float:
        return float(max(self.restart_objectives) - min(self.restart_objectives))

    def scalars(self) -> dict:
        return {
            "mu": self.mu,
            "m0": self.m0,
            "criterion": self.criterion,
            "final_objective": self.final_objective,
            "bang_bang_fraction": self.bang_bang_fraction,
            "kkt_deviation": self.kkt_deviation,
            "kkt_sign_consistent": self.kkt_sign_consistent,
            "restarts_used": self.restarts_used,
            "best_restart": self.best_restart,
            "restart_objectives": list(self.restart_objectives),
            "spread": self.spread,
            "iterations": len(self.objective_trace),
        }


def _gradient_phase(g, mv, mu, m0, crit, cfg, state, adj, obj, trace):
    w = g.weights
    for _ in range(cfg.max_iter):
        grad = adj.switching
        tau = 1.0 / float(np.max(np.abs(grad)))
        accepted = False
        for _ in range(cfg.max_backtrack):
            cand = project_onto_constraints(g, mv + tau * grad, m0).values
            move = cand - mv
            if np.max(np.abs(move)) <= cfg.step_tol:
                break
            try:
                c_state, c_adj, c_obj = _evaluate(g, cand, mu, crit, cfg.solver, initial=state.theta)
            except NonConvergence:
                tau *= cfg.armijo_factor
                continue
            if c_obj >= obj + cfg.armijo_sigma * float(np.sum(w * grad * move)):
                accepted = True
                break
            tau *= cfg.armijo_factor
        if not accepted:
            break
        gain = c_obj - obj
        mv, state, adj, obj = cand, c_state, c_adj, c_obj
        trace.append(obj)
        if gain <= 1e-15 * max(1.0, abs(obj)):
            break
    return mv, state, adj, obj


def _run_start(args):
    g, mu, m0, crit, cfg, start = args
    mv = start
    state, adj, obj = _evaluate(g, mv, mu, crit, cfg.solver)
    trace = [obj]
    for _ in range(cfg.max_rounds):
        before = mv
        mv, state, adj, obj = _gradient_phase(g, mv, mu, m0, crit, cfg, state, adj, obj, trace)
        pol = threshold_fixed_point(g, mv, mu, m0, cfg.max_polish, crit, cfg.solver)
        if pol.objective >= obj and not np.array_equal(pol.m.values, mv):
            mv = pol.m.values
            state, adj, obj = _evaluate(g, mv, mu, crit, cfg.solver)
            trace.append(obj)
        if np.array_equal(mv, before):
            break
    return mv, obj, trace


def _starts(g: Grid, m0: float, cfg: OptimizerConfig) -> list[np.ndarray]:
    starts = [g.full(m0)]
    for child in np.random.SeedSequence(cfg.seed).spawn(cfg.n_restarts):
        rng = np.random.default_rng(child)
        starts.append(project_onto_constraints(g, rng.random(g.shape), m0).values)
    return starts


def optimize_general_j(
    g: Grid, mu: float, m0: float, j: Criterion | str, cfg: OptimizerConfig | None = None
) -> OptimizationResult:
    """Maximise ``int j(theta_m)``; ``j`` must be increasing on ``[0, 1]``."""
    cfg = cfg or OptimizerConfig()
    if not mu > 0.0:
        raise ValueError(f"mu must be positive, got {mu!r}")
    _check_m0(m0)
    crit = CRITERIA[j] if isinstance(j, str) else j
    crit.check_increasing(0.0, 1.0)
    starts = _starts(g, m0, cfg)
    runs = parallel_map(_run_start, [(g, mu, m0, crit, cfg, s) for s in starts], cfg.workers)
    objs = [r[1] for r in runs]
    best = int(np.argmax(objs))  # first maximum wins ties
    mv, obj, trace = runs[best]
    m_star = ResourceDistribution.from_values(g, mv)
    state = solve_state(g, mv, mu, cfg.solver)
    kkt = first_order_kkt_report(g, mv, solve_adjoint(state, crit), cfg.tol_active)
    return OptimizationResult(
        m_star=m_star,
        objective_trace=trace,
        final_objective=obj,
        bang_bang_fraction=inactive_measure(g, mv, cfg.tol_active),
        kkt_deviation=kkt.max_deviation,
        kkt_sign_consistent=kkt.sign_consistent,
        restarts_used=len(starts),
        mu=float(mu),
        m0=float(m0),
        criterion=crit.name,
        restart_objectives=objs,
        best_restart=best,
    )


def optimize(g: Grid, mu: float, m0: float, cfg: OptimizerConfig | None = None) -> OptimizationResult:
    """Maximise the total population ``int theta_m``."""
    return optimize_general_j(g, mu, m0, CRITERIA["identity"], cfg)
