"""
Fragmentation diagnostics: BV growth of optimisers as ``mu -> 0`` and the
energy inequalities that drive it.

Sets ``A`` in 1D are given as sorted, pairwise disjoint interval lists
``[(a1, b1), (a2, b2), ...]`` inside ``[0, 1]``.  Their resource field is the
node-sampled indicator of the closed set, so it is exactly 0/1.  Endpoints
strictly inside ``(0, 1)`` form the interior boundary of ``A``; the
perimeter ``per`` also counts endpoints on the domain boundary.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .grid import (
    Grid,
    build_grid,
    bv_norm,
    dirichlet_energy,
    indicator,
    integrate,
    is_bang_bang,
    mollify,
    tv_norm,
)
from .optimizer import OptimizerConfig, optimize
from .parallel import parallel_map, worker_count
from .state import SolverConfig, shifted_energy, solve_state

__all__ = [
    "check_intervals",
    "signed_distance_1d",
    "ModicaProfile",
    "modica_test_function",
    "ModicaBoundReport",
    "modica_energy_bound_check",
    "L1BoundReport",
    "l1_energy_bound_check",
    "MollifierReport",
    "mollifier_lemma_check",
    "GridPolicy",
    "SweepRecord",
    "SweepResult",
    "mu_sweep",
    "log_space",
]


def check_intervals(intervals) -> list[tuple[float, float]]:
    """Validate a sorted, pairwise disjoint interval list inside ``[0, 1]``."""
    out = [(float(a), float(b)) for a, b in intervals]
    if not out:
        raise ValueError("empty set: signed distance is undefined")
    for a, b in out:
        if not 0.0 <= a < b <= 1.0:
            raise ValueError(f"interval ({a}, {b}) must satisfy 0 <= a < b <= 1")
    for (_, b0), (a1, _) in zip(out, out[1:]):
        if a1 <= b0:
            raise ValueError("intervals overlap, touch or are not sorted")
    return out


def _interior_endpoints(intervals) -> np.ndarray:
    pts = [t for ab in intervals for t in ab if 0.0 < t < 1.0]
    return np.array(pts)


def signed_distance_1d(g: Grid, intervals) -> np.ndarray:
    """Distance to the interior boundary of ``A``: negative inside, positive outside."""
    if g.dim != 1:
        raise ValueError("signed_distance_1d needs a 1D grid")
    ivs = check_intervals(intervals)
    pts = _interior_endpoints(ivs)
    if pts.size == 0:
        raise ValueError("A has no boundary inside (0, 1)")
    x = g.axis
    dist = np.min(np.abs(x[:, None] - pts[None, :]), axis=1)
    inside = np.zeros(x.shape, dtype=bool)
    for a, b in ivs:
        inside |= (x >= a) & (x <= b)
    return np.where(inside, -dist, dist)


def set_indicator(g: Grid, intervals) -> np.ndarray:
    return indicator(g, check_intervals(intervals), mode="node")


@dataclass(frozen=True, eq=False)
class ModicaProfile:
    set_endpoints: list
    eta: float
    u_eps: np.ndarray
    signed_distance: np.ndarray
    gradient_term: float
    potential_term: float
    interior_perimeter: int
    perimeter: int
    gradient_bound: float
    potential_bound: float

    @property
    def bounds_hold(self) -> bool:
        return self.gradient_term <= self.gradient_bound and self.potential_term <= self.potential_bound


def modica_test_function(g: Grid, intervals, eta: float) -> ModicaProfile:
    """Ramp profile ``u = phi(h_A)`` with ``phi`` falling linearly from 1 to 0 over ``[0, eta]``.

    The gradient term is ``int |u'|^2`` and the potential term integrates
    ``u^3/3 - m u^2/2 + m^3/6`` with ``m = 1_A``.  Bounds reported:
    ``2 * per_int / eta`` and ``2 * eta * per``.
    """
    if not 0.0 < eta < 0.5:
        raise ValueError(f"eta must lie in (0, 0.5), got {eta!r}")
    ivs = check_intervals(intervals)
    hA = signed_distance_1d(g, ivs)
    u = np.where(hA < 0.0, 1.0, np.clip(1.0 - hA / eta, 0.0, 1.0))
    m = set_indicator(g, ivs)
    psi = u**3 / 3.0 - 0.5 * m * u**2 + m**3 / 6.0
    per_int = int(_interior_endpoints(ivs).size)
    per = 2 * len(ivs)
    return ModicaProfile(
        set_endpoints=ivs,
        eta=float(eta),
        u_eps=u,
        signed_distance=hA,
        gradient_term=dirichlet_energy(g, u),
        potential_term=integrate(g, psi),
        interior_perimeter=per_int,
        perimeter=per,
        gradient_bound=2.0 * per_int / eta,
        potential_bound=2.0 * eta * per,
    )


@dataclass(frozen=True)
class ModicaBoundReport:
    mu: float
    eta: float
    shifted_energy_state: float
    shifted_energy_profile: float
    minimal: bool
    scaled_energy: float
    measured_c1: float
    explicit_bound: float
    within_explicit_bound: bool
    resolved: bool


def modica_energy_bound_check(
    g: Grid, intervals, mu: float, cfg: SolverConfig | None = None
) -> ModicaBoundReport:
    """Compare the shifted energy of the state against the ramp profile with ``eta = sqrt(mu)``.

    ``explicit_bound = sqrt(mu) * (per_int + 2 per)`` follows from the
    profile's gradient and potential bounds.
    """
    eta = math.sqrt(mu)
    prof = modica_test_function(g, intervals, min(eta, 0.499))
    m = set_indicator(g, intervals)
    state = solve_state(g, m, mu, cfg)
    e_state = state.shifted_energy
    e_prof = shifted_energy(g, m, mu, prof.u_eps)
    bound = eta * (prof.interior_perimeter + 2.0 * prof.perimeter)
    return ModicaBoundReport(
        mu=float(mu),
        eta=eta,
        shifted_energy_state=e_state,
        shifted_energy_profile=e_prof,
        minimal=bool(e_state <= e_prof + 1e-12),
        scaled_energy=e_state / eta,
        measured_c1=e_prof / (eta * prof.interior_perimeter),
        explicit_bound=bound,
        within_explicit_bound=bool(e_prof <= bound),
        resolved=bool(g.spacing <= 0.1 * eta),
    )


@dataclass(frozen=True)
class L1BoundReport:
    mu: float
    weighted_gap: float
    shifted_energy: float
    step1_margin: float
    step1_holds: bool
    l1_distance: float
    measured_m0: float
    measured_m1: float


def l1_energy_bound_check(g: Grid, m, mu: float, cfg: SolverConfig | None = None) -> L1BoundReport:
    """Weighted gap ``int (theta/3 + m/6)(theta - m)^2`` against the shifted energy.

    Their difference equals ``(mu/2) int |grad theta|^2``, so the first
    inequality holds without constants.  The reported ``measured_m0`` and
    ``measured_m1`` are the ratios of ``||theta - m||_1`` to the cube roots
    of the gap and of the shifted energy.
    """
    mv = g.check(m)
    if not is_bang_bang(mv):
        raise ValueError("l1_energy_bound_check needs a 0/1 resource field")
    state = solve_state(g, mv, mu, cfg)
    th = state.theta
    gap = integrate(g, (th / 3.0 + mv / 6.0) * (th - mv) ** 2)
    e = state.shifted_energy
    l1 = integrate(g, np.abs(th - mv))
    slack = 1e-12 * max(1.0, abs(e))
    return L1BoundReport(
        mu=float(mu),
        weighted_gap=gap,
        shifted_energy=e,
        step1_margin=e - gap,
        step1_holds=bool(gap <= e + slack),
        l1_distance=l1,
        measured_m0=l1 / gap ** (1.0 / 3.0) if gap > 0 else 0.0,
        measured_m1=l1 / e ** (1.0 / 3.0) if e > 0 else 0.0,
    )


@dataclass(frozen=True)
class MollifierReport:
    eps: list
    ratios: list
    d0: float
    tv: float


def mollifier_lemma_check(g: Grid, m, eps_list=(0.01, 0.02, 0.04)) -> MollifierReport:
    """Ratios ``||m - m_eps||_1 / (eps * TV(m))``; ``d0`` is their maximum."""
    mv = g.check(m)
    tv = tv_norm(g, mv)
    ratios = []
    for eps in eps_list:
        if tv == 0.0:
            ratios.append(0.0)
            continue
        diff = integrate(g, np.abs(mv - mollify(g, mv, eps)))
        ratios.append(diff / (eps * tv))
    return MollifierReport(list(map(float, eps_list)), ratios, float(max(ratios)), tv)


@dataclass(frozen=True)
class GridPolicy:
    """Smallest ``2**k + 1`` nodes per axis with spacing at most ``factor * sqrt(mu)``."""

    factor: float = 0.1
    min_n: int = 129
    max_n: int = 4097
    dim: int = 1

    def n_for(self, mu: float) -> int:
        n = 9
        while n < self.max_n and (n < self.min_n or 1.0 / (n - 1) > self.factor * math.sqrt(mu)):
            n = 2 * n - 1
        return n

    def resolves(self, n: int, mu: float) -> bool:
        return 1.0 / (n - 1) <= self.factor * math.sqrt(mu) * (1.0 + 1e-12)


@dataclass(frozen=True)
class SweepRecord:
    mu: float
    grid_n: int
    bv_norm: float
    tv_norm: float
    objective: float
    objective_minus_m0: float
    bang_bang_fraction: float
    kkt_deviation: float
    restart_spread: float
    resolved: bool
    error: str = ""

    def row(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class SweepResult:
    records: list
    slope: float | None
    slope_points: int
    intercept: float | None
    delta_hat: float | None
    bv_monotone: bool
    m0: float
    fields: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "m0": self.m0,
            "slope": self.slope,
            "slope_points": self.slope_points,
            "intercept": self.intercept,
            "slope_status": "ok" if self.slope is not None else "undefined",
            "delta_hat": self.delta_hat,
            "bv_monotone": self.bv_monotone,
            "failures": sum(1 for r in self.records if r.error),
            "points": len(self.records),
        }


def log_space(mu_max: float, mu_min: float, points: int) -> list[float]:
    """Descending log-spaced list from ``mu_max`` to ``mu_min``."""
    if points == 1:
        return [float(mu_max)]
    return [float(v) for v in np.logspace(math.log10(mu_max), math.log10(mu_min), points)]


def _sweep_point(args):
    mu, m0, policy, cfg = args
    n = policy.n_for(mu)
    g = build_grid(policy.dim, n)
    try:
        res = optimize(g, mu, m0, cfg)
    except Exception as exc:  # record and continue with the other points
        nan = float("nan")
        rec = SweepRecord(mu, n, nan, nan, nan, nan, nan, nan, nan, policy.resolves(n, mu), repr(exc))
        return rec, None
    mv = res.m_star.values
    rec = SweepRecord(
        mu=float(mu),
        grid_n=n,
        bv_norm=bv_norm(g, mv),
        tv_norm=tv_norm(g, mv),
        objective=res.final_objective,
        objective_minus_m0=res.final_objective - m0,
        bang_bang_fraction=res.bang_bang_fraction,
        kkt_deviation=res.kkt_deviation,
        restart_spread=res.spread,
        resolved=policy.resolves(n, mu),
    )
    return rec, mv


def fit_small_decade(mus, bvs) -> tuple[float | None, float | None, int]:
    """Least-squares slope of ``log bv`` against ``log mu`` over ``[mu_min, 10 mu_min]``."""
    mus = np.asarray(mus, dtype=float)
    bvs = np.asarray(bvs, dtype=float)
    ok = np.isfinite(bvs) & (bvs > 0)
    mus, bvs = mus[ok], bvs[ok]
    if mus.size == 0:
        return None, None, 0
    sel = mus <= 10.0 * mus.min() * (1.0 + 1e-9)
    if np.unique(mus[sel]).size < 2:
        return None, None, int(sel.sum())
    slope, intercept = np.polyfit(np.log(mus[sel]), np.log(bvs[sel]), 1)
    return float(slope), float(intercept), int(sel.sum())


def mu_sweep(
    mu_list,
    m0: float,
    grid_policy: GridPolicy | None = None,
    optimizer_cfg: OptimizerConfig | None = None,
    workers: int | None = None,
) -> SweepResult:
    """Optimise at every ``mu`` and fit the BV growth over the smallest decade.

    Points run independently (in parallel when allowed) and come back in
    input order.  Failed points keep a record with the error text.
    """
    policy = grid_policy or GridPolicy()
    cfg = optimizer_cfg or OptimizerConfig()
    mus = [float(v) for v in mu_list]
    if worker_count(workers) > 1:
        cfg = replace(cfg, workers=1)  # no nested pools
    out = parallel_map(_sweep_point, [(mu, m0, policy, cfg) for mu in mus], workers)
    records = [r for r, _ in out]
    fields = {r.mu: f for r, f in out if f is not None}
    good = [r for r in records if not r.error]
    slope, intercept, npts = fit_small_decade([r.mu for r in good], [r.bv_norm for r in good])
    asc = sorted(good, key=lambda r: r.mu)
    delta = min((r.objective_minus_m0 for r in asc[:3]), default=None)
    mono = all(b.bv_norm <= 1.1 * a.bv_norm for a, b in zip(asc, asc[1:]))
    return SweepResult(records, slope, npts, intercept, delta, mono, float(m0), fields)
