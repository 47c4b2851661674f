from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from logfrag.grid import build_grid, indicator, integrate
from logfrag.state import (
    CRITERIA,
    Criterion,
    NonConvergence,
    ResourceDistribution,
    SolverConfig,
    criterion_j,
    energy,
    minimize_energy_oracle,
    shifted_energy,
    solve_state,
    state_residual,
)

# continuum values from tests/oracles/bvp_reference.py (solve_bvp, tol 1e-10)
REF_MU005 = {
    "total_population": 0.5905170885315679,
    "log1p_criterion": 0.45377803156415386,
}
REF_MU001_F = 0.5743221166135644


def _random_m(g, rng, m0=0.4):
    from logfrag.optimizer import project_onto_constraints

    return project_onto_constraints(g, rng.random(g.shape), m0).values


@pytest.mark.parametrize("m0", [0.3, 0.4, 0.7, 1.0])
@pytest.mark.parametrize("mu", [1e-3, 0.1, 10.0])
def test_constant_resource_is_exact(m0, mu):
    g = build_grid(1, 65)
    s = solve_state(g, g.full(m0), mu)
    assert np.all(s.theta == m0)
    assert s.newton_iters == 0
    assert s.residual_norm == 0.0
    assert s.total_population == pytest.approx(m0, abs=1e-15)


def test_half_step_matches_continuum_and_oracle():
    g = build_grid(1, 257)
    m = indicator(g, [(0.0, 0.5)])
    s = solve_state(g, m, 0.01)
    assert 0.5 < s.total_population < 1.5
    assert s.total_population == pytest.approx(REF_MU001_F, abs=1e-5)
    u = minimize_energy_oracle(g, m, 0.01)
    assert np.max(np.abs(u - s.theta)) < 1e-6


def test_oracle_agrees_and_has_lower_energy():
    g = build_grid(1, 257)
    m = indicator(g, [(0.0, 0.5)])
    s = solve_state(g, m, 0.05)
    u = minimize_energy_oracle(g, m, 0.05)
    assert np.max(np.abs(u - s.theta)) < 1e-6
    assert energy(g, m, 0.05, u) <= s.energy + 1e-8
    assert energy(g, m, 0.05, u) < 0.0


def test_oracle_constant():
    g = build_grid(1, 65)
    u = minimize_energy_oracle(g, g.full(0.4), 0.1)
    assert np.max(np.abs(u - 0.4)) < 1e-9


def test_energy_examples():
    g = build_grid(1, 129)
    m = g.full(0.4)
    assert energy(g, m, 0.1, m) == pytest.approx(-(0.4**3) / 6, abs=1e-15)
    assert shifted_energy(g, m, 0.1, m) == pytest.approx(0.0, abs=1e-15)
    mb = indicator(g, [(0.25, 0.75)], mode="node")
    zero = g.full(0.0)
    assert energy(g, mb, 0.1, zero) == 0.0
    assert shifted_energy(g, mb, 0.1, zero) == pytest.approx(integrate(g, mb) / 6, abs=1e-15)
    with pytest.raises(ValueError):
        energy(g, m, 0.1, m - 0.5)


def test_shifted_energy_of_bang_bang_field_is_nonnegative():
    for n in (257, 1025, 4097):
        g = build_grid(1, n)
        mb = indicator(g, [(0.1, 0.3), (0.55, 0.9)], mode="node")
        assert shifted_energy(g, mb, 1e-3, mb) >= 0.0


def test_criterion_j_examples():
    g = build_grid(1, 65)
    s = solve_state(g, g.full(0.4), 0.1)
    assert criterion_j(s, CRITERIA["identity"]) == pytest.approx(0.4, abs=1e-15)
    sq = Criterion("square", lambda t: t * t, lambda t: 2 * t, lambda t: 2 + 0 * t)
    assert criterion_j(s, sq) == pytest.approx(0.16, abs=1e-15)
    dec = Criterion("decreasing", lambda t: -t, lambda t: -1 + 0 * t)
    with pytest.raises(ValueError):
        criterion_j(s, dec)


def test_criterion_log1p_converges_to_continuum():
    vals = {}
    for n in (513, 1025):
        g = build_grid(1, n)
        s = solve_state(g, indicator(g, [(0.0, 0.5)]), 0.05)
        vals[n] = criterion_j(s, CRITERIA["log1p"])
    rich = (4 * vals[1025] - vals[513]) / 3
    assert rich == pytest.approx(REF_MU005["log1p_criterion"], abs=1e-9)
    assert abs(vals[1025] - REF_MU005["log1p_criterion"]) < 2e-7


def test_rejects_nonpositive_mu():
    g = build_grid(1, 33)
    with pytest.raises(ValueError):
        solve_state(g, g.full(0.4), 0.0)
    with pytest.raises(ValueError):
        solve_state(g, g.full(0.4), -1.0)


def test_resource_distribution_validation():
    g = build_grid(1, 33)
    with pytest.raises(ValueError):
        ResourceDistribution.from_values(g, g.full(0.0))
    with pytest.raises(ValueError):
        ResourceDistribution.from_values(g, g.full(1.2))
    with pytest.raises(ValueError):
        ResourceDistribution.from_values(g, g.full(-0.1))
    with pytest.raises(ValueError):
        ResourceDistribution.from_values(g, g.full(0.4), m0=0.5)
    rd = ResourceDistribution.from_values(g, g.full(0.4), m0=0.4)
    assert rd.mass == pytest.approx(0.4)
    assert not rd.values.flags.writeable


def test_iteration_cap_raises_and_fallback():
    g = build_grid(1, 257)
    m = indicator(g, [(0.0, 0.2)])
    with pytest.raises(NonConvergence):
        solve_state(g, m, 1e-3, SolverConfig(max_newton=1))
    s = solve_state(g, m, 1e-3, SolverConfig(max_newton=1, fallback_gradient_flow=True))
    assert s.method == "gradient_flow"
    ref = solve_state(g, m, 1e-3)
    assert np.max(np.abs(s.theta - ref.theta)) < 1e-6


def test_bad_warm_start_still_converges():
    g = build_grid(1, 513)
    m = indicator(g, [(0.0, 0.4)])
    ref = solve_state(g, m, 0.01)
    warm = solve_state(g, m, 0.01, initial=g.full(0.4))
    assert np.max(np.abs(ref.theta - warm.theta)) < 1e-10


@pytest.mark.parametrize("mu", [1e-4, 1e4])
def test_extreme_diffusivity_limits(mu):
    g = build_grid(1, 513)
    m = indicator(g, [(0.0, 0.3), (0.5, 0.7)])
    s = solve_state(g, m, mu)
    assert abs(s.total_population - integrate(g, m)) < 5e-2


@given(seed=st.integers(0, 2**32 - 1), mu=st.sampled_from([1e-2, 1e-1]), dim=st.sampled_from([1, 2]))
def test_state_invariants_random(seed, mu, dim):
    g = build_grid(dim, 129 if dim == 1 else 33)
    rng = np.random.default_rng(seed)
    m = _random_m(g, rng, float(rng.uniform(0.1, 0.9)))
    s = solve_state(g, m, mu)
    assert s.theta.min() > 0
    assert np.max(np.abs(state_residual(g, m, mu, s.theta))) <= 1e-10
    cube = integrate(g, s.theta**3) / 6
    assert s.energy == pytest.approx(-cube, rel=1e-8)
    theta0 = np.maximum(m, 0.1 * integrate(g, m))
    assert s.theta.max() <= max(1.0, theta0.max()) + 1e-12
    if dim == 1:
        assert s.total_population / integrate(g, m) <= 3.0
