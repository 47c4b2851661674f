from __future__ import annotations

import numpy as np
import pytest
import scipy.linalg as sla

from logfrag.grid import build_grid, indicator, inner, integrate
from logfrag.optimizer import project_onto_constraints
from logfrag.sensitivity import gateaux_theta_dot
from logfrag.spectral import (
    GeometryError,
    InactiveSetTooSmall,
    bang_bang_certificate,
    eigenpairs,
    high_mode_perturbation,
    operator_eigenpairs,
    oscillatory_perturbation,
    principal_eigenvalue,
)
from logfrag.state import linearized_matrix, solve_state


@pytest.fixture(scope="module")
def const_state():
    g = build_grid(1, 129)
    return solve_state(g, g.full(0.4), 0.1)


def test_constant_closed_form_within_spacing_bound():
    g = build_grid(1, 513)
    s = solve_state(g, g.full(0.4), 0.1)
    dec = eigenpairs(s, 10)
    k = np.arange(1, 11)
    exact = 0.1 * np.pi**2 * (k - 1) ** 2 + 0.4
    assert np.all(np.abs(dec.eigenvalues - exact) <= 10 * g.spacing**2 * np.pi**2 * k**2)
    assert np.all(np.abs(dec.eigenvalues[:5] - exact[:5]) <= 5e-3 * exact[:5])


def test_constant_eigenfunctions_are_cosines(const_state):
    g = const_state.grid
    dec = eigenpairs(const_state, 4)
    for k in range(4):
        c = np.cos(k * np.pi * g.axis)
        c /= np.sqrt(integrate(g, c * c))
        assert abs(abs(inner(g, c, dec.eigenfunctions[k])) - 1.0) < 1e-6


@pytest.mark.parametrize("dim,n", [(1, 257), (2, 33), (2, 65)])
def test_orthonormal_and_small_residuals(dim, n):
    g = build_grid(dim, n)
    rng = np.random.default_rng(5)
    m = project_onto_constraints(g, rng.random(g.shape), 0.4).values
    s = solve_state(g, m, 0.02)
    dec = eigenpairs(s, 8)
    gram = np.array([[inner(g, a, b) for b in dec.eigenfunctions] for a in dec.eigenfunctions])
    assert np.max(np.abs(gram - np.eye(8))) < 1e-8
    assert np.all(dec.residuals < 1e-8 * (1 + np.abs(dec.eigenvalues)))
    assert np.all(np.diff(dec.eigenvalues) >= 0)
    assert dec.eigenvalues[0] > 0
    assert abs(principal_eigenvalue(g, 0.02, m - s.theta)) < 1e-6


def test_rejects_large_K():
    g = build_grid(1, 33)
    s = solve_state(g, g.full(0.4), 0.1)
    with pytest.raises(ValueError):
        eigenpairs(s, 9)
    with pytest.raises(ValueError):
        operator_eigenpairs(g, 0.1, g.full(0.0), 0)


def test_high_mode_constraints(const_state):
    g = const_state.grid
    dec = eigenpairs(const_state, 6)
    mask = np.ones(g.shape, dtype=bool)
    h = high_mode_perturbation(const_state, dec, 5, mask, seed=3)
    th = const_state.theta
    assert abs(integrate(g, h)) < 1e-10
    for k in range(5):
        assert abs(inner(g, h * th, dec.eigenfunctions[k])) < 1e-10
    assert integrate(g, (h * th) ** 2) == pytest.approx(1.0, rel=1e-12)


def test_high_mode_respects_inactive_support():
    g = build_grid(1, 257)
    m = np.where(g.axis < 0.3, 1.0, np.where(g.axis > 0.8, 0.0, 0.3))
    s = solve_state(g, m, 0.05)
    dec = eigenpairs(s, 9)
    mask = (m > 0) & (m < 1)
    h = high_mode_perturbation(s, dec, 8, mask)
    assert np.all(h[~mask] == 0.0)
    for k in range(8):
        assert abs(inner(g, h * s.theta, dec.eigenfunctions[k])) < 1e-8


def test_high_mode_empty_inactive_set(const_state):
    dec = eigenpairs(const_state, 4)
    with pytest.raises(InactiveSetTooSmall):
        high_mode_perturbation(const_state, dec, 4, np.zeros(const_state.grid.shape, dtype=bool))


@pytest.mark.parametrize("K", [4, 8, 16])
def test_gradient_energy_lower_bound(const_state, K):
    g = const_state.grid
    dec = eigenpairs(const_state, K + 1)
    h = high_mode_perturbation(const_state, dec, K, np.ones(g.shape, dtype=bool))
    td = gateaux_theta_dot(const_state, h)
    from logfrag.grid import dirichlet_energy

    M = float(np.max(np.abs(const_state.m - 2 * const_state.theta))) + 1.0
    lhs = const_state.mu * dirichlet_energy(g, td)
    assert lhs >= (dec.eigenvalues[K] - M) * integrate(g, td * td)


@pytest.mark.parametrize("K", [4, 8])
def test_eigen_expansion_identity(K):
    g = build_grid(1, 129)
    rng = np.random.default_rng(2)
    m = project_onto_constraints(g, 0.4 + 0.3 * rng.standard_normal(g.shape), 0.4).values
    s = solve_state(g, m, 0.05)
    # complete spectrum from the dense generalized problem
    kmat = linearized_matrix(g, s.m, s.theta, s.mu).toarray()
    w = g.weights.ravel()
    lam, vecs = sla.eigh(kmat, np.diag(w))
    dec = eigenpairs(s, K)
    mask = (m > 1e-3) & (m < 1 - 1e-3)
    h = high_mode_perturbation(s, dec, K, mask, seed=1)
    alpha = vecs.T @ (w * (h * s.theta).ravel())
    assert np.max(np.abs(alpha[:K])) < 1e-8
    series = float(np.sum(alpha[K:] ** 2 / lam[K:] ** 2))
    td = gateaux_theta_dot(s, h)
    assert integrate(g, td * td) == pytest.approx(series, rel=1e-6)


def test_certificate_on_constant_resource():
    g = build_grid(1, 257)
    rep = bang_bang_certificate(g, g.full(0.4), 0.1)
    assert rep.applicable and rep.found
    assert rep.second_derivative > 0
    assert rep.ascent > 0
    assert rep.first_derivative >= 0
    assert rep.gradient_energy >= (rep.lambda_next - rep.potential_bound) * rep.theta_dot_sq
    assert rep.K in (4, 8, 16, 32, 64)


def test_certificate_not_applicable_on_bang_bang():
    g = build_grid(1, 129)
    m = indicator(g, [(0.0, 0.4)], mode="node")
    rep = bang_bang_certificate(g, m, 0.1)
    assert not rep.applicable and not rep.found
    assert rep.message == "already bang-bang, test not applicable"


def test_certificate_single_inactive_cell():
    g = build_grid(1, 129)
    m = indicator(g, [(0.0, 0.4)], mode="node")
    i = int(np.flatnonzero(m == 0)[0])
    m[i] = 0.5
    m[i - 1] = 0.5
    with pytest.raises(InactiveSetTooSmall):
        bang_bang_certificate(g, m, 0.1)


def test_certificate_2d_constant():
    g = build_grid(2, 17)
    rep = bang_bang_certificate(g, g.full(0.4), 0.1, K_max=16)
    assert rep.found and rep.ascent > 0


def test_oscillatory_dipole_and_zero_mean(const_state):
    g = build_grid(1, 1025)
    s = solve_state(g, g.full(0.4), 0.1)
    osc = oscillatory_perturbation(s, 0.25, 0.75, 0.2, 0.0)
    assert osc.psi.max() == pytest.approx(1.0)
    assert osc.psi.min() == pytest.approx(-1.0)
    for k in (0.0, 7.0, 33.0):
        o = oscillatory_perturbation(s, 0.25, 0.75, 0.2, k)
        assert abs(integrate(g, o.psi)) < 1e-12
        assert abs(integrate(g, o.h)) < 1e-12
        assert np.all(o.h[~o.support] == 0.0)


def test_oscillatory_gradient_growth():
    g = build_grid(1, 1025)
    s = solve_state(g, g.full(0.4), 0.1)
    e = [oscillatory_perturbation(s, 0.25, 0.75, 0.24, k).grad_energy for k in (20, 40, 80)]
    assert 3.5 <= e[1] / e[0] <= 4.5
    assert 3.5 <= e[2] / e[1] <= 4.5


def test_oscillatory_geometry_errors(const_state):
    with pytest.raises(GeometryError):
        oscillatory_perturbation(const_state, 0.25, 0.4, 0.2, 1.0)
    with pytest.raises(GeometryError):
        oscillatory_perturbation(const_state, 0.1, 0.75, 0.2, 1.0)
    g = const_state.grid
    s = solve_state(g, indicator(g, [(0.0, 0.4)], mode="node"), 0.1)
    with pytest.raises(GeometryError):
        oscillatory_perturbation(s, 0.2, 0.7, 0.1, 1.0)
