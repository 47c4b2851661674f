"""
Population state, adjoint and gradient
======================================

Solve the steady logistic-diffusive equation for a resource concentrated on
the left half of the interval, then check the adjoint gradient against finite
differences.
"""

from __future__ import annotations

import numpy as np

from logfrag import build_grid, indicator, integrate, solve_state
from logfrag.sensitivity import fd_gradient_errors, gateaux_theta_dot, solve_adjoint

# a 1D grid and the resource m = 1 on (0, 1/2)
g = build_grid(1, 513)
m = indicator(g, [(0.0, 0.5)])
mu = 0.01

state = solve_state(g, m, mu)
print(f"total population  F = {state.total_population:.10f}   (resource mass {integrate(g, m):.3f})")
print(f"Newton iterations     {state.newton_iters}, residual {state.residual_norm:.1e}")
print(f"theta range           [{state.theta.min():.4f}, {state.theta.max():.4f}]")

# the population overshoots the resource mass: diffusion spreads individuals into
# the empty half, where they still survive for a while
adj = solve_adjoint(state)
print(f"adjoint p range       [{adj.p.min():.4f}, {adj.p.max():.4f}]   (positive everywhere)")

# directional derivative two ways: the linearised state and the switching function theta*p
rng = np.random.default_rng(1)
h = rng.standard_normal(g.shape)
h -= integrate(g, h)
direct = integrate(g, gateaux_theta_dot(state, h))
dual = integrate(g, adj.switching * h)
print(f"\nderivative along h    linearised {direct:+.12e}   adjoint {dual:+.12e}")

# forward differences: the relative error is close to eps * F''/(2 F'), so it
# falls linearly with eps, and a direction along which F barely moves (cos 3 pi x
# here) needs a much smaller eps for the same accuracy
m_smooth = 0.4 + 0.3 * np.cos(np.pi * g.axis)
eps_list = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6)
e1 = fd_gradient_errors(g, m_smooth, mu, np.cos(np.pi * g.axis), eps_list)
e3 = fd_gradient_errors(g, m_smooth, mu, np.cos(3 * np.pi * g.axis), eps_list)
print("\n     eps     h = cos(pi x)   h = cos(3 pi x)")
for eps, a, b in zip(eps_list, e1, e3):
    print(f"  {eps:7.0e}     {a:.2e}        {b:.2e}")
