"""
Why optimal resources are bang-bang
===================================

The constant resource m = m0 is a critical point of the total population, yet
it is the worst admissible choice.  The spectral construction finds a
direction of positive curvature there; the optimiser then ends at a 0/1
field that satisfies the threshold condition on theta*p.
"""

from __future__ import annotations

import numpy as np

from logfrag import build_grid, optimize
from logfrag.sensitivity import first_order_kkt_report, solve_adjoint
from logfrag.spectral import bang_bang_certificate, eigenpairs
from logfrag.state import solve_state

g = build_grid(1, 257)
mu, m0 = 0.1, 0.4

# at a constant resource theta = m0, and L_m has the closed-form spectrum mu (pi k)^2 + m0
state = solve_state(g, g.full(m0), mu)
lam = eigenpairs(state, 5).eigenvalues
print("lambda_k of L_m:   ", np.array2string(lam, precision=5))
print("closed form:       ", np.array2string(mu * (np.pi * np.arange(5)) ** 2 + m0, precision=5))

# high modes dominate the potential term: the second derivative turns positive
cert = bang_bang_certificate(g, g.full(m0), mu)
print(f"\ncertificate: {cert.message}")
for K, f2 in cert.tried:
    print(f"  K = {K:2d}   second derivative {f2:+.4e}")
print(f"  step eps = {cert.step:.3e} raises F by {cert.ascent:.3e}")

# the optimiser: projected gradient ascent followed by bathtub thresholding
res = optimize(g, 0.01, m0)
m_star = res.m_star.values
jumps = int(np.sum(np.abs(np.diff(m_star)) > 0.5))
print(f"\noptimum at mu = 0.01: F = {res.final_objective:.6f}, {jumps} jump(s), "
      f"fractional measure {res.bang_bang_fraction:.4f}")
print(f"restart objectives: {np.array2string(np.array(res.restart_objectives), precision=6)}")

s = solve_state(g, m_star, 0.01)
kkt = first_order_kkt_report(g, res.m_star, solve_adjoint(s))
print(f"threshold condition: {kkt.message}")
