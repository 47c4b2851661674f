"""Continuum reference values for ``m = 1 on (0, 1/2), 0 on (1/2, 1)``.

Independent of the finite-difference code: the two halves are folded onto
``s in [0, 1/2]`` (left ``x = s``, right ``x = 1 - s``) and solved together
with ``scipy.integrate.solve_bvp``, with matching value and flux at
``x = 1/2``.  Run as a script to print the values frozen in the tests.
"""

from __future__ import annotations

import numpy as np
from scipy.integrate import solve_bvp


def half_step_reference(mu: float, tol: float = 1e-10) -> dict:
    def rhs(s, y):
        tl, dl, tr, dr, _, _, _ = y
        return np.vstack([
            dl,
            -tl * (1.0 - tl) / mu,
            dr,
            tr * tr / mu,
            tl + tr,
            np.log1p(tl) + np.log1p(tr),
            tl**3 + tr**3,
        ])

    def bc(ya, yb):
        return np.array([ya[1], ya[3], ya[4], ya[5], ya[6], yb[0] - yb[2], yb[1] + yb[3]])

    s = np.linspace(0.0, 0.5, 2001)
    y0 = np.zeros((7, s.size))
    y0[0] = 0.9
    y0[2] = 0.3
    sol = solve_bvp(rhs, bc, s, y0, tol=tol, max_nodes=10**6)
    if not sol.success:
        raise RuntimeError(sol.message)
    end = sol.y[:, -1]
    return {
        "total_population": float(end[4]),
        "log1p_criterion": float(end[5]),
        "cube_integral": float(end[6]),
        "theta_mid": float(end[0]),
    }


if __name__ == "__main__":
    for mu in (0.05, 0.01):
        print(mu, {k: repr(v) for k, v in half_step_reference(mu).items()})
