"""Steady logistic-diffusive population model: solver, adjoint sensitivities,
spectral bang-bang tests, resource optimisation and fragmentation diagnostics."""

from __future__ import annotations

from .grid import (
    Grid,
    apply_neumann_laplacian,
    build_grid,
    bv_norm,
    dirichlet_energy,
    indicator,
    integrate,
    mollify,
    tv_norm,
)
from .optimizer import OptimizerConfig, optimize, optimize_general_j, project_onto_constraints
from .sensitivity import solve_adjoint
from .state import (
    CRITERIA,
    Criterion,
    ResourceDistribution,
    SolverConfig,
    minimize_energy_oracle,
    solve_state,
)

__version__ = "0.1.0"

__all__ = [
    "Grid",
    "build_grid",
    "apply_neumann_laplacian",
    "integrate",
    "dirichlet_energy",
    "tv_norm",
    "bv_norm",
    "mollify",
    "indicator",
    "ResourceDistribution",
    "SolverConfig",
    "Criterion",
    "CRITERIA",
    "solve_state",
    "minimize_energy_oracle",
    "solve_adjoint",
    "OptimizerConfig",
    "optimize",
    "optimize_general_j",
    "project_onto_constraints",
]
