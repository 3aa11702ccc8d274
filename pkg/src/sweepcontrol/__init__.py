"""
Discrete approximations and optimality conditions for controlled sweeping
processes over polyhedral cones.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .coderivative import coderivative_equality_check, coderivative_upper
from .discretization import (DiscreteTriple, Mesh, approximate_feasible, check_discrete_constraints,
                             discrete_cost, discrete_cost_and_gradient, mu_constants)
from .dynamics import catching_up_integrate, project_onto_velocity_set
from .geometry import GeneratorSet, normal_cone_contains, project_translated_polyhedron
from .optimality import (DualCertificate, ResidualReport, recover_multipliers, residual_el,
                         residual_explicit, scalar_example_problem, scalar_example_solve)
from .optimizer import (OptimizerConfig, SolveResult, brute_force_oracle, convergence_study,
                        solve_discrete_problem)
from .paths import ContinuousPath, SmoothPath
from .problem import (PerturbationField, ProblemError, ProblemSpec, QuadraticRunningCost,
                      QuadraticTerminalCost)

__all__ = [
    "ContinuousPath", "DiscreteTriple", "DualCertificate", "GeneratorSet", "Mesh", "OptimizerConfig",
    "PerturbationField", "ProblemError", "ProblemSpec", "QuadraticRunningCost", "QuadraticTerminalCost",
    "ResidualReport", "SmoothPath", "SolveResult", "approximate_feasible", "brute_force_oracle",
    "catching_up_integrate", "check_discrete_constraints", "coderivative_equality_check",
    "coderivative_upper", "convergence_study", "discrete_cost", "discrete_cost_and_gradient",
    "mu_constants", "normal_cone_contains", "project_onto_velocity_set", "project_translated_polyhedron",
    "recover_multipliers", "residual_el", "residual_explicit", "scalar_example_problem",
    "scalar_example_solve", "solve_discrete_problem",
]
