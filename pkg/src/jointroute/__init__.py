"""Exact and heuristic solvers for joint assignment and routing.

n items must each be carried to one of n placeholders by a single agent
that alternates item, placeholder, item, ...; the tour is an alternating
Hamiltonian cycle on the 2n points of minimal Euclidean length.
"""

from .errors import JointRouteError
from .exact import solve_exact
from .harness import external_solve_loop, render_svg, run_benchmark, scaling_report
from .heuristics import greedy_construct, local_search, relocate_improve, two_opt_improve
from .instance import CostMatrix, Instance, cost_matrix, generate, load_csv, save_csv
from .model import (
    build_generalized,
    build_simplified,
    detect_subtours,
    export_lp,
    validate_solution,
)
from .oracle import brute_force_optimum, enumerate_tours
from .relaxation import EdgeFixings, lower_bound, min_cost_two_factor
from .tour import CycleSolution, SolveStats, derive_assignment, orient_tour

__version__ = "0.1.0"

__all__ = [
    "CostMatrix",
    "CycleSolution",
    "EdgeFixings",
    "Instance",
    "JointRouteError",
    "SolveStats",
    "brute_force_optimum",
    "build_generalized",
    "build_simplified",
    "cost_matrix",
    "derive_assignment",
    "detect_subtours",
    "enumerate_tours",
    "export_lp",
    "external_solve_loop",
    "generate",
    "greedy_construct",
    "load_csv",
    "local_search",
    "lower_bound",
    "min_cost_two_factor",
    "orient_tour",
    "relocate_improve",
    "render_svg",
    "run_benchmark",
    "save_csv",
    "scaling_report",
    "solve_exact",
    "two_opt_improve",
    "validate_solution",
]
