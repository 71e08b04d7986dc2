"""Descent methods for nonsmooth optimization via subgradient regularization.

Submodules: ``linalg`` (kernels, seeded RNG), ``qp`` (simplex/box/polyhedral
QPs), ``oracles`` (regularized directions), ``solvers`` (descent methods and
baselines), ``problems`` (seeded test families) and ``bench`` (experiments
and the ``bench`` CLI).
"""

from .linalg import RngStream, random_psd
from .oracles import (
    AffineMarginalStructure,
    Box,
    CompositeProblem,
    MarginalQPProblem,
    RegularizedDirection,
    Simplex,
    direction_composite,
    direction_marginal_licq,
    direction_max_of_smooth,
    direction_min_of_smooth,
    goldstein_sampled_direction,
    min_norm_subgradient_bruteforce,
    prox_linear_step,
    regularized_direction_affine,
)
from .problems import (
    gen_marginal_qp,
    gen_max_quad,
    gen_min_quad,
    gen_nesterov_cr,
    oracle1_view,
    oracle2_view,
)
from .qp import BoxQP, PolyhedralQP, QPStatus, SimplexQP, solve_box_qp, solve_polyhedral_qp, solve_simplex_qp
from .solvers import (
    Oracle1,
    Oracle2,
    RunTrace,
    SolverConfig,
    Status,
    run_algorithm1,
    run_algorithm2,
    run_gradient_sampling,
    run_polyak,
)

__version__ = "0.1.0"

__all__ = [
    "AffineMarginalStructure", "Box", "BoxQP", "CompositeProblem", "MarginalQPProblem", "Oracle1", "Oracle2",
    "PolyhedralQP", "QPStatus", "RegularizedDirection", "RngStream", "RunTrace", "Simplex", "SimplexQP",
    "SolverConfig", "Status", "direction_composite", "direction_marginal_licq", "direction_max_of_smooth",
    "direction_min_of_smooth", "gen_marginal_qp", "gen_max_quad", "gen_min_quad", "gen_nesterov_cr",
    "goldstein_sampled_direction", "min_norm_subgradient_bruteforce", "oracle1_view", "oracle2_view",
    "prox_linear_step", "random_psd", "regularized_direction_affine", "run_algorithm1", "run_algorithm2",
    "run_gradient_sampling", "run_polyak", "solve_box_qp", "solve_polyhedral_qp", "solve_simplex_qp",
]
