"""Pure-strategy optimal assignment solvers."""

from .blocking import blocking_assign, blocking_sampler, blocking_support, max_exact_matches
from .core import (
    OptimizerResult,
    bb_partition_quadratic,
    exhaustive_pure_opt,
    exhaustive_search,
    finite_q_pure_opt,
    quadratic_pure_opt,
    structure_pure_opt,
    top_t_solutions,
)
from .matching import (
    Matching,
    all_min_matchings,
    blossom_matching,
    brute_force_matching,
    penalty_cost,
    penalty_matching,
)
