"""Exact cost/equity Pareto analysis of small capacitated vehicle routing instances."""

from .analysis import (
    SolutionSpaceIndex,
    agreement_matrix,
    analyze_instance,
    check_two_tour_theorem,
    annotate,
    annotate_all,
    flag_inconsistent,
    flag_tsp_optimal,
    is_constant_sum,
    marginal_cost_stats,
    summarize,
    verify_theorems,
)
from .axioms import check_axioms
from .errors import (
    CacheMismatchError,
    EquityFrontError,
    InstanceFormatError,
    ParameterError,
    SizeLimitError,
)
from .frontier import (
    ObjectivePoint,
    ParetoSet,
    Solution,
    dominates,
    enumerate_partitions,
    pareto_enumerate,
    pareto_enumerate_many,
    pareto_filter,
)
from .instance import (
    Instance,
    distance_matrix,
    generate_family,
    load_instance,
    make_instance,
    save_instance,
)
from .measures import Measure, evaluate, lex_compare, lex_key, pd_transfer
from .tours import CONVENTIONAL, TSP_CONSTRAINED, SubsetCache, all_tour_lengths, build_cache, tsp_optimal_length

__version__ = "0.1.0"
