"""Adaptive submodular maximization under cardinality and partition-matroid constraints."""

from .core import (
    ContractViolation,
    EnumerationCapError,
    GroundSet,
    IndependentPrior,
    InvalidInputError,
    JointPrior,
    NullEventError,
    PartialRealization,
    PartitionMatroid,
    conditional_realizations,
    is_consistent,
    is_subrealization,
)
from .objectives import (
    CoverageObjective,
    CutObjective,
    Instance,
    SquareCardinality,
    SumObjective,
    evaluate,
    generate_coverage,
    generate_cut,
    generate_mixed,
    load_instance,
    save_instance,
)
from .oracle import QueryLedger, ValueOracle
from .policies import (
    adaptive_greedy,
    adaptive_random_greedy,
    adaptive_stochastic_greedy,
    concat,
    empty_policy,
    generalized_asg,
    linear_time_policy,
    locally_greedy,
    run_policy,
)
from .analysis import (
    check_adaptive_monotonicity,
    check_adaptive_submodularity,
    check_fully_adaptive_submodularity,
    check_pointwise_submodularity,
    check_sampling_lemma,
    exact_favg,
    mc_favg,
    optimal_policy_value,
    optimal_policy_value_matroid,
)

__version__ = "0.1.0"
