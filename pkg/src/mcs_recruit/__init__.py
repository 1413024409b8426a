"""Seed selection for social-network-assisted mobile crowd sensing.

Selects seed users on a social network so that the workers recruited by
influence propagation maximize temporal-spatial sensing coverage.
"""

from .config import AttributeSpec, ExperimentConfig, load_config
from .dataset import (
    CheckIn,
    Dataset,
    SocialGraph,
    SynthesisParams,
    filter_active_region,
    load_checkins,
    load_edges,
    split_train_test,
    synthesize,
)
from .grid import CellIndex, CycleSpec, GridSpec, cell_universe, locate_cycle, locate_subarea
from .harness import (
    CoverageReport,
    generate_attributes,
    measure_actual_coverage,
    run_budget_split,
    run_experiment,
)
from .mobility import (
    MobilityProfile,
    MobilityVector,
    avg_similarity_to_set,
    checkin_count_pmf,
    coverage_prob,
    estimate_lambda,
    trajectory_similarity,
)
from .propagation import (
    ActivationEstimate,
    PropagationConfig,
    SpreadResult,
    Task,
    UserAttributes,
    acceptance_factors,
    acceptance_probability_ic,
    acceptance_threshold_lt,
    estimate_activation,
    incentive_attraction,
    influence_increase,
    network_spread_flag,
    run_spread,
    topical_interest,
)
from .selection import (
    CoverageEstimate,
    SelectionContext,
    SelectionLog,
    basic_selector,
    estimate_coverage,
    fast_selector,
    heuristic_greedy_baseline,
    marginal_utility,
    max_cov_baseline,
    max_degree_baseline,
    naive_fast,
    rank_utility,
)

__version__ = "0.1.0"
