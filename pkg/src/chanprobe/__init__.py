"""chanprobe: adaptive channel probing, exactly verified.

Simulate closed-loop probing of discrete memoryless channels, search all
probing strategies by brute force at small blocklengths, check the
1/(4 n mu^2) ceiling on conditional-type deviations, and compute the
rate-distortion quantities of joint communication-and-sensing codes.
"""

__version__ = "0.1.0"

from .channels import (
    Alphabet,
    Dmc,
    JointType,
    Pmf,
    Sdmc,
    conditional_deviation,
    dmc_sample,
    dmc_sample_many,
    joint_type,
    load_channel,
    sdmc_sample,
    sdmc_sample_many,
    sequence_type,
    triple_type,
    uniform_pmf,
    validate_pmf,
)
from .deviation import (
    DeviationReport,
    MartingaleReport,
    kolmogorov_rhs,
    lemma1_bound,
    martingale_check,
    monte_carlo_deviation,
    verify_lemma1_exhaustive,
    wilson_interval,
)
from .isac import (
    ConverseParams,
    DistortionFn,
    FrontierPoint,
    IsacCode,
    SimStats,
    build_good_message_set,
    constant_code,
    expected_distortion,
    frontier_sweep,
    identity_decoder_code,
    load_code,
    load_distortion,
    message_failure_profile,
    mutual_information,
    optimal_estimate,
    posterior_state,
    repetition_code,
    restricted_measure_mass,
    simulate_code,
    triple_deviation_probabilities,
)
from .rng import RngStream
from .surgery import (
    SurgerySite,
    augmented_subtree,
    expected_replacement_success,
    find_surgery_sites,
    is_well_ordered,
    replacement_realization,
    well_order,
    well_order_step,
)
from .trees import (
    ScoreParams,
    StrategyTree,
    ThresholdStrategy,
    enumerate_trees,
    exhaustive_max_success,
    load_tree,
    optimal_strategy,
    optimal_tree,
    save_tree,
    score,
    strategy_from_tree,
    success_probability,
    success_set,
    tree_from_strategy,
)
