"""Stable online learning on dependent (mixing) data streams.

The package pairs online convex optimization algorithms with finite
Markov-chain sample sources whose mixing coefficients and stationary risks
are exactly computable, evaluates the matching generalization bounds
term-by-term, and verifies the analysis's inequalities numerically.
"""

from .bounds import (
    BoundInputs,
    BoundReport,
    TauSelection,
    azuma_tail,
    evaluate_bound,
    expected_bound_convex,
    freedman_threshold,
    ftal_regret_bound,
    generalization_expected,
    highprob_convex_beta,
    highprob_convex_phi,
    highprob_strong_beta,
    highprob_strong_phi,
    linear_generalization,
    optimize_tau,
    stationary_to_test_adjustment,
)
from .evaluate import (
    CoverageSpec,
    block_decomposition,
    excess_risk,
    ftal_diagnostics,
    future_risk,
    lemma1_check,
    master_inequality_check,
    minimize_expected_risk,
    monte_carlo_coverage,
)
from .learners import (
    BadFtlLearner,
    BadFtlState,
    DualAveragingLearner,
    DualAveragingState,
    FtalVawLearner,
    FtalVawState,
    OnlineGradientDescentLearner,
    OnlineGradientDescentState,
    RunLedger,
    bad_ftl_step,
    best_fixed_comparator,
    regret,
    run_online,
)
from .losses import (
    Domain,
    LinearLoss,
    LogisticLoss,
    LossModel,
    RidgeLoss,
    SquaredLoss,
    expected_risk,
    expected_risk_hessian,
    loss_value,
    make_loss,
    project,
    subgradient,
)
from .process import (
    MarkovProcessModel,
    MixingProfile,
    SamplePath,
    StationaryModel,
    beta_coefficient,
    conditional_distribution,
    iid_uniform,
    phi_coefficient,
    sample_path,
    stationary_distribution,
    sticky_classification,
    sticky_features,
    sticky_mixing_profile,
    sticky_process,
    sticky_regression,
    three_state_demo,
)

__version__ = "0.1.0"
