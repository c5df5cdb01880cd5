"""beamlab: a simulation lab for reward-guided beam search with early rejection.

The library couples two decoding strategies on keyed randomness, measures how
well prefix scores predict full scores, checks the mis-rejection tail bound by
Monte Carlo, and accounts for the compute both strategies spend.
"""
from .analysis import (
    BoundReport,
    CorrelationReport,
    CostModel,
    FlopReport,
    batching_plan,
    correlation_study,
    estimate_gap_and_noise,
    kendall_tau,
    linear_fit,
    min_tau_for_rho,
    misrejection_bound,
    pearson,
    run_flops,
    theoretical_correlation,
    verify_bound,
)
from .core import (
    ConfigError,
    BeamNode,
    KeyedStream,
    SearchConfig,
    keyed_draw,
    search_config_from_dict,
    validate_config,
)
from .oracle import (
    BeamPopulation,
    BeamScoreModel,
    MonotoneNoiseModel,
    final_reward_mapped,
    final_reward_toy,
    homogeneous_population,
    make_population,
    partial_reward,
    token_score,
)
from .search import (
    EARLY_REJECTION,
    VANILLA,
    RunLedger,
    StrategySpec,
    coupled_run,
    er_step,
    exhaustive_argmax,
    misrejection_trial,
    run_search,
    select_top,
    vanilla_step,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "ConfigError",
    "SearchConfig",
    "BeamNode",
    "KeyedStream",
    "keyed_draw",
    "search_config_from_dict",
    "validate_config",
    "BeamScoreModel",
    "BeamPopulation",
    "MonotoneNoiseModel",
    "token_score",
    "partial_reward",
    "final_reward_toy",
    "final_reward_mapped",
    "make_population",
    "homogeneous_population",
    "VANILLA",
    "EARLY_REJECTION",
    "StrategySpec",
    "RunLedger",
    "select_top",
    "vanilla_step",
    "er_step",
    "run_search",
    "coupled_run",
    "exhaustive_argmax",
    "misrejection_trial",
    "CorrelationReport",
    "BoundReport",
    "CostModel",
    "FlopReport",
    "pearson",
    "kendall_tau",
    "linear_fit",
    "theoretical_correlation",
    "min_tau_for_rho",
    "estimate_gap_and_noise",
    "misrejection_bound",
    "verify_bound",
    "correlation_study",
    "run_flops",
    "batching_plan",
]
