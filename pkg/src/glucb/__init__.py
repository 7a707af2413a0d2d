"""Non-stationary generalized linear bandits: forgetting UCB policies and a benchmark harness."""

__version__ = "0.1.0"

from .links import (
    IDENTITY,
    LOGISTIC,
    GlmConstants,
    LinkError,
    LinkFunction,
    compute_c_mu,
    compute_k_mu,
    get_link,
)
from .estimators import (
    DiscountedState,
    MleSolution,
    NonConvergenceError,
    SingularMatrixError,
    SlidingWindowState,
    estimate,
    g_function,
    mahalanobis_norm,
    mahalanobis_norms,
    project_theta,
    solve_mle_discounted,
    solve_mle_sw,
)
from .policies import (
    POLICY_NAMES,
    DGlucb,
    DLinUcb,
    EmptyActionSetError,
    LinUcb,
    PolicyConfig,
    StationaryGlucb,
    SwGlucb,
    SwLinUcb,
    UcbDecision,
    linear_beta,
    make_policy,
    rho_d,
    rho_sw,
    select_action,
    tune_gamma,
    tune_tau,
)
from .environments import (
    ChosenNotInSetError,
    MalformedCsvError,
    MissingColumnsError,
    PiecewiseParameterSchedule,
    ReplayDataset,
    ReplayRound,
    SimulatedRound,
    ZeroVarianceColumnError,
    abrupt_2d_schedule,
    instantaneous_regret,
    load_replay_dataset,
    replay_round,
    sample_reward,
    sample_round,
    sample_unit_ball,
    write_synthetic_replay_csv,
)
from .harness import (
    AggregateResult,
    ConcentrationReport,
    ConfigError,
    ExperimentConfig,
    emit_csv,
    load_config,
    run_experiment,
    validate_concentration,
)
