"""
Sequential multiple testing over K data streams.

Each stream is observed step by step and must be classified as signal or
noise. Procedures decide streams at different times (gap and gap-intersection
rules), at one common time (synchronous rule) or independently (one SPRT per
stream), with thresholds calibrated to familywise error targets.

Key Components:
- LlrState / ProcedureRun: running log-likelihood ratios and stopping rules
- calibrate_analytic / calibrate_monte_carlo: thresholds for (alpha, beta)
- run_sweep: decision-time curves against achieved error rates
- theory_metrics: error metrics, first-order optima and efficiency tables
- composite: adaptive LLR for interval hypotheses
- enumerate_exact: exact law of Bernoulli procedures up to a depth

Usage:
    from src.services.sequential import (
        ErrorTargets, GaussianMeanModel, PriorBounds, ProcedureKind, SignalConfig,
        calibrate_analytic, run_replication, replication_rng,
    )

    prior = PriorBounds(l=3, u=7, K=10)
    models = [GaussianMeanModel(0.5) for _ in range(10)]
    result = calibrate_analytic(ProcedureKind.PROPOSED_ASYNC, ErrorTargets(0.01, 0.01), prior)
    record = run_replication(ProcedureKind.PROPOSED_ASYNC, models, SignalConfig.canonical(5, 10),
                             result.thresholds, prior, replication_rng(0, 0))
"""

from .errors import (
    AcceptanceFailure,
    CalibrationFailedError,
    ConfigValidationError,
    HorizonExhaustedError,
    InsufficientSpanError,
    NumericalError,
    PathCountExceededError,
    PreconditionError,
    SequentialTestingError,
)
from .interfaces import (
    CompositeModel,
    DecisionRecord,
    ErrorMetric,
    ErrorReport,
    ErrorTargets,
    ErrorType,
    PriorBounds,
    ProcedureKind,
    SignalConfig,
    StreamModel,
    Thresholds,
)
from .stream_models import BernoulliModel, GaussianCompositeModel, GaussianMeanModel
from .model_factory import StreamModelFactory, StreamModelType, stream_means
from .statistics import LlrState
from .procedures import ProcedureRun, run_replication
from .replication_pool import ReplicationPool, replication_rng
from .calibration import (
    CalibrationResult,
    ImportanceProposal,
    analytic_thresholds,
    calibrate_analytic,
    calibrate_monte_carlo,
    error_bound,
    is_fwe_estimate,
    plain_fwe_estimate,
)
from .theory_metrics import (
    AreTable,
    are_decentralized,
    are_synchronous,
    are_table,
    check_sandwich,
    empirical_error,
    kl_table,
    lower_bound_exponent,
    min_lower_bound_exponent,
    optimal_time_first_order,
)
from .composite import (
    AdaptiveLlrState,
    composite_decision_times,
    composite_fwe_grid,
    martingale_mean,
    run_composite_replication,
)
from .simulation import (
    SweepCheck,
    SweepCheckReport,
    SweepSpec,
    check_sweeps,
    efficiency_ratio,
    efficiency_rows,
    pathwise_audit,
    run_sweep,
    slope_diagnostics,
    slope_rows,
)
from .oracle import OracleCase, enumerate_exact, oracle_check

# Version info
__version__ = "1.0.0"

__all__ = [
    # Errors
    "SequentialTestingError",
    "ConfigValidationError",
    "HorizonExhaustedError",
    "CalibrationFailedError",
    "PathCountExceededError",
    "NumericalError",
    "InsufficientSpanError",
    "PreconditionError",
    "AcceptanceFailure",

    # Interfaces and types
    "ProcedureKind",
    "ErrorType",
    "ErrorMetric",
    "StreamModel",
    "CompositeModel",
    "SignalConfig",
    "PriorBounds",
    "Thresholds",
    "ErrorTargets",
    "DecisionRecord",
    "ErrorReport",

    # Models
    "GaussianMeanModel",
    "BernoulliModel",
    "GaussianCompositeModel",
    "StreamModelFactory",
    "StreamModelType",
    "stream_means",

    # Procedures
    "LlrState",
    "ProcedureRun",
    "run_replication",
    "ReplicationPool",
    "replication_rng",

    # Calibration
    "CalibrationResult",
    "ImportanceProposal",
    "analytic_thresholds",
    "calibrate_analytic",
    "calibrate_monte_carlo",
    "error_bound",
    "is_fwe_estimate",
    "plain_fwe_estimate",

    # Theory
    "AreTable",
    "are_decentralized",
    "are_synchronous",
    "are_table",
    "check_sandwich",
    "empirical_error",
    "kl_table",
    "lower_bound_exponent",
    "min_lower_bound_exponent",
    "optimal_time_first_order",

    # Composite
    "AdaptiveLlrState",
    "composite_decision_times",
    "composite_fwe_grid",
    "martingale_mean",
    "run_composite_replication",

    # Simulation
    "SweepSpec",
    "run_sweep",
    "efficiency_ratio",
    "slope_diagnostics",
    "pathwise_audit",
    "efficiency_rows",
    "slope_rows",
    "SweepCheck",
    "SweepCheckReport",
    "check_sweeps",
    "OracleCase",
    "enumerate_exact",
    "oracle_check",

    # Version
    "__version__",
]
