"""
Threshold calibration for familywise error control.

Analytic thresholds follow the closed-form recipes that guarantee the error
bounds; Monte Carlo calibration tightens them by bisecting a shared offset
against importance-sampling estimates of the maximal familywise error rates.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import partial
from typing import Any, Dict, FrozenSet, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import logsumexp

from .errors import CalibrationFailedError, ConfigValidationError, HorizonExhaustedError
from .interfaces import (
    ErrorMetric, ErrorReport, ErrorTargets, ErrorType, PriorBounds,
    ProcedureKind, SignalConfig, StreamModel, Thresholds
)
from .procedures import DEFAULT_HORIZON, ErrorWatch, run_replication
from .replication_pool import (
    PURPOSE_CALIBRATION, PURPOSE_IMPORTANCE, PURPOSE_PLAIN_ERROR,
    ReplicationPool, mean_and_std_error, replication_rng
)

logger = logging.getLogger(__name__)

DEFAULT_REPLICATIONS = 10_000
DEFAULT_TOLERANCE = 0.05
DEFAULT_MAX_ITERATIONS = 40


class ImportanceProposal(Enum):
    """Change of measure used by the importance-sampling estimator."""
    MIXTURE = "mixture"     # one uniformly chosen stream switched per path
    TILTED = "tilted"       # every stream of the error side switched
    PAIR = "pair"           # one (signal, noise) pair swapped per path
    AUTO = "auto"           # chosen from the procedure and the prior


# A mixture component: streams moved to their alternative, streams moved to their null
Component = Tuple[FrozenSet[int], FrozenSet[int]]


def proposal_components(proposal: ImportanceProposal, kind: ProcedureKind, config: SignalConfig,
                        prior: PriorBounds, error_type: ErrorType) -> List[Component]:
    """Components of the proposal mixture, each drawn with equal probability.

    AUTO uses single switches for the SPRT, pair swaps when the number of
    signals is known and both together otherwise. Pair swaps need a signal and
    a noise stream and fall back to single switches without one.
    """
    proposal = ImportanceProposal(proposal)
    type_one = ErrorType(error_type) is ErrorType.TYPE_I
    targets = _error_side(config, error_type)
    empty: FrozenSet[int] = frozenset()
    singles = [(frozenset({k}), empty) if type_one else (empty, frozenset({k})) for k in targets]
    pairs = [(frozenset({j}), frozenset({i})) for i in sorted(config.signals) for j in sorted(config.noise)]

    if proposal is ImportanceProposal.TILTED:
        return [(frozenset(targets), empty) if type_one else (empty, frozenset(targets))]
    if proposal is ImportanceProposal.MIXTURE:
        return singles
    if proposal is ImportanceProposal.PAIR:
        return pairs or singles
    if ProcedureKind(kind) is ProcedureKind.DECENTRALIZED_SPRT:
        return singles
    if prior.known_count:
        return pairs or singles
    return singles + pairs


class CalibrationMethod(Enum):
    ANALYTIC = "analytic"
    MONTE_CARLO = "monte_carlo"


def analytic_thresholds(kind: ProcedureKind, targets: ErrorTargets, prior: PriorBounds) -> Thresholds:
    """Thresholds meeting the closed-form error bounds for every A in the prior class.

    Levels unused by a procedure mirror the used ones so all four stay positive.
    """
    kind = ProcedureKind(kind)
    log_alpha, log_beta = targets.log_alpha, targets.log_beta
    K, l, u = prior.K, prior.l, prior.u

    if kind is ProcedureKind.DECENTRALIZED_SPRT:
        a = log_alpha + math.log(K - l)     # max |A^c| over the class
        b = log_beta + math.log(u)          # max |A|
        return Thresholds(a, b, a, b)

    if prior.known_count:
        pairs = math.log(l * (K - l))
        c = log_alpha + pairs
        d = log_beta + pairs
        return Thresholds(c, d, c, d)

    a = log_alpha + math.log(K)
    b = log_beta + math.log(K)
    c = log_alpha + math.log((K - l) * K)
    d = log_beta + math.log(u * K)
    return Thresholds(a, b, c, d)


def error_bound(kind: ProcedureKind, config: SignalConfig, thresholds: Thresholds,
                prior: PriorBounds, error_type: ErrorType) -> float:
    """Closed-form upper bound on FWE of the given type under configuration A."""
    kind = ProcedureKind(kind)
    type_one = ErrorType(error_type) is ErrorType.TYPE_I
    signals, noise = config.size, config.K - config.size
    a, b, c, d = thresholds.a, thresholds.b, thresholds.c, thresholds.d

    if kind is ProcedureKind.DECENTRALIZED_SPRT:
        return noise * math.exp(-a) if type_one else signals * math.exp(-b)

    if prior.known_count:
        pairs = prior.m * (prior.K - prior.m)
        if kind is ProcedureKind.SYNCHRONOUS:
            return pairs * math.exp(-max(c, d))
        return pairs * math.exp(-c) if type_one else pairs * math.exp(-d)

    if type_one:
        return noise * (math.exp(-a) + signals * math.exp(-c))
    return signals * (math.exp(-b) + noise * math.exp(-d))


def representative_configurations(prior: PriorBounds, mode: Union[str, Sequence[SignalConfig]] = "by_size") -> List[SignalConfig]:
    """Configurations over which the maximal error is taken.

    ``by_size`` collapses exchangeable setups to one representative per size;
    ``exhaustive`` walks the whole prior class (guarded).
    """
    if not isinstance(mode, str):
        configs = list(mode)
        for config in configs:
            config.check_against(prior)
        return configs
    if mode == "by_size":
        return prior.representatives()
    if mode == "exhaustive":
        return list(prior.configurations())
    raise ConfigValidationError(f"Unknown representatives mode '{mode}', expected 'by_size' or 'exhaustive'")


def _error_side(config: SignalConfig, error_type: ErrorType) -> List[int]:
    """Streams whose wrong decision is an error of the given type."""
    if ErrorType(error_type) is ErrorType.TYPE_I:
        return sorted(config.noise)
    return sorted(config.signals)


def _run_watched(kind, models, config, thresholds, prior, rng, horizon, censor, error_type, sampling=None):
    """Run until the first error of the given type; optionally censor at the horizon."""
    watch = ErrorWatch(config, error_type, stop_on_error=True)
    try:
        return run_replication(kind, models, config, thresholds, prior, rng,
                               horizon=horizon, sampling=sampling, watch=watch)
    except HorizonExhaustedError as exc:
        if not censor:
            raise
        # No error within the horizon counts as no error
        return exc.partial_record


def _importance_weight(kind: ProcedureKind, models: Sequence[StreamModel], config: SignalConfig,
                       thresholds: Thresholds, prior: PriorBounds, error_type: ErrorType,
                       proposal: ImportanceProposal, horizon: int, censor: bool, seed: int,
                       key: Tuple[int, ...], index: int) -> float:
    """Likelihood-ratio weight of one proposal path stopped at the first error.

    With components c = 1..M the weight is M / sum_c dQ_c/dP, where dQ_c/dP is
    exp(+lambda) per stream moved to its alternative and exp(-lambda) per
    stream moved to its null, all taken at the error time.
    """
    error_type = ErrorType(error_type)
    if not _error_side(config, error_type):
        return 0.0
    rng = replication_rng(seed, PURPOSE_IMPORTANCE, *key, index)
    components = proposal_components(proposal, kind, config, prior, error_type)

    if proposal is ImportanceProposal.TILTED:
        raised, lowered = components[0]
    else:
        raised, lowered = components[int(rng.integers(len(components)))]
    sampling = (config.signals | raised) - lowered

    record = _run_watched(kind, models, config, thresholds, prior, rng, horizon, censor,
                          error_type, sampling=sampling)
    if record.error_time is None:
        return 0.0

    llr = record.error_llr
    log_ratios = np.array([
        float(llr[sorted(up)].sum()) - float(llr[sorted(down)].sum()) for up, down in components
    ])
    log_weight = math.log(len(components)) - float(logsumexp(log_ratios))
    return math.exp(log_weight)


def _plain_indicator(kind: ProcedureKind, models: Sequence[StreamModel], config: SignalConfig,
                     thresholds: Thresholds, prior: PriorBounds, error_type: ErrorType,
                     horizon: int, censor: bool, seed: int, key: Tuple[int, ...], index: int) -> float:
    rng = replication_rng(seed, PURPOSE_PLAIN_ERROR, *key, index)
    record = _run_watched(kind, models, config, thresholds, prior, rng, horizon, censor, error_type)
    return 0.0 if record.error_time is None else 1.0


def _metric_for(error_type: ErrorType) -> ErrorMetric:
    return ErrorMetric.FWE1 if ErrorType(error_type) is ErrorType.TYPE_I else ErrorMetric.FWE2


def is_fwe_estimate(kind: ProcedureKind, models: Sequence[StreamModel], config: SignalConfig,
                    thresholds: Thresholds, prior: PriorBounds, error_type: ErrorType,
                    replications: int, seed: int, horizon: int = DEFAULT_HORIZON,
                    proposal: ImportanceProposal = ImportanceProposal.AUTO,
                    workers: int = 1, key: Tuple[int, ...] = (),
                    censor_at_horizon: bool = False) -> ErrorReport:
    """Importance-sampling estimate of FWE under configuration A.

    Weights are accumulated only up to the first error of the requested type;
    paths without such an error contribute zero.
    """
    if replications < 1:
        raise ConfigValidationError(f"replications must be at least 1, got {replications}")
    error_type = ErrorType(error_type)
    worker = partial(_importance_weight, ProcedureKind(kind), list(models), config, thresholds,
                     prior, error_type, ImportanceProposal(proposal), horizon, censor_at_horizon,
                     seed, tuple(key))
    weights = ReplicationPool(workers).map(worker, range(replications))
    estimate, std_error = mean_and_std_error(weights)
    return ErrorReport(_metric_for(error_type), estimate, std_error, replications,
                       configuration=config.config_id, method=f"importance_{ImportanceProposal(proposal).value}")


def plain_fwe_estimate(kind: ProcedureKind, models: Sequence[StreamModel], config: SignalConfig,
                       thresholds: Thresholds, prior: PriorBounds, error_type: ErrorType,
                       replications: int, seed: int, horizon: int = DEFAULT_HORIZON,
                       workers: int = 1, key: Tuple[int, ...] = (),
                       censor_at_horizon: bool = False) -> ErrorReport:
    """Plain Monte Carlo estimate of FWE by indicator averaging."""
    if replications < 1:
        raise ConfigValidationError(f"replications must be at least 1, got {replications}")
    error_type = ErrorType(error_type)
    worker = partial(_plain_indicator, ProcedureKind(kind), list(models), config, thresholds,
                     prior, error_type, horizon, censor_at_horizon, seed, tuple(key))
    indicators = ReplicationPool(workers).map(worker, range(replications))
    estimate, std_error = mean_and_std_error(indicators)
    return ErrorReport(_metric_for(error_type), estimate, std_error, replications,
                       configuration=config.config_id, method="plain")


@dataclass
class CalibrationResult:
    """Thresholds with the method that produced them and, for Monte Carlo, the achieved errors."""
    thresholds: Thresholds
    method: CalibrationMethod
    kind: ProcedureKind
    prior: PriorBounds
    targets: ErrorTargets
    achieved: Dict[str, Dict[str, ErrorReport]] = field(default_factory=dict)
    offset: float = 0.0
    iterations: int = 0
    seed: Optional[int] = None
    replications: Optional[int] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "procedure": self.kind.value,
            "method": self.method.value,
            "thresholds": self.thresholds.to_dict(),
            "prior": self.prior.to_dict(),
            "targets": {"alpha": self.targets.alpha, "beta": self.targets.beta},
            "offset": self.offset,
            "iterations": self.iterations,
            "seed": self.seed,
            "replications": self.replications,
            "achieved": {
                config_id: {name: report.to_dict() for name, report in reports.items()}
                for config_id, reports in self.achieved.items()
            },
        }


def calibrate_analytic(kind: ProcedureKind, targets: ErrorTargets, prior: PriorBounds) -> CalibrationResult:
    return CalibrationResult(
        thresholds=analytic_thresholds(kind, targets, prior),
        method=CalibrationMethod.ANALYTIC,
        kind=ProcedureKind(kind),
        prior=prior,
        targets=targets,
    )


class _WorstCaseEvaluator:
    """Maximal estimated error ratio over representative configurations at an offset."""

    def __init__(self, kind, models, prior, targets, base, configs, replications, seed,
                 proposal, horizon, workers):
        self.kind = kind
        self.models = models
        self.prior = prior
        self.targets = targets
        self.base = base
        self.configs = configs
        self.replications = replications
        self.seed = seed
        self.proposal = proposal
        self.horizon = horizon
        self.workers = workers
        self.reports: Dict[float, Dict[str, Dict[str, ErrorReport]]] = {}

    def __call__(self, offset: float) -> float:
        thresholds = self.base.shifted(offset)
        reports: Dict[str, Dict[str, ErrorReport]] = {}
        worst = 0.0
        for index, config in enumerate(self.configs):
            reports[config.config_id] = {}
            for error_type in (ErrorType.TYPE_I, ErrorType.TYPE_II):
                # Same keys at every offset: common random numbers across the bisection
                report = is_fwe_estimate(
                    self.kind, self.models, config, thresholds, self.prior, error_type,
                    self.replications, self.seed, horizon=self.horizon, proposal=self.proposal,
                    workers=self.workers, key=(PURPOSE_CALIBRATION, index, int(error_type)),
                )
                reports[config.config_id][_metric_for(error_type).value] = report
                worst = max(worst, report.value / self.targets.target(error_type))
        self.reports[offset] = reports
        logger.info(f"🎯 offset={offset:+.4f} worst error ratio={worst:.4f}")
        return worst


def calibrate_monte_carlo(kind: ProcedureKind, models: Sequence[StreamModel], prior: PriorBounds,
                          targets: ErrorTargets, replications: int = DEFAULT_REPLICATIONS,
                          seed: int = 0, tolerance: float = DEFAULT_TOLERANCE,
                          max_iterations: int = DEFAULT_MAX_ITERATIONS,
                          representatives: Union[str, Sequence[SignalConfig]] = "by_size",
                          proposal: ImportanceProposal = ImportanceProposal.AUTO,
                          horizon: int = DEFAULT_HORIZON, workers: int = 1) -> CalibrationResult:
    """Bisect a shared offset on the analytic thresholds.

    Stops once the binding ratio max(max_A FWE1/alpha, max_A FWE2/beta) lies in
    [1 - tolerance, 1].

    Raises:
        CalibrationFailedError: no offset found within ``max_iterations``.
    """
    kind = ProcedureKind(kind)
    base = analytic_thresholds(kind, targets, prior)
    configs = representative_configurations(prior, representatives)
    evaluate = _WorstCaseEvaluator(kind, list(models), prior, targets, base, configs, replications,
                                   seed, ImportanceProposal(proposal), horizon, workers)

    def accept(offset: float, iterations: int) -> CalibrationResult:
        logger.info(f"✅ Calibrated {kind.value} after {iterations} evaluations (offset {offset:+.4f})")
        return CalibrationResult(
            thresholds=base.shifted(offset), method=CalibrationMethod.MONTE_CARLO, kind=kind,
            prior=prior, targets=targets, achieved=evaluate.reports[offset], offset=offset,
            iterations=iterations, seed=seed, replications=replications,
        )

    history: List[Tuple[float, float]] = []
    lower_limit = -base.minimum() * (1.0 - 1e-6)
    high, iterations = 0.0, 0
    ratio_high = evaluate(high)
    iterations += 1
    history.append((high, ratio_high))

    # Analytic thresholds are conservative; moving up only compensates Monte Carlo noise
    while ratio_high > 1.0 and iterations < max_iterations:
        high += 1.0
        ratio_high = evaluate(high)
        iterations += 1
        history.append((high, ratio_high))
    if ratio_high > 1.0:
        raise CalibrationFailedError("Could not bring the error ratio below 1", (high, high), history)
    if ratio_high >= 1.0 - tolerance:
        return accept(high, iterations)

    low = lower_limit
    ratio_low = evaluate(low)
    iterations += 1
    history.append((low, ratio_low))
    if ratio_low <= 1.0:
        return accept(low, iterations)

    while iterations < max_iterations:
        middle = (low + high) / 2.0
        ratio = evaluate(middle)
        iterations += 1
        history.append((middle, ratio))
        if 1.0 - tolerance <= ratio <= 1.0:
            return accept(middle, iterations)
        if ratio > 1.0:
            low = middle
        else:
            high = middle

    raise CalibrationFailedError(
        f"No offset within tolerance {tolerance} after {iterations} evaluations", (low, high), history
    )
