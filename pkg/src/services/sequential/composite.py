"""
Composite-hypothesis variants of the three procedures.

Each stream carries an adaptive log-likelihood built from a one-step-delayed
plug-in estimate, and its maximum log-likelihoods over the null and the
alternative parameter spaces. The adaptive LLR lambda* replaces the simple LLR
in the stopping rules. Gap and synchronous rules use strict inequalities with
sign side-conditions; the decentralized rule keeps the SPRT's closed exits.
"""

import logging
import math
from dataclasses import dataclass
from functools import partial
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigValidationError, HorizonExhaustedError, NumericalError, PreconditionError
from .interfaces import (
    CompositeModel, DecisionRecord, ErrorMetric, ErrorReport, ErrorType, PriorBounds,
    ProcedureKind, SignalConfig, Thresholds
)
from .procedures import DEFAULT_BLOCK_SIZE, DEFAULT_HORIZON, ErrorWatch, ProcedureRun, RuleSet, _fire
from .replication_pool import PURPOSE_COMPOSITE, ReplicationPool, mean_and_std_error, replication_rng
from .statistics import LlrState

logger = logging.getLogger(__name__)


def adaptive_llr(ell_star: np.ndarray, ell0: np.ndarray, ell1: np.ndarray) -> np.ndarray:
    """lambda* from the adaptive and maximum log-likelihoods (three-case rule)."""
    lam = np.zeros_like(ell_star, dtype=float)
    positive = ell0 < np.minimum(ell1, ell_star)
    negative = ell1 < np.minimum(ell0, ell_star)
    lam[positive] = ell_star[positive] - ell0[positive]
    lam[negative] = ell1[negative] - ell_star[negative]
    return lam


@dataclass
class AdaptiveLlrState:
    """Per-stream adaptive statistics at time n.

    ``totals`` is the running sum of observations (the sufficient statistic of
    the shipped model); ``theta_hat`` the estimate after n observations, used at
    step n + 1.
    """
    n: int
    totals: np.ndarray
    ell_star: np.ndarray
    ell0: np.ndarray
    ell1: np.ndarray
    theta_hat: np.ndarray
    view: LlrState

    @classmethod
    def initial(cls, models: Sequence[CompositeModel]) -> "AdaptiveLlrState":
        K = len(models)
        return cls(
            n=0,
            totals=np.zeros(K),
            ell_star=np.zeros(K),
            ell0=np.zeros(K),
            ell1=np.zeros(K),
            theta_hat=np.array([model.theta0_init for model in models], dtype=float),
            view=LlrState.initial(K),
        )

    @property
    def K(self) -> int:
        return len(self.totals)

    @property
    def lambda_star(self) -> np.ndarray:
        return self.view.llr

    # ProcedureRun reads these names
    @property
    def llr(self) -> np.ndarray:
        return self.view.llr

    @property
    def positive_count_star(self) -> int:
        return self.view.positive_count

    @property
    def positive_count(self) -> int:
        return self.view.positive_count

    def ordered_value(self, rank: int) -> float:
        return self.view.ordered_value(rank)

    def ordered_value_extended(self, rank: int) -> float:
        return self.view.ordered_value_extended(rank)

    def top(self, count: int) -> frozenset:
        return self.view.top(count)

    def advance(self, observations, models: Sequence[CompositeModel]) -> "AdaptiveLlrState":
        x = np.asarray(observations, dtype=float)
        if x.shape != self.totals.shape:
            raise ConfigValidationError(f"Expected {self.K} observations, got shape {x.shape}")
        n = self.n + 1
        increments = np.array([model.log_likelihood(x[k], self.theta_hat[k]) for k, model in enumerate(models)])
        ell_star = self.ell_star + increments
        totals = self.totals + x
        ell0 = np.array([model.sup_log_likelihood(totals[k], n, model.null_space) for k, model in enumerate(models)])
        ell1 = np.array([model.sup_log_likelihood(totals[k], n, model.alt_space) for k, model in enumerate(models)])
        theta_hat = np.array([model.estimate(totals[k], n) for k, model in enumerate(models)])

        for values in (ell_star, ell0, ell1, theta_hat):
            if not np.all(np.isfinite(values)):
                bad = int(np.flatnonzero(~np.isfinite(values))[0])
                raise NumericalError("Non-finite composite likelihood or estimate", stream=bad)

        return AdaptiveLlrState(
            n=n, totals=totals, ell_star=ell_star, ell0=ell0, ell1=ell1, theta_hat=theta_hat,
            view=LlrState.from_values(adaptive_llr(ell_star, ell0, ell1), n=n),
        )


def advance_adaptive(state: AdaptiveLlrState, observations, models: Sequence[CompositeModel]) -> AdaptiveLlrState:
    return state.advance(observations, models)


def composite_sprt_step(state: AdaptiveLlrState, thresholds: Thresholds, undecided) -> Dict[int, int]:
    return _fire(sorted(undecided), state.lambda_star, thresholds.a, -thresholds.b)


def composite_proposed_step(state: AdaptiveLlrState, thresholds: Thresholds, prior: PriorBounds,
                            undecided) -> Dict[int, int]:
    """Gap (l = u) or gap-intersection (l < u) rule on lambda*."""
    if prior.known_count:
        m = prior.l
        below = state.ordered_value(m + 1)
        above = state.ordered_value(m)
        upper = max(below + thresholds.c, 0.0) if below < 0 else math.inf
        lower = min(above - thresholds.d, 0.0) if above > 0 else -math.inf
    else:
        upper, lower = thresholds.a, -thresholds.b
        below = state.ordered_value(prior.l + 1)
        if below < 0:
            upper = min(upper, max(below + thresholds.c, 0.0))
        above = state.ordered_value(prior.u)
        if above > 0:
            lower = max(lower, min(above - thresholds.d, 0.0))
    return _fire(sorted(undecided), state.lambda_star, upper, lower, strict=True)


def composite_synchronous_step(state: AdaptiveLlrState, thresholds: Thresholds,
                               prior: PriorBounds) -> Optional[FrozenSet[int]]:
    a, b, c, d = thresholds.a, thresholds.b, thresholds.c, thresholds.d
    if prior.known_count:
        m = prior.l
        above, below = state.ordered_value(m), state.ordered_value(m + 1)
        if above - below > max(c, d) and below < 0 < above:
            return state.top(m)
        return None

    l, u = prior.l, prior.u
    lam = state.lambda_star
    p = state.positive_count_star
    at_l = state.ordered_value_extended(l)
    at_u1 = state.ordered_value_extended(u + 1)
    tau1 = state.ordered_value(l + 1) < min(-b, -c + at_l) and at_l > 0
    tau2 = bool(np.all((lam >= a) | (lam <= -b))) and l <= p <= u
    tau3 = state.ordered_value(u) > max(a, d + at_u1) and at_u1 < 0
    if tau1 or tau2 or tau3:
        return state.top(min(max(p, l), u))
    return None


COMPOSITE_RULES = RuleSet(sprt=composite_sprt_step, proposed=composite_proposed_step,
                          synchronous=composite_synchronous_step)


def config_from_parameters(models: Sequence[CompositeModel], theta: Sequence[float]) -> SignalConfig:
    """Signals are the streams whose true parameter lies in the alternative space."""
    if len(models) != len(theta):
        raise ConfigValidationError(f"{len(theta)} parameters for {len(models)} composite streams")
    signals = set()
    for k, (model, value) in enumerate(zip(models, theta)):
        if model.in_alt(value):
            signals.add(k)
        elif not model.in_null(value):
            raise ConfigValidationError(
                f"True parameter {value} of stream {k + 1} lies in neither hypothesis space"
            )
    return SignalConfig(frozenset(signals), len(models))


class CompositePathSampler:
    """Block sampler of raw observations under fixed true parameters."""

    def __init__(self, models: Sequence[CompositeModel], theta: Sequence[float],
                 rng: np.random.Generator, block_size: int = DEFAULT_BLOCK_SIZE):
        self.models = list(models)
        self.theta = [float(value) for value in theta]
        self.rng = rng
        self.block_size = block_size
        self._block: Optional[np.ndarray] = None
        self._position = 0

    def next_observations(self) -> np.ndarray:
        if self._block is None or self._position >= self.block_size:
            block = np.empty((self.block_size, len(self.models)))
            for k, model in enumerate(self.models):
                block[:, k] = model.sample(self.theta[k], self.rng, size=self.block_size)
            self._block, self._position = block, 0
        row = self._block[self._position]
        self._position += 1
        return row


def run_composite_replication(kind: ProcedureKind, models: Sequence[CompositeModel], theta: Sequence[float],
                              thresholds: Thresholds, prior: PriorBounds, rng: np.random.Generator,
                              horizon: int = DEFAULT_HORIZON,
                              watch: Optional[ErrorWatch] = None) -> DecisionRecord:
    """One replication of a composite procedure under true parameters ``theta``.

    Raises:
        HorizonExhaustedError: with the partial record.
    """
    config = config_from_parameters(models, theta)
    if prior.K != len(models):
        raise ConfigValidationError(f"{len(models)} composite models for K={prior.K} streams")
    if horizon < 1:
        raise ConfigValidationError(f"horizon must be at least 1, got {horizon}")
    run = ProcedureRun(kind, thresholds, prior, rules=COMPOSITE_RULES, watch=watch)
    sampler = CompositePathSampler(models, theta, rng)
    state = AdaptiveLlrState.initial(models)
    while not run.done:
        if state.n >= horizon:
            raise HorizonExhaustedError(horizon, run.record())
        state = state.advance(sampler.next_observations(), models)
        run.observe(state)
    return run.record()


def _composite_stop_times(kind, models, theta, thresholds, prior, horizon, seed, index) -> List[int]:
    rng = replication_rng(seed, PURPOSE_COMPOSITE, 2, index)
    record = run_composite_replication(kind, models, theta, thresholds, prior, rng, horizon=horizon)
    return [int(t) for t in record.stop_time]


def composite_decision_times(kind: ProcedureKind, models: Sequence[CompositeModel], theta: Sequence[float],
                             thresholds: Thresholds, prior: PriorBounds, replications: int, seed: int,
                             horizon: int = DEFAULT_HORIZON, workers: int = 1) -> Tuple[np.ndarray, np.ndarray]:
    """Per-stream mean decision times and their standard errors under ``theta``."""
    if replications < 2:
        raise ConfigValidationError(f"need at least 2 replications for a standard error, got {replications}")
    worker = partial(_composite_stop_times, ProcedureKind(kind), list(models), [float(t) for t in theta],
                     thresholds, prior, horizon, seed)
    times = np.array(ReplicationPool(workers).map(worker, range(replications)), dtype=float)
    return times.mean(axis=0), times.std(axis=0, ddof=1) / math.sqrt(replications)


def _martingale_path(model: CompositeModel, theta: float, checkpoints: Tuple[int, ...],
                     seed: int, index: int) -> List[float]:
    rng = replication_rng(seed, PURPOSE_COMPOSITE, 0, index)
    horizon = max(checkpoints)
    observations = model.sample(theta, rng, size=horizon)
    ell_star, total, estimate = 0.0, 0.0, model.theta0_init
    ratios = []
    for n, x in enumerate(observations, start=1):
        ell_star += model.log_likelihood(x, estimate)
        total += x
        estimate = model.estimate(total, n)
        if n in checkpoints:
            ratios.append(math.exp(ell_star - model.cumulative_log_likelihood(total, n, theta)))
    return ratios


def martingale_mean(model: CompositeModel, theta: float, checkpoints: Sequence[int],
                    replications: int, seed: int, workers: int = 1) -> Dict[int, Tuple[float, float]]:
    """Mean and standard error of exp(l*(n) - l(n, theta)) at each checkpoint n.

    The ratio is a mean-one martingale under the true parameter.
    """
    checkpoints = tuple(sorted(set(int(n) for n in checkpoints)))
    if not checkpoints or checkpoints[0] < 1:
        raise PreconditionError(f"Checkpoints must be positive integers, got {checkpoints}")
    worker = partial(_martingale_path, model, float(theta), checkpoints, seed)
    paths = np.array(ReplicationPool(workers).map(worker, range(replications)))
    return {n: mean_and_std_error(paths[:, column]) for column, n in enumerate(checkpoints)}


def parameter_grid(models: Sequence[CompositeModel], config: SignalConfig, points: int) -> List[List[float]]:
    """``points`` parameter vectors consistent with ``config``.

    Point p puts every signal at the p-th grid value of its alternative space and
    every noise stream at the p-th value of its null space.
    """
    if points < 1:
        raise PreconditionError(f"Grid needs at least one point, got {points}")
    columns = [
        model.parameter_grid("alt" if config.is_signal(k) else "null", points)
        for k, model in enumerate(models)
    ]
    return [[float(column[p]) for column in columns] for p in range(points)]


def _composite_error_indicator(kind, models, theta, thresholds, prior, error_type, horizon,
                               seed, key, index) -> float:
    rng = replication_rng(seed, PURPOSE_COMPOSITE, *key, index)
    config = config_from_parameters(models, theta)
    watch = ErrorWatch(config, error_type, stop_on_error=True)
    record = run_composite_replication(kind, models, theta, thresholds, prior, rng, horizon=horizon, watch=watch)
    return 0.0 if record.error_time is None else 1.0


@dataclass
class CompositeGridResult:
    """Error estimates at each parameter vector and the worst one."""
    reports: List[Tuple[List[float], ErrorReport]]

    @property
    def worst(self) -> ErrorReport:
        return max((report for _, report in self.reports), key=lambda report: report.value)


def composite_fwe_grid(kind: ProcedureKind, models: Sequence[CompositeModel], config: SignalConfig,
                       thresholds: Thresholds, prior: PriorBounds, replications: int, seed: int,
                       points: int = 5, error_type: ErrorType = ErrorType.TYPE_I,
                       horizon: int = DEFAULT_HORIZON, workers: int = 1) -> CompositeGridResult:
    """Plain Monte Carlo FWE of a composite procedure over a parameter grid."""
    config.check_against(prior)
    error_type = ErrorType(error_type)
    metric = ErrorMetric.FWE1 if error_type is ErrorType.TYPE_I else ErrorMetric.FWE2
    reports = []
    for point, theta in enumerate(parameter_grid(models, config, points)):
        worker = partial(_composite_error_indicator, ProcedureKind(kind), list(models), theta, thresholds,
                         prior, error_type, horizon, seed, (1, point, int(error_type)))
        estimate, std_error = mean_and_std_error(ReplicationPool(workers).map(worker, range(replications)))
        reports.append((theta, ErrorReport(metric, estimate, std_error, replications,
                                           configuration=config.config_id, method="plain")))
        logger.info(f"🧪 theta={theta} {metric.value}={estimate:.3g} ± {std_error:.2g}")
    return CompositeGridResult(reports)
