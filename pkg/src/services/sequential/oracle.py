"""
Exact enumeration oracle for Bernoulli streams.

With two outcomes per stream and step, every observation path up to a fixed
depth can be listed. Summing path probabilities gives the exact joint law of
(T_k, D_k) restricted to T_k <= depth, the exact familywise error rates on
paths decided by then, and the residual mass of paths still undecided. The
procedures are replayed with the same floating-point updates the Monte Carlo
engine uses, so boundary hits agree exactly.
"""

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from functools import partial
from itertools import product
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import norm

from .calibration import is_fwe_estimate, plain_fwe_estimate
from .errors import AcceptanceFailure, PathCountExceededError, PreconditionError
from .interfaces import ErrorType, PriorBounds, ProcedureKind, SignalConfig, Thresholds
from .procedures import DEFAULT_HORIZON, ProcedureRun, run_replication
from .replication_pool import PURPOSE_TIMES, ReplicationPool, replication_rng
from .statistics import LlrState
from .stream_models import BernoulliModel

logger = logging.getLogger(__name__)

MAX_PATHS = 10 ** 7
DEFAULT_SIGMA_LIMIT = 4.0


@dataclass
class ExactDistribution:
    """Exact law of the decisions on paths that finish by ``depth``."""
    K: int
    depth: int
    cells: Dict[int, Dict[Tuple[int, int], float]]
    fwe1: float
    fwe2: float
    residual_mass: float
    overall_stop: Dict[int, float]
    truncated_mean_time: List[float]

    def stop_probability(self, stream: int, n: int) -> float:
        """P(T_k = n), summed over both decisions."""
        cells = self.cells[stream]
        return cells.get((n, 0), 0.0) + cells.get((n, 1), 0.0)

    def to_rows(self) -> List[Dict[str, Any]]:
        rows = []
        for stream in range(self.K):
            for (n, decision), probability in sorted(self.cells[stream].items()):
                rows.append({"stream": stream + 1, "n": n, "decision": decision, "probability": probability})
        return rows


def _outcome_table(models: Sequence[BernoulliModel], config: SignalConfig):
    """Joint one-step outcomes: (LLR increment vector, probability)."""
    per_stream = []
    for k, model in enumerate(models):
        outcomes = []
        for observation, probability in model.outcome_probabilities(config.is_signal(k)):
            outcomes.append((model.llr_increment(observation), probability))
        per_stream.append(outcomes)
    table = []
    for combo in product(*per_stream):
        increments = np.array([increment for increment, _ in combo], dtype=float)
        probability = math.prod(probability for _, probability in combo)
        table.append((increments, probability))
    return table


def enumerate_exact(models: Sequence[BernoulliModel], kind: ProcedureKind, config: SignalConfig,
                    thresholds: Thresholds, prior: PriorBounds, depth: int,
                    max_paths: int = MAX_PATHS) -> ExactDistribution:
    """Depth-first enumeration of all observation paths up to ``depth``.

    Raises:
        PreconditionError: a model is not Bernoulli.
        PathCountExceededError: (2^K)^depth exceeds ``max_paths``; the message names
            the largest depth that fits.
    """
    if not all(isinstance(model, BernoulliModel) for model in models):
        raise PreconditionError("Exact enumeration supports Bernoulli stream models only")
    if depth < 1:
        raise PreconditionError(f"Enumeration depth must be at least 1, got {depth}")
    K = prior.K
    path_count = 2 ** (K * depth)
    if path_count > max_paths:
        max_depth = int(math.log2(max_paths)) // K
        raise PathCountExceededError(path_count, max_paths, depth=depth, max_depth=max_depth)

    outcomes = _outcome_table(models, config)
    cells: Dict[int, Dict[Tuple[int, int], float]] = {k: defaultdict(float) for k in range(K)}
    overall: Dict[int, float] = defaultdict(float)
    mean_time = [0.0] * K
    totals = {"fwe1": 0.0, "fwe2": 0.0, "residual": 0.0}

    def settle(run: ProcedureRun, probability: float) -> None:
        record = run.record()
        for k in range(K):
            time = int(record.stop_time[k])
            cells[k][(time, int(record.decision[k]))] += probability
            mean_time[k] += time * probability
        overall[record.overall_stop] += probability
        if record.false_positives(config):
            totals["fwe1"] += probability
        if record.false_negatives(config):
            totals["fwe2"] += probability

    def visit(state: LlrState, run: ProcedureRun, probability: float) -> None:
        if run.finished:
            settle(run, probability)
            return
        if state.n >= depth:
            totals["residual"] += probability
            return
        for increments, step_probability in outcomes:
            child_state = state.advance(increments)
            child_run = run.copy()
            child_run.observe(child_state)
            visit(child_state, child_run, probability * step_probability)

    visit(LlrState.initial(K), ProcedureRun(kind, thresholds, prior), 1.0)
    if totals["residual"] > 1e-3:
        logger.warning(f"⚠️ Residual undecided mass {totals['residual']:.3g} at depth {depth}")

    return ExactDistribution(
        K=K, depth=depth,
        cells={k: dict(table) for k, table in cells.items()},
        fwe1=totals["fwe1"], fwe2=totals["fwe2"], residual_mass=totals["residual"],
        overall_stop=dict(overall), truncated_mean_time=mean_time,
    )


@dataclass
class OracleCase:
    """One Bernoulli setup checked against the oracle."""
    name: str
    models: List[BernoulliModel]
    kind: ProcedureKind
    config: SignalConfig
    thresholds: Thresholds
    prior: PriorBounds
    depth: int


@dataclass
class OracleCheck:
    """Exact value (or interval, when residual mass remains) against an estimate."""
    quantity: str
    exact_low: float
    exact_high: float
    estimate: float
    std_error: float
    sigma_distance: float
    passed: bool

    @property
    def p_value(self) -> float:
        """Two-sided normal tail probability of the sigma distance."""
        return float(2.0 * norm.sf(self.sigma_distance))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "quantity": self.quantity,
            "exact_low": self.exact_low,
            "exact_high": self.exact_high,
            "estimate": self.estimate,
            "std_error": self.std_error,
            # Infinite when a nonzero gap has zero standard error
            "sigma_distance": self.sigma_distance if math.isfinite(self.sigma_distance) else None,
            "p_value": self.p_value,
            "verdict": "PASS" if self.passed else "FAIL",
        }


def sigma_distance(estimate: float, std_error: float, low: float, high: float) -> float:
    """Distance from an estimate to [low, high] in standard errors."""
    gap = max(low - estimate, estimate - high, 0.0)
    if gap == 0.0:
        return 0.0
    if std_error <= 0.0:
        return math.inf
    return gap / std_error


@dataclass
class OracleReport:
    case: str
    residual_mass: float
    checks: List[OracleCheck] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def worst(self) -> Optional[OracleCheck]:
        if not self.checks:
            return None
        return max(self.checks, key=lambda check: check.sigma_distance)

    def raise_for_failure(self) -> None:
        if not self.passed:
            worst = self.worst()
            raise AcceptanceFailure(
                f"Oracle case {self.case}: {worst.quantity} off by {worst.sigma_distance:.2f} sigma"
            )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "case": self.case,
            "residual_mass": self.residual_mass,
            "verdict": "PASS" if self.passed else "FAIL",
            "warnings": list(self.warnings),
            "checks": [check.to_dict() for check in self.checks],
        }


def _stop_decisions(case: OracleCase, horizon: int, seed: int, index: int) -> Tuple[List[int], List[int]]:
    rng = replication_rng(seed, PURPOSE_TIMES, 9, index)
    record = run_replication(case.kind, case.models, case.config, case.thresholds, case.prior, rng,
                             horizon=horizon)
    return [int(t) for t in record.stop_time], [int(d) for d in record.decision]


def _check(quantity: str, low: float, high: float, estimate: float, std_error: float,
           limit: float) -> OracleCheck:
    distance = sigma_distance(estimate, std_error, low, high)
    return OracleCheck(quantity, low, high, estimate, std_error, distance, distance <= limit)


def oracle_check(case: OracleCase, replications: int, seed: int, horizon: int = DEFAULT_HORIZON,
                 sigma_limit: float = DEFAULT_SIGMA_LIMIT, workers: int = 1,
                 estimator=None) -> OracleReport:
    """Compare exact FWE and every P(T_k = n, D_k = i) cell with Monte Carlo estimates.

    Cells run over n = 1..depth and both decisions. Exact cells count finished
    paths only, so each is the interval [p, p + residual mass]. FWE uses
    importance sampling when the exact rate is below 1e-2, plain Monte Carlo
    otherwise. ``estimator`` overrides the FWE estimator (same signature as
    ``plain_fwe_estimate``).
    """
    exact = enumerate_exact(case.models, case.kind, case.config, case.thresholds, case.prior, case.depth)
    report = OracleReport(case.name, exact.residual_mass)
    if exact.residual_mass >= 1e-3:
        report.warnings.append(
            f"residual mass {exact.residual_mass:.3g} at depth {case.depth}; increase the depth"
        )

    for error_type, exact_value in ((ErrorType.TYPE_I, exact.fwe1), (ErrorType.TYPE_II, exact.fwe2)):
        side = case.config.noise if error_type is ErrorType.TYPE_I else case.config.signals
        if not side:
            continue
        if estimator is not None:
            fwe = estimator(case.kind, case.models, case.config, case.thresholds, case.prior, error_type,
                            replications, seed, horizon=horizon, workers=workers)
        elif exact_value < 1e-2:
            fwe = is_fwe_estimate(case.kind, case.models, case.config, case.thresholds, case.prior,
                                  error_type, replications, seed, horizon=horizon, workers=workers)
        else:
            fwe = plain_fwe_estimate(case.kind, case.models, case.config, case.thresholds, case.prior,
                                     error_type, replications, seed, horizon=horizon, workers=workers)
        report.checks.append(_check(
            f"fwe{int(error_type)}", exact_value, exact_value + exact.residual_mass,
            fwe.value, fwe.std_error, sigma_limit,
        ))

    draws = ReplicationPool(workers).map(partial(_stop_decisions, case, horizon, seed), range(replications))
    times = np.array([stop for stop, _ in draws])
    decisions = np.array([decision for _, decision in draws])
    one_hit = 1.0 / replications
    for stream in range(case.prior.K):
        for n in range(1, case.depth + 1):
            for decision in (0, 1):
                low = exact.cells[stream].get((n, decision), 0.0)
                high = low + exact.residual_mass
                hits = (times[:, stream] == n) & (decisions[:, stream] == decision)
                estimate = float(np.mean(hits))
                # Binomial standard error, floored at one observation's worth for near-empty cells
                q = max(low, one_hit)
                std_error = math.sqrt(q * (1.0 - q) / replications) if q < 1.0 else one_hit
                report.checks.append(_check(f"P(T_{stream + 1}={n},D_{stream + 1}={decision})",
                                            low, high, estimate, std_error, sigma_limit))

    verdict = "PASS" if report.passed else "FAIL"
    logger.info(f"🔍 Oracle {case.name}: {verdict} ({len(report.checks)} checks)")
    return report
