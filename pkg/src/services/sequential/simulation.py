"""
Monte Carlo sweep engine.

A sweep runs every procedure over a grid of one free threshold parameter and a
set of signal configurations. Decision times come from plain Monte Carlo; the
maximal familywise error rates come from the same replications, switching to
importance sampling once a rate drops below a cutoff.

Replications are keyed by (master seed, purpose, configuration index,
replication index) only, so every procedure and every grid point sees the
same observation paths. That shared randomness is what makes the path-wise
comparisons in ``pathwise_audit`` meaningful.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import partial
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .calibration import ImportanceProposal, error_bound, is_fwe_estimate, representative_configurations
from .errors import AcceptanceFailure, ConfigValidationError, HorizonExhaustedError, InsufficientSpanError
from .interfaces import (
    DecisionRecord, ErrorMetric, ErrorReport, ErrorType, PriorBounds, ProcedureKind,
    SignalConfig, StreamModel, Thresholds
)
from .procedures import DEFAULT_HORIZON, run_replication
from .replication_pool import PURPOSE_AUDIT, PURPOSE_TIMES, ReplicationPool, replication_rng
from .theory_metrics import KlPair, check_sandwich, empirical_error, kl_table, theory_slope

logger = logging.getLogger(__name__)

ERROR_SWITCH = 1e-2
TARGET_RELATIVE_ERROR = 0.005
MAX_REPLICATIONS = 100_000


def thresholds_for(kind: ProcedureKind, prior: PriorBounds, free: float) -> Thresholds:
    """Couple all four thresholds to one free parameter.

    SPRT: a = b = free. Known count: c = d = free. Otherwise a = b = free,
    c = a + log(K - l), d = b + log u.
    """
    kind = ProcedureKind(kind)
    if kind is ProcedureKind.DECENTRALIZED_SPRT or prior.known_count:
        return Thresholds.uniform(free)
    return Thresholds(free, free, free + math.log(prior.K - prior.l), free + math.log(prior.u))


@dataclass
class SweepSpec:
    """Everything a sweep needs; validated on construction."""
    kinds: List[ProcedureKind]
    models: List[StreamModel]
    prior: PriorBounds
    grid: List[float]
    configs: Union[str, List[SignalConfig]] = "by_size"
    replications: int = 10_000
    seed: int = 0
    horizon: int = DEFAULT_HORIZON
    workers: int = 1
    escalate: bool = True
    max_replications: int = MAX_REPLICATIONS
    error_switch: float = ERROR_SWITCH
    proposal: ImportanceProposal = ImportanceProposal.AUTO
    allow_partial: bool = False

    def __post_init__(self):
        issues = []
        self.kinds = [ProcedureKind(kind) for kind in self.kinds]
        if not self.kinds:
            issues.append("at least one procedure is required")
        if not self.grid:
            issues.append("threshold grid must not be empty")
        if any(not (math.isfinite(value) and value > 0) for value in self.grid):
            issues.append(f"threshold grid values must be positive, got {self.grid}")
        if self.replications < 1:
            issues.append(f"replications must be at least 1, got {self.replications}")
        if len(self.models) != self.prior.K:
            issues.append(f"{len(self.models)} stream models for K={self.prior.K} streams")
        if issues:
            raise ConfigValidationError(issues)
        self.configs = representative_configurations(self.prior, self.configs)


@dataclass
class CurvePoint:
    """One grid point of one (procedure, configuration) curve."""
    kind: ProcedureKind
    config_id: str
    free_parameter: float
    thresholds: Thresholds
    mean_time: np.ndarray
    time_se: np.ndarray
    alpha_hat: Optional[float]
    alpha_se: Optional[float]
    beta_hat: Optional[float]
    beta_se: Optional[float]
    replications: int
    censored: int = 0
    alpha_capped: bool = False
    beta_capped: bool = False

    @property
    def log10_alpha(self) -> Optional[float]:
        return _log10(self.alpha_hat)

    @property
    def log10_beta(self) -> Optional[float]:
        return _log10(self.beta_hat)

    def to_row(self) -> Dict[str, Any]:
        row: Dict[str, Any] = {
            "procedure": self.kind.value,
            "config_id": self.config_id,
            "free_param": self.free_parameter,
        }
        for k in range(len(self.mean_time)):
            row[f"mean_t{k + 1}"] = float(self.mean_time[k])
            row[f"se_t{k + 1}"] = float(self.time_se[k])
        row.update({
            "alpha_hat": self.alpha_hat, "alpha_se": self.alpha_se,
            "beta_hat": self.beta_hat, "beta_se": self.beta_se,
            "log10_alpha": self.log10_alpha, "log10_beta": self.log10_beta,
            "alpha_capped": self.alpha_capped, "beta_capped": self.beta_capped,
        })
        return row


def _log10(value: Optional[float]) -> Optional[float]:
    if value is None or value <= 0:
        return None
    return math.log10(value)


@dataclass
class SweepResult:
    spec: SweepSpec
    curves: Dict[Tuple[str, str], List[CurvePoint]] = field(default_factory=dict)
    # Completed records at the first grid point, kept for the GEM sandwich checks
    batches: Dict[Tuple[str, str], List[DecisionRecord]] = field(default_factory=dict)

    def curve(self, kind: ProcedureKind, config: Union[SignalConfig, str]) -> List[CurvePoint]:
        config_id = config if isinstance(config, str) else config.config_id
        return self.curves[(ProcedureKind(kind).value, config_id)]

    def rows(self) -> List[Dict[str, Any]]:
        return [point.to_row() for points in self.curves.values() for point in points]


def _time_replication(kind, models, config, thresholds, prior, horizon, allow_partial,
                      seed, config_index, index) -> DecisionRecord:
    rng = replication_rng(seed, PURPOSE_TIMES, config_index, index)
    try:
        return run_replication(kind, models, config, thresholds, prior, rng, horizon=horizon)
    except HorizonExhaustedError as exc:
        if not allow_partial:
            raise
        return exc.partial_record


def _run_batch(spec: SweepSpec, kind: ProcedureKind, config: SignalConfig, config_index: int,
               thresholds: Thresholds, replications: int) -> List[DecisionRecord]:
    worker = partial(_time_replication, kind, spec.models, config, thresholds, spec.prior,
                     spec.horizon, spec.allow_partial, spec.seed, config_index)
    return ReplicationPool(spec.workers).map(worker, range(replications))


def _time_summary(records: Sequence[DecisionRecord], horizon: int) -> Tuple[np.ndarray, np.ndarray]:
    if not records:
        raise HorizonExhaustedError(horizon)
    times = np.array([record.stop_time for record in records], dtype=float)
    means = times.mean(axis=0)
    if len(records) > 1:
        errors = times.std(axis=0, ddof=1) / math.sqrt(len(records))
    else:
        errors = np.zeros_like(means)
    return means, errors


def _needs_more(means: np.ndarray, errors: np.ndarray) -> bool:
    relative = errors / np.maximum(means, 1.0)
    return bool(np.any(relative > TARGET_RELATIVE_ERROR))


def _error_estimate(spec: SweepSpec, kind: ProcedureKind, config: SignalConfig, config_index: int,
                    grid_index: int, thresholds: Thresholds, records: Sequence[DecisionRecord],
                    error_type: ErrorType) -> Optional[ErrorReport]:
    side = config.noise if error_type is ErrorType.TYPE_I else config.signals
    if not side:
        return None
    metric = ErrorMetric.FWE1 if error_type is ErrorType.TYPE_I else ErrorMetric.FWE2
    plain = empirical_error(records, config, metric)
    if plain.value >= spec.error_switch:
        return plain
    replications = spec.replications
    while True:
        report = is_fwe_estimate(
            kind, spec.models, config, thresholds, spec.prior, error_type, replications, spec.seed,
            horizon=spec.horizon, proposal=spec.proposal, workers=spec.workers,
            key=(config_index, grid_index),
        )
        precise = report.relative_error is None or report.relative_error <= TARGET_RELATIVE_ERROR
        if precise or not spec.escalate or replications >= spec.max_replications:
            break
        replications = min(replications * 10, spec.max_replications)
        logger.info(f"📈 Escalating {metric.value} of {kind.value} {config.config_id} to {replications} replications")
    if not precise:
        report.capped = True
        logger.warning(
            f"⚠️ {metric.value} of {kind.value} {config.config_id}: relative error "
            f"{report.relative_error:.3g} above {TARGET_RELATIVE_ERROR} at {replications} replications"
        )
    return report


def _worst(reports: Sequence[Optional[ErrorReport]]) -> Optional[ErrorReport]:
    present = [report for report in reports if report is not None]
    if not present:
        return None
    return max(present, key=lambda report: report.value)


def run_sweep(spec: SweepSpec) -> SweepResult:
    """Decision-time curves and maximal error estimates for every procedure and configuration.

    Raises:
        HorizonExhaustedError: tagged with the offending grid point, unless
            ``spec.allow_partial`` is set.
    """
    result = SweepResult(spec)
    for kind in spec.kinds:
        for grid_index, free in enumerate(spec.grid):
            thresholds = thresholds_for(kind, spec.prior, free)
            summaries = []
            type_one, type_two = [], []
            for config_index, config in enumerate(spec.configs):
                replications = spec.replications
                try:
                    records = _run_batch(spec, kind, config, config_index, thresholds, replications)
                    complete = [record for record in records if record.complete]
                    means, errors = _time_summary(complete, spec.horizon)
                    while spec.escalate and _needs_more(means, errors) and replications < spec.max_replications:
                        replications = min(replications * 10, spec.max_replications)
                        logger.info(f"📈 Escalating {kind.value} {config.config_id} to {replications} replications")
                        records = _run_batch(spec, kind, config, config_index, thresholds, replications)
                        complete = [record for record in records if record.complete]
                        means, errors = _time_summary(complete, spec.horizon)
                    if grid_index == 0:
                        result.batches[(kind.value, config.config_id)] = complete
                    type_one.append(_error_estimate(spec, kind, config, config_index, grid_index,
                                                    thresholds, complete, ErrorType.TYPE_I))
                    type_two.append(_error_estimate(spec, kind, config, config_index, grid_index,
                                                    thresholds, complete, ErrorType.TYPE_II))
                except HorizonExhaustedError as exc:
                    raise exc.at_grid_point(free) from exc
                censored = len(records) - len(complete)
                if censored:
                    logger.warning(f"⚠️ {censored} replications hit the horizon at grid point {free}")
                summaries.append((config, means, errors, replications, censored))

            alpha, beta = _worst(type_one), _worst(type_two)
            alpha_hat = alpha.value if alpha else None
            beta_hat = beta.value if beta else None
            for config, means, errors, replications, censored in summaries:
                point = CurvePoint(
                    kind, config.config_id, free, thresholds, means, errors,
                    alpha_hat, alpha.std_error if alpha else None, beta_hat, beta.std_error if beta else None,
                    replications, censored,
                    alpha_capped=bool(alpha and alpha.capped), beta_capped=bool(beta and beta.capped),
                )
                result.curves.setdefault((kind.value, config.config_id), []).append(point)
            logger.info(f"🔁 {kind.value} free={free:g} alpha={alpha_hat} beta={beta_hat}")
    return result


def _curve_axis(curve: Sequence[CurvePoint], stream: int, matching: str) -> Tuple[np.ndarray, np.ndarray]:
    """(|log10 error|, mean time) pairs sorted by error level, averaged on ties."""
    pairs = {}
    for point in curve:
        level = point.log10_alpha if matching == "alpha" else point.log10_beta
        if level is None:
            continue
        pairs.setdefault(-level, []).append(float(point.mean_time[stream]))
    levels = np.array(sorted(pairs))
    means = np.array([np.mean(pairs[level]) for level in levels])
    return levels, means


def efficiency_ratio(curve_test: Sequence[CurvePoint], curve_reference: Sequence[CurvePoint],
                     stream: int, matching: str = "alpha") -> List[Tuple[float, float]]:
    """Ratio of mean decision times at matched error levels.

    Both curves are interpolated linearly in |log10 error| at every level of
    either curve that lies inside their common range; nothing is extrapolated.
    """
    if matching not in ("alpha", "beta"):
        raise ConfigValidationError(f"matching must be 'alpha' or 'beta', got '{matching}'")
    test_x, test_y = _curve_axis(curve_test, stream, matching)
    ref_x, ref_y = _curve_axis(curve_reference, stream, matching)
    if len(test_x) == 0 or len(ref_x) == 0:
        logger.warning("⚠️ A curve has no defined error levels; no ratios computed")
        return []
    low, high = max(test_x[0], ref_x[0]), min(test_x[-1], ref_x[-1])
    if low > high:
        logger.warning(f"⚠️ Error ranges do not overlap for stream {stream + 1}")
        return []
    levels = sorted({float(x) for x in np.concatenate([test_x, ref_x]) if low <= x <= high})
    ratios = []
    for level in levels:
        numerator = float(np.interp(level, test_x, test_y))
        denominator = float(np.interp(level, ref_x, ref_y))
        ratios.append((level, numerator / denominator))
    return ratios


@dataclass
class SlopeDiagnostics:
    fitted_slope: float
    theory_slope: float
    rel_dev: float
    points: int


def slope_diagnostics(curve: Sequence[CurvePoint], stream: int, config: SignalConfig, prior: PriorBounds,
                      kls: Sequence[KlPair], kind: Optional[ProcedureKind] = None,
                      min_points: int = 4, min_decades: float = 3.0,
                      error_range: Optional[Tuple[float, float]] = None) -> SlopeDiagnostics:
    """Least-squares slope of mean decision time against |ln error| versus first-order theory.

    The error is the maximal type-I rate for a signal stream and the type-II
    rate for a noise stream. ``error_range`` (low, high) keeps only points whose
    error lies inside it.

    Raises:
        InsufficientSpanError: fewer than ``min_points`` points or less than
            ``min_decades`` decades of error.
    """
    kind = ProcedureKind(kind or curve[0].kind)
    use_alpha = config.is_signal(stream)
    xs, ys = [], []
    for point in curve:
        error = point.alpha_hat if use_alpha else point.beta_hat
        if error is None or error <= 0:
            continue
        if error_range is not None and not (error_range[0] <= error <= error_range[1]):
            continue
        xs.append(abs(math.log(error)))
        ys.append(float(point.mean_time[stream]))
    if len(xs) < min_points:
        raise InsufficientSpanError(f"Slope fit needs {min_points} points, got {len(xs)}")
    decades = (max(xs) - min(xs)) / math.log(10)
    if decades < min_decades:
        raise InsufficientSpanError(f"Slope fit needs {min_decades} decades of error, got {decades:.2f}")

    fitted = float(np.polyfit(np.array(xs), np.array(ys), 1)[0])
    label = {
        ProcedureKind.DECENTRALIZED_SPRT: "decentralized",
        ProcedureKind.PROPOSED_ASYNC: "proposed",
        ProcedureKind.SYNCHRONOUS: "synchronous",
    }[kind]
    theory = theory_slope(stream, config, prior, kls, kind=label)
    return SlopeDiagnostics(fitted, theory, abs(fitted - theory) / theory, len(xs))

def efficiency_rows(result: SweepResult) -> List[Dict[str, Any]]:
    """Proposed-rule time ratios against the SPRT and the synchronous rule at matched max FWE¹."""
    spec = result.spec
    if ProcedureKind.PROPOSED_ASYNC not in spec.kinds:
        return []
    rows = []
    for reference in (ProcedureKind.DECENTRALIZED_SPRT, ProcedureKind.SYNCHRONOUS):
        if reference not in spec.kinds:
            continue
        for config in spec.configs:
            proposed = result.curve(ProcedureKind.PROPOSED_ASYNC, config)
            baseline = result.curve(reference, config)
            for stream in range(spec.prior.K):
                for level, ratio in efficiency_ratio(proposed, baseline, stream):
                    rows.append({
                        "l": spec.prior.l, "u": spec.prior.u, "config_id": config.config_id,
                        "reference": reference.value, "stream": stream + 1,
                        "neg_log10_alpha": level, "ratio": ratio,
                    })
    return rows


def slope_rows(result: SweepResult, error_range: Optional[Tuple[float, float]] = None) -> List[Dict[str, Any]]:
    """Fitted against first-order slopes for every curve and stream; short curves are reported, not fitted."""
    spec = result.spec
    kls = kl_table(spec.models, exact=False)
    rows = []
    for kind in spec.kinds:
        for config in spec.configs:
            curve = result.curve(kind, config)
            for stream in range(spec.prior.K):
                row: Dict[str, Any] = {
                    "procedure": kind.value, "l": spec.prior.l, "u": spec.prior.u,
                    "config_id": config.config_id, "stream": stream + 1,
                    "fitted_slope": None, "theory_slope": None, "rel_dev": None, "points": 0, "note": "",
                }
                try:
                    diagnostics = slope_diagnostics(curve, stream, config, spec.prior, kls, kind=kind,
                                                    error_range=error_range)
                except InsufficientSpanError as exc:
                    row["note"] = str(exc)
                else:
                    row.update(fitted_slope=diagnostics.fitted_slope, theory_slope=diagnostics.theory_slope,
                               rel_dev=diagnostics.rel_dev, points=diagnostics.points)
                rows.append(row)
    return rows



@dataclass
class AuditReport:
    """Violation counts of the shared-randomness path-wise relations."""
    replications: int
    reduction: int = 0
    synchronous_domination: int = 0
    sprt_domination: int = 0
    synchronous_size: int = 0
    checked: List[str] = field(default_factory=list)

    @property
    def violations(self) -> int:
        return self.reduction + self.synchronous_domination + self.sprt_domination + self.synchronous_size

    def to_dict(self) -> Dict[str, Any]:
        return {
            "replications": self.replications,
            "checked": list(self.checked),
            "reduction": self.reduction,
            "synchronous_domination": self.synchronous_domination,
            "sprt_domination": self.sprt_domination,
            "synchronous_size": self.synchronous_size,
        }


def _audit_replication(models, config, thresholds, prior, horizon, seed, index) -> Dict[str, DecisionRecord]:
    records = {}
    sprt_thresholds = Thresholds(thresholds.a, thresholds.b, thresholds.a, thresholds.b)
    for kind in ProcedureKind:
        rng = replication_rng(seed, PURPOSE_AUDIT, index)
        used = sprt_thresholds if kind is ProcedureKind.DECENTRALIZED_SPRT else thresholds
        records[kind.value] = run_replication(kind, models, config, used, prior, rng, horizon=horizon)
    return records


def pathwise_audit(models: Sequence[StreamModel], config: SignalConfig, thresholds: Thresholds,
                   prior: PriorBounds, replications: int, seed: int,
                   horizon: int = DEFAULT_HORIZON, workers: int = 1) -> AuditReport:
    """Run all three procedures on shared paths and count relation violations.

    Checked on every replication: the proposed rule never finishes a stream after
    the synchronous time and the synchronous set has between l and u members.
    With l = 0 and u = K the proposed rule must match the SPRT exactly; with
    l < u it must never finish a stream later than the SPRT at the same (a, b).
    """
    config.check_against(prior)
    worker = partial(_audit_replication, list(models), config, thresholds, prior, horizon, seed)
    report = AuditReport(replications)
    report.checked = ["synchronous_domination", "synchronous_size"]
    if prior.uninformative:
        report.checked.append("reduction")
    if not prior.known_count:
        report.checked.append("sprt_domination")

    for records in ReplicationPool(workers).map(worker, range(replications)):
        proposed = records[ProcedureKind.PROPOSED_ASYNC.value]
        sprt = records[ProcedureKind.DECENTRALIZED_SPRT.value]
        synchronous = records[ProcedureKind.SYNCHRONOUS.value]
        if proposed.overall_stop > synchronous.overall_stop:
            report.synchronous_domination += 1
        if not prior.admits(len(synchronous.decided_signals)):
            report.synchronous_size += 1
        if prior.uninformative and not (
            np.array_equal(proposed.stop_time, sprt.stop_time) and np.array_equal(proposed.decision, sprt.decision)
        ):
            report.reduction += 1
        if not prior.known_count and np.any(proposed.stop_time > sprt.stop_time):
            report.sprt_domination += 1

    if report.violations:
        logger.warning(f"⚠️ Path-wise audit found {report.violations} violations")
    return report


def nonincreasing_within(values: Sequence[float], errors: Sequence[float], sigmas: float = 2.0) -> bool:
    """True when no later value exceeds an earlier one by more than ``sigmas`` combined errors."""
    for i in range(len(values)):
        for j in range(i + 1, len(values)):
            if values[j] > values[i] + sigmas * math.hypot(errors[i], errors[j]):
                return False
    return True


def argmax_within(values: Sequence[float], errors: Sequence[float], index: int, sigmas: float = 2.0) -> bool:
    """True when ``values[index]`` is the maximum up to ``sigmas`` combined errors."""
    return all(
        values[index] + sigmas * math.hypot(errors[index], errors[j]) >= values[j]
        for j in range(len(values)) if j != index
    )


def mirror_configuration(l: int, u: int, config: SignalConfig, K: int) -> Tuple[PriorBounds, SignalConfig]:
    """(K - u, K - l) and the complement of A: the setup whose type-II curve matches A's type-I curve."""
    if config.K != K:
        raise ConfigValidationError(f"Configuration has K={config.K}, expected {K}")
    return PriorBounds(l, u, K).mirrored(), config.complement()


# ---------------------------------------------------------------------------
# Checks on finished sweeps
# ---------------------------------------------------------------------------

@dataclass
class SweepCheck:
    """One pass/fail verdict on a finished sweep."""
    name: str
    subject: str
    passed: bool
    detail: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {"name": self.name, "subject": self.subject,
                "verdict": "PASS" if self.passed else "FAIL", **self.detail}


@dataclass
class SweepCheckReport:
    checks: List[SweepCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def failures(self) -> List[SweepCheck]:
        return [check for check in self.checks if not check.passed]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "verdict": "PASS" if self.passed else "FAIL",
            "failed": len(self.failures()),
            "checks": [check.to_dict() for check in self.checks],
        }

    def raise_for_failure(self) -> None:
        failures = self.failures()
        if failures:
            names = ", ".join(f"{check.name} ({check.subject})" for check in failures[:5])
            raise AcceptanceFailure(f"{len(failures)} sweep checks failed: {names}")


def bound_compliance(result: SweepResult, sigmas: float = 3.0) -> List[SweepCheck]:
    """Maximal estimated FWE against the largest closed-form bound over the configurations."""
    spec = result.spec
    checks = []
    for kind in spec.kinds:
        curve = result.curve(kind, spec.configs[0])
        for error_type, label in ((ErrorType.TYPE_I, "alpha"), (ErrorType.TYPE_II, "beta")):
            offending, compared = [], 0
            for point in curve:
                value = getattr(point, f"{label}_hat")
                if value is None:
                    continue
                std_error = getattr(point, f"{label}_se") or 0.0
                bound = max(error_bound(kind, config, point.thresholds, spec.prior, error_type)
                            for config in spec.configs)
                compared += 1
                if value > bound + sigmas * std_error:
                    offending.append({"free_param": point.free_parameter, "estimate": value, "bound": bound})
            checks.append(SweepCheck(
                f"error_bound_{label}", f"{kind.value} l={spec.prior.l} u={spec.prior.u}",
                not offending, {"points": compared, "offending": offending},
            ))
    return checks


def audit_checks(result: SweepResult, replications: int) -> List[SweepCheck]:
    """Path-wise audit of every configuration at the middle grid value."""
    spec = result.spec
    if ProcedureKind.PROPOSED_ASYNC not in spec.kinds:
        return []
    free = sorted(spec.grid)[len(spec.grid) // 2]
    thresholds = thresholds_for(ProcedureKind.PROPOSED_ASYNC, spec.prior, free)
    checks = []
    for config in spec.configs:
        report = pathwise_audit(spec.models, config, thresholds, spec.prior, replications, spec.seed,
                                horizon=spec.horizon, workers=spec.workers)
        checks.append(SweepCheck("pathwise_audit", config.config_id, report.violations == 0,
                                 {"free_param": free, **report.to_dict()}))
    return checks


SANDWICH_FAMILIES = ("pce", "fdr", "pfdr")


def sandwich_checks(result: SweepResult, sigmas: float = 3.0) -> List[SweepCheck]:
    """GEM sandwich on the first-grid-point batches when 0 < l <= u < K and FWE <= 1/2."""
    prior = result.spec.prior
    if not (0 < prior.l and prior.u < prior.K):
        return []
    configs = {config.config_id: config for config in result.spec.configs}
    checks = []
    for (kind, config_id), records in sorted(result.batches.items()):
        if not records:
            continue
        config = configs[config_id]
        for suffix, fwe_metric in (("1", ErrorMetric.FWE1), ("2", ErrorMetric.FWE2)):
            if empirical_error(records, config, fwe_metric).value > 0.5:
                continue
            for family in SANDWICH_FAMILIES:
                verdict = check_sandwich(records, config, prior, ErrorMetric(family + suffix), sigmas=sigmas)
                checks.append(SweepCheck(f"sandwich_{family}{suffix}", f"{kind} {config_id}", verdict.holds, {
                    "gem": verdict.gem, "fwe": verdict.fwe, "lower": verdict.lower,
                    "upper": verdict.upper, "slack": verdict.slack,
                }))
    return checks


def _first_signal(config: SignalConfig) -> int:
    return min(config.signals)


def monotonicity_checks(results: Sequence[SweepResult], sigmas: float = 2.0) -> List[SweepCheck]:
    """Signal-stream time of the proposed rule non-increasing in m, synchronous time largest at m = K/2.

    Applies to known-count sweeps over homogeneous streams sharing one grid;
    anything else yields no checks.
    """
    known = [result for result in results if result.spec.prior.known_count and result.spec.prior.m > 0]
    if len(known) < 2:
        return []
    kls = kl_table(known[0].spec.models, exact=False)
    if len({tuple(float(value) for value in pair) for pair in kls}) != 1 \
            or any(result.spec.grid != known[0].spec.grid for result in known):
        return []
    known = sorted(known, key=lambda result: result.spec.prior.m)
    sizes = [result.spec.prior.m for result in known]
    K = known[0].spec.prior.K
    checks = []
    for grid_index, free in enumerate(known[0].spec.grid):
        for kind in (ProcedureKind.PROPOSED_ASYNC, ProcedureKind.SYNCHRONOUS):
            if any(kind not in result.spec.kinds for result in known):
                continue
            points = []
            for result in known:
                config = result.spec.configs[0]
                point = result.curve(kind, config)[grid_index]
                stream = _first_signal(config)
                points.append((float(point.mean_time[stream]), float(point.time_se[stream])))
            values = [value for value, _ in points]
            errors = [error for _, error in points]
            detail = {"free_param": free, "sizes": sizes, "mean_time": values}
            if kind is ProcedureKind.PROPOSED_ASYNC:
                checks.append(SweepCheck("nonincreasing_in_m", f"{kind.value} free={free:g}",
                                         nonincreasing_within(values, errors, sigmas), detail))
            elif K % 2 == 0 and K // 2 in sizes:
                checks.append(SweepCheck("argmax_at_half", f"{kind.value} free={free:g}",
                                         argmax_within(values, errors, sizes.index(K // 2), sigmas), detail))
    return checks


def check_sweeps(results: Sequence[SweepResult], audit_replications: int = 1000,
                 sigmas: float = 3.0) -> SweepCheckReport:
    """Every post-sweep check over the sweeps of one run."""
    report = SweepCheckReport()
    for result in results:
        report.checks.extend(bound_compliance(result, sigmas))
        report.checks.extend(audit_checks(result, audit_replications))
        report.checks.extend(sandwich_checks(result, sigmas))
    report.checks.extend(monotonicity_checks(results))
    verdict = "PASS" if report.passed else "FAIL"
    logger.info(f"🔍 Sweep checks: {verdict} ({len(report.checks)} checks, {len(report.failures())} failed)")
    return report
