"""
Theory layer: error metrics on decision records, KL aggregates, first-order
optimal decision times, asymptotic lower bounds and relative efficiencies.

KL numbers may be floats or Fractions. When every stream model exposes
rational KL numbers the whole computation stays in exact arithmetic, which is
what the ARE tables rely on.
"""

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from typing import Dict, List, Optional, Sequence, Tuple, Union

from .errors import PreconditionError
from .interfaces import (
    DecisionRecord, ErrorMetric, ErrorReport, ErrorTargets, ErrorType,
    PriorBounds, SignalConfig, StreamModel
)
from .replication_pool import mean_and_std_error

logger = logging.getLogger(__name__)

Number = Union[float, Fraction]
KlPair = Tuple[Number, Number]

INFINITY = math.inf


def kl_table(models: Sequence[StreamModel], exact: bool = True) -> List[KlPair]:
    """(I_k, J_k) per stream; rational when every model supports it."""
    if exact:
        pairs = [model.exact_kl_numbers() for model in models]
        if all(pair is not None for pair in pairs):
            return [tuple(pair) for pair in pairs]
    return [model.kl_numbers() for model in models]


def _is_exact(kls: Sequence[KlPair]) -> bool:
    return all(isinstance(I, Fraction) and isinstance(J, Fraction) for I, J in kls)


def _inverse(value: Number) -> Number:
    if value == INFINITY:
        return 0
    return 1 / value


def _plus_if(base: Number, term: Number, active: bool) -> Number:
    # Avoids inf * 0 when the indicator is off
    return base + term if active else base


@dataclass(frozen=True)
class KlAggregates:
    """Smallest signal-side and noise-side KL numbers under a configuration.

    An empty side has minimum +inf.
    """
    I_min: Number
    J_min: Number

    @classmethod
    def of(cls, config: SignalConfig, kls: Sequence[KlPair]) -> "KlAggregates":
        if len(kls) != config.K:
            raise PreconditionError(f"{len(kls)} KL pairs for K={config.K} streams")
        signal_side = [kls[i][0] for i in sorted(config.signals)]
        noise_side = [kls[j][1] for j in sorted(config.noise)]
        return cls(
            I_min=min(signal_side) if signal_side else INFINITY,
            J_min=min(noise_side) if noise_side else INFINITY,
        )


# ---------------------------------------------------------------------------
# Error metrics
# ---------------------------------------------------------------------------

def _replication_statistic(record: DecisionRecord, config: SignalConfig,
                           metric: ErrorMetric) -> Optional[float]:
    """Per-replication value of a metric; None when outside a conditioning event."""
    K = config.K
    discovered = record.decided_signals
    false_pos = len(discovered - config.signals)
    false_neg = len(config.signals - discovered)
    rejected = len(discovered)
    accepted = K - rejected

    if metric is ErrorMetric.FWE1:
        return float(false_pos > 0)
    if metric is ErrorMetric.FWE2:
        return float(false_neg > 0)
    if metric is ErrorMetric.PCE1:
        return false_pos / K
    if metric is ErrorMetric.PCE2:
        return false_neg / K
    if metric is ErrorMetric.FDR1:
        return false_pos / rejected if rejected else 0.0
    if metric is ErrorMetric.FDR2:
        return false_neg / accepted if accepted else 0.0
    if metric is ErrorMetric.PFDR1:
        return false_pos / rejected if rejected else None
    if metric is ErrorMetric.PFDR2:
        return false_neg / accepted if accepted else None
    raise PreconditionError(f"Unknown error metric {metric!r}")


def error_statistic(record: DecisionRecord, config: SignalConfig, metric: ErrorMetric) -> Optional[float]:
    return _replication_statistic(record, config, ErrorMetric(metric))


def empirical_error(records: Sequence[DecisionRecord], config: SignalConfig,
                    metric: ErrorMetric) -> ErrorReport:
    """Sample mean of the per-replication metric statistic over complete records.

    pFDR averages only over replications inside its conditioning event and is
    reported undefined (value None) when that event never occurs.
    """
    metric = ErrorMetric(metric)
    if not records:
        raise PreconditionError("No decision records to evaluate")
    incomplete = sum(1 for record in records if not record.complete)
    if incomplete:
        raise PreconditionError(f"{incomplete} of {len(records)} decision records are incomplete")

    values = [_replication_statistic(record, config, metric) for record in records]
    kept = [value for value in values if value is not None]
    if not kept:
        return ErrorReport(metric, None, None, len(records), configuration=config.config_id)
    estimate, std_error = mean_and_std_error(kept)
    return ErrorReport(metric, estimate, std_error, len(records), configuration=config.config_id)


def gem_sandwich_check(metric: ErrorMetric, prior: PriorBounds) -> Tuple[Number, Number]:
    """Constants (C1, C2) with C2 * FWE <= GEM <= C1 * FWE over the prior class."""
    metric = ErrorMetric(metric)
    K = prior.K
    family = metric.family
    if family == "fwe":
        return (Fraction(1), Fraction(1))
    if family == "pce":
        return (Fraction(max(prior.u, K - prior.l), K), Fraction(1, K))
    if family == "fdr":
        return (Fraction(1), Fraction(1, K))
    if family == "pfdr":
        if not (0 < prior.l and prior.u < K):
            raise PreconditionError(
                f"pFDR constants need 0 < l <= u < K, got l={prior.l}, u={prior.u}, K={K}"
            )
        return (Fraction(2), Fraction(1, K))
    raise PreconditionError(f"No sandwich constants for {metric.value}")


@dataclass
class SandwichVerdict:
    """Outcome of one sandwich comparison on an empirical batch."""
    metric: ErrorMetric
    gem: float
    fwe: float
    lower: float
    upper: Optional[float]
    slack: float
    holds: bool


def check_sandwich(records: Sequence[DecisionRecord], config: SignalConfig, prior: PriorBounds,
                   metric: ErrorMetric, sigmas: float = 3.0, check_upper: bool = True) -> SandwichVerdict:
    """Compare an empirical GEM against C2*FWE and C1*FWE of the same type.

    The slack is ``sigmas`` combined standard errors of the two estimates.
    """
    metric = ErrorMetric(metric)
    C1, C2 = gem_sandwich_check(metric, prior)
    fwe_metric = ErrorMetric.FWE1 if metric.error_type is ErrorType.TYPE_I else ErrorMetric.FWE2
    gem = empirical_error(records, config, metric)
    fwe = empirical_error(records, config, fwe_metric)
    gem_value = 0.0 if gem.value is None else gem.value
    gem_se = gem.std_error or 0.0
    slack = sigmas * math.hypot(gem_se, fwe.std_error or 0.0)

    lower = float(C2) * fwe.value
    upper = float(C1) * fwe.value if check_upper else None
    holds = gem_value + slack >= lower
    if check_upper:
        holds = holds and gem_value <= upper + slack
    if not holds:
        logger.warning(f"⚠️ Sandwich violated for {metric.value} on {config.config_id}: "
                       f"GEM={gem_value:.4g}, FWE={fwe.value:.4g}")
    return SandwichVerdict(metric, gem_value, fwe.value, lower, upper, slack, holds)


# ---------------------------------------------------------------------------
# First-order optimal decision times
# ---------------------------------------------------------------------------

def _signal_rate(stream: int, config: SignalConfig, prior: PriorBounds, kls: Sequence[KlPair],
                 agg: KlAggregates) -> Number:
    return _plus_if(kls[stream][0], agg.J_min, config.size == prior.l)


def _noise_rate(stream: int, config: SignalConfig, prior: PriorBounds, kls: Sequence[KlPair],
                agg: KlAggregates) -> Number:
    return _plus_if(kls[stream][1], agg.I_min, config.size == prior.u)


def optimal_time_first_order(stream: int, config: SignalConfig, prior: PriorBounds,
                             targets: ErrorTargets, kls: Sequence[KlPair]) -> float:
    """|log alpha| / (I_i + J_A 1{|A|=l}) for a signal, mirrored for noise."""
    agg = KlAggregates.of(config, kls)
    if config.is_signal(stream):
        return targets.log_alpha / float(_signal_rate(stream, config, prior, kls, agg))
    return targets.log_beta / float(_noise_rate(stream, config, prior, kls, agg))


def synchronous_optimal_time(config: SignalConfig, prior: PriorBounds, targets: ErrorTargets,
                             kls: Sequence[KlPair]) -> float:
    """Common stopping time optimum: the slower of the two error sides."""
    agg = KlAggregates.of(config, kls)
    signal_side = _plus_if(agg.I_min, agg.J_min, config.size == prior.l)
    noise_side = _plus_if(agg.J_min, agg.I_min, config.size == prior.u)
    return max(targets.log_alpha * float(_inverse(signal_side)),
               targets.log_beta * float(_inverse(noise_side)))


# ---------------------------------------------------------------------------
# Lower-bound exponents
# ---------------------------------------------------------------------------

def lower_bound_exponent(config: SignalConfig, competitor: SignalConfig, kls: Sequence[KlPair]) -> Number:
    """Sum of I_k over A minus C plus sum of J_k over C minus A."""
    missed = config.signals - competitor.signals
    added = competitor.signals - config.signals
    return sum((kls[k][0] for k in sorted(missed)), 0) + sum((kls[k][1] for k in sorted(added)), 0)


def min_lower_bound_exponent(stream: int, config: SignalConfig, prior: PriorBounds,
                             kls: Sequence[KlPair]) -> Number:
    """Minimum exponent over competitors in the prior class that flip ``stream``.

    For a signal stream the competitors exclude it; for a noise stream they
    include it. Exhaustive over the prior class.
    """
    best: Optional[Number] = None
    want_member = not config.is_signal(stream)
    for size in prior.sizes():
        for subset in combinations(range(prior.K), size):
            if (stream in subset) != want_member:
                continue
            value = lower_bound_exponent(config, SignalConfig(frozenset(subset), prior.K), kls)
            if best is None or value < best:
                best = value
    if best is None:
        raise PreconditionError(f"No competitor in the prior class flips stream {stream + 1}")
    return best


# ---------------------------------------------------------------------------
# Asymptotic relative efficiencies
# ---------------------------------------------------------------------------

def are_decentralized(stream: int, config: SignalConfig, prior: PriorBounds,
                      kls: Sequence[KlPair]) -> Number:
    """Efficiency of the best decentralized procedure in one stream."""
    agg = KlAggregates.of(config, kls)
    I, J = kls[stream]
    if config.is_signal(stream):
        return I / (I + agg.J_min) if config.size == prior.l else _one(kls)
    return J / (J + agg.I_min) if config.size == prior.u else _one(kls)


def _one(kls: Sequence[KlPair]) -> Number:
    return Fraction(1) if _is_exact(kls) else 1.0


def _zero(kls: Sequence[KlPair]) -> Number:
    return Fraction(0) if _is_exact(kls) else 0.0


def _as_number(value: float, kls: Sequence[KlPair]) -> Number:
    if not _is_exact(kls):
        return float(value)
    if isinstance(value, (int, Fraction)):
        return Fraction(value)
    return Fraction(repr(float(value)))


def are_synchronous(stream: int, config: SignalConfig, prior: PriorBounds, kls: Sequence[KlPair],
                    r: float = 1, regime: str = "ratio") -> Number:
    """Efficiency of the best synchronous procedure in one stream.

    ``r`` is the limiting ratio |log alpha| / |log beta|. ``regime`` selects the
    limits: "ratio" (finite r), "alpha_slower" (|log alpha| << |log beta|) or
    "alpha_faster" (|log alpha| >> |log beta|).
    """
    agg = KlAggregates.of(config, kls)
    at_lower = config.size == prior.l
    at_upper = config.size == prior.u
    signal_side = _plus_if(agg.I_min, agg.J_min, at_lower)
    noise_side = _plus_if(agg.J_min, agg.I_min, at_upper)
    is_signal = config.is_signal(stream)
    own = _signal_rate(stream, config, prior, kls, agg) if is_signal else _noise_rate(stream, config, prior, kls, agg)

    if regime == "alpha_slower":
        return _zero(kls) if is_signal else noise_side / own
    if regime == "alpha_faster":
        return signal_side / own if is_signal else _zero(kls)
    if regime != "ratio":
        raise PreconditionError(f"Unknown regime '{regime}', expected ratio, alpha_slower or alpha_faster")
    if not r > 0:
        raise PreconditionError(f"Rate ratio r must be positive, got {r!r}")

    r = _as_number(r, kls)
    slowest = max(r * _inverse(signal_side), _inverse(noise_side))
    mine = r * _inverse(own) if is_signal else _inverse(own)
    return mine / slowest


def homogeneous_are_synchronous(is_signal: bool, size: int, prior: PriorBounds, I: Number, J: Number) -> Number:
    """Closed form for homogeneous streams with |log alpha| ~ |log beta|."""
    one = Fraction(1) if isinstance(I, Fraction) and isinstance(J, Fraction) else 1.0
    if prior.known_count:
        return one
    if is_signal:
        if size == prior.l:
            return J / (I + J)
        if size == prior.u:
            return one
        return min(I, J) / I
    if size == prior.u:
        return I / (I + J)
    if size == prior.l:
        return one
    return min(I, J) / J


@dataclass
class AreTable:
    """ARE values for a list of configurations (rows) over all streams (columns)."""
    kind: str
    prior_label: str
    configs: List[SignalConfig]
    values: List[List[Number]]
    r: Number = 1

    def as_rows(self) -> List[Dict[str, str]]:
        rows = []
        for config, row in zip(self.configs, self.values):
            entry = {"configuration": config.config_id}
            for k, value in enumerate(row):
                entry[f"stream_{k + 1}"] = format_number(value)
            rows.append(entry)
        return rows


def format_number(value: Number) -> str:
    """Rationals as p/q (integers bare), floats via repr."""
    if isinstance(value, Fraction):
        return str(value.numerator) if value.denominator == 1 else f"{value.numerator}/{value.denominator}"
    return repr(float(value))


def are_table(configs: Sequence[SignalConfig], kls: Sequence[KlPair], kind: str,
              prior: Optional[PriorBounds] = None, r: float = 1) -> AreTable:
    """ARE' ("decentralized") or ARE'' ("synchronous") over configurations.

    With ``prior`` None each row uses the known-count class l = u = |A|.
    """
    values = []
    for config in configs:
        row_prior = prior if prior is not None else PriorBounds(config.size, config.size, config.K)
        config.check_against(row_prior)
        if kind == "decentralized":
            row = [are_decentralized(k, config, row_prior, kls) for k in range(config.K)]
        elif kind == "synchronous":
            row = [are_synchronous(k, config, row_prior, kls, r=r) for k in range(config.K)]
        else:
            raise PreconditionError(f"Unknown ARE kind '{kind}', expected decentralized or synchronous")
        values.append(row)
    label = "known" if prior is None else f"l={prior.l},u={prior.u}"
    logger.info(f"📐 ARE {kind} table for {len(configs)} configurations ({label})")
    return AreTable(kind, label, list(configs), values, r)


def theory_slope(stream: int, config: SignalConfig, prior: PriorBounds, kls: Sequence[KlPair],
                 kind: str = "proposed") -> float:
    """Expected decision time per nat of |log error| to first order.

    ``kind`` is "proposed", "decentralized" or "synchronous".
    """
    agg = KlAggregates.of(config, kls)
    is_signal = config.is_signal(stream)
    if kind == "decentralized":
        rate = kls[stream][0] if is_signal else kls[stream][1]
    elif kind == "proposed":
        rate = _signal_rate(stream, config, prior, kls, agg) if is_signal else _noise_rate(stream, config, prior, kls, agg)
    elif kind == "synchronous":
        signal_side = _plus_if(agg.I_min, agg.J_min, config.size == prior.l)
        noise_side = _plus_if(agg.J_min, agg.I_min, config.size == prior.u)
        return float(max(_inverse(signal_side), _inverse(noise_side)))
    else:
        raise PreconditionError(f"Unknown procedure kind '{kind}' for slopes")
    return float(_inverse(rate))
