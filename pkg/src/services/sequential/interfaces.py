"""
Base interfaces and domain types for sequential multiple testing.

This module defines the contract every stream model implements, together with
the small value types shared by procedures, calibration and simulation: the
prior class of signal subsets, threshold quadruples, signal configurations,
decision records and error reports.

Stream indices are 0-based throughout the library; user-facing surfaces
convert to 1-based labels.
"""

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum, IntEnum
from fractions import Fraction
from itertools import combinations
from typing import Any, Dict, FrozenSet, Iterable, Iterator, List, Optional, Tuple

import numpy as np

from .errors import ConfigValidationError, PreconditionError


# Guard on exhaustive enumeration of signal configurations
MAX_CONFIGURATIONS = 100_000


class ProcedureKind(Enum):
    """Families of sequential multiple testing procedures."""
    DECENTRALIZED_SPRT = "decentralized_sprt"   # one SPRT per stream
    PROPOSED_ASYNC = "proposed_async"           # gap / gap-intersection rule
    SYNCHRONOUS = "synchronous"                 # one common stopping time


class ErrorType(IntEnum):
    """Familywise error directions."""
    TYPE_I = 1      # false positive: a noise stream declared a signal
    TYPE_II = 2     # false negative: a signal stream declared noise


class ErrorMetric(Enum):
    """Error metrics computed on decision records."""
    FWE1 = "fwe1"
    FWE2 = "fwe2"
    PCE1 = "pce1"
    PCE2 = "pce2"
    FDR1 = "fdr1"
    FDR2 = "fdr2"
    PFDR1 = "pfdr1"
    PFDR2 = "pfdr2"

    @property
    def error_type(self) -> ErrorType:
        return ErrorType.TYPE_I if self.value.endswith("1") else ErrorType.TYPE_II

    @property
    def family(self) -> str:
        return self.value[:-1]


class StreamModel(ABC):
    """Generative contract for a single data stream under simple hypotheses.

    A model draws observations under the null or the alternative and maps an
    observation to its exact one-step log-likelihood ratio (nats). Models are
    immutable and safe to share between replications.
    """

    kind: str = "abstract"

    @abstractmethod
    def sample(self, is_signal: bool, rng: np.random.Generator, size: Optional[int] = None):
        """Draw observations from P^1 (signal) or P^0 (noise)."""
        pass

    @abstractmethod
    def llr_increment(self, observation):
        """Exact one-step log-likelihood ratio log dP^1/dP^0 (vectorized)."""
        pass

    @property
    @abstractmethod
    def kl_alt(self) -> float:
        """I_k: expected increment under the alternative."""
        pass

    @property
    @abstractmethod
    def kl_null(self) -> float:
        """J_k: minus the expected increment under the null."""
        pass

    def kl_numbers(self) -> Tuple[float, float]:
        return (self.kl_alt, self.kl_null)

    def exact_kl_numbers(self) -> Optional[Tuple[Fraction, Fraction]]:
        """Rational KL numbers when they exist, else None."""
        return None

    def describe(self) -> Dict[str, Any]:
        return {"kind": self.kind}


class CompositeModel(ABC):
    """Contract for a one-parameter stream model with composite hypotheses."""

    kind: str = "abstract_composite"

    @property
    @abstractmethod
    def null_space(self) -> Tuple[float, float]:
        pass

    @property
    @abstractmethod
    def alt_space(self) -> Tuple[float, float]:
        pass

    @property
    @abstractmethod
    def theta0_init(self) -> float:
        pass

    @abstractmethod
    def sample(self, theta: float, rng: np.random.Generator, size: Optional[int] = None):
        pass

    @abstractmethod
    def log_likelihood(self, observation, theta):
        """One-observation log-likelihood relative to the dominating measure."""
        pass

    @abstractmethod
    def cumulative_log_likelihood(self, total: float, n: int, theta: float) -> float:
        """l_k(n, theta) from the sufficient statistic."""
        pass

    @abstractmethod
    def sup_log_likelihood(self, total: float, n: int, space: Tuple[float, float]) -> float:
        pass

    @abstractmethod
    def estimate(self, total: float, n: int) -> float:
        """Parameter estimate from the stream's first n observations."""
        pass

    @abstractmethod
    def kl_to_null(self, theta: float) -> float:
        """I_k(theta) for theta in the alternative space."""
        pass

    @abstractmethod
    def kl_to_alt(self, theta: float) -> float:
        """J_k(theta) for theta in the null space."""
        pass


@dataclass(frozen=True)
class SignalConfig:
    """A signal subset A of the K streams."""
    signals: FrozenSet[int]
    K: int

    def __post_init__(self):
        object.__setattr__(self, "signals", frozenset(int(k) for k in self.signals))
        if self.K < 1:
            raise ConfigValidationError(f"Number of streams must be positive, got K={self.K}")
        outside = [k for k in self.signals if k < 0 or k >= self.K]
        if outside:
            raise ConfigValidationError(
                f"Signal streams {sorted(k + 1 for k in outside)} outside 1..{self.K}"
            )

    @classmethod
    def canonical(cls, size: int, K: int) -> "SignalConfig":
        """The representative {1..size} of all configurations of that size."""
        return cls(frozenset(range(size)), K)

    @classmethod
    def from_labels(cls, labels: Iterable[int], K: int) -> "SignalConfig":
        """Build from 1-based stream labels."""
        return cls(frozenset(int(label) - 1 for label in labels), K)

    @property
    def noise(self) -> FrozenSet[int]:
        return frozenset(range(self.K)) - self.signals

    @property
    def size(self) -> int:
        return len(self.signals)

    def is_signal(self, stream: int) -> bool:
        return stream in self.signals

    def signal_mask(self) -> np.ndarray:
        mask = np.zeros(self.K, dtype=bool)
        mask[list(self.signals)] = True
        return mask

    def labels(self) -> List[int]:
        return sorted(k + 1 for k in self.signals)

    @property
    def config_id(self) -> str:
        return "{" + ",".join(str(label) for label in self.labels()) + "}"

    def complement(self) -> "SignalConfig":
        return SignalConfig(self.noise, self.K)

    def check_against(self, prior: "PriorBounds") -> None:
        if self.K != prior.K:
            raise ConfigValidationError(f"Configuration has K={self.K}, prior has K={prior.K}")
        if not prior.admits(self.size):
            raise ConfigValidationError(
                f"Signal configuration {self.config_id} has {self.size} signals, "
                f"outside [l, u] = [{prior.l}, {prior.u}]"
            )


@dataclass(frozen=True)
class PriorBounds:
    """The class of signal subsets with size between l and u."""
    l: int
    u: int
    K: int

    def __post_init__(self):
        issues = []
        if not (0 <= self.l <= self.u <= self.K):
            issues.append(f"need 0 <= l <= u <= K, got l={self.l}, u={self.u}, K={self.K}")
        if self.u <= 0:
            issues.append(f"need u > 0, got u={self.u}")
        if self.l >= self.K:
            issues.append(f"need l < K, got l={self.l}, K={self.K}")
        if issues:
            raise ConfigValidationError(["prior bounds violate 0 <= l <= u <= K, u > 0, l < K: "
                                         + "; ".join(issues)])

    @property
    def known_count(self) -> bool:
        return self.l == self.u

    @property
    def m(self) -> int:
        if not self.known_count:
            raise PreconditionError(f"Number of signals is not known (l={self.l}, u={self.u})")
        return self.l

    @property
    def uninformative(self) -> bool:
        """l = 0 and u = K: every subset is admissible."""
        return self.l == 0 and self.u == self.K

    def admits(self, size: int) -> bool:
        return self.l <= size <= self.u

    def sizes(self) -> range:
        return range(self.l, self.u + 1)

    def count_configurations(self) -> int:
        return sum(math.comb(self.K, s) for s in self.sizes())

    def configurations(self) -> Iterator[SignalConfig]:
        """Every signal subset in the class, ordered by size then lexicographically."""
        if self.count_configurations() > MAX_CONFIGURATIONS:
            raise ConfigValidationError(
                f"Prior class has {self.count_configurations()} configurations, "
                f"more than the {MAX_CONFIGURATIONS} allowed for exhaustive enumeration"
            )
        for size in self.sizes():
            for subset in combinations(range(self.K), size):
                yield SignalConfig(frozenset(subset), self.K)

    def representatives(self) -> List[SignalConfig]:
        """One canonical configuration {1..s} per admissible size s."""
        return [SignalConfig.canonical(size, self.K) for size in self.sizes()]

    def mirrored(self) -> "PriorBounds":
        """(K - u, K - l): the class of complements."""
        return PriorBounds(self.K - self.u, self.K - self.l, self.K)

    def to_dict(self) -> Dict[str, int]:
        return {"l": self.l, "u": self.u, "K": self.K}


@dataclass(frozen=True)
class Thresholds:
    """Positive log-scale stopping levels (a, b, c, d), in nats."""
    a: float
    b: float
    c: float
    d: float

    def __post_init__(self):
        bad = [name for name in ("a", "b", "c", "d")
               if not (math.isfinite(getattr(self, name)) and getattr(self, name) > 0)]
        if bad:
            raise ConfigValidationError(
                "Thresholds must be finite and positive: "
                + ", ".join(f"{name}={getattr(self, name)!r}" for name in bad)
            )

    @classmethod
    def uniform(cls, value: float) -> "Thresholds":
        return cls(value, value, value, value)

    def shifted(self, offset: float) -> "Thresholds":
        """All four levels moved by the same offset."""
        return Thresholds(self.a + offset, self.b + offset, self.c + offset, self.d + offset)

    def minimum(self) -> float:
        return min(self.a, self.b, self.c, self.d)

    def to_dict(self) -> Dict[str, float]:
        return {"a": self.a, "b": self.b, "c": self.c, "d": self.d}


@dataclass(frozen=True)
class ErrorTargets:
    """Familywise error targets (alpha, beta)."""
    alpha: float
    beta: float

    def __post_init__(self):
        for name in ("alpha", "beta"):
            value = getattr(self, name)
            if not (0.0 < value < 1.0):
                raise ConfigValidationError(f"Error target {name} must lie in (0, 1), got {value!r}")

    @property
    def log_alpha(self) -> float:
        return abs(math.log(self.alpha))

    @property
    def log_beta(self) -> float:
        return abs(math.log(self.beta))

    def target(self, error_type: ErrorType) -> float:
        return self.alpha if ErrorType(error_type) is ErrorType.TYPE_I else self.beta


@dataclass
class DecisionRecord:
    """Per-stream stopping times and decisions of one replication.

    ``stop_time`` holds 0 for streams still undecided (partial records only).
    ``error_time``/``error_llr`` capture the LLR vector at the first watched
    error, used by the importance-sampling estimators.
    """
    stop_time: np.ndarray
    decision: np.ndarray
    complete: bool = True
    error_time: Optional[int] = None
    error_llr: Optional[np.ndarray] = None

    @property
    def K(self) -> int:
        return len(self.stop_time)

    @property
    def overall_stop(self) -> int:
        return int(self.stop_time.max()) if len(self.stop_time) else 0

    @property
    def decided_signals(self) -> FrozenSet[int]:
        return frozenset(int(k) for k in np.flatnonzero(self.decision & (self.stop_time > 0)))

    def false_positives(self, config: SignalConfig) -> FrozenSet[int]:
        return self.decided_signals - config.signals

    def false_negatives(self, config: SignalConfig) -> FrozenSet[int]:
        return config.signals - self.decided_signals

    def to_dict(self) -> Dict[str, Any]:
        return {
            "stop_time": [int(t) for t in self.stop_time],
            "decision": [int(d) for d in self.decision],
            "complete": self.complete,
        }


@dataclass
class ErrorReport:
    """Estimated error metric with its Monte Carlo standard error.

    ``value`` is None when the metric is undefined on the batch (pFDR whose
    conditioning event never occurred).
    """
    metric: ErrorMetric
    value: Optional[float]
    std_error: Optional[float]
    replications: int
    configuration: Optional[str] = None
    method: str = "plain"
    capped: bool = False

    @property
    def defined(self) -> bool:
        return self.value is not None

    @property
    def relative_error(self) -> Optional[float]:
        if not self.value or self.std_error is None:
            return None
        return self.std_error / self.value

    def to_dict(self) -> Dict[str, Any]:
        return {
            "metric": self.metric.value,
            "value": self.value,
            "std_error": self.std_error,
            "relative_error": self.relative_error,
            "replications": self.replications,
            "configuration": self.configuration,
            "method": self.method,
            "capped": self.capped,
        }
