"""
Stream models - concrete implementations of the StreamModel contract.

Ships the unit-variance Gaussian mean-shift model, the Bernoulli model used by
the exact enumeration oracle, and the one-parameter Gaussian model with
interval-valued null and alternative spaces used by the composite procedures.
"""

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, Optional, Tuple

import numpy as np

from .errors import ConfigValidationError
from .interfaces import CompositeModel, StreamModel


def _as_output(values, scalar_input: bool):
    if scalar_input:
        return float(values)
    return values


@dataclass(frozen=True)
class GaussianMeanModel(StreamModel):
    """N(0, 1) under the null, N(mu, 1) under the alternative."""
    mu: float
    kind = "gaussian_mean"

    def __post_init__(self):
        if not (math.isfinite(self.mu) and self.mu > 0):
            raise ConfigValidationError(f"Gaussian mean mu must be positive, got {self.mu!r}")

    def sample(self, is_signal: bool, rng: np.random.Generator, size: Optional[int] = None):
        mean = self.mu if is_signal else 0.0
        draws = rng.standard_normal(size)
        return draws + mean

    def llr_increment(self, observation):
        x = np.asarray(observation, dtype=float)
        values = self.mu * (x - self.mu / 2.0)
        return _as_output(values, x.ndim == 0)

    @property
    def kl_alt(self) -> float:
        return self.mu ** 2 / 2.0

    @property
    def kl_null(self) -> float:
        return self.mu ** 2 / 2.0

    def exact_kl_numbers(self) -> Tuple[Fraction, Fraction]:
        # repr gives the shortest decimal that round-trips, so 0.25 -> 1/4
        mu = Fraction(repr(float(self.mu)))
        kl = mu * mu / 2
        return (kl, kl)

    def describe(self) -> Dict[str, Any]:
        return {"kind": self.kind, "mu": self.mu}


@dataclass(frozen=True)
class BernoulliModel(StreamModel):
    """Bernoulli(p0) under the null, Bernoulli(p1) under the alternative."""
    p0: float
    p1: float
    kind = "bernoulli"
    log_up: float = field(init=False, repr=False)
    log_down: float = field(init=False, repr=False)

    def __post_init__(self):
        issues = []
        for name in ("p0", "p1"):
            value = getattr(self, name)
            if not (0.0 < value < 1.0):
                issues.append(f"{name} must lie in (0, 1), got {value!r}")
        if not issues and self.p0 == self.p1:
            issues.append(f"p1 must differ from p0, both are {self.p0!r}")
        if issues:
            raise ConfigValidationError(issues)
        object.__setattr__(self, "log_up", math.log(self.p1 / self.p0))
        object.__setattr__(self, "log_down", math.log((1.0 - self.p1) / (1.0 - self.p0)))

    def success_probability(self, is_signal: bool) -> float:
        return self.p1 if is_signal else self.p0

    def outcome_probabilities(self, is_signal: bool) -> Tuple[Tuple[float, float], Tuple[float, float]]:
        """((observation, probability), ...) over the two outcomes, failure first."""
        p = self.success_probability(is_signal)
        return ((0.0, 1.0 - p), (1.0, p))

    def sample(self, is_signal: bool, rng: np.random.Generator, size: Optional[int] = None):
        p = self.success_probability(is_signal)
        draws = rng.random(size) < p
        if size is None:
            return float(draws)
        return draws.astype(float)

    def llr_increment(self, observation):
        x = np.asarray(observation, dtype=float)
        # Exact table lookup keeps boundary hits like log 4 >= log 4 reproducible
        values = np.where(x > 0.5, self.log_up, self.log_down)
        return _as_output(values, x.ndim == 0)

    @property
    def kl_alt(self) -> float:
        p0, p1 = self.p0, self.p1
        return p1 * math.log(p1 / p0) + (1.0 - p1) * math.log((1.0 - p1) / (1.0 - p0))

    @property
    def kl_null(self) -> float:
        p0, p1 = self.p0, self.p1
        return p0 * math.log(p0 / p1) + (1.0 - p0) * math.log((1.0 - p0) / (1.0 - p1))

    def describe(self) -> Dict[str, Any]:
        return {"kind": self.kind, "p0": self.p0, "p1": self.p1}


# Clamped MLE, or a constant plug-in at the initial value
ESTIMATORS = ("mle", "fixed")


@dataclass(frozen=True)
class GaussianCompositeModel(CompositeModel):
    """Unit-variance Gaussian with unknown mean in closed intervals.

    The log-likelihood is taken relative to N(0, 1), so a single observation
    contributes theta * x - theta**2 / 2 and l_k(n, theta) = theta * S_n - n theta**2 / 2.
    Suprema over an interval and the estimator are closed-form: the sample mean
    clamped to the interval.
    """
    null_low: float
    null_high: float
    alt_low: float
    alt_high: float
    init: Optional[float] = None
    estimator: str = "mle"
    kind = "composite_gaussian"

    def __post_init__(self):
        issues = []
        values = (self.null_low, self.null_high, self.alt_low, self.alt_high)
        if not all(math.isfinite(v) for v in values):
            issues.append("parameter interval endpoints must be finite")
        else:
            if self.null_low > self.null_high:
                issues.append(f"null interval [{self.null_low}, {self.null_high}] is empty")
            if self.alt_low > self.alt_high:
                issues.append(f"alternative interval [{self.alt_low}, {self.alt_high}] is empty")
            if not (self.null_high < self.alt_low or self.alt_high < self.null_low):
                issues.append("null and alternative intervals must be disjoint")
        if self.estimator not in ESTIMATORS:
            issues.append(f"unknown estimator '{self.estimator}', expected one of {list(ESTIMATORS)}")
        if self.init is not None and not (self.hull[0] <= self.init <= self.hull[1]):
            issues.append(f"initial estimate {self.init} outside the parameter space {self.hull}")
        if issues:
            raise ConfigValidationError(issues)

    @property
    def null_space(self) -> Tuple[float, float]:
        return (self.null_low, self.null_high)

    @property
    def alt_space(self) -> Tuple[float, float]:
        return (self.alt_low, self.alt_high)

    @property
    def hull(self) -> Tuple[float, float]:
        return (min(self.null_low, self.alt_low), max(self.null_high, self.alt_high))

    @property
    def theta0_init(self) -> float:
        if self.init is not None:
            return self.init
        low, high = self.hull
        return (low + high) / 2.0

    def in_null(self, theta: float) -> bool:
        return self.null_low <= theta <= self.null_high

    def in_alt(self, theta: float) -> bool:
        return self.alt_low <= theta <= self.alt_high

    def sample(self, theta: float, rng: np.random.Generator, size: Optional[int] = None):
        return rng.standard_normal(size) + theta

    def log_likelihood(self, observation, theta):
        return theta * observation - theta * theta / 2.0

    def cumulative_log_likelihood(self, total: float, n: int, theta: float) -> float:
        return theta * total - n * theta * theta / 2.0

    def _clamped_mean(self, total: float, n: int, space: Tuple[float, float]) -> float:
        low, high = space
        return min(max(total / n, low), high)

    def sup_log_likelihood(self, total: float, n: int, space: Tuple[float, float]) -> float:
        if n == 0:
            return 0.0
        theta = self._clamped_mean(total, n, space)
        return self.cumulative_log_likelihood(total, n, theta)

    def estimate(self, total: float, n: int) -> float:
        """Maximum likelihood over the union of both spaces.

        The "fixed" estimator always returns the initial value instead.
        """
        if n == 0 or self.estimator == "fixed":
            return self.theta0_init
        theta_null = self._clamped_mean(total, n, self.null_space)
        theta_alt = self._clamped_mean(total, n, self.alt_space)
        if self.cumulative_log_likelihood(total, n, theta_alt) > self.cumulative_log_likelihood(total, n, theta_null):
            return theta_alt
        return theta_null

    def kl_to_null(self, theta: float) -> float:
        nearest = min(max(theta, self.null_low), self.null_high)
        return (theta - nearest) ** 2 / 2.0

    def kl_to_alt(self, theta: float) -> float:
        nearest = min(max(theta, self.alt_low), self.alt_high)
        return (theta - nearest) ** 2 / 2.0

    def parameter_grid(self, space: str, points: int) -> np.ndarray:
        low, high = self.null_space if space == "null" else self.alt_space
        return np.linspace(low, high, points)

    def describe(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "null": [self.null_low, self.null_high],
            "alt": [self.alt_low, self.alt_high],
            "theta0_init": self.theta0_init,
            "estimator": self.estimator,
        }


def sample_step(model: StreamModel, is_signal: bool, rng: np.random.Generator) -> float:
    """Draw one observation from P^1 (signal) or P^0 (noise)."""
    return float(model.sample(is_signal, rng))


def llr_increment(model: StreamModel, observation) -> float:
    return model.llr_increment(observation)


def kl_numbers(model: StreamModel) -> Tuple[float, float]:
    return model.kl_numbers()
