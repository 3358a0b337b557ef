"""
Cumulative LLR statistics with their order statistics and positive count.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigValidationError, NumericalError, PreconditionError


def descending_order(values: np.ndarray) -> np.ndarray:
    """Indices sorting values descending; ties keep ascending stream index."""
    return np.argsort(-values, kind="stable")


@dataclass
class LlrState:
    """Per-stream cumulative LLRs at time n.

    ``order[r]`` is the (0-based) stream holding the (r+1)-th largest value.
    """
    n: int
    llr: np.ndarray
    order: np.ndarray
    positive_count: int

    @classmethod
    def initial(cls, K: int) -> "LlrState":
        return cls(n=0, llr=np.zeros(K), order=np.arange(K), positive_count=0)

    @classmethod
    def from_values(cls, values, n: int = 0) -> "LlrState":
        llr = np.asarray(values, dtype=float).copy()
        if not np.all(np.isfinite(llr)):
            bad = int(np.flatnonzero(~np.isfinite(llr))[0])
            raise NumericalError("Non-finite log-likelihood ratio", stream=bad)
        return cls(n=n, llr=llr, order=descending_order(llr), positive_count=int(np.count_nonzero(llr > 0)))

    @property
    def K(self) -> int:
        return len(self.llr)

    def advance(self, increments) -> "LlrState":
        increments = np.asarray(increments, dtype=float)
        if increments.shape != self.llr.shape:
            raise ConfigValidationError(
                f"Expected {self.K} increments, got shape {increments.shape}"
            )
        return LlrState.from_values(self.llr + increments, n=self.n + 1)

    def ordered_value(self, rank: int) -> float:
        """lambda_(rank)(n) for rank in 1..K."""
        if not 1 <= rank <= self.K:
            raise PreconditionError(f"Rank {rank} outside 1..{self.K}")
        return float(self.llr[self.order[rank - 1]])

    def ordered_value_extended(self, rank: int) -> float:
        """As ordered_value, with lambda_(0) = +inf and lambda_(K+1) = -inf."""
        if rank == 0:
            return math.inf
        if rank == self.K + 1:
            return -math.inf
        return self.ordered_value(rank)

    def ordered_values(self) -> np.ndarray:
        return self.llr[self.order]

    def top(self, count: int) -> frozenset:
        """The count streams with the largest LLRs (index tie-break)."""
        return frozenset(int(k) for k in self.order[:count])


def advance(state: LlrState, increments) -> LlrState:
    return state.advance(increments)


def ordered_value(state: LlrState, rank: int) -> float:
    return state.ordered_value(rank)
