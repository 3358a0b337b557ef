"""
Sequential multiple testing procedures for simple hypotheses.

Implements the decentralized parallel SPRT, the proposed asynchronous
procedure (gap rule when the number of signals is known, gap-intersection
rule otherwise) and the synchronous procedure as step-driven state machines.
All streams stay monitored until every decision is made; decided streams keep
feeding the order statistics while their decisions stay frozen.

Boundary attainment counts as crossing. A stream crossing both boundaries at
the same step is declared a signal.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, FrozenSet, Iterable, List, Optional, Sequence

import numpy as np

from .errors import ConfigValidationError, HorizonExhaustedError
from .interfaces import (
    DecisionRecord, ErrorType, PriorBounds, ProcedureKind, SignalConfig,
    StreamModel, Thresholds
)
from .statistics import LlrState

logger = logging.getLogger(__name__)

DEFAULT_HORIZON = 1_000_000
DEFAULT_BLOCK_SIZE = 64

Firing = Dict[int, int]


def _fire(candidates: Sequence[int], values: np.ndarray, upper: float, lower: float,
          strict: bool = False) -> Firing:
    """Decisions for candidates whose statistic leaves (lower, upper)."""
    if len(candidates) == 0:
        return {}
    cand = np.asarray(candidates, dtype=int)
    vals = values[cand]
    if strict:
        up = vals > upper
        down = vals < lower
    else:
        up = vals >= upper
        down = vals <= lower
    fired = {int(k): 0 for k in cand[down & ~up]}
    fired.update({int(k): 1 for k in cand[up]})
    return dict(sorted(fired.items()))


def sprt_step(state: LlrState, thresholds: Thresholds, undecided: Iterable[int]) -> Firing:
    """Parallel SPRT: decision 1 at lambda >= a, decision 0 at lambda <= -b."""
    return _fire(sorted(undecided), state.llr, thresholds.a, -thresholds.b)


def proposed_step(state: LlrState, thresholds: Thresholds, prior: PriorBounds,
                  undecided: Iterable[int]) -> Firing:
    """Gap rule (l = u) or gap-intersection rule (l < u)."""
    if prior.known_count:
        m = prior.l
        upper = state.ordered_value(m + 1) + thresholds.c
        lower = state.ordered_value(m) - thresholds.d
    else:
        upper = min(thresholds.a, state.ordered_value(prior.l + 1) + thresholds.c)
        lower = max(-thresholds.b, state.ordered_value(prior.u) - thresholds.d)
    return _fire(sorted(undecided), state.llr, upper, lower)


def synchronous_step(state: LlrState, thresholds: Thresholds,
                     prior: PriorBounds) -> Optional[FrozenSet[int]]:
    """Common stopping rule; returns the selected signal set when it fires."""
    if prior.known_count:
        m = prior.l
        gap = state.ordered_value(m) - state.ordered_value(m + 1)
        if gap >= max(thresholds.c, thresholds.d):
            return state.top(m)
        return None

    l, u = prior.l, prior.u
    a, b, c, d = thresholds.a, thresholds.b, thresholds.c, thresholds.d
    p = state.positive_count
    tau1 = state.ordered_value(l + 1) <= min(-b, -c + state.ordered_value_extended(l))
    tau2 = bool(np.all((state.llr >= a) | (state.llr <= -b))) and l <= p <= u
    tau3 = state.ordered_value(u) >= max(a, d + state.ordered_value_extended(u + 1))
    if tau1 or tau2 or tau3:
        return state.top(min(max(p, l), u))
    return None


@dataclass(frozen=True)
class RuleSet:
    """The three stopping rules evaluated by a ProcedureRun."""
    sprt: Callable
    proposed: Callable
    synchronous: Callable


SIMPLE_RULES = RuleSet(sprt=sprt_step, proposed=proposed_step, synchronous=synchronous_step)


@dataclass(frozen=True)
class ErrorWatch:
    """Records the first error of one type; optionally ends the replication there."""
    config: SignalConfig
    error_type: ErrorType
    stop_on_error: bool = True

    def is_error(self, stream: int, decision: int) -> bool:
        if ErrorType(self.error_type) is ErrorType.TYPE_I:
            return decision == 1 and stream not in self.config.signals
        return decision == 0 and stream in self.config.signals


class ProcedureRun:
    """Decision bookkeeping for one replication of one procedure.

    Feed it the statistic state after every step via ``observe``; it applies the
    procedure's rule to the still-undecided streams and freezes decisions.
    """

    def __init__(self, kind: ProcedureKind, thresholds: Thresholds, prior: PriorBounds,
                 rules: RuleSet = SIMPLE_RULES, watch: Optional[ErrorWatch] = None):
        self.kind = ProcedureKind(kind)
        self.thresholds = thresholds
        self.prior = prior
        self.rules = rules
        self.watch = watch
        K = prior.K
        self.stop_time = np.zeros(K, dtype=np.int64)
        self.decision = np.zeros(K, dtype=bool)
        self.decided = np.zeros(K, dtype=bool)
        self.error_time: Optional[int] = None
        self.error_llr: Optional[np.ndarray] = None

    @property
    def finished(self) -> bool:
        return bool(self.decided.all())

    @property
    def done(self) -> bool:
        if self.finished:
            return True
        return self.watch is not None and self.watch.stop_on_error and self.error_time is not None

    def undecided(self) -> List[int]:
        return [int(k) for k in np.flatnonzero(~self.decided)]

    def observe(self, state: LlrState) -> Firing:
        if self.finished:
            return {}
        if self.kind is ProcedureKind.SYNCHRONOUS:
            selected = self.rules.synchronous(state, self.thresholds, self.prior)
            if selected is None:
                return {}
            fired = {k: int(k in selected) for k in range(self.prior.K)}
        elif self.kind is ProcedureKind.DECENTRALIZED_SPRT:
            fired = self.rules.sprt(state, self.thresholds, self.undecided())
        else:
            fired = self.rules.proposed(state, self.thresholds, self.prior, self.undecided())

        for stream, decision in fired.items():
            self.stop_time[stream] = state.n
            self.decision[stream] = bool(decision)
            self.decided[stream] = True

        if self.watch is not None and self.error_time is None:
            if any(self.watch.is_error(stream, decision) for stream, decision in fired.items()):
                self.error_time = state.n
                self.error_llr = state.llr.copy()
        return fired

    def record(self) -> DecisionRecord:
        return DecisionRecord(
            stop_time=self.stop_time.copy(),
            decision=self.decision.copy(),
            complete=self.finished,
            error_time=self.error_time,
            error_llr=None if self.error_llr is None else self.error_llr.copy(),
        )

    def copy(self) -> "ProcedureRun":
        clone = ProcedureRun(self.kind, self.thresholds, self.prior, self.rules, self.watch)
        clone.stop_time = self.stop_time.copy()
        clone.decision = self.decision.copy()
        clone.decided = self.decided.copy()
        clone.error_time = self.error_time
        clone.error_llr = None if self.error_llr is None else self.error_llr.copy()
        return clone


class PathSampler:
    """Draws LLR increments for all K streams in fixed-size blocks.

    Block boundaries do not depend on the procedure, so the same generator
    state yields the same observation path for every procedure.
    """

    def __init__(self, models: Sequence[StreamModel], sampling_signals: FrozenSet[int],
                 rng: np.random.Generator, block_size: int = DEFAULT_BLOCK_SIZE):
        self.models = list(models)
        self.sampling_signals = sampling_signals
        self.rng = rng
        self.block_size = block_size
        self._block: Optional[np.ndarray] = None
        self._position = 0

    def _refill(self) -> None:
        K = len(self.models)
        block = np.empty((self.block_size, K))
        for k, model in enumerate(self.models):
            observations = model.sample(k in self.sampling_signals, self.rng, size=self.block_size)
            block[:, k] = model.llr_increment(observations)
        self._block = block
        self._position = 0

    def next_increments(self) -> np.ndarray:
        if self._block is None or self._position >= self.block_size:
            self._refill()
        row = self._block[self._position]
        self._position += 1
        return row


def _check_inputs(models: Sequence, config: SignalConfig, prior: PriorBounds, horizon: int) -> None:
    issues = []
    if horizon < 1:
        issues.append(f"horizon must be at least 1, got {horizon}")
    if len(models) != prior.K:
        issues.append(f"{len(models)} stream models for K={prior.K} streams")
    if config.K != prior.K:
        issues.append(f"signal configuration has K={config.K}, prior has K={prior.K}")
    if issues:
        raise ConfigValidationError(issues)


def run_replication(kind: ProcedureKind, models: Sequence[StreamModel], config: SignalConfig,
                    thresholds: Thresholds, prior: PriorBounds, rng: np.random.Generator,
                    horizon: int = DEFAULT_HORIZON,
                    sampling: Optional[FrozenSet[int]] = None,
                    watch: Optional[ErrorWatch] = None) -> DecisionRecord:
    """Step all streams until every stream is decided.

    ``sampling`` overrides which streams are drawn from their alternative
    (importance sampling); by default the true configuration is used.

    Raises:
        HorizonExhaustedError: carrying the partial record when the horizon
            is reached first.
    """
    _check_inputs(models, config, prior, horizon)
    sampling_signals = config.signals if sampling is None else frozenset(sampling)
    run = ProcedureRun(kind, thresholds, prior, watch=watch)
    sampler = PathSampler(models, sampling_signals, rng)
    state = LlrState.initial(prior.K)

    while not run.done:
        if state.n >= horizon:
            raise HorizonExhaustedError(horizon, run.record())
        state = state.advance(sampler.next_increments())
        run.observe(state)
    return run.record()
