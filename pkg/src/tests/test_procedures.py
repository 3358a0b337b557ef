"""
Tests for the stopping rules and the replication driver
"""

import math

import numpy as np
import pytest

from src.services.sequential.errors import ConfigValidationError, HorizonExhaustedError
from src.services.sequential.interfaces import (
    ErrorType, PriorBounds, ProcedureKind, SignalConfig, Thresholds
)
from src.services.sequential.procedures import (
    ErrorWatch, PathSampler, ProcedureRun, proposed_step, run_replication, sprt_step,
    synchronous_step
)
from src.services.sequential.replication_pool import replication_rng
from src.services.sequential.statistics import LlrState
from src.services.sequential.stream_models import BernoulliModel, GaussianMeanModel

LOG4 = math.log(4.0)


class _ScriptedModel(BernoulliModel):
    """Bernoulli model whose draws always succeed for signals and fail for noise."""

    def sample(self, is_signal, rng, size=None):
        value = 1.0 if is_signal else 0.0
        if size is None:
            return value
        return np.full(size, value)


class TestSprtStep:
    """Test cases for the decentralized SPRT rule"""

    def test_boundary_attainment_fires(self):
        """Test that reaching a or -b exactly stops the stream"""
        state = LlrState.from_values([2.0, -3.0, 0.5])
        fired = sprt_step(state, Thresholds(2.0, 3.0, 1.0, 1.0), [0, 1, 2])
        assert fired == {0: 1, 1: 0}

    def test_only_undecided_streams(self):
        """Test that decided streams are not re-evaluated"""
        state = LlrState.from_values([5.0, -5.0])
        assert sprt_step(state, Thresholds.uniform(1.0), [1]) == {1: 0}


class TestProposedStep:
    """Test cases for the gap and gap-intersection rules"""

    def test_gap_rule_known_count(self):
        """Test upper = lambda_(m+1) + c and lower = lambda_(m) - d"""
        state = LlrState.from_values([3.0, 0.5, -1.0])
        prior = PriorBounds(1, 1, 3)
        fired = proposed_step(state, Thresholds(9.0, 9.0, 2.0, 2.0), prior, [0, 1, 2])
        # upper = 0.5 + 2 = 2.5, lower = 3.0 - 2 = 1.0
        assert fired == {0: 1, 1: 0, 2: 0}

    def test_gap_rule_waits_for_separation(self):
        """Test that a small gap only decides streams past the lower boundary"""
        state = LlrState.from_values([1.0, 0.5, -1.0])
        fired = proposed_step(state, Thresholds.uniform(2.0), PriorBounds(1, 1, 3), [0, 1, 2])
        # upper = 0.5 + 2 = 2.5, lower = 1.0 - 2 = -1.0
        assert fired == {2: 0}

    def test_gap_intersection_uses_sprt_bounds(self):
        """Test min(a, ...) and max(-b, ...) with an uninformative prior"""
        state = LlrState.from_values([2.0, -2.0, 0.0])
        prior = PriorBounds(0, 3, 3)
        fired = proposed_step(state, Thresholds(2.0, 2.0, 50.0, 50.0), prior, [0, 1, 2])
        assert fired == {0: 1, 1: 0}

    def test_gap_intersection_reduces_to_sprt(self):
        """Test that l = 0 and u = K give the SPRT decisions for large c and d"""
        rng = np.random.default_rng(2)
        prior = PriorBounds(0, 4, 4)
        thresholds = Thresholds(1.5, 1.5, 1e6, 1e6)
        for _ in range(100):
            state = LlrState.from_values(rng.normal(scale=2.0, size=4))
            assert proposed_step(state, thresholds, prior, range(4)) == sprt_step(state, thresholds, range(4))

    def test_gap_intersection_gap_side(self):
        """Test that the ordered-value term can trigger before the SPRT bound"""
        # l = 1: upper = min(10, lambda_(2) + 1) = 1.0
        state = LlrState.from_values([1.0, 0.0, -0.5])
        prior = PriorBounds(1, 2, 3)
        fired = proposed_step(state, Thresholds(10.0, 10.0, 1.0, 10.0), prior, [0, 1, 2])
        assert fired == {0: 1}


class TestSynchronousStep:
    """Test cases for the synchronous procedure"""

    def test_known_count_gap(self):
        """Test that the top m streams are selected once the gap reaches max(c, d)"""
        prior = PriorBounds(2, 2, 4)
        thresholds = Thresholds(1.0, 1.0, 2.0, 3.0)
        assert synchronous_step(LlrState.from_values([4.0, 3.5, 1.0, 0.0]), thresholds, prior) is None
        selected = synchronous_step(LlrState.from_values([4.0, 3.5, 0.5, 0.0]), thresholds, prior)
        assert selected == frozenset({0, 1})

    def test_all_streams_outside_band(self):
        """Test the rule where every statistic has left (-b, a)"""
        prior = PriorBounds(1, 2, 3)
        thresholds = Thresholds(1.0, 1.0, 100.0, 100.0)
        selected = synchronous_step(LlrState.from_values([1.0, -2.0, -1.0]), thresholds, prior)
        assert selected == frozenset({0})

    def test_positive_count_outside_bounds(self):
        """Test that p > u blocks the all-outside rule"""
        prior = PriorBounds(0, 1, 3)
        thresholds = Thresholds(1.0, 1.0, 100.0, 100.0)
        assert synchronous_step(LlrState.from_values([2.0, 2.0, -2.0]), thresholds, prior) is None

    def test_lower_bound_rule_selects_l(self):
        """Test that the lambda_(l+1) rule declares exactly the top l streams"""
        prior = PriorBounds(1, 3, 3)
        thresholds = Thresholds(100.0, 1.0, 1.0, 100.0)
        selected = synchronous_step(LlrState.from_values([0.5, -2.0, -3.0]), thresholds, prior)
        assert selected == frozenset({0})


class TestProcedureRun:
    """Test cases for decision bookkeeping"""

    def test_decisions_freeze(self):
        """Test that a decided stream keeps its time and decision"""
        prior = PriorBounds(0, 2, 2)
        run = ProcedureRun(ProcedureKind.DECENTRALIZED_SPRT, Thresholds.uniform(1.0), prior)
        run.observe(LlrState.from_values([1.5, 0.0], n=1))
        run.observe(LlrState.from_values([-1.5, 0.0], n=2))
        assert run.stop_time[0] == 1
        assert bool(run.decision[0]) is True
        assert not run.finished
        run.observe(LlrState.from_values([-1.5, -1.0], n=3))
        record = run.record()
        assert record.complete
        assert list(record.stop_time) == [1, 3]

    def test_error_watch_records_first_error(self):
        """Test that the LLR vector at the first false positive is kept"""
        config = SignalConfig.from_labels([], 2)
        watch = ErrorWatch(config, ErrorType.TYPE_I)
        run = ProcedureRun(ProcedureKind.DECENTRALIZED_SPRT, Thresholds.uniform(1.0),
                           PriorBounds(0, 2, 2), watch=watch)
        run.observe(LlrState.from_values([1.0, 0.2], n=4))
        assert run.error_time == 4
        np.testing.assert_array_equal(run.error_llr, [1.0, 0.2])
        assert run.done
        assert not run.finished

    def test_copy_is_independent(self):
        """Test that a copied run does not share arrays"""
        run = ProcedureRun(ProcedureKind.PROPOSED_ASYNC, Thresholds.uniform(1.0), PriorBounds(1, 1, 2))
        clone = run.copy()
        clone.observe(LlrState.from_values([3.0, -3.0], n=1))
        assert clone.finished
        assert not run.decided.any()


class TestRunReplication:
    """Test cases for run_replication"""

    def test_single_bernoulli_stream_stops_at_one(self, assert_helpers):
        """Test K=1 SPRT with thresholds log 4: the first observation decides"""
        models = [BernoulliModel(0.2, 0.8)]
        config = SignalConfig.from_labels([1], 1)
        prior = PriorBounds(0, 1, 1)
        record = run_replication(ProcedureKind.DECENTRALIZED_SPRT, models, config,
                                 Thresholds.uniform(LOG4), prior, replication_rng(1, 0))
        assert_helpers.assert_record_complete(record, 1)
        assert record.stop_time[0] == 1

    @pytest.mark.parametrize("kind", list(ProcedureKind))
    def test_scripted_paths_decide_correctly(self, kind, assert_helpers):
        """Test that every procedure recovers the signal set on separating paths"""
        models = [_ScriptedModel(0.2, 0.8) for _ in range(3)]
        config = SignalConfig.from_labels([2], 3)
        prior = PriorBounds(1, 2, 3)
        record = run_replication(kind, models, config, Thresholds.uniform(3.0), prior, replication_rng(4, 0))
        assert_helpers.assert_record_complete(record, 3)
        assert_helpers.assert_decisions(record, config)

    def test_synchronous_streams_share_one_time(self, gaussian_models, known_prior):
        """Test that the synchronous procedure stops every stream together"""
        config = SignalConfig.canonical(3, 10)
        record = run_replication(ProcedureKind.SYNCHRONOUS, gaussian_models, config,
                                 Thresholds.uniform(4.0), known_prior, replication_rng(9, 0))
        assert len(set(record.stop_time.tolist())) == 1

    def test_horizon_exhausted_carries_partial_record(self):
        """Test that reaching the horizon raises with the undecided streams marked"""
        models = [GaussianMeanModel(0.5), GaussianMeanModel(0.5)]
        config = SignalConfig.from_labels([1], 2)
        with pytest.raises(HorizonExhaustedError) as excinfo:
            run_replication(ProcedureKind.DECENTRALIZED_SPRT, models, config, Thresholds.uniform(1e4),
                            PriorBounds(0, 2, 2), replication_rng(1, 1), horizon=5)
        partial = excinfo.value.partial_record
        assert excinfo.value.horizon == 5
        assert not partial.complete
        assert list(partial.stop_time) == [0, 0]

    def test_input_mismatch_rejected(self):
        """Test that model count and prior K must agree"""
        with pytest.raises(ConfigValidationError):
            run_replication(ProcedureKind.DECENTRALIZED_SPRT, [GaussianMeanModel(0.5)],
                            SignalConfig.from_labels([1], 2), Thresholds.uniform(1.0),
                            PriorBounds(0, 2, 2), replication_rng(1, 2))

    def test_same_seed_same_path(self, gaussian_models):
        """Test that procedures replayed on one generator state see the same increments"""
        samplers = [PathSampler(gaussian_models, frozenset({0, 1, 2}), replication_rng(3, 0)) for _ in range(2)]
        first = [samplers[0].next_increments().copy() for _ in range(100)]
        second = [samplers[1].next_increments().copy() for _ in range(100)]
        np.testing.assert_array_equal(np.array(first), np.array(second))

    def test_reproducible_records(self, gaussian_models, bounded_prior):
        """Test that a fixed seed reproduces the record exactly"""
        config = SignalConfig.canonical(4, 10)
        records = [
            run_replication(ProcedureKind.PROPOSED_ASYNC, gaussian_models, config,
                            Thresholds.uniform(3.0), bounded_prior, replication_rng(21, 7))
            for _ in range(2)
        ]
        np.testing.assert_array_equal(records[0].stop_time, records[1].stop_time)
        np.testing.assert_array_equal(records[0].decision, records[1].decision)

    def test_more_evidence_is_not_slower(self, gaussian_models):
        """Test that a K=1 SPRT stopping time grows with the threshold"""
        models = gaussian_models[:1]
        config = SignalConfig.from_labels([1], 1)
        prior = PriorBounds(0, 1, 1)
        times = []
        for level in (1.0, 4.0, 8.0):
            total = sum(
                run_replication(ProcedureKind.DECENTRALIZED_SPRT, models, config, Thresholds.uniform(level),
                                prior, replication_rng(30, index)).stop_time[0]
                for index in range(200)
            )
            times.append(total / 200)
        assert times[0] < times[1] < times[2]
        assert times[2] == pytest.approx(8.0 / 0.125, rel=0.35)
        assert math.isfinite(times[2])
