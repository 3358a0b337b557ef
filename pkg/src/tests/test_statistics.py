"""
Tests for cumulative LLR statistics and their order statistics
"""

import math

import numpy as np
import pytest

from src.services.sequential.errors import ConfigValidationError, NumericalError, PreconditionError
from src.services.sequential.statistics import LlrState, advance, descending_order, ordered_value


class TestLlrState:
    """Test cases for LlrState"""

    def test_initial_state(self):
        """Test that the initial state is all zeros with no positive streams"""
        state = LlrState.initial(4)
        assert state.n == 0
        assert state.K == 4
        assert state.positive_count == 0
        np.testing.assert_array_equal(state.llr, np.zeros(4))

    def test_order_statistics_descending(self):
        """Test lambda_(1) >= ... >= lambda_(K)"""
        state = LlrState.from_values([0.5, -1.0, 2.0, 0.0], n=3)
        assert [state.ordered_value(r) for r in range(1, 5)] == [2.0, 0.5, 0.0, -1.0]
        np.testing.assert_array_equal(state.ordered_values(), [2.0, 0.5, 0.0, -1.0])
        assert state.positive_count == 2

    def test_ties_keep_stream_order(self):
        """Test that equal values are ranked by ascending stream index"""
        state = LlrState.from_values([1.0, 3.0, 1.0, 3.0])
        assert list(state.order) == [1, 3, 0, 2]
        assert state.top(1) == frozenset({1})
        assert state.top(3) == frozenset({0, 1, 3})

    def test_extended_ranks(self):
        """Test the conventions lambda_(0) = +inf and lambda_(K+1) = -inf"""
        state = LlrState.from_values([1.0, -1.0])
        assert state.ordered_value_extended(0) == math.inf
        assert state.ordered_value_extended(3) == -math.inf
        assert state.ordered_value_extended(2) == -1.0

    @pytest.mark.parametrize("rank", [0, 4, -1])
    def test_rank_out_of_range(self, rank):
        """Test that ordered_value only accepts ranks 1..K"""
        state = LlrState.from_values([1.0, 2.0, 3.0])
        with pytest.raises(PreconditionError):
            state.ordered_value(rank)

    def test_zero_is_not_positive(self):
        """Test that the positive count uses strict inequality"""
        assert LlrState.from_values([0.0, 0.0, 1e-12]).positive_count == 1

    def test_non_finite_value_names_stream(self):
        """Test that a NaN statistic raises a numerical error for its stream"""
        with pytest.raises(NumericalError) as excinfo:
            LlrState.from_values([0.0, float("nan"), 1.0])
        assert excinfo.value.stream == 1
        assert "stream 2" in str(excinfo.value)

    def test_advance_accumulates(self):
        """Test that advancing adds increments and increments time"""
        state = LlrState.initial(3)
        state = advance(state, [0.5, -0.25, 0.0])
        state = state.advance([0.5, 1.0, -0.5])
        assert state.n == 2
        np.testing.assert_allclose(state.llr, [1.0, 0.75, -0.5])
        assert ordered_value(state, 1) == 1.0

    def test_advance_does_not_mutate(self):
        """Test that the previous state is left unchanged"""
        state = LlrState.from_values([1.0, 2.0])
        state.advance([1.0, 1.0])
        np.testing.assert_array_equal(state.llr, [1.0, 2.0])

    def test_advance_shape_mismatch(self):
        """Test that a wrong number of increments is rejected"""
        with pytest.raises(ConfigValidationError):
            LlrState.initial(3).advance([1.0, 2.0])

    def test_incremental_order_matches_full_sort(self):
        """Test that the maintained order agrees with sorting from scratch"""
        rng = np.random.default_rng(5)
        state = LlrState.initial(6)
        for _ in range(50):
            state = state.advance(rng.standard_normal(6))
            expected = np.sort(state.llr)[::-1]
            np.testing.assert_array_equal(state.ordered_values(), expected)
            np.testing.assert_array_equal(state.order, descending_order(state.llr))
