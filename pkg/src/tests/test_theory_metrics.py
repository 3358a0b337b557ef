"""
Tests for error metrics, optimal decision times and relative efficiencies
"""

import math
from fractions import Fraction

import numpy as np
import pytest

from src.services.sequential.errors import PreconditionError
from src.services.sequential.interfaces import (
    DecisionRecord, ErrorMetric, ErrorReport, ErrorTargets, PriorBounds, SignalConfig
)
from src.services.sequential.theory_metrics import (
    KlAggregates,
    are_decentralized,
    are_synchronous,
    are_table,
    check_sandwich,
    empirical_error,
    error_statistic,
    format_number,
    gem_sandwich_check,
    homogeneous_are_synchronous,
    kl_table,
    lower_bound_exponent,
    min_lower_bound_exponent,
    optimal_time_first_order,
    synchronous_optimal_time,
    theory_slope,
)


def _record(decisions, times=None):
    decisions = np.asarray(decisions, dtype=bool)
    stop_time = np.asarray(times if times is not None else [1] * len(decisions), dtype=np.int64)
    return DecisionRecord(stop_time=stop_time, decision=decisions)


def _config(labels, K=4):
    return SignalConfig.from_labels(labels, K)


@pytest.fixture
def nonhomogeneous_kls(nonhomogeneous_models):
    return kl_table(nonhomogeneous_models)


class TestKlTable:
    """Test cases for KL tables and aggregates"""

    def test_exact_rationals(self, nonhomogeneous_kls):
        """Test that decimal Gaussian means give rational KL numbers"""
        assert nonhomogeneous_kls == [(Fraction(1, 32),) * 2] * 2 + [(Fraction(1, 8),) * 2] * 2

    def test_float_fallback(self, bernoulli_pair, nonhomogeneous_models):
        """Test floats for models without rational KL numbers or when exact is off"""
        assert all(isinstance(value, float) for pair in kl_table(bernoulli_pair) for value in pair)
        assert kl_table(nonhomogeneous_models, exact=False)[0] == pytest.approx((1 / 32, 1 / 32))

    def test_aggregates(self, nonhomogeneous_kls):
        """Test I_A and J_A, with +inf for an empty side"""
        agg = KlAggregates.of(_config([3]), nonhomogeneous_kls)
        assert agg.I_min == Fraction(1, 8)
        assert agg.J_min == Fraction(1, 32)
        assert KlAggregates.of(_config([]), nonhomogeneous_kls).I_min == math.inf

    def test_aggregates_length_checked(self, nonhomogeneous_kls):
        """Test that KL pairs must cover every stream"""
        with pytest.raises(PreconditionError):
            KlAggregates.of(SignalConfig.from_labels([1], 3), nonhomogeneous_kls)


class TestErrorMetrics:
    """Test cases for empirical error metrics"""

    def test_statistics_per_replication(self):
        """Test the per-replication values of each metric"""
        config = _config([1, 2])
        record = _record([1, 0, 1, 0])
        assert error_statistic(record, config, ErrorMetric.FWE1) == 1.0
        assert error_statistic(record, config, ErrorMetric.FWE2) == 1.0
        assert error_statistic(record, config, ErrorMetric.PCE1) == 0.25
        assert error_statistic(record, config, ErrorMetric.FDR1) == 0.5
        assert error_statistic(record, config, ErrorMetric.FDR2) == 0.5

    def test_fdr_zero_when_nothing_rejected(self):
        """Test FDR = 0 and pFDR undefined on an empty rejection set"""
        config = _config([1])
        record = _record([0, 0, 0, 0])
        assert error_statistic(record, config, ErrorMetric.FDR1) == 0.0
        assert error_statistic(record, config, ErrorMetric.PFDR1) is None

    def test_pfdr_undefined_batch(self):
        """Test that pFDR reports None when the conditioning event never occurs"""
        report = empirical_error([_record([0, 0, 0, 0])] * 3, _config([1]), ErrorMetric.PFDR1)
        assert report.value is None
        assert not report.defined
        assert report.replications == 3

    def test_empirical_mean_and_error(self):
        """Test the sample mean and standard error of FWE"""
        config = _config([1])
        records = [_record([1, 1, 0, 0]), _record([1, 0, 0, 0])]
        report = empirical_error(records, config, ErrorMetric.FWE1)
        assert report.value == 0.5
        assert report.std_error == pytest.approx(0.5)
        assert report.configuration == "{1}"

    def test_incomplete_records_rejected(self):
        """Test that partial records cannot be scored"""
        record = _record([1, 0, 0, 0], times=[1, 0, 2, 2])
        record.complete = False
        with pytest.raises(PreconditionError):
            empirical_error([record], _config([1]), ErrorMetric.FWE1)


class TestSandwich:
    """Test cases for generalized error metric constants"""

    def test_constants(self):
        """Test (C1, C2) for each metric family"""
        prior = PriorBounds(3, 7, 10)
        assert gem_sandwich_check(ErrorMetric.FWE1, prior) == (1, 1)
        assert gem_sandwich_check(ErrorMetric.PCE2, prior) == (Fraction(7, 10), Fraction(1, 10))
        assert gem_sandwich_check(ErrorMetric.FDR1, prior) == (1, Fraction(1, 10))
        assert gem_sandwich_check(ErrorMetric.PFDR2, prior) == (2, Fraction(1, 10))

    def test_pfdr_needs_interior_bounds(self):
        """Test that pFDR constants require 0 < l and u < K"""
        with pytest.raises(PreconditionError):
            gem_sandwich_check(ErrorMetric.PFDR1, PriorBounds(0, 4, 10))

    def test_sandwich_holds(self):
        """Test C2 * FWE <= FDR <= C1 * FWE on a small batch"""
        config = _config([1])
        records = [_record([1, 1, 0, 0]), _record([1, 0, 0, 0])]
        verdict = check_sandwich(records, config, PriorBounds(1, 3, 4), ErrorMetric.FDR1, sigmas=0.0)
        assert verdict.holds
        assert verdict.gem == 0.25
        assert verdict.lower == pytest.approx(0.125)
        assert verdict.upper == pytest.approx(0.5)

    def test_pce_upper_constant_is_tight(self):
        """Test PCE reaching C1 * FWE when one replication flips every noise stream"""
        config = _config([1])
        records = [_record([1, 1, 1, 1])] + [_record([1, 0, 0, 0])] * 3
        verdict = check_sandwich(records, config, PriorBounds(1, 1, 4), ErrorMetric.PCE1, sigmas=0.0)
        assert verdict.gem == 0.1875
        assert verdict.upper == 0.1875
        assert verdict.lower == 0.0625
        assert verdict.holds

    def test_sandwich_violation_detected(self, mocker):
        """Test that a metric estimate above C1 * FWE is flagged"""
        def fake_error(records, config, metric):
            value = 0.9 if metric is ErrorMetric.FDR1 else 0.5
            return ErrorReport(metric, value, 0.0, len(records))

        mocker.patch("src.services.sequential.theory_metrics.empirical_error", side_effect=fake_error)
        verdict = check_sandwich([_record([1, 0, 0, 0])], _config([1]), PriorBounds(1, 3, 4),
                                 ErrorMetric.FDR1, sigmas=0.0)
        assert not verdict.holds
        assert verdict.upper == 0.5


class TestOptimalTimes:
    """Test cases for first-order optimal decision times and lower bounds"""

    def test_homogeneous_known_count(self, gaussian_models, known_prior):
        """Test |log alpha| / (I + J) for a signal stream when |A| = l"""
        kls = kl_table(gaussian_models)
        config = SignalConfig.canonical(3, 10)
        targets = ErrorTargets(0.01, 0.01)
        assert optimal_time_first_order(0, config, known_prior, targets, kls) == pytest.approx(math.log(100) / 0.25)
        assert optimal_time_first_order(5, config, known_prior, targets, kls) == pytest.approx(math.log(100) / 0.25)

    def test_interior_size_uses_own_rate(self, gaussian_models, bounded_prior):
        """Test that no indicator term applies when l < |A| < u"""
        kls = kl_table(gaussian_models)
        config = SignalConfig.canonical(5, 10)
        targets = ErrorTargets(0.01, 0.001)
        assert optimal_time_first_order(0, config, bounded_prior, targets, kls) == pytest.approx(math.log(100) / 0.125)
        assert optimal_time_first_order(9, config, bounded_prior, targets, kls) == pytest.approx(math.log(1000) / 0.125)
        assert synchronous_optimal_time(config, bounded_prior, targets, kls) == pytest.approx(math.log(1000) / 0.125)

    def test_min_lower_bound_matches_aggregate(self, nonhomogeneous_kls):
        """Test that the best competitor gives I_i + J_A at |A| = l"""
        prior = PriorBounds(1, 1, 4)
        config = _config([3])
        assert min_lower_bound_exponent(2, config, prior, nonhomogeneous_kls) == Fraction(1, 8) + Fraction(1, 32)
        assert lower_bound_exponent(config, _config([1]), nonhomogeneous_kls) == Fraction(5, 32)

    def test_theory_slopes(self, nonhomogeneous_kls):
        """Test slopes per unit of |log error|"""
        prior = PriorBounds(1, 1, 4)
        config = _config([3])
        assert theory_slope(2, config, prior, nonhomogeneous_kls, "decentralized") == pytest.approx(8.0)
        assert theory_slope(2, config, prior, nonhomogeneous_kls, "proposed") == pytest.approx(32 / 5)
        with pytest.raises(PreconditionError):
            theory_slope(2, config, prior, nonhomogeneous_kls, "oracle")


class TestRelativeEfficiency:
    """Test cases for decentralized and synchronous efficiencies"""

    def test_decentralized_known_count(self, nonhomogeneous_kls):
        """Test the noise stream 1 entry for A = {3} with l = u = 1"""
        value = are_decentralized(0, _config([3]), PriorBounds(1, 1, 4), nonhomogeneous_kls)
        assert value == Fraction(1, 5)

    def test_synchronous_known_count(self, nonhomogeneous_kls):
        """Test stream 3 for A = {1} with l = u = 1 and r = 1"""
        assert are_synchronous(2, _config([1]), PriorBounds(1, 1, 4), nonhomogeneous_kls) == Fraction(2, 5)

    def test_synchronous_bounded(self, nonhomogeneous_kls):
        """Test stream 3 for A = {3} with l = 1, u = 3"""
        assert are_synchronous(2, _config([3]), PriorBounds(1, 3, 4), nonhomogeneous_kls) == Fraction(1, 5)

    def test_homogeneous_known_is_one(self, gaussian_models):
        """Test ARE'' = 1 for every stream in the symmetric homogeneous setup"""
        kls = kl_table(gaussian_models)
        for size in (1, 3, 5):
            config = SignalConfig.canonical(size, 10)
            prior = PriorBounds(size, size, 10)
            assert all(are_synchronous(k, config, prior, kls) == 1 for k in range(10))
            assert homogeneous_are_synchronous(True, size, prior, Fraction(1, 8), Fraction(1, 8)) == 1

    def test_homogeneous_closed_form_matches_general(self, gaussian_models):
        """Test the homogeneous shortcut against the general formula"""
        kls = kl_table(gaussian_models)
        prior = PriorBounds(1, 9, 10)
        I = J = Fraction(1, 8)
        for size in (1, 3, 9):
            config = SignalConfig.canonical(size, 10)
            assert are_synchronous(0, config, prior, kls) == homogeneous_are_synchronous(True, size, prior, I, J)
            assert are_synchronous(9, config, prior, kls) == homogeneous_are_synchronous(False, size, prior, I, J)
        assert homogeneous_are_synchronous(True, 1, prior, I, J) == Fraction(1, 2)

    def test_limiting_regimes(self, nonhomogeneous_kls):
        """Test that a mismatched rate regime zeroes one side"""
        prior = PriorBounds(1, 1, 4)
        config = _config([1])
        assert are_synchronous(0, config, prior, nonhomogeneous_kls, regime="alpha_slower") == 0
        assert are_synchronous(1, config, prior, nonhomogeneous_kls, regime="alpha_faster") == 0
        with pytest.raises(PreconditionError):
            are_synchronous(0, config, prior, nonhomogeneous_kls, regime="sideways")
        with pytest.raises(PreconditionError):
            are_synchronous(0, config, prior, nonhomogeneous_kls, r=0)

    @pytest.mark.parametrize("kind", ["decentralized", "synchronous"])
    @pytest.mark.parametrize("bounds", [None, (1, 3)])
    def test_tables_within_unit_interval(self, nonhomogeneous_kls, kind, bounds):
        """Test that every table entry lies in [0, 1] and is exact"""
        prior = None if bounds is None else PriorBounds(bounds[0], bounds[1], 4)
        configs = [_config(labels) for labels in ([1], [3], [1, 2], [1, 3])]
        table = are_table(configs, nonhomogeneous_kls, kind, prior=prior)
        for row in table.values:
            for value in row:
                assert isinstance(value, Fraction)
                assert 0 <= value <= 1

    def test_table_rows(self, nonhomogeneous_kls):
        """Test the rendered rows of the known-count decentralized table"""
        configs = [_config([3])]
        rows = are_table(configs, nonhomogeneous_kls, "decentralized").as_rows()
        assert rows == [{"configuration": "{3}", "stream_1": "1/5", "stream_2": "1/5",
                         "stream_3": "4/5", "stream_4": "1/2"}]

    def test_unknown_table_kind(self, nonhomogeneous_kls):
        """Test that only the two efficiency kinds exist"""
        with pytest.raises(PreconditionError):
            are_table([_config([1])], nonhomogeneous_kls, "centralized")

    def test_format_number(self):
        """Test rational and float rendering"""
        assert format_number(Fraction(2, 5)) == "2/5"
        assert format_number(Fraction(1)) == "1"
        assert format_number(0.25) == "0.25"


F = Fraction
CASES = ([1], [3], [1, 2], [1, 3])

KNOWN_DECENTRALIZED = [
    [F(1, 2), F(1, 2), F(4, 5), F(4, 5)],
    [F(1, 5), F(1, 5), F(4, 5), F(1, 2)],
    [F(1, 5), F(1, 5), F(4, 5), F(4, 5)],
    [F(1, 2), F(1, 2), F(4, 5), F(4, 5)],
]
KNOWN_SYNCHRONOUS = [
    [1, 1, F(2, 5), F(2, 5)],
    [1, 1, 1, F(5, 8)],
    [1, 1, 1, 1],
    [1, 1, F(2, 5), F(2, 5)],
]
BOUNDED_DECENTRALIZED = [
    [F(1, 2), 1, 1, 1],
    [1, 1, F(4, 5), 1],
    [1, 1, 1, 1],
    [1, 1, 1, 1],
]
BOUNDED_SYNCHRONOUS = [
    [F(1, 2), 1, F(1, 4), F(1, 4)],
    [1, 1, F(1, 5), F(1, 4)],
    [1, 1, F(1, 4), F(1, 4)],
    [1, 1, F(1, 4), F(1, 4)],
]


class TestNonhomogeneousTables:
    """Reproduce the K=4, mu=0.5, phi=0.5 efficiency tables entry for entry"""

    @pytest.mark.parametrize("kind,bounds,expected", [
        ("decentralized", None, KNOWN_DECENTRALIZED),
        ("synchronous", None, KNOWN_SYNCHRONOUS),
        ("decentralized", (1, 3), BOUNDED_DECENTRALIZED),
        ("synchronous", (1, 3), BOUNDED_SYNCHRONOUS),
    ])
    def test_table(self, nonhomogeneous_kls, kind, bounds, expected):
        """Test all 16 entries of one table in exact arithmetic"""
        prior = None if bounds is None else PriorBounds(bounds[0], bounds[1], 4)
        table = are_table([_config(labels) for labels in CASES], nonhomogeneous_kls, kind, prior=prior)
        assert table.values == expected
        assert table.prior_label == ("known" if bounds is None else "l=1,u=3")
