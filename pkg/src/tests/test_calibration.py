"""
Tests for analytic and Monte Carlo threshold calibration
"""

import math

import pytest

from src.services.sequential.calibration import (
    CalibrationMethod,
    ImportanceProposal,
    analytic_thresholds,
    calibrate_analytic,
    calibrate_monte_carlo,
    error_bound,
    is_fwe_estimate,
    plain_fwe_estimate,
    proposal_components,
    representative_configurations,
)
from src.services.sequential.errors import ConfigValidationError
from src.services.sequential.interfaces import (
    ErrorTargets, ErrorType, PriorBounds, ProcedureKind, SignalConfig, Thresholds
)
from src.services.sequential.stream_models import GaussianMeanModel


class TestAnalyticThresholds:
    """Test cases for closed-form thresholds"""

    def test_sprt_uninformative_prior(self):
        """Test a = |log alpha| + log(K - l) for K=10, l=0, alpha=0.01"""
        thresholds = analytic_thresholds(ProcedureKind.DECENTRALIZED_SPRT, ErrorTargets(0.01, 0.01),
                                         PriorBounds(0, 10, 10))
        assert thresholds.a == pytest.approx(6.90776, abs=1e-5)
        assert thresholds.b == pytest.approx(math.log(1000.0))

    def test_known_count_pairs(self):
        """Test c = |log alpha| + log(m (K - m)) for the gap rule"""
        thresholds = analytic_thresholds(ProcedureKind.PROPOSED_ASYNC, ErrorTargets(0.01, 0.001),
                                         PriorBounds(3, 3, 10))
        assert thresholds.c == pytest.approx(math.log(100.0) + math.log(21.0))
        assert thresholds.d == pytest.approx(math.log(1000.0) + math.log(21.0))

    def test_gap_intersection_levels(self):
        """Test the four levels of the gap-intersection recipe"""
        thresholds = analytic_thresholds(ProcedureKind.PROPOSED_ASYNC, ErrorTargets(0.01, 0.01),
                                         PriorBounds(3, 7, 10))
        log_alpha = math.log(100.0)
        assert thresholds.a == pytest.approx(log_alpha + math.log(10.0))
        assert thresholds.b == pytest.approx(log_alpha + math.log(10.0))
        assert thresholds.c == pytest.approx(log_alpha + math.log(70.0))
        assert thresholds.d == pytest.approx(log_alpha + math.log(70.0))

    @pytest.mark.parametrize("kind", list(ProcedureKind))
    @pytest.mark.parametrize("bounds", [(0, 4, 4), (1, 3, 4), (2, 2, 4), (0, 1, 4)])
    def test_bounds_meet_targets(self, kind, bounds):
        """Test that the closed-form error bound stays below the targets on the whole class"""
        prior = PriorBounds(*bounds)
        targets = ErrorTargets(0.05, 0.02)
        thresholds = analytic_thresholds(kind, targets, prior)
        for config in prior.configurations():
            assert error_bound(kind, config, thresholds, prior, ErrorType.TYPE_I) <= targets.alpha * (1 + 1e-12)
            assert error_bound(kind, config, thresholds, prior, ErrorType.TYPE_II) <= targets.beta * (1 + 1e-12)

    def test_calibrate_analytic_result(self):
        """Test the analytic calibration result and its serialization"""
        result = calibrate_analytic(ProcedureKind.SYNCHRONOUS, ErrorTargets(0.01, 0.01), PriorBounds(1, 3, 4))
        assert result.method is CalibrationMethod.ANALYTIC
        payload = result.to_dict()
        assert payload["procedure"] == "synchronous"
        assert payload["prior"] == {"l": 1, "u": 3, "K": 4}
        assert payload["achieved"] == {}


class TestRepresentatives:
    """Test cases for the configurations used in the maximal error"""

    def test_by_size(self):
        """Test one canonical configuration per admissible size"""
        configs = representative_configurations(PriorBounds(1, 3, 5))
        assert [config.config_id for config in configs] == ["{1}", "{1,2}", "{1,2,3}"]

    def test_exhaustive(self):
        """Test the whole prior class"""
        assert len(representative_configurations(PriorBounds(1, 2, 4), "exhaustive")) == 4 + 6

    def test_explicit_list_checked(self):
        """Test that explicit configurations must belong to the class"""
        prior = PriorBounds(1, 1, 3)
        with pytest.raises(ConfigValidationError):
            representative_configurations(prior, [SignalConfig.from_labels([1, 2], 3)])

    def test_unknown_mode(self):
        """Test an unknown mode name"""
        with pytest.raises(ConfigValidationError):
            representative_configurations(PriorBounds(1, 1, 3), "random")

class TestProposalComponents:
    """Test cases for the importance-sampling proposal mixtures"""

    def test_pair_swaps(self):
        """Test one component per (signal, noise) pair"""
        config = SignalConfig.from_labels([1, 2], 5)
        components = proposal_components(ImportanceProposal.PAIR, ProcedureKind.PROPOSED_ASYNC, config,
                                         PriorBounds(2, 2, 5), ErrorType.TYPE_I)
        assert len(components) == 2 * 3
        assert (frozenset({2}), frozenset({0})) in components
        for raised, lowered in components:
            assert raised <= config.noise
            assert lowered <= config.signals

    def test_pair_without_signals_falls_back(self):
        """Test single switches when no pair exists"""
        config = SignalConfig.from_labels([], 3)
        components = proposal_components(ImportanceProposal.PAIR, ProcedureKind.PROPOSED_ASYNC, config,
                                         PriorBounds(0, 3, 3), ErrorType.TYPE_I)
        assert components == [(frozenset({k}), frozenset()) for k in range(3)]

    def test_tilted_moves_whole_side(self):
        """Test a single component switching every signal to its null"""
        config = SignalConfig.from_labels([1, 3], 4)
        components = proposal_components(ImportanceProposal.TILTED, ProcedureKind.DECENTRALIZED_SPRT, config,
                                         PriorBounds(0, 4, 4), ErrorType.TYPE_II)
        assert components == [(frozenset(), frozenset({0, 2}))]

    @pytest.mark.parametrize("kind, prior, expected", [
        (ProcedureKind.DECENTRALIZED_SPRT, PriorBounds(0, 4, 4), 2),
        (ProcedureKind.PROPOSED_ASYNC, PriorBounds(2, 2, 4), 4),
        (ProcedureKind.SYNCHRONOUS, PriorBounds(2, 2, 4), 4),
        (ProcedureKind.PROPOSED_ASYNC, PriorBounds(1, 3, 4), 2 + 4),
    ])
    def test_auto_by_procedure(self, kind, prior, expected):
        """Test singles for the SPRT, pairs for a known count and both otherwise"""
        config = SignalConfig.from_labels([1, 2], 4)
        components = proposal_components(ImportanceProposal.AUTO, kind, config, prior, ErrorType.TYPE_I)
        assert len(components) == expected



class TestErrorEstimates:
    """Test cases for plain and importance-sampling FWE estimators"""

    @pytest.fixture
    def setup(self):
        models = [GaussianMeanModel(0.5), GaussianMeanModel(0.5)]
        config = SignalConfig.from_labels([1], 2)
        prior = PriorBounds(0, 2, 2)
        return models, config, prior

    @pytest.mark.parametrize("proposal", [ImportanceProposal.MIXTURE, ImportanceProposal.TILTED, ImportanceProposal.AUTO])
    def test_importance_sampling_agrees_with_plain(self, setup, proposal, assert_helpers):
        """Test that both estimators agree on a moderately rare type-I error"""
        models, config, prior = setup
        thresholds = Thresholds.uniform(2.0)
        plain = plain_fwe_estimate(ProcedureKind.DECENTRALIZED_SPRT, models, config, thresholds, prior,
                                   ErrorType.TYPE_I, replications=4000, seed=5)
        weighted = is_fwe_estimate(ProcedureKind.DECENTRALIZED_SPRT, models, config, thresholds, prior,
                                   ErrorType.TYPE_I, replications=2000, seed=6, proposal=proposal)
        assert weighted.method == f"importance_{proposal.value}"
        combined = math.hypot(plain.std_error, weighted.std_error)
        assert_helpers.assert_within_sigma(weighted.value, plain.value, combined)
        assert weighted.value <= math.exp(-2.0)

    def test_pair_swaps_agree_with_plain_for_gap_rule(self, assert_helpers):
        """Test the pair-swap estimator against plain Monte Carlo with a known number of signals"""
        models = [GaussianMeanModel(1.0) for _ in range(3)]
        config = SignalConfig.from_labels([1], 3)
        prior = PriorBounds(1, 1, 3)
        thresholds = Thresholds.uniform(2.0)
        plain = plain_fwe_estimate(ProcedureKind.PROPOSED_ASYNC, models, config, thresholds, prior,
                                   ErrorType.TYPE_I, replications=4000, seed=21)
        weighted = is_fwe_estimate(ProcedureKind.PROPOSED_ASYNC, models, config, thresholds, prior,
                                   ErrorType.TYPE_I, replications=2000, seed=22, proposal=ImportanceProposal.PAIR)
        assert weighted.method == "importance_pair"
        combined = math.hypot(plain.std_error, weighted.std_error)
        assert_helpers.assert_within_sigma(weighted.value, plain.value, combined)
        assert weighted.value <= error_bound(ProcedureKind.PROPOSED_ASYNC, config, thresholds, prior,
                                             ErrorType.TYPE_I)

    def test_importance_sampling_is_reproducible(self, setup):
        """Test that the same seed gives the same estimate"""
        models, config, prior = setup
        runs = [
            is_fwe_estimate(ProcedureKind.PROPOSED_ASYNC, models, config, Thresholds.uniform(3.0), prior,
                            ErrorType.TYPE_II, replications=200, seed=8)
            for _ in range(2)
        ]
        assert runs[0].value == runs[1].value

    def test_no_error_side_gives_zero(self, setup):
        """Test that type-I error is impossible when every stream is a signal"""
        models, _, prior = setup
        config = SignalConfig.from_labels([1, 2], 2)
        report = is_fwe_estimate(ProcedureKind.DECENTRALIZED_SPRT, models, config, Thresholds.uniform(2.0),
                                 prior, ErrorType.TYPE_I, replications=10, seed=1)
        assert report.value == 0.0

    def test_replications_validated(self, setup):
        """Test that at least one replication is required"""
        models, config, prior = setup
        with pytest.raises(ConfigValidationError):
            plain_fwe_estimate(ProcedureKind.DECENTRALIZED_SPRT, models, config, Thresholds.uniform(2.0),
                               prior, ErrorType.TYPE_I, replications=0, seed=1)


@pytest.mark.slow
class TestMonteCarloCalibration:
    """Test cases for offset bisection"""

    def test_single_stream_calibration(self):
        """Test that the calibrated SPRT is symmetric and meets its targets"""
        models = [GaussianMeanModel(1.0)]
        prior = PriorBounds(0, 1, 1)
        targets = ErrorTargets(0.05, 0.05)
        result = calibrate_monte_carlo(ProcedureKind.DECENTRALIZED_SPRT, models, prior, targets,
                                       replications=2000, seed=3, tolerance=0.1)
        analytic = analytic_thresholds(ProcedureKind.DECENTRALIZED_SPRT, targets, prior)
        assert result.method is CalibrationMethod.MONTE_CARLO
        assert result.thresholds.a == pytest.approx(result.thresholds.b)
        assert result.thresholds.a <= analytic.a
        for reports in result.achieved.values():
            for report in reports.values():
                assert report.value <= 0.05 + 1e-12
        assert result.to_dict()["replications"] == 2000


@pytest.mark.slow
class TestImportancePrecision:
    """Test cases for the precision of the pair-swap proposal on rare errors"""

    def test_rare_gap_rule_error(self):
        """Test a small relative error where plain Monte Carlo would see no error at all"""
        models = [GaussianMeanModel(1.0) for _ in range(4)]
        config = SignalConfig.from_labels([1, 2], 4)
        prior = PriorBounds(2, 2, 4)
        thresholds = Thresholds.uniform(9.0)
        report = is_fwe_estimate(ProcedureKind.PROPOSED_ASYNC, models, config, thresholds, prior,
                                 ErrorType.TYPE_I, replications=5000, seed=31)
        bound = error_bound(ProcedureKind.PROPOSED_ASYNC, config, thresholds, prior, ErrorType.TYPE_I)
        assert report.method == "importance_auto"
        assert 0.0 < report.value <= bound
        assert report.relative_error <= 0.05
