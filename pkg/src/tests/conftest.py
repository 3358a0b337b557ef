"""
Pytest configuration and shared fixtures
"""

import os
import tempfile

import numpy as np
import pytest
import yaml

from src.services.sequential.interfaces import DecisionRecord, PriorBounds, SignalConfig
from src.services.sequential.stream_models import BernoulliModel, GaussianMeanModel



@pytest.fixture
def temp_directory():
    """Create a temporary directory for tests"""
    with tempfile.TemporaryDirectory() as temp_dir:
        yield temp_dir


@pytest.fixture
def gaussian_models():
    """Ten homogeneous Gaussian streams, mu = 0.5"""
    return [GaussianMeanModel(0.5) for _ in range(10)]


@pytest.fixture
def nonhomogeneous_models():
    """K=4, mu=0.5, phi=0.5: means 0.25, 0.25, 0.5, 0.5"""
    return [GaussianMeanModel(0.25), GaussianMeanModel(0.25), GaussianMeanModel(0.5), GaussianMeanModel(0.5)]


@pytest.fixture
def bernoulli_pair():
    """Two Bernoulli(0.2) vs Bernoulli(0.8) streams"""
    return [BernoulliModel(0.2, 0.8) for _ in range(2)]


@pytest.fixture
def known_prior():
    """K=10 with exactly 3 signals"""
    return PriorBounds(3, 3, 10)


@pytest.fixture
def bounded_prior():
    """K=10 with between 3 and 7 signals"""
    return PriorBounds(3, 7, 10)


@pytest.fixture
def run_config_file(temp_directory):
    """Write a run configuration and return its path; pass overrides as a dict."""
    def write(data=None, name="run.yaml", text=None):
        path = os.path.join(temp_directory, name)
        with open(path, "w", encoding="utf-8") as handle:
            if text is not None:
                handle.write(text)
            else:
                yaml.safe_dump(data or {}, handle, sort_keys=False)
        return path
    return write


@pytest.fixture(autouse=True)
def setup_test_logging():
    """Setup logging for tests"""
    import logging

    # Reduce logging noise during tests
    logging.getLogger('src').setLevel(logging.WARNING)

    yield

    # Reset logging after tests
    logging.getLogger('src').setLevel(logging.INFO)


# Test markers
def pytest_configure(config):
    """Configure pytest markers"""
    config.addinivalue_line(
        "markers", "unit: mark test as a unit test"
    )
    config.addinivalue_line(
        "markers", "integration: mark test as an integration test"
    )
    config.addinivalue_line(
        "markers", "slow: mark test as slow running"
    )


# Test collection hooks
def pytest_collection_modifyitems(config, items):
    """Modify test collection to add markers automatically"""
    for item in items:
        # Add unit marker to all tests in test_* files unless marked otherwise
        if 'test_' in item.nodeid and not any(
            marker.name in ['integration', 'slow']
            for marker in item.iter_markers()
        ):
            item.add_marker(pytest.mark.unit)

        # Acceptance checks are long Monte Carlo runs
        if any(keyword in item.nodeid.lower() for keyword in ['acceptance', 'integration']):
            item.add_marker(pytest.mark.slow)


# Custom assertions
class CustomAssertions:
    """Custom assertion helpers for testing"""

    @staticmethod
    def assert_within_sigma(estimate, expected, std_error, sigmas=4.0):
        """Assert that an estimate lies within ``sigmas`` standard errors of a value"""
        tolerance = sigmas * std_error
        assert abs(estimate - expected) <= tolerance, (
            f"estimate {estimate} is {abs(estimate - expected) / max(std_error, 1e-300):.2f} sigma "
            f"from {expected} (std error {std_error})"
        )

    @staticmethod
    def assert_record_complete(record: DecisionRecord, K: int):
        """Assert that every stream of a record was decided at a positive time"""
        assert record.complete, "record is partial"
        assert record.K == K
        assert np.all(record.stop_time >= 1), f"undecided streams in {record.stop_time}"
        assert set(np.unique(record.decision.astype(int))) <= {0, 1}

    @staticmethod
    def assert_decisions(record: DecisionRecord, config: SignalConfig):
        """Assert that the record declares exactly the signals of ``config``"""
        assert record.decided_signals == config.signals, (
            f"decided {sorted(record.decided_signals)}, expected {sorted(config.signals)}"
        )


@pytest.fixture
def assert_helpers():
    """Provide custom assertion helpers"""
    return CustomAssertions
