"""
Tests for the structured run logging service
"""

import json
import os

import pytest

from src.services.run_logging_service import LogCategory, RunEvent, RunLoggingService
from src.services.sequential.errors import CalibrationFailedError


def _events(path):
    with open(path, encoding="utf-8") as handle:
        return [json.loads(line) for line in handle.read().splitlines()]


class TestRunEvent:
    """Test cases for a single JSONL record"""

    def test_line_is_one_json_object(self):
        """Test that every field survives the JSON line"""
        event = RunEvent("sweep", "point", "grid point", data={"free": 2.0}, duration_ms=1.5)
        payload = json.loads(event.line())
        assert payload["category"] == "sweep"
        assert payload["data"] == {"free": 2.0}
        assert payload["level"] == "info"
        assert "\n" not in event.line()

    def test_failure_levels(self):
        """Test that only error and critical events count as failures"""
        assert RunEvent("sweep", "x", "", level="error").is_failure
        assert not RunEvent("sweep", "x", "", level="warning").is_failure


class TestRunLoggingService:
    """Test cases for RunLoggingService"""

    @pytest.fixture
    def service(self, temp_directory):
        service = RunLoggingService()
        service.configure(temp_directory, "experiment-a")
        return service

    def test_unconfigured_is_silent(self, temp_directory):
        """Test that events before configure() are dropped without touching the disk"""
        service = RunLoggingService()
        service.log_event(LogCategory.SWEEP, "point", "grid point")
        assert not service.configured
        assert not os.path.exists(os.path.join(temp_directory, "logs"))

    def test_event_written_as_json(self, service, temp_directory):
        """Test one JSON object per line with the experiment name"""
        service.log_config("abc123", "run.yaml", data={"command": "sweep"})
        events = _events(os.path.join(temp_directory, "logs", "run.jsonl"))
        assert len(events) == 1
        assert events[0]["category"] == "config"
        assert events[0]["experiment"] == "experiment-a"
        assert events[0]["data"] == {"command": "sweep", "config_hash": "abc123", "source": "run.yaml"}

    def test_errors_go_to_both_files(self, service, temp_directory):
        """Test that failures are copied to errors.jsonl with their exit code"""
        service.log_error(CalibrationFailedError("no bracket", (0.0, 1.0)), "calibrate")
        errors = _events(os.path.join(temp_directory, "logs", "errors.jsonl"))
        assert errors[0]["data"]["error_type"] == "CalibrationFailedError"
        assert errors[0]["data"]["exit_code"] == 2
        assert len(_events(os.path.join(temp_directory, "logs", "run.jsonl"))) == 1

    def test_track_operation(self, service, temp_directory):
        """Test started and finished records with merged extra data"""
        with service.track_operation(LogCategory.ORACLE, "oracle", {"case": "k1"}) as extra:
            extra["verdict"] = "PASS"
        events = _events(os.path.join(temp_directory, "logs", "run.jsonl"))
        assert [event["event_type"] for event in events] == ["oracle_started", "oracle_finished"]
        assert events[1]["data"] == {"case": "k1", "verdict": "PASS"}
        assert events[1]["duration_ms"] >= 0.0

    def test_track_operation_failure(self, service, temp_directory):
        """Test that an exception is logged and re-raised"""
        with pytest.raises(RuntimeError):
            with service.track_operation(LogCategory.SWEEP, "sweep"):
                raise RuntimeError("boom")
        errors = _events(os.path.join(temp_directory, "logs", "errors.jsonl"))
        assert [error["message"] for error in errors] == ["Error in sweep: boom"]

    def test_reconfigure_switches_files(self, service, temp_directory):
        """Test that a second run writes only to its own directory"""
        service.log_event(LogCategory.SWEEP, "point", "first run")
        second = os.path.join(temp_directory, "second")
        service.configure(second, "experiment-b")
        service.log_event(LogCategory.SWEEP, "point", "second run")
        first_events = _events(os.path.join(temp_directory, "logs", "run.jsonl"))
        second_events = _events(os.path.join(second, "logs", "run.jsonl"))
        assert [event["message"] for event in first_events] == ["first run"]
        assert [event["experiment"] for event in second_events] == ["experiment-b"]
