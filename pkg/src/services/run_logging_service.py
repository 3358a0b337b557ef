"""
Run Logging Service
Structured JSONL records of configuration, calibration, sweep and oracle events.

Every event of a run lands in <out>/logs/run.jsonl; failures are copied to
<out>/logs/errors.jsonl. Nothing is kept in memory between events.
"""

import json
import logging
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterator, Optional


class LogCategory(Enum):
    """What part of a run an event belongs to"""
    CONFIG = "config"
    CALIBRATION = "calibration"
    SWEEP = "sweep"
    ORACLE = "oracle"
    ARE = "are"
    COMPOSITE = "composite"
    ERROR_EVENT = "error_event"


@dataclass
class RunEvent:
    """One line of run.jsonl"""
    category: str
    event_type: str
    message: str
    level: str = "info"
    experiment: Optional[str] = None
    data: Dict[str, Any] = field(default_factory=dict)
    duration_ms: Optional[float] = None
    timestamp: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())

    @property
    def is_failure(self) -> bool:
        return self.level in ("error", "critical")

    def line(self) -> str:
        return json.dumps(asdict(self), default=str, ensure_ascii=False)


def _jsonl_sink(name: str, path: Path) -> logging.Logger:
    """A non-propagating logger writing raw lines to ``path``; stale handlers are closed."""
    sink = logging.getLogger(name)
    sink.setLevel(logging.INFO)
    sink.propagate = False
    for handler in list(sink.handlers):
        sink.removeHandler(handler)
        handler.close()
    handler = logging.FileHandler(path, encoding="utf-8")
    handler.setFormatter(logging.Formatter("%(message)s"))
    sink.addHandler(handler)
    return sink


class RunLoggingService:
    """JSONL event log of one run; silent until ``configure`` names an output directory."""

    def __init__(self):
        self.log_dir: Optional[Path] = None
        self.experiment: Optional[str] = None
        self._events: Optional[logging.Logger] = None
        self._failures: Optional[logging.Logger] = None

    def configure(self, output_dir: Path, experiment: Optional[str] = None) -> None:
        """Point the JSONL files at ``output_dir``/logs."""
        self.log_dir = Path(output_dir) / "logs"
        self.log_dir.mkdir(parents=True, exist_ok=True)
        self.experiment = experiment
        self._events = _jsonl_sink("multistream.run_events", self.log_dir / "run.jsonl")
        self._failures = _jsonl_sink("multistream.run_failures", self.log_dir / "errors.jsonl")

    @property
    def configured(self) -> bool:
        return self._events is not None

    def emit(self, event: RunEvent) -> None:
        if not self.configured:
            return
        text = event.line()
        self._events.info(text)
        if event.is_failure:
            self._failures.info(text)

    def log_event(self, category: LogCategory, event_type: str, message: str,
                  data: Optional[Dict[str, Any]] = None, duration_ms: Optional[float] = None) -> None:
        self.emit(RunEvent(category.value, event_type, message, experiment=self.experiment,
                           data=dict(data or {}), duration_ms=duration_ms))

    def log_config(self, config_hash: str, source: str, data: Optional[Dict[str, Any]] = None) -> None:
        self.log_event(LogCategory.CONFIG, "loaded", f"Configuration {source}",
                       data=dict(data or {}, config_hash=config_hash, source=source))

    def log_error(self, error: Exception, context: str,
                  additional_data: Optional[Dict[str, Any]] = None) -> None:
        """Record a failure with its type and the exit code it maps to"""
        self.emit(RunEvent(
            LogCategory.ERROR_EVENT.value, "exception", f"Error in {context}: {error}",
            level="error", experiment=self.experiment,
            data={
                "context": context,
                "error_type": type(error).__name__,
                "exit_code": getattr(error, "exit_code", None),
                "additional_data": additional_data or {},
            },
        ))

    @contextmanager
    def track_operation(self, category: LogCategory, event_type: str,
                        data: Optional[Dict[str, Any]] = None) -> Iterator[Dict[str, Any]]:
        """Time a block; the yielded dict is merged into the completion record."""
        extra: Dict[str, Any] = {}
        start = time.perf_counter()
        self.log_event(category, f"{event_type}_started", f"{event_type} started", data=data)
        try:
            yield extra
        except Exception as exc:
            self.log_error(exc, event_type, additional_data=data)
            raise
        duration = (time.perf_counter() - start) * 1000
        self.log_event(category, f"{event_type}_finished", f"{event_type} finished",
                       data=dict(data or {}, **extra), duration_ms=duration)


# Global instance; files are opened by configure()
run_logger = RunLoggingService()
