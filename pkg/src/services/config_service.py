"""
Run configuration service.

Loads experiment configurations and named figure recipes from YAML, rejects
unknown keys, validates everything before any computation starts and reports
problems with the line of the offending node.
"""

import copy
import hashlib
import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import yaml
from dotenv import load_dotenv

from .sequential.errors import ConfigValidationError
from .sequential.interfaces import ErrorTargets, PriorBounds, ProcedureKind, SignalConfig, Thresholds

# Load environment variables
load_dotenv()

logger = logging.getLogger(__name__)

OUTPUT_DIR_ENV = "MULTISTREAM_OUTPUT_DIR"
LOG_LEVEL_ENV = "MULTISTREAM_LOG_LEVEL"
DEFAULT_OUTPUT_DIR = "results"
DEFAULT_RECIPES_PATH = Path(__file__).resolve().parents[2] / "config" / "recipes.yaml"


@dataclass
class ModelsConfig:
    """Stream models; ``means`` overrides mu/phi when given."""
    kind: str = "gaussian_mean"
    K: int = 10
    mu: float = 0.5
    phi: float = 1.0
    means: List[float] = field(default_factory=list)
    p0: float = 0.2
    p1: float = 0.8
    null: List[float] = field(default_factory=lambda: [-0.5, 0.0])
    alt: List[float] = field(default_factory=lambda: [0.3, 1.0])


@dataclass
class PriorConfig:
    """Bounds on the number of signals. ``known`` sets l = u = |A| per configuration."""
    l: int = 0
    u: Optional[int] = None
    known: bool = False


@dataclass
class TargetsConfig:
    alpha: float = 0.01
    beta: float = 0.01


@dataclass
class CalibrationConfig:
    method: str = "analytic"            # analytic, monte_carlo
    replications: int = 10_000
    tolerance: float = 0.05
    max_iterations: int = 40
    representatives: str = "by_size"    # by_size, exhaustive
    proposal: str = "auto"              # auto, mixture, tilted, pair


@dataclass
class GridConfig:
    """Free threshold values; either listed or spaced evenly from start to stop."""
    values: List[float] = field(default_factory=list)
    start: Optional[float] = None
    stop: Optional[float] = None
    points: int = 8

    def resolved(self) -> List[float]:
        if self.values:
            return [float(value) for value in self.values]
        if self.start is None or self.stop is None:
            return []
        if self.points == 1:
            return [float(self.start)]
        step = (self.stop - self.start) / (self.points - 1)
        return [float(self.start + step * index) for index in range(self.points)]


@dataclass
class OutputConfig:
    directory: Optional[str] = None
    csv: bool = True
    json: bool = True


@dataclass
class OracleCaseConfig:
    name: str = "case"
    procedure: str = "proposed_async"
    K: int = 2
    p0: float = 0.2
    p1: float = 0.8
    signals: List[int] = field(default_factory=list)
    l: int = 0
    u: Optional[int] = None
    threshold: float = 1.3862943611198906
    depth: int = 8


@dataclass
class OracleConfig:
    replications: int = 10_000
    sigma_limit: float = 4.0
    cases: List[OracleCaseConfig] = field(default_factory=list)


@dataclass
class AreConfig:
    kinds: List[str] = field(default_factory=lambda: ["decentralized", "synchronous"])
    r: float = 1.0


@dataclass
class CompositeConfig:
    points: int = 5
    replications: int = 2_000
    checkpoints: List[int] = field(default_factory=lambda: [1, 5, 20])


@dataclass
class RunConfig:
    """Complete experiment configuration."""
    experiment: str = "experiment"
    models: ModelsConfig = field(default_factory=ModelsConfig)
    prior: PriorConfig = field(default_factory=PriorConfig)
    procedures: List[str] = field(default_factory=lambda: [kind.value for kind in ProcedureKind])
    signals: List[List[int]] = field(default_factory=list)
    targets: TargetsConfig = field(default_factory=TargetsConfig)
    calibration: CalibrationConfig = field(default_factory=CalibrationConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    replications: int = 10_000
    max_replications: int = 100_000     # cap of the tenfold sweep escalation
    seed: int = 0
    horizon: int = 1_000_000
    workers: int = 1
    allow_partial: bool = False
    output: OutputConfig = field(default_factory=OutputConfig)
    oracle: OracleConfig = field(default_factory=OracleConfig)
    are: AreConfig = field(default_factory=AreConfig)
    composite: CompositeConfig = field(default_factory=CompositeConfig)
    recipe: Optional[str] = None
    variant: Optional[str] = None

    # Derived domain objects

    def prior_bounds(self, config: Optional[SignalConfig] = None) -> PriorBounds:
        K = self.models.K
        if self.prior.known:
            if config is None:
                raise ConfigValidationError("prior.known needs an explicit signal configuration")
            return PriorBounds(config.size, config.size, K)
        u = K if self.prior.u is None else self.prior.u
        return PriorBounds(self.prior.l, u, K)

    def signal_configs(self) -> List[SignalConfig]:
        return [SignalConfig.from_labels(labels, self.models.K) for labels in self.signals]

    def error_targets(self) -> ErrorTargets:
        return ErrorTargets(self.targets.alpha, self.targets.beta)

    def procedure_kinds(self) -> List[ProcedureKind]:
        return [ProcedureKind(name) for name in self.procedures]

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def config_hash(self) -> str:
        """sha256 of the canonical JSON form; ignores the recipe labels."""
        data = self.to_dict()
        data.pop("recipe", None)
        data.pop("variant", None)
        text = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _node_lines(node: yaml.Node, path: Tuple = ()) -> Dict[Tuple, int]:
    """1-based line of every mapping key and sequence item, keyed by path."""
    lines = {path: node.start_mark.line + 1}
    if isinstance(node, yaml.MappingNode):
        for key_node, value_node in node.value:
            child = path + (key_node.value,)
            lines.update(_node_lines(value_node, child))
            lines[child] = key_node.start_mark.line + 1
    elif isinstance(node, yaml.SequenceNode):
        for index, item in enumerate(node.value):
            lines.update(_node_lines(item, path + (index,)))
    return lines


def _build(cls, data: Any, path: Tuple, lines: Dict[Tuple, int], source: Optional[str]):
    """Instantiate a config dataclass from a mapping, rejecting unknown keys."""
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigValidationError(
            f"'{'.'.join(map(str, path)) or 'root'}' must be a mapping", line=lines.get(path), source=source
        )
    known = {f.name: f for f in fields(cls)}
    values = {}
    for key, value in data.items():
        if key not in known:
            dotted = ".".join(map(str, path + (key,)))
            raise ConfigValidationError(
                f"unknown key '{dotted}' (allowed: {', '.join(sorted(known))})",
                line=lines.get(path + (key,)), source=source,
            )
        default = known[key].default_factory() if callable(known[key].default_factory) else known[key].default
        if is_dataclass(default):
            values[key] = _build(type(default), value, path + (key,), lines, source)
        elif key == "cases":
            values[key] = [
                _build(OracleCaseConfig, item, path + (key, index), lines, source)
                for index, item in enumerate(value or [])
            ]
        else:
            _check_type(default, value, path + (key,), lines, source)
            values[key] = value
    return cls(**values)


def _check_type(default: Any, value: Any, path: Tuple, lines: Dict[Tuple, int], source: Optional[str]) -> None:
    if default is None or value is None:
        return
    expected = type(default)
    if expected is float and isinstance(value, int) and not isinstance(value, bool):
        return
    if expected is int and isinstance(value, bool):
        ok = False
    else:
        ok = isinstance(value, expected)
    if not ok:
        raise ConfigValidationError(
            f"'{'.'.join(map(str, path))}' must be of type {expected.__name__}, got {value!r}",
            line=lines.get(path), source=source,
        )


def deep_merge(base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in (overrides or {}).items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


class RunConfigManager:
    """Loads, builds and validates run configurations."""

    def __init__(self, config_path: Optional[str] = None):
        self.config_path = config_path or self._find_config_file()
        self._config: Optional[RunConfig] = None

    def _find_config_file(self) -> str:
        """Find the configuration file in standard locations."""
        for path in ("config/run.yaml", "run.yaml", "config.yaml"):
            if os.path.exists(path):
                return path
        return "config.yaml"

    def _read(self, path: str) -> Tuple[Dict[str, Any], Dict[Tuple, int]]:
        try:
            with open(path, "r", encoding="utf-8") as handle:
                text = handle.read()
        except OSError as exc:
            raise ConfigValidationError(f"cannot read configuration: {exc}", source=path)
        try:
            node = yaml.compose(text)
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            raise ConfigValidationError(
                f"YAML syntax error: {getattr(exc, 'problem', exc)}",
                line=mark.line + 1 if mark is not None else None, source=path,
            )
        lines = _node_lines(node) if node is not None else {}
        return data or {}, lines

    def load_config(self) -> RunConfig:
        """Load, build and validate the configuration file."""
        if self._config is not None:
            return self._config
        data, lines = self._read(self.config_path)
        self._config = self.build(data, lines, source=self.config_path)
        logger.info(f"⚙️ Loaded configuration '{self._config.experiment}' from {self.config_path}")
        return self._config

    def build(self, data: Dict[str, Any], lines: Optional[Dict[Tuple, int]] = None,
              source: Optional[str] = None) -> RunConfig:
        config = self._create_config_from_dict(data, lines or {}, source)
        issues = self.validate_config(config)
        if issues:
            raise ConfigValidationError(issues, line=self._first_line(issues, lines or {}), source=source)
        return config

    def _create_config_from_dict(self, config_dict: Dict[str, Any], lines: Dict[Tuple, int],
                                 source: Optional[str]) -> RunConfig:
        return _build(RunConfig, config_dict, (), lines, source)

    @staticmethod
    def _first_line(issues: List[str], lines: Dict[Tuple, int]) -> Optional[int]:
        for issue in issues:
            section = issue.split(":", 1)[0].split(".")
            path = tuple(section)
            while path:
                if path in lines:
                    return lines[path]
                path = path[:-1]
        return None

    def validate_config(self, config: RunConfig) -> List[str]:
        """Validate configuration and return list of issues."""
        issues = []
        models = config.models
        if models.K < 1:
            issues.append(f"models.K: must be positive, got {models.K}")
        if models.kind not in ("gaussian_mean", "bernoulli", "composite_gaussian"):
            issues.append(f"models.kind: unknown kind '{models.kind}'")
        if models.kind == "gaussian_mean":
            means = models.means or [models.mu]
            if any(not isinstance(value, (int, float)) or value <= 0 for value in means):
                issues.append(f"models.mu: Gaussian means must be positive, got {means}")
            if not models.means and not 0 < models.phi:
                issues.append(f"models.phi: must be positive, got {models.phi}")
            if models.means and len(models.means) != models.K:
                issues.append(f"models.means: {len(models.means)} entries for K={models.K}")
        if models.kind == "bernoulli":
            for name in ("p0", "p1"):
                value = getattr(models, name)
                if not 0 < value < 1:
                    issues.append(f"models.{name}: must lie in (0, 1), got {value}")
            if models.p0 == models.p1:
                issues.append("models.p1: must differ from p0")

        if not config.prior.known:
            u = models.K if config.prior.u is None else config.prior.u
            l = config.prior.l
            if not (0 <= l <= u <= models.K and u > 0 and l < models.K):
                issues.append(
                    f"prior: bounds violate 0 <= l <= u <= K, u > 0, l < K (l={l}, u={u}, K={models.K})"
                )
            else:
                for labels in config.signals:
                    if not l <= len(labels) <= u:
                        issues.append(f"signals: configuration {labels} has {len(labels)} signals, outside [{l}, {u}]")
        elif not config.signals:
            issues.append("prior.known: requires explicit signal configurations")
        for labels in config.signals:
            if any(not 1 <= int(label) <= models.K for label in labels):
                issues.append(f"signals: configuration {labels} has labels outside 1..{models.K}")

        for name in ("alpha", "beta"):
            value = getattr(config.targets, name)
            if not 0 < value < 1:
                issues.append(f"targets.{name}: must lie in (0, 1), got {value}")
        known_kinds = {kind.value for kind in ProcedureKind}
        for name in config.procedures:
            if name not in known_kinds:
                issues.append(f"procedures: unknown procedure '{name}' (known: {', '.join(sorted(known_kinds))})")
        if config.calibration.method not in ("analytic", "monte_carlo"):
            issues.append(f"calibration.method: unknown method '{config.calibration.method}'")
        if config.calibration.proposal not in ("auto", "mixture", "tilted", "pair"):
            issues.append(f"calibration.proposal: unknown proposal '{config.calibration.proposal}'")
        if config.calibration.representatives not in ("by_size", "exhaustive"):
            issues.append(f"calibration.representatives: unknown mode '{config.calibration.representatives}'")
        if config.replications < 1:
            issues.append(f"replications: must be at least 1, got {config.replications}")
        if config.max_replications < config.replications:
            issues.append(f"max_replications: must be at least replications ({config.replications}), "
                          f"got {config.max_replications}")
        if config.calibration.replications < 1:
            issues.append("calibration.replications: must be at least 1")
        if config.horizon < 1:
            issues.append(f"horizon: must be at least 1, got {config.horizon}")
        if config.workers < 1:
            issues.append(f"workers: must be at least 1, got {config.workers}")
        if config.seed < 0:
            issues.append(f"seed: must be non-negative, got {config.seed}")
        if (config.grid.values or config.grid.start is not None) and not config.grid.resolved():
            issues.append("grid: threshold grid is empty")
        if any(value <= 0 for value in config.grid.resolved()):
            issues.append(f"grid: values must be positive, got {config.grid.resolved()}")
        if config.are.r <= 0:
            issues.append(f"are.r: must be positive, got {config.are.r}")
        for index, case in enumerate(config.oracle.cases):
            if case.procedure not in known_kinds:
                issues.append(f"oracle.cases.{index}: unknown procedure '{case.procedure}'")
            if case.depth < 1:
                issues.append(f"oracle.cases.{index}: depth must be at least 1")
        return issues

    def save_default_config(self, path: Optional[str] = None) -> None:
        """Save a default configuration file."""
        save_path = Path(path or self.config_path)
        save_path.parent.mkdir(parents=True, exist_ok=True)
        data = RunConfig().to_dict()
        for key in ("recipe", "variant"):
            data.pop(key)
        with open(save_path, "w", encoding="utf-8") as handle:
            yaml.safe_dump(data, handle, sort_keys=False)
        logger.info(f"💾 Default configuration written to {save_path}")


@dataclass
class Recipe:
    name: str
    description: str
    command: str
    base: Dict[str, Any]
    variants: List[Dict[str, Any]]


class RecipeBook:
    """Named presets; each variant is a partial override of the recipe base."""

    def __init__(self, path: Optional[str] = None):
        self.path = str(path or DEFAULT_RECIPES_PATH)
        self._recipes: Optional[Dict[str, Recipe]] = None

    def recipes(self) -> Dict[str, Recipe]:
        if self._recipes is None:
            with open(self.path, "r", encoding="utf-8") as handle:
                data = yaml.safe_load(handle) or {}
            self._recipes = {
                name: Recipe(
                    name=name,
                    description=entry.get("description", ""),
                    command=entry.get("command", "sweep"),
                    base=entry.get("base", {}),
                    variants=entry.get("variants") or [{"name": "default"}],
                )
                for name, entry in (data.get("recipes") or {}).items()
            }
        return self._recipes

    def get(self, name: str) -> Recipe:
        recipes = self.recipes()
        if name not in recipes:
            raise ConfigValidationError(
                f"unknown recipe '{name}' (available: {', '.join(sorted(recipes))})"
            )
        return recipes[name]

    def expand(self, name: str, manager: Optional[RunConfigManager] = None) -> List[RunConfig]:
        """One validated RunConfig per variant."""
        recipe = self.get(name)
        manager = manager or RunConfigManager(self.path)
        configs = []
        for variant in recipe.variants:
            overrides = {key: value for key, value in variant.items() if key != "name"}
            data = deep_merge(recipe.base, overrides)
            data["recipe"] = recipe.name
            data["variant"] = variant.get("name", "default")
            data.setdefault("experiment", f"{recipe.name}-{data['variant']}")
            configs.append(manager.build(data, source=f"{self.path}#{recipe.name}/{data['variant']}"))
        return configs


def resolve_output_dir(flag: Optional[str], config: Optional[RunConfig] = None) -> Path:
    """--out flag, then config output.directory, then the environment, then 'results'."""
    if flag:
        return Path(flag)
    if config is not None and config.output.directory:
        return Path(config.output.directory)
    return Path(os.getenv(OUTPUT_DIR_ENV) or DEFAULT_OUTPUT_DIR)


def default_log_level() -> str:
    return os.getenv(LOG_LEVEL_ENV, "WARNING").upper()


def oracle_thresholds(case: OracleCaseConfig) -> Thresholds:
    return Thresholds.uniform(case.threshold)
