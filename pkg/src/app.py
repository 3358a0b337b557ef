"""
Command-line front end for the sequential multiple testing toolkit.

Subcommands: calibrate, sweep, are, oracle, list-recipes. Configurations come
from a YAML file (--config) or a named recipe (--recipe); results are written
as CSV tables with a metadata header and JSON sidecars under --out.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

from .services.config_service import (
    RecipeBook,
    RunConfig,
    RunConfigManager,
    default_log_level,
    oracle_thresholds,
    resolve_output_dir,
)
from .services.reporting_service import format_table, library_versions, run_metadata, write_csv, write_json
from .services.run_logging_service import LogCategory, run_logger
from .services.sequential.calibration import calibrate_analytic, calibrate_monte_carlo
from .services.sequential.composite import composite_decision_times, composite_fwe_grid, martingale_mean
from .services.sequential.errors import (
    AcceptanceFailure,
    ConfigValidationError,
    SequentialTestingError,
)
from .services.sequential.interfaces import ErrorType, PriorBounds, ProcedureKind, SignalConfig
from .services.sequential.model_factory import StreamModelFactory, StreamModelType, describe_models
from .services.sequential.oracle import OracleCase, oracle_check
from .services.sequential.simulation import SweepSpec, check_sweeps, efficiency_rows, run_sweep, slope_rows
from .services.sequential.stream_models import BernoulliModel
from .services.sequential.theory_metrics import are_table, format_number, kl_table

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME = 2
AUDIT_REPLICATIONS = 1000


class _Parser(argparse.ArgumentParser):
    """Bad flags are validation errors (exit 1)."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(ConfigValidationError.exit_code, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    source = common.add_mutually_exclusive_group()
    source.add_argument("--config", help="YAML run configuration")
    source.add_argument("--recipe", help="named preset from config/recipes.yaml")
    common.add_argument("--seed", type=int, help="master seed (overrides the configuration)")
    common.add_argument("--threads", type=int, help="worker processes; never changes results")
    common.add_argument("--out", help="output directory")
    common.add_argument("--allow-partial", action="store_true",
                        help="keep going when replications reach the horizon")
    common.add_argument("--recipes-file", help=argparse.SUPPRESS)
    common.add_argument("--log-level", default=None, help="logging level (default from MULTISTREAM_LOG_LEVEL)")

    parser = _Parser(prog="multistream", description=__doc__.strip().splitlines()[0])
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    commands.add_parser("calibrate", parents=[common], help="thresholds for (alpha, beta) targets")
    commands.add_parser("sweep", parents=[common], help="decision-time curves over a threshold grid")
    commands.add_parser("are", parents=[common], help="asymptotic relative efficiency tables")
    commands.add_parser("oracle", parents=[common], help="exact Bernoulli enumeration against Monte Carlo")
    commands.add_parser("list-recipes", parents=[common], help="show the available recipes")
    return parser


def load_run_configs(args: argparse.Namespace) -> List[RunConfig]:
    if args.recipe:
        configs = RecipeBook(args.recipes_file).expand(args.recipe)
    elif args.config:
        configs = [RunConfigManager(args.config).load_config()]
    else:
        raise ConfigValidationError("either --config or --recipe is required")

    for config in configs:
        if args.seed is not None:
            if args.seed < 0 or args.seed >= 2 ** 64:
                raise ConfigValidationError(f"--seed must be an unsigned 64-bit integer, got {args.seed}")
            config.seed = args.seed
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigValidationError(f"--threads must be at least 1, got {args.threads}")
            config.workers = args.threads
        if args.allow_partial:
            config.allow_partial = True
    return configs


def _metadata(config: RunConfig, command: str, **extra) -> Dict:
    return run_metadata(config.seed, config.config_hash(), config.recipe, config.variant,
                        command=command, **extra)


def _write_table(config: RunConfig, path: Path, rows: List[Dict], metadata: Dict) -> None:
    if config.output.csv:
        write_csv(path, rows, metadata)
    else:
        logger.debug(f"⏭️ output.csv is off, skipping {path.name}")


def _write_sidecar(config: RunConfig, path: Path, payload: Dict) -> None:
    if config.output.json:
        write_json(path, payload)
    else:
        logger.debug(f"⏭️ output.json is off, skipping {path.name}")


def _priors(config: RunConfig) -> List[tuple]:
    """(prior, configurations) groups; known-count priors give one group per configuration."""
    if config.prior.known:
        return [(config.prior_bounds(signals), [signals]) for signals in config.signal_configs()]
    return [(config.prior_bounds(), config.signal_configs() or config.calibration.representatives)]


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_calibrate(config: RunConfig, out_dir: Path) -> int:
    targets = config.error_targets()
    results = []
    models = None
    if config.calibration.method == "monte_carlo":
        models = StreamModelFactory.create_models(config.models)

    for prior, representatives in _priors(config):
        for kind in config.procedure_kinds():
            with run_logger.track_operation(LogCategory.CALIBRATION, "calibrate",
                                            {"procedure": kind.value, "prior": prior.to_dict()}) as extra:
                if models is None:
                    result = calibrate_analytic(kind, targets, prior)
                else:
                    result = calibrate_monte_carlo(
                        kind, models, prior, targets,
                        replications=config.calibration.replications, seed=config.seed,
                        tolerance=config.calibration.tolerance,
                        max_iterations=config.calibration.max_iterations,
                        representatives=representatives, proposal=config.calibration.proposal,
                        horizon=config.horizon, workers=config.workers,
                    )
                extra["thresholds"] = result.thresholds.to_dict()
            results.append(result)

    _write_sidecar(config, out_dir / "calibration.json", {
        "metadata": _metadata(config, "calibrate"),
        "results": [result.to_dict() for result in results],
    })
    rows = [dict(procedure=result.kind.value, l=result.prior.l, u=result.prior.u,
                 method=result.method.value, **result.thresholds.to_dict()) for result in results]
    print(format_table(rows, ["procedure", "l", "u", "method", "a", "b", "c", "d"]))
    return EXIT_OK


def _composite_sweep(config: RunConfig, out_dir: Path) -> int:
    models = StreamModelFactory.create_composite_models(config.models)
    targets = config.error_targets()
    rows, time_rows, martingale_rows = [], [], []
    for prior, signal_configs in _priors(config):
        if isinstance(signal_configs, str):
            raise ConfigValidationError("signals: composite sweeps need explicit signal configurations")
        for signals in signal_configs:
            for kind in config.procedure_kinds():
                thresholds = calibrate_analytic(kind, targets, prior).thresholds
                for error_type in (ErrorType.TYPE_I, ErrorType.TYPE_II):
                    side = signals.noise if error_type is ErrorType.TYPE_I else signals.signals
                    if not side:
                        continue
                    with run_logger.track_operation(LogCategory.COMPOSITE, "composite_grid", {
                        "procedure": kind.value, "config_id": signals.config_id, "error_type": int(error_type),
                    }) as extra:
                        grid = composite_fwe_grid(kind, models, signals, thresholds, prior,
                                                  config.composite.replications, config.seed,
                                                  points=config.composite.points, error_type=error_type,
                                                  horizon=config.horizon, workers=config.workers)
                        extra["worst"] = grid.worst.value
                    for theta, report in grid.reports:
                        rows.append({
                            "procedure": kind.value, "config_id": signals.config_id,
                            "theta": " ".join(format_number(value) for value in theta),
                            "metric": report.metric.value, "value": report.value, "std_error": report.std_error,
                        })
                theta = [float(model.parameter_grid("alt" if signals.is_signal(k) else "null", 3)[1])
                         for k, model in enumerate(models)]
                means, errors = composite_decision_times(kind, models, theta, thresholds, prior,
                                                         config.composite.replications, config.seed,
                                                         horizon=config.horizon, workers=config.workers)
                row = {"procedure": kind.value, "config_id": signals.config_id}
                for k in range(len(models)):
                    row[f"mean_t{k + 1}"] = float(means[k])
                    row[f"se_t{k + 1}"] = float(errors[k])
                time_rows.append(row)

    model = models[0]
    for theta in (*model.null_space, *model.alt_space):
        means = martingale_mean(model, theta, config.composite.checkpoints,
                                config.composite.replications, config.seed, workers=config.workers)
        for n, (mean, std_error) in means.items():
            martingale_rows.append({"theta": theta, "n": n, "mean": mean, "std_error": std_error})

    metadata = _metadata(config, "sweep")
    _write_table(config, out_dir / "composite_errors.csv", rows, metadata)
    _write_table(config, out_dir / "composite_times.csv", time_rows, metadata)
    _write_table(config, out_dir / "martingale.csv", martingale_rows, metadata)
    return EXIT_OK


def cmd_sweep(config: RunConfig, out_dir: Path) -> int:
    if config.models.kind == StreamModelType.COMPOSITE_GAUSSIAN.value:
        return _composite_sweep(config, out_dir)
    grid = config.grid.resolved()
    if not grid:
        raise ConfigValidationError("grid: sweeps need a threshold grid (values or start/stop)")
    models = StreamModelFactory.create_models(config.models)

    results = []
    for prior, configs in _priors(config):
        spec = SweepSpec(
            kinds=config.procedure_kinds(), models=models, prior=prior, grid=grid, configs=configs,
            replications=config.replications, max_replications=config.max_replications,
            seed=config.seed, horizon=config.horizon,
            workers=config.workers, proposal=config.calibration.proposal,
            allow_partial=config.allow_partial,
        )
        with run_logger.track_operation(LogCategory.SWEEP, "sweep",
                                        {"prior": prior.to_dict(), "grid": grid}) as extra:
            result = run_sweep(spec)
            extra["curves"] = len(result.curves)
        results.append(result)

    with run_logger.track_operation(LogCategory.SWEEP, "checks", {"sweeps": len(results)}) as extra:
        checks = check_sweeps(results, audit_replications=min(config.replications, AUDIT_REPLICATIONS))
        extra["verdict"] = "PASS" if checks.passed else "FAIL"

    rows = [row for result in results for row in result.rows()]
    metadata = _metadata(config, "sweep")
    _write_table(config, out_dir / "sweep.csv", rows, metadata)
    _write_table(config, out_dir / "efficiency.csv",
                 [row for result in results for row in efficiency_rows(result)], metadata)
    _write_table(config, out_dir / "slopes.csv",
                 [row for result in results for row in slope_rows(result)], metadata)
    _write_sidecar(config, out_dir / "sweep.json", {
        "metadata": metadata,
        "config": config.to_dict(),
        "grid": grid,
        "models": describe_models(models),
        "versions": library_versions(),
    })
    _write_sidecar(config, out_dir / "checks.json", {"metadata": metadata, **checks.to_dict()})

    print(f"✅ {len(rows)} curve points written to {out_dir}")
    verdict = "PASS" if checks.passed else "FAIL"
    print(f"{verdict}  {len(checks.checks)} checks, {len(checks.failures())} failed")
    for check in checks.failures():
        print(f"      failed: {check.name} ({check.subject})")
    checks.raise_for_failure()
    return EXIT_OK


def cmd_are(config: RunConfig, out_dir: Path) -> int:
    models = StreamModelFactory.create_models(config.models)
    kls = kl_table(models, exact=True)
    prior = None if config.prior.known else config.prior_bounds()
    configs = config.signal_configs()
    if not configs:
        configs = list(prior.configurations())

    kl_text = " ".join(f"({format_number(I)},{format_number(J)})" for I, J in kls)
    for kind in config.are.kinds:
        table = are_table(configs, kls, kind, prior, r=config.are.r)
        metadata = _metadata(
            config, "are", kind=kind,
            l="known" if prior is None else prior.l,
            u="known" if prior is None else prior.u,
            r=table.r,
            kl=kl_text,
        )
        rows = table.as_rows()
        _write_table(config, out_dir / f"are_{kind}.csv", rows, metadata)
        run_logger.log_event(LogCategory.ARE, "table", f"ARE {kind} table", data={"rows": len(rows)})
        print(f"ARE ({kind}, {table.prior_label})")
        print(format_table(rows, list(rows[0].keys())))
    return EXIT_OK


def _oracle_cases(config: RunConfig) -> List[OracleCase]:
    cases = []
    for case in config.oracle.cases:
        models = [BernoulliModel(case.p0, case.p1) for _ in range(case.K)]
        u = case.K if case.u is None else case.u
        cases.append(OracleCase(
            name=case.name, models=models, kind=ProcedureKind(case.procedure),
            config=SignalConfig.from_labels(case.signals, case.K),
            thresholds=oracle_thresholds(case),
            prior=PriorBounds(case.l, u, case.K), depth=case.depth,
        ))
    return cases


def cmd_oracle(config: RunConfig, out_dir: Path) -> int:
    cases = _oracle_cases(config)
    if not cases:
        raise ConfigValidationError("oracle.cases: at least one case is required")
    reports = []
    for case in cases:
        with run_logger.track_operation(LogCategory.ORACLE, "oracle", {"case": case.name}) as extra:
            report = oracle_check(case, config.oracle.replications, config.seed, horizon=config.horizon,
                                  sigma_limit=config.oracle.sigma_limit, workers=config.workers)
            extra["verdict"] = "PASS" if report.passed else "FAIL"
        for warning in report.warnings:
            logger.warning(f"⚠️ {case.name}: {warning}")
        reports.append(report)

    rows = [dict(case=report.case, **check.to_dict()) for report in reports for check in report.checks]
    metadata = _metadata(config, "oracle")
    _write_table(config, out_dir / "oracle.csv", rows, metadata)
    _write_sidecar(config, out_dir / "oracle.json", {"metadata": metadata, "reports": [report.to_dict() for report in reports]})
    for report in reports:
        verdict = "PASS" if report.passed else "FAIL"
        print(f"{verdict}  {report.case}  residual={report.residual_mass:.3g}")
        for warning in report.warnings:
            print(f"      warning: {warning}")
    for report in reports:
        report.raise_for_failure()
    return EXIT_OK


def cmd_list_recipes(args: argparse.Namespace) -> int:
    for name, recipe in sorted(RecipeBook(args.recipes_file).recipes().items()):
        variants = ", ".join(variant.get("name", "default") for variant in recipe.variants)
        print(f"{name:<22} {recipe.command:<10} {recipe.description} [{variants}]")
    return EXIT_OK


COMMANDS: Dict[str, Callable[[RunConfig, Path], int]] = {
    "calibrate": cmd_calibrate,
    "sweep": cmd_sweep,
    "are": cmd_are,
    "oracle": cmd_oracle,
}


def run(args: argparse.Namespace) -> int:
    if args.command == "list-recipes":
        return cmd_list_recipes(args)
    configs = load_run_configs(args)
    command = COMMANDS[args.command]
    for config in configs:
        out_dir = resolve_output_dir(args.out, config) / config.experiment
        out_dir.mkdir(parents=True, exist_ok=True)
        run_logger.configure(out_dir, config.experiment)
        run_logger.log_config(config.config_hash(), args.config or f"recipe:{config.recipe}",
                              data={"command": args.command, "variant": config.variant})
        logger.info(f"🚀 {args.command} {config.experiment} -> {out_dir}")
        command(config, out_dir)
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=(args.log_level or default_log_level()).upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except SequentialTestingError as exc:
        run_logger.log_error(exc, args.command)
        label = "acceptance failure" if isinstance(exc, AcceptanceFailure) else type(exc).__name__
        print(f"❌ {label}: {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:
        run_logger.log_error(exc, args.command)
        logger.exception("Unexpected failure")
        print(f"❌ {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
