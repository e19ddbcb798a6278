"""
Command Line Module

Entry point of the ``gpeps`` console script. Subcommands load one YAML
experiment config, run a workflow and write CSV tables plus ``results.json``
to the output directory.

Exit codes: 0 pass, 1 check failure, 2 config error, 3 numerical error.
"""

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path
from typing import List, Optional, Sequence

from apps.backend import workflows
from apps.backend.core.config import ExperimentConfig, apply_overrides, load_config
from apps.backend.core.errors import NUMERICAL_ERRORS, ConfigError
from apps.backend.monitoring.log import configure_logging, get_logger
from apps.backend.monitoring.monitoring import write_csv

log = get_logger(__name__)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG_ERROR = 2
EXIT_NUMERICAL_ERROR = 3

TABLE_COLUMNS = {
    "converge": workflows.CONVERGE_COLUMNS,
    "spectrum": workflows.SPECTRUM_COLUMNS,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gpeps", description="Fermionic Gaussian PEPS engine")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="Experiment config (YAML)")
    common.add_argument("--out", help="Output directory (overrides output.dir)")
    common.add_argument("--workers", type=int, help="Parallel workers for independent points")
    common.add_argument("--seed", type=int, help="Random seed")
    common.add_argument("--tol", action="append", default=[], metavar="NAME=VALUE",
                        help="Override a tolerance; may be repeated")
    common.add_argument("--log-level", default="INFO", help="Logging level")
    common.add_argument("--plain-logs", action="store_true", help="Plain-text instead of JSON logs")

    sub = parser.add_subparsers(dest="command", required=True)
    verify = sub.add_parser("verify", parents=[common], help="Run the verification suites")
    verify.add_argument("--suite", action="append", choices=list(workflows.VERIFY_SUITES),
                        help="Restrict to the named suites")
    sub.add_parser("converge", parents=[common], help="Exact-construction convergence sweep")
    build = sub.add_parser("build", parents=[common], help="Write the configured state to a state file")
    build.add_argument("--covariance", action="store_true", help="Also store the covariance matrix")
    sub.add_parser("spectrum", parents=[common], help="BdG excitation energies to CSV")
    rotate = sub.add_parser("rotate-check", parents=[common], help="Residuals of a state file")
    rotate.add_argument("state", type=Path, help="State file to check")
    rotate.add_argument("--kind", choices=["d2", "staggered_d3", "spinhalf"], help="Rotation to apply")
    return parser


def _load(args: argparse.Namespace) -> ExperimentConfig:
    config = load_config(args.config) if args.config else ExperimentConfig()
    config = apply_overrides(config, tolerances=args.tol, seed=args.seed, workers=args.workers, out_dir=args.out)
    if getattr(args, "covariance", False):
        config = config.model_copy(update={"output": config.output.model_copy(update={"covariance": True})})
    return config


def _run(args: argparse.Namespace, config: ExperimentConfig) -> workflows.RunOutcome:
    if args.command == "verify":
        return workflows.cmd_verify(config, args.suite)
    if args.command == "converge":
        return workflows.cmd_converge(config)
    if args.command == "build":
        return workflows.cmd_build(config)
    if args.command == "spectrum":
        return workflows.cmd_spectrum(config)
    return workflows.cmd_rotate_check(config, str(args.state), args.kind)


def write_outcome(outcome: workflows.RunOutcome, out_dir: Path) -> Path:
    """Write the outcome's tables as CSV and everything else to results.json."""
    out_dir.mkdir(parents=True, exist_ok=True)
    tables = {}
    for name, frame in outcome.tables.items():
        path = write_csv(frame, out_dir / f"{name}.csv", columns=TABLE_COLUMNS.get(name))
        tables[name] = str(path)
    payload = {
        "command": outcome.command,
        "config_hash": outcome.config_hash,
        "passed": outcome.passed,
        "failures": outcome.failures,
        "records": [asdict(r) for r in outcome.records],
        "tables": tables,
        "artifacts": outcome.artifacts,
        "summary": outcome.summary,
    }
    path = out_dir / "results.json"
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=str), encoding="utf-8")
    return path


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run the command line and return its exit code."""
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level, json_output=not args.plain_logs)
    try:
        config = _load(args)
        outcome = _run(args, config)
        write_outcome(outcome, Path(config.output.dir))
    except ConfigError as e:
        log.error("Invalid configuration", error=str(e))
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except NUMERICAL_ERRORS as e:
        log.error("Numerical failure", error=str(e), kind=type(e).__name__, details=e.details)
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_NUMERICAL_ERROR

    if not outcome.passed:
        failures: List[str] = outcome.failures
        print("failed checks: " + ", ".join(failures), file=sys.stderr)
        return EXIT_CHECK_FAILED
    log.info("Command finished", command=args.command, records=len(outcome.records))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
