"""Command-line interface for partldp."""

from __future__ import annotations

import argparse
import logging
import sys
from typing import List, Optional

import numpy as np

from .classifier import fit
from .conditions import probe
from .config import ExperimentConfig, get_thread_cap, load_config
from .distributions import MixtureDistribution, build_distribution, sample
from .experiments import run_sweep
from .export import (
    export_classifier,
    export_probe_csv,
    export_rate_csv,
    export_samples_csv,
    import_classifier,
    import_samples_csv,
)
from .models import (
    ConfigError,
    InvalidInputError,
    NumericError,
    ResourceError,
    SamplingError,
    SweepError,
    validate_eval,
)
from .partition import PartitionSpec
from .privatizer import PrivacyParams, certify, fit_private
from .risk import excess_risk_exact, excess_risk_mc
from .utils import comma_split, error_exit, print_table

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_NUMERIC = 3

COMMAND_ALIASES = {
    "s": "sample",
    "f": "fit",
    "ev": "evaluate",
    "pr": "probe",
    "sw": "sweep",
    "ldp": "ldp-check",
    "h": "help",
}


def _load(args: argparse.Namespace) -> ExperimentConfig:
    config = load_config(args.config)
    if getattr(args, "seed", None) is not None and config.sweep is not None:
        config.sweep.master_seed = args.seed
    return config


def _distribution(args: argparse.Namespace) -> MixtureDistribution:
    """The distribution named by --config, or by --kind and --delta."""
    if getattr(args, "config", None):
        return load_config(args.config).dist
    if not getattr(args, "kind", None):
        raise InvalidInputError("Need --config or --kind to choose a distribution")
    params = {} if args.delta is None else {"delta": args.delta}
    return build_distribution(args.kind, **params)


def _data_bbox(X: np.ndarray):
    lower = X.min(axis=0)
    upper = X.max(axis=0)
    flat = lower >= upper
    lower = np.where(flat, lower - 0.5, lower)
    upper = np.where(flat, upper + 0.5, upper)
    return tuple(lower.tolist()), tuple(upper.tolist())


def cmd_sample(args: argparse.Namespace) -> int:
    """Draw a labeled sample and write it as CSV."""
    dist = _distribution(args)
    data = sample(dist, args.n, 0 if args.seed is None else args.seed)
    export_samples_csv(data, args.output)
    if args.output not in (None, "-"):
        print(f"Wrote {len(data)} samples to {args.output}")
    return EXIT_OK


def cmd_fit(args: argparse.Namespace) -> int:
    """Fit a partitioning classifier from a samples CSV and dump it."""
    dist = _distribution(args) if (args.config or args.kind) else None
    if dist is not None:
        if args.classes not in (None, dist.num_classes):
            raise InvalidInputError(f"--classes {args.classes} contradicts {dist.name} ({dist.num_classes} classes)")
        data = import_samples_csv(args.samples, dist.num_classes, dist.binary)
    else:
        data = import_samples_csv(args.samples, args.classes)
    if len(data) == 0:
        raise InvalidInputError(f"No samples in {args.samples}")
    if dist is not None:
        spec = dist.partition(args.h)
    else:
        spec = PartitionSpec(args.h, *_data_bbox(data.X))
    if args.private:
        if args.alpha is None:
            raise InvalidInputError("--private needs --alpha")
        clf = fit_private(data, spec, PrivacyParams(args.alpha), 0 if args.seed is None else args.seed)
    else:
        clf = fit(data, spec)
    export_classifier(clf, args.output)
    kind = "private" if clf.private else "observable"
    print(f"Fitted {kind} classifier on {clf.n} samples, {len(clf.table)} cells, h={spec.h:g} -> {args.output}")
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    """Print error probability and excess risk of a dumped classifier."""
    clf = import_classifier(args.classifier)
    dist = _distribution(args)
    method = validate_eval(args.eval)
    if method == "exact":
        report = excess_risk_exact(clf, dist)
    else:
        report = excess_risk_mc(clf, dist, args.n_eval, 0 if args.seed is None else args.seed)
    for warning in report.warnings:
        logger.warning(warning)
    print(report.to_row())
    return EXIT_OK


def cmd_probe(args: argparse.Namespace) -> int:
    """Evaluate G*, G_h, G~_h on the configured t-grid and write the CSV."""
    config = _load(args)
    h = args.h if args.h is not None else config.probe.h
    dist = config.dist
    result = probe(dist, dist.partition(h), config.probe.t_grid)
    export_probe_csv(result, args.output or config.probe_output_path)
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    """Run the configured rate sweep and write the RateTable CSV."""
    config = _load(args)
    sweep = config.require_sweep()
    threads = args.threads or get_thread_cap()
    output = args.output or config.output_path
    try:
        table = run_sweep(sweep, threads=threads)
    except SweepError as e:
        if e.partial is not None:
            export_rate_csv(e.partial, output)
        raise
    export_rate_csv(table, output)
    return EXIT_OK


def cmd_ldp_check(args: argparse.Namespace) -> int:
    """Empirical alpha-LDP certificate for each alpha; exit 1 if any fails."""
    try:
        alphas = [float(a) for a in comma_split(args.alpha)]
    except ValueError:
        raise InvalidInputError(f"Invalid alpha list: {args.alpha}") from None
    if not alphas:
        raise InvalidInputError("Need at least one alpha")
    seed = 0 if args.seed is None else args.seed
    rows = []
    failed = False
    for alpha in alphas:
        params = PrivacyParams(alpha, scale_multiplier=args.scale_multiplier)
        cert = certify(params, args.trials, seed, num_classes=args.classes)
        failed = failed or not cert.passed
        rows.append(
            {
                "alpha": f"{alpha:g}",
                "trials": cert.trials,
                "max": f"{cert.max_abs_log_ratio:.6f}",
                "result": "pass" if cert.passed else "FAIL",
            }
        )
    print_table(rows, [("alpha", "ALPHA"), ("trials", "TRIALS"), ("max", "MAX |LOG RATIO|"), ("result", "RESULT")])
    return EXIT_CHECK_FAILED if failed else EXIT_OK


HELP_TEXTS = {
    "sample": """
SAMPLE COMMAND - Draw a labeled sample

Usage: partldp sample (--config PATH | --kind KIND [--delta D]) -n N [options]

Options:
  --config PATH            Take the distribution from a config file
  --kind KIND              example1, example2, example3, three-class
  --delta D                Shape parameter of example1/example2
  -n N                     Sample size
  -o, --output PATH        CSV output (default: stdout)
  --seed SEED              Seed (default: 0)

Examples:
  partldp sample --kind example1 --delta 1 -n 1000 -o train.csv
  partldp sample --config configs/example3.toml -n 500 --seed 7
""",
    "fit": """
FIT COMMAND - Fit a partitioning classifier

Usage: partldp fit SAMPLES --h H -o OUTPUT [options]

Options:
  --h H                    Cell side length
  --config/--kind/--delta  Use the distribution's bounding box (default: the data's)
  --classes M              Number of classes for labels 1..M (default: largest label,
                           or the distribution's; labels without -1 are never binary)
  --private --alpha A      Release every record through the Laplace mechanism first
  --seed SEED              Noise seed for --private (default: 0)

Examples:
  partldp fit train.csv --h 0.1 -o clf.bin --kind example1
  partldp fit train.csv --h 0.2 -o clf.bin --kind example1 --private --alpha 1
""",
    "evaluate": """
EVALUATE COMMAND - Risk of a fitted classifier

Usage: partldp evaluate CLASSIFIER (--config PATH | --kind KIND [--delta D]) [options]

Prints one CSV row: error_prob,excess,method,std_err,n_eval

Options:
  --eval {exact,mc}        Quadrature oracle or Monte Carlo (default: exact)
  --n-eval N               Monte Carlo draws (default: 100000)
  --seed SEED              Monte Carlo seed (default: 0)

Examples:
  partldp evaluate clf.bin --kind example1 --delta 1
  partldp evaluate clf.bin --kind example3 --eval mc --n-eval 1000000
""",
    "probe": """
PROBE COMMAND - Margin and density functionals

Usage: partldp probe CONFIG [options]

Writes t,g_star,g_h,g_tilde_h with footer lines for gamma, gamma1, gamma2,
the SDA ratio and the predicted rate exponents.

Options:
  --h H                    Override [probe] h
  -o, --output PATH        CSV output (default: [output] probe_path, else stdout)

Examples:
  partldp probe configs/example3.toml
  partldp probe configs/example2.toml --h 0.0005 -o probe.csv
""",
    "sweep": """
SWEEP COMMAND - Rate-of-convergence study

Usage: partldp sweep CONFIG [options]

Writes n,h,mean_excess,std_err,replications with # slope= and # ci= footers.

Options:
  -o, --output PATH        CSV output (default: [output] path, else stdout)
  --seed SEED              Override [sweep] master_seed
  --threads N              Worker threads (default: PARTLDP_THREADS or CPU count)

Examples:
  partldp sweep configs/example1.toml -o example1.csv
  PARTLDP_THREADS=4 partldp sweep configs/private_example1.toml
""",
    "ldp-check": """
LDP-CHECK COMMAND - Empirical local differential privacy certificate

Usage: partldp ldp-check --alpha A[,A...] [options]

Exit 0 if the largest |log-likelihood ratio| is at most alpha for every alpha.

Options:
  --alpha LIST             Comma-separated privacy budgets
  --trials N               Random record pairs (default: 10000)
  --classes M              2 for binary records, M for multi-class (default: 2)
  --scale-multiplier X     Scale the Laplace noise (miscalibration check)
  --seed SEED              Seed (default: 0)

Examples:
  partldp ldp-check --alpha 0.5,1,2
  partldp ldp-check --alpha 1 --scale-multiplier 0.5
""",
}


def show_command_help(command: str) -> None:
    """Show detailed help for a specific command."""
    command = COMMAND_ALIASES.get(command, command)
    if command in HELP_TEXTS:
        print(HELP_TEXTS[command])
    else:
        print(f"No detailed help available for command: {command}")
        print("Use 'partldp help' for general help or 'partldp COMMAND --help' for command options.")


def cmd_help(args: argparse.Namespace) -> int:
    """Show help for commands."""
    if getattr(args, "topic", None):
        show_command_help(args.topic)
        return EXIT_OK
    create_parser().print_help()
    print("\n" + "=" * 60)
    print("COMMAND ALIASES:")
    print("=" * 60)
    for alias, command in COMMAND_ALIASES.items():
        print(f"  {alias:<4} = {command}")
    print("\n" + "=" * 60)
    print("EXIT CODES:")
    print("=" * 60)
    print("  0 success, 1 check failed, 2 usage or config error, 3 numeric failure")
    return EXIT_OK


def create_parser() -> argparse.ArgumentParser:
    """Create command-line argument parser."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="Debug logging on stderr")
    common.add_argument("--seed", type=int, help="Seed (overrides the config)")

    source = argparse.ArgumentParser(add_help=False)
    source.add_argument("--config", help="Config file naming the distribution")
    source.add_argument("--kind", help="Built-in distribution kind")
    source.add_argument("--delta", type=float, help="Shape parameter for --kind")

    parser = argparse.ArgumentParser(
        prog="partldp",
        description="Partitioning classifiers with and without local differential privacy",
    )
    subparsers = parser.add_subparsers(
        dest="command",
        help="Available commands (aliases: s=sample, f=fit, ev=evaluate, pr=probe, sw=sweep, ldp=ldp-check, h=help)",
    )

    sample_parser = subparsers.add_parser("sample", parents=[common, source], help="Draw a labeled sample")
    sample_parser.add_argument("-n", type=int, required=True, help="Sample size")
    sample_parser.add_argument("-o", "--output", help="CSV output (default: stdout)")

    fit_parser = subparsers.add_parser("fit", parents=[common, source], help="Fit a classifier")
    fit_parser.add_argument("samples", help="Samples CSV (x1..xd,y)")
    fit_parser.add_argument("--h", type=float, required=True, help="Cell side length")
    fit_parser.add_argument("-o", "--output", required=True, help="Classifier dump path")
    fit_parser.add_argument("--classes", type=int, help="Number of classes for labels 1..M")
    fit_parser.add_argument("--private", action="store_true", help="Fit on privatized records")
    fit_parser.add_argument("--alpha", type=float, help="Privacy budget for --private")

    eval_parser = subparsers.add_parser("evaluate", parents=[common, source], help="Risk of a classifier")
    eval_parser.add_argument("classifier", help="Classifier dump path")
    eval_parser.add_argument("--eval", choices=["exact", "mc"], default="exact", help="Evaluation method")
    eval_parser.add_argument("--n-eval", type=int, default=100_000, help="Monte Carlo draws")

    probe_parser = subparsers.add_parser("probe", parents=[common], help="Margin and density functionals")
    probe_parser.add_argument("config", help="Config file")
    probe_parser.add_argument("--h", type=float, help="Override [probe] h")
    probe_parser.add_argument("-o", "--output", help="CSV output")

    sweep_parser = subparsers.add_parser("sweep", parents=[common], help="Rate-of-convergence sweep")
    sweep_parser.add_argument("config", help="Config file")
    sweep_parser.add_argument("-o", "--output", help="CSV output")
    sweep_parser.add_argument("--threads", type=int, help="Worker threads")

    ldp_parser = subparsers.add_parser("ldp-check", parents=[common], help="Certify alpha-LDP empirically")
    ldp_parser.add_argument("--alpha", required=True, help="Comma-separated privacy budgets")
    ldp_parser.add_argument("--trials", type=int, default=10_000, help="Record pairs per alpha")
    ldp_parser.add_argument("--classes", type=int, default=2, help="Number of classes")
    ldp_parser.add_argument("--scale-multiplier", type=float, default=1.0, help="Noise scale multiplier")

    help_parser = subparsers.add_parser("help", help="Show help")
    help_parser.add_argument("topic", nargs="?", help="Command to describe")

    return parser


COMMAND_HANDLERS = {
    "sample": cmd_sample,
    "fit": cmd_fit,
    "evaluate": cmd_evaluate,
    "probe": cmd_probe,
    "sweep": cmd_sweep,
    "ldp-check": cmd_ldp_check,
    "help": cmd_help,
}


def main(argv: Optional[List[str]] = None) -> None:
    """Main entry point."""
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0] in COMMAND_ALIASES:
        argv[0] = COMMAND_ALIASES[argv[0]]

    parser = create_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_help()
        sys.exit(EXIT_USAGE)

    logging.basicConfig(
        level=logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )

    handler = COMMAND_HANDLERS[args.command]
    try:
        code = handler(args)
    except KeyboardInterrupt:
        print("\nCancelled.", file=sys.stderr)
        sys.exit(EXIT_CHECK_FAILED)
    except (ConfigError, InvalidInputError, ResourceError) as e:
        error_exit(str(e), EXIT_USAGE)
    except (NumericError, SamplingError, SweepError) as e:
        error_exit(str(e), EXIT_NUMERIC)
    sys.exit(code)
