"""
imml-lab command line.

Exit codes: 0 success, 1 some verification failed, 2 usage or input error.
"""
import argparse
import json
import os
import sys
from typing import Any, Optional, Sequence

from loguru import logger
from tabulate import tabulate

from causal_engine.adjustment import compare_with_oracle, criterion_for
from causal_engine.do_calculus import (
    DEFAULT_TOLERANCE, format_step_reports, verify_decomposition_chain, verify_joint_decomposition,
    verify_multiworld_chain,
)
from causal_engine.errors import CriterionViolated
from causal_engine.graph import d_separated
from causal_engine.io import load_graph, load_scm, save_json
from causal_engine.scm import DiscreteScm
from experiment_hub import EXPERIMENT_HUB, create_experiment
from imml_lab.config import ExperimentConfig, load_experiment_config
from imml_lab.log import setup_logging
from imml_lab.stats import significance_test
from laboratory import Laboratory, read_csv_column, save_csv

TOLERANCE_ENV = "IMML_LAB_TOLERANCE"
GRADIENT_TOLERANCE = 1e-4

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(message)


def default_tolerance() -> float:
    raw = os.environ.get(TOLERANCE_ENV)
    if not raw:
        return DEFAULT_TOLERANCE
    try:
        value = float(raw)
    except ValueError as e:
        raise UsageError(f"{TOLERANCE_ENV}={raw!r} is not a number.") from e
    if value <= 0:
        raise UsageError(f"{TOLERANCE_ENV} must be positive, got {value}.")
    return value


def emit_json(payload: Any, output: Optional[str]) -> None:
    if output:
        save_json(payload, output)
    else:
        sys.stdout.write(json.dumps(payload, ensure_ascii=False, indent=4) + "\n")


def _domain_value(scm: DiscreteScm, node: str, raw: str) -> Any:
    for value in scm.domain(node):
        if str(value) == raw:
            return value
    raise UsageError(f"Value '{raw}' is not in the domain of '{node}': {list(scm.domain(node))}")


def _experiment(args: argparse.Namespace) -> ExperimentConfig:
    if args.config and args.preset:
        raise UsageError("Pass either --config or --preset, not both.")
    if args.config:
        return load_experiment_config(args.config)
    return create_experiment(args.preset or "imml", seed=args.seed)


def _output_path(args: argparse.Namespace, filename: str) -> str:
    return os.path.join(args.output, filename)


def cmd_scm_adjust(args: argparse.Namespace) -> int:
    scm = load_scm(args.scm)
    values = [_domain_value(scm, args.x, args.x_val)] if args.x_val is not None else list(scm.domain(args.x))
    try:
        comparisons = [
            compare_with_oracle(
                scm, args.method, args.x, value, args.y, args.z, args.da,
                tolerance=args.tolerance, force=args.force, positivity=args.positivity,
            )
            for value in values
        ]
    except CriterionViolated as e:
        logger.error(str(e))
        emit_json({"method": args.method, "criterion": e.report.to_dict(), "passed": False}, args.output)
        return EXIT_FAILED
    emit_json([c.to_dict() for c in comparisons], args.output)
    rows = [(c.x_val, f"{c.max_abs_diff:.3e}", c.passed, c.adjusted.degenerate) for c in comparisons]
    logger.info("\n" + tabulate(rows, headers=[args.x, "max |diff|", "passed", "degenerate"]))
    return EXIT_OK if all(c.passed for c in comparisons) else EXIT_FAILED


def cmd_scm_verify(args: argparse.Namespace) -> int:
    scm = load_scm(args.scm)
    methods = ["backdoor", "frontdoor", "beta"] if args.method == "all" else [args.method]
    reports = {m: criterion_for(m, scm, args.x, args.y, args.z, args.da) for m in methods}
    emit_json({m: r.to_dict() for m, r in reports.items()}, args.output)
    logger.info("\n" + tabulate([(m, r.satisfied, r.reason) for m, r in reports.items()],
                                headers=["criterion", "satisfied", "reason"]))
    return EXIT_OK if all(r.satisfied for r in reports.values()) else EXIT_FAILED


def cmd_dsep(args: argparse.Namespace) -> int:
    graph = load_graph(args.graph)
    emit_json({"d_separated": d_separated(graph, args.x, args.y, args.given)}, args.output)
    return EXIT_OK


def cmd_docalc_verify(args: argparse.Namespace) -> int:
    scm = load_scm(args.scm)
    reports = []
    if args.chain in ("joint", "all"):
        reports.append(verify_joint_decomposition(scm, args.tolerance))
    if args.chain in ("decomp", "decomposition", "all"):
        reports.extend(verify_decomposition_chain(scm, args.tolerance))
    if args.chain in ("multiworld", "all"):
        reports.extend(verify_multiworld_chain(scm, args.tolerance))
    emit_json([r.to_dict() for r in reports], args.output)
    logger.info("\n" + format_step_reports(reports))
    return EXIT_OK if all(r.certified for r in reports) else EXIT_FAILED


def cmd_train(args: argparse.Namespace) -> int:
    config = _experiment(args)
    lab = Laboratory(config)
    result = lab.run(args.seed)
    save_csv(result.rows(), _output_path(args, "metrics.csv"))
    save_json(
        {"experiment": config.name, "seed": args.seed, "test_accuracy": lab.test_accuracy(result),
         "config": config.model_dump()},
        _output_path(args, "summary.json"),
    )
    return EXIT_OK


def cmd_heatmap(args: argparse.Namespace) -> int:
    lab = Laboratory(_experiment(args))
    save_csv(lab.heatmap(args.seed), _output_path(args, "heatmap.csv"))
    return EXIT_OK


def cmd_bound(args: argparse.Namespace) -> int:
    lab = Laboratory(_experiment(args))
    report = lab.bound(args.seed)
    save_json(report.to_dict(), _output_path(args, "bound.json"))
    return EXIT_OK if report.certified else EXIT_FAILED


def cmd_gradcheck(args: argparse.Namespace) -> int:
    lab = Laboratory(_experiment(args))
    worst = lab.gradient_check(points=args.points, h=args.h, seed=args.seed)
    passed = all(error < GRADIENT_TOLERANCE for error in worst.values())
    emit_json({"max_relative_error": worst, "h": args.h, "points": args.points, "passed": passed}, args.output)
    return EXIT_OK if passed else EXIT_FAILED


def cmd_ttest(args: argparse.Namespace) -> int:
    result = significance_test(
        read_csv_column(args.a, args.column), read_csv_column(args.b, args.column), raise_on_degenerate=False,
    )
    emit_json(result.to_dict(), args.output)
    return EXIT_OK


def cmd_ablation(args: argparse.Namespace) -> int:
    config = _experiment(args)
    lab = Laboratory(config)
    save_csv(lab.ablation(args.seeds or config.sweep.seeds), _output_path(args, "ablation.csv"))
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    config = _experiment(args)
    lab = Laboratory(config)
    rows, result = lab.compare(args.seeds or config.sweep.seeds, tune=not args.no_tune)
    save_csv(rows, _output_path(args, "compare.csv"))
    save_json(result.to_dict(), _output_path(args, "ttest.json"))
    return EXIT_OK


def cmd_noise(args: argparse.Namespace) -> int:
    lab = Laboratory(_experiment(args))
    save_csv(lab.noise_sweep(args.seed), _output_path(args, "noise.csv"))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="imml-lab", description="Causal adjustment verification and IMML training laboratory.")
    parser.add_argument("--log-level", default="INFO")
    parser.add_argument("--log-path", default="")
    parser.add_argument("--tolerance", type=float, default=None,
                        help=f"verification tolerance (default: ${TOLERANCE_ENV} or {DEFAULT_TOLERANCE})")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    scm = commands.add_parser("scm", help="adjustment formulas on a discrete SCM")
    scm_commands = scm.add_subparsers(dest="scm_command", required=True, parser_class=_Parser)
    for name, handler, help_text in (
        ("adjust", cmd_scm_adjust, "evaluate an adjustment formula against the interventional oracle"),
        ("verify", cmd_scm_verify, "check identification criteria"),
    ):
        sub = scm_commands.add_parser(name, help=help_text)
        sub.add_argument("--scm", required=True)
        sub.add_argument("--x", required=True)
        sub.add_argument("--y", required=True)
        sub.add_argument("--z", nargs="*", default=[])
        sub.add_argument("--da", nargs="*", default=[])
        sub.add_argument("--output", default=None)
        sub.set_defaults(handler=handler)
        if name == "adjust":
            sub.add_argument("--method", choices=["backdoor", "frontdoor", "beta"], required=True)
            sub.add_argument("--x-val", default=None)
            sub.add_argument("--force", action="store_true")
            sub.add_argument("--positivity", choices=["zero", "renormalize"], default="renormalize")
        else:
            sub.add_argument("--method", choices=["backdoor", "frontdoor", "beta", "all"], default="all")

    dsep = commands.add_parser("dsep", help="d-separation query")
    dsep.add_argument("--graph", required=True)
    dsep.add_argument("--x", nargs="+", required=True)
    dsep.add_argument("--y", nargs="+", required=True)
    dsep.add_argument("--given", nargs="*", default=[])
    dsep.add_argument("--output", default=None)
    dsep.set_defaults(handler=cmd_dsep)

    docalc = commands.add_parser("docalc", help="do-calculus derivation certification")
    docalc_commands = docalc.add_subparsers(dest="docalc_command", required=True, parser_class=_Parser)
    verify = docalc_commands.add_parser("verify")
    verify.add_argument("--scm", required=True)
    verify.add_argument("--chain", choices=["joint", "decomp", "decomposition", "multiworld", "all"], default="all")
    verify.add_argument("--output", default=None)
    verify.set_defaults(handler=cmd_docalc_verify)

    for name, handler, help_text in (
        ("train", cmd_train, "train one model and write per-epoch metrics"),
        ("heatmap", cmd_heatmap, "accuracy under random feature masking"),
        ("bound", cmd_bound, "generalization-bound components and step certificates"),
        ("gradcheck", cmd_gradcheck, "finite-difference check of the losses"),
        ("ablation", cmd_ablation, "baseline vs each added loss over seeds"),
        ("compare", cmd_compare, "baseline vs IMML over seeds with a paired t-test"),
        ("noise", cmd_noise, "accuracy under increasing test noise"),
    ):
        sub = commands.add_parser(name, help=help_text)
        sub.add_argument("--config", default=None)
        sub.add_argument("--preset", choices=sorted(EXPERIMENT_HUB), default=None)
        sub.add_argument("--seed", type=int, default=0)
        sub.set_defaults(handler=handler)
        if name == "gradcheck":
            sub.add_argument("--points", type=int, default=50)
            sub.add_argument("--h", type=float, default=1e-5)
            sub.add_argument("--output", default=None)
        else:
            sub.add_argument("--output", default="outputs")
        if name in ("ablation", "compare"):
            sub.add_argument("--seeds", type=int, nargs="+", default=None)
        if name == "compare":
            sub.add_argument("--no-tune", action="store_true")

    ttest = commands.add_parser("ttest", help="paired t-test between two metrics CSV files")
    ttest.add_argument("--a", required=True)
    ttest.add_argument("--b", required=True)
    ttest.add_argument("--column", default="accuracy")
    ttest.add_argument("--output", default=None)
    ttest.set_defaults(handler=cmd_ttest)
    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        setup_logging(args.log_level, args.log_path)
        if args.tolerance is None:
            args.tolerance = default_tolerance()
        elif args.tolerance <= 0:
            raise UsageError(f"--tolerance must be positive, got {args.tolerance}.")
        return args.handler(args)
    except ValueError as e:
        sys.stderr.write(f"imml-lab: error: {e}\n")
        return EXIT_USAGE


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
