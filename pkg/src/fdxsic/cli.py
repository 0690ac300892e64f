"""Command-line front end: ``fdxsic <subcommand> [options]``."""

from __future__ import annotations

import argparse
import logging
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import Any

from . import __version__
from .config import (
    PRESET_NAMES,
    ScenarioConfig,
    apply_overrides,
    load_presets,
    read_manifest,
    scenario_document,
    split_document,
    write_manifest,
)
from .errors import ConfigError, FdxsicError, UnwritableOutputError, UsageError
from .harness import (
    ExperimentPlan,
    plan_document,
    plan_from_document,
    run_ber,
    run_beampatterns,
    run_neuron_sweep,
    run_relu_collapse,
    run_scenarios,
    run_training,
    write_ber_csv,
    write_collapse_csv,
    write_history_csv,
    write_pattern_csv,
    write_sweep_csv,
    write_table1_csv,
)
from .neuralnet import save_model

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2

DEFAULT_SCENARIO = "epa"
DEFAULT_WIDTHS = "1:10"
PATTERN_METHODS = ["conventional", "mvdr", "lcmv_oracle"]
SUBCOMMANDS = ("ber", "beampattern", "sweep-neurons", "scenarios", "train", "relu-collapse")


def _seed(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"invalid seed {text!r}") from exc
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {value}")
    return value


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"invalid integer {text!r}") from exc
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"invalid number list {text!r}") from exc


def _name_list(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def parse_widths(text: str) -> list[int]:
    """``"1:10"`` (inclusive range) or ``"1,2,4"``."""
    try:
        if ":" in text:
            lo, hi = (int(v) for v in text.split(":", 1))
            widths = list(range(lo, hi + 1))
        else:
            widths = [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"--widths: cannot parse {text!r}") from exc
    if not widths:
        raise UsageError(f"--widths: {text!r} gives no widths")
    if any(w < 1 for w in widths):
        raise UsageError(f"--widths: widths must be >= 1, got {text!r}")
    return widths


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fdxsic",
        description="Self-interference cancellation experiments for full-duplex arrays",
    )
    parser.add_argument("--version", action="version", version=f"fdxsic {__version__}")
    parser.add_argument(
        "--log-level",
        default="WARNING",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="logging threshold (default: WARNING)",
    )
    parser.add_argument(
        "-v", "--verbose", action="store_true", help="shortcut for --log-level INFO"
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="SUBCOMMAND")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, default=Path("."), help="output directory")
    common.add_argument("--seed", type=_seed, default=None, help="master seed (default: 1)")
    common.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a scenario.*, array.*, frame.* or plan.* key (repeatable)",
    )
    common.add_argument(
        "--manifest", type=Path, default=None, help="re-run from a manifest.toon"
    )
    common.add_argument(
        "--threads", type=_positive_int, default=None, help="worker threads (default: FDXSIC_THREADS or CPU count)"
    )

    scenario = argparse.ArgumentParser(add_help=False)
    scenario.add_argument(
        "--scenario",
        default=None,
        help=f"preset ({', '.join(PRESET_NAMES)}) or scenario file (default: {DEFAULT_SCENARIO})",
    )

    snr = argparse.ArgumentParser(add_help=False)
    snr.add_argument("--snr", type=_float_list, default=None, help="comma list of SNRs in dB")
    snr.add_argument("--blocks", type=_positive_int, default=None, help="blocks per SNR point")

    ber = sub.add_parser("ber", parents=[common, scenario, snr], help="BER versus SNR")
    ber.add_argument("--methods", type=_name_list, default=None, help="comma list of methods")
    ber.add_argument(
        "--per-block", action="store_true", help="train the equalizer on every block's pilots"
    )

    pattern = sub.add_parser(
        "beampattern", parents=[common, scenario], help="beam patterns on a 1-degree grid"
    )
    pattern.add_argument(
        "--methods", type=_name_list, default=None, help="comma list of beamformers"
    )

    sweep = sub.add_parser(
        "sweep-neurons", parents=[common, scenario, snr], help="validation MSE versus width"
    )
    sweep.add_argument("--widths", default=None, help=f"range lo:hi or list (default: {DEFAULT_WIDTHS})")

    sub.add_parser("scenarios", parents=[common], help="training report for every preset")

    train = sub.add_parser("train", parents=[common, scenario, snr], help="train and save an equalizer")
    train.add_argument("--model", type=Path, default=None, help="model file (default: OUT/model.toon)")

    sub.add_parser(
        "relu-collapse", parents=[common, scenario, snr], help="sigmoid versus ReLU decisions"
    )
    return parser


def _configure_logging(args: argparse.Namespace) -> None:
    level = logging.INFO if args.verbose and args.log_level == "WARNING" else args.log_level
    logging.basicConfig(
        level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr
    )


def _cli_plan_keys(args: argparse.Namespace) -> dict[str, Any]:
    keys: dict[str, Any] = {}
    if getattr(args, "snr", None) is not None:
        keys["plan.snr_db"] = args.snr
    if getattr(args, "blocks", None) is not None:
        keys["plan.blocks"] = args.blocks
    if getattr(args, "methods", None) is not None:
        keys["plan.methods"] = args.methods
    elif args.command == "beampattern":
        keys["plan.methods"] = PATTERN_METHODS
    if getattr(args, "per_block", False):
        keys["plan.per_block_training"] = True
    if args.command == "sweep-neurons":
        keys["plan.widths"] = parse_widths(args.widths or DEFAULT_WIDTHS)
    return keys


def resolve(args: argparse.Namespace) -> tuple[int, dict[str, Any]]:
    """Seed and flat document for the run, from a manifest or from the flags."""
    if args.manifest is not None:
        given = [
            flag
            for flag, attr in (
                ("--scenario", "scenario"),
                ("--seed", "seed"),
                ("--snr", "snr"),
                ("--blocks", "blocks"),
                ("--methods", "methods"),
                ("--widths", "widths"),
            )
            if getattr(args, attr, None) is not None
        ]
        if given:
            raise UsageError(f"--manifest cannot be combined with {', '.join(given)}")
        manifest = read_manifest(args.manifest)
        if manifest.subcommand != args.command:
            raise UsageError(
                f"--manifest was written by '{manifest.subcommand}', not '{args.command}'"
            )
        seed, document = manifest.seed, manifest.document
    else:
        seed = 1 if args.seed is None else args.seed
        document = {}
        if args.command != "scenarios":
            document.update(scenario_document(args.scenario or DEFAULT_SCENARIO))
        document.update(plan_document(ExperimentPlan(config=load_presets(["epa"])[0])))
        document.update(_cli_plan_keys(args))
    return seed, apply_overrides(document, args.overrides)


def _build_plan(
    args: argparse.Namespace, seed: int, document: dict[str, Any]
) -> ExperimentPlan:
    scenario_keys, plan_keys = split_document(document)
    config = (
        load_presets(["epa"])[0]
        if args.command == "scenarios"
        else ScenarioConfig.from_document(scenario_keys)
    )
    try:
        return plan_from_document(config, plan_keys, seed=seed, threads=args.threads)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _prepare_out(out: Path) -> Path:
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UnwritableOutputError(f"Cannot create {out}: {exc.strerror or exc}") from exc
    return out


def _dispatch(args: argparse.Namespace) -> None:
    seed, document = resolve(args)
    plan = _build_plan(args, seed, document)
    out = _prepare_out(args.out)

    if args.command == "ber":
        written = write_ber_csv(run_ber(plan), out / "ber.csv")
    elif args.command == "beampattern":
        curves = run_beampatterns(
            plan.config, plan.methods, seed=seed, drop_ratio=plan.drop_ratio
        )
        written = write_pattern_csv(curves, out / "pattern.csv")
    elif args.command == "sweep-neurons":
        widths = [int(w) for w in document["plan.widths"]]
        written = write_sweep_csv(run_neuron_sweep(plan, widths), out / "sweep.csv")
    elif args.command == "scenarios":
        written = write_table1_csv(run_scenarios(load_presets(), plan), out / "table1.csv")
    elif args.command == "train":
        params, report = run_training(plan)
        model_path = args.model or out / "model.toon"
        try:
            save_model(params, model_path)
        except OSError as exc:
            raise UnwritableOutputError(
                f"Cannot write {model_path}: {exc.strerror or exc}"
            ) from exc
        written = write_history_csv(report, out / "train.csv")
    else:
        written = write_collapse_csv(run_relu_collapse(plan), out / "collapse.csv")

    manifest_doc = dict(document)
    manifest_doc.update(plan_document(plan))
    try:
        write_manifest(out, args.command, seed, __version__, manifest_doc)
    except OSError as exc:
        raise UnwritableOutputError(f"Cannot write manifest in {out}: {exc}") from exc
    logger.info("Wrote %s", written)


def parse_and_dispatch(argv: Sequence[str] | None = None) -> int:
    """Run one subcommand; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    _configure_logging(args)

    try:
        _dispatch(args)
    except (UsageError, ConfigError) as exc:
        print(f"fdxsic {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FdxsicError as exc:
        print(f"fdxsic {args.command}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def main() -> None:
    sys.exit(parse_and_dispatch())


if __name__ == "__main__":
    main()
