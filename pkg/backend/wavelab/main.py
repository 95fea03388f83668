"""WaveLab: command-line entry point.

    python -m wavelab.main <kind> [--config PATH] [--out DIR] [--seed N]
                                  [--eps-override LIST] [--grid-override N1xN2] [--quiet]
    python -m wavelab.main validate --config PATH

Exit status: 0 all gates passed, 1 a gate failed, 2 invalid configuration,
3 the experiment raised an error.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from wavelab import __version__, cli_runner
from wavelab.errors import ConfigInvalid, LabError
from wavelab.models import EXPERIMENT_KINDS
from wavelab.settings import LOG_LEVEL

EXIT_OK, EXIT_GATES, EXIT_CONFIG, EXIT_ERROR = 0, 1, 2, 3


def _parse_eps(text: str) -> List[Any]:
    values: List[Any] = []
    for part in text.split(","):
        part = part.strip()
        try:
            values.append(float(part))
        except ValueError:
            values.append(part)
    return values


def _parse_grid(text: str) -> Dict[str, Any]:
    n1, sep, n2 = text.lower().partition("x")
    if not sep or not n1.strip().isdigit() or not n2.strip().isdigit():
        raise ConfigInvalid([f"grid: override {text!r} is not of the form N1xN2"])
    return {"n1": int(n1), "n2": int(n2)}


def build_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    overrides: Dict[str, Any] = {"kind": args.kind}
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.eps_override is not None:
        overrides["eps"] = _parse_eps(args.eps_override)
    if args.grid_override is not None:
        overrides["grid"] = _parse_grid(args.grid_override)
    return overrides


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", type=Path, help="TOML experiment configuration")
    parser.add_argument("--out", help="output directory (a <kind>/ folder is created inside)")
    parser.add_argument("--seed", type=int, help="root seed of the random streams")
    parser.add_argument("--eps-override", help="comma-separated eps values, e.g. 0.1,0.05")
    parser.add_argument("--grid-override", help="grid size as N1xN2, e.g. 48x48")
    parser.add_argument("--quiet", action="store_true", help="only warnings and the final status line")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wavelab", description="Semiclassical rotating shallow-water lab")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for kind in EXPERIMENT_KINDS:
        _add_common(subparsers.add_parser(kind, help=f"run the {kind} experiment"))
    check = subparsers.add_parser("validate", help="check a configuration file and print the parsed result")
    check.add_argument("--config", type=Path, required=True)
    return parser


def _read_config(path: Optional[Path]) -> str:
    if path is None:
        return ""
    try:
        return path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigInvalid([f"config: cannot read {path}: {e.strerror}"]) from e


def _configure_logging(quiet: bool):
    level = logging.WARNING if quiet else getattr(logging, LOG_LEVEL.upper(), logging.INFO)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def _validate_command(args: argparse.Namespace) -> int:
    result = cli_runner.validate(_read_config(args.config))
    if isinstance(result, list):
        for message in result:
            print(f"❌ {message}")
        return EXIT_CONFIG
    print(f"✅ {args.config} is a valid {result.kind} configuration")
    print(result.model_dump_json(indent=2))
    return EXIT_OK


def _run_command(args: argparse.Namespace) -> int:
    text = _read_config(args.config)
    overrides = build_overrides(args)
    result = cli_runner.validate(text, overrides)
    if isinstance(result, list):
        raise ConfigInvalid(result)
    summary = cli_runner.execute(result)
    out_dir = Path(result.out_dir) / result.kind
    if summary.passed:
        print(f"✅ {result.kind}: all {len(summary.gates)} gate(s) passed ({out_dir})")
        return EXIT_OK
    failed = [gate for gate in summary.gates if not gate.passed]
    for gate in failed:
        print(f"❌ {gate.name}: {gate.value:.6g} (needs {gate.comparison} {gate.threshold:g})")
    print(f"❌ {result.kind}: {len(failed)} of {len(summary.gates)} gate(s) failed ({out_dir})")
    return EXIT_GATES


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    _configure_logging(getattr(args, "quiet", False))
    try:
        if args.command == "validate":
            return _validate_command(args)
        args.kind = args.command
        return _run_command(args)
    except ConfigInvalid as e:
        for message in e.errors:
            print(f"❌ {message}")
        return EXIT_CONFIG
    except LabError as e:
        print(f"❌ {e.detail}")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
