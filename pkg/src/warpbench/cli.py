"""Command-line entry points.

`warpbench run --config cfg.json` executes the configured pipeline and
writes a manifest; the per-stage subcommands (warp, embed-check, rlocal,
cnd, gap, distort, towers) run a single stage, optionally narrowed to one
level and one chart scale.

Exit codes: 0 success, 2 validation or usage failure, 3 a mathematical
property check failed.
"""

from __future__ import annotations

import argparse
import sys
from fractions import Fraction

from .config import load_config
from .errors import PropertyViolationError, ValidationError, WarpbenchError
from .pipeline import Runner

STAGE_COMMANDS = ("warp", "embed-check", "rlocal", "cnd", "gap", "distort",
                  "towers")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="warpbench",
        description="warped-metric workbench: build net models, compute "
                    "warped metrics, verify embedding data, measure spectra")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, with_level=True):
        p.add_argument("--config", required=True, help="experiment config JSON")
        p.add_argument("--out", help="output directory (default from config)")
        p.add_argument("--format", choices=("csv", "json"),
                       help="preferred artifact format where both exist")
        p.add_argument("--seed", type=int, help="override the model seed")
        p.add_argument("--p", type=float, help="override the norm exponent")
        if with_level:
            p.add_argument("--level", help="restrict to one cone level")
            p.add_argument("--R", type=float, help="restrict to one scale")

    add_common(sub.add_parser("run", help="run all configured stages"))
    for name in STAGE_COMMANDS:
        add_common(sub.add_parser(name, help=f"run the {name} stage"))
    return parser


def _parse_level(text: str):
    if "/" in text:
        return Fraction(text)
    try:
        return int(text)
    except ValueError:
        return float(text)


def _narrow(config, args):
    if getattr(args, "level", None) is not None:
        want = _parse_level(args.level)
        matches = [l for l in config.levels if l == want]
        if not matches:
            raise ValidationError(
                f"level {args.level} is not in the config levels "
                f"{[str(l) for l in config.levels]}")
        config.levels = matches
    if getattr(args, "R", None) is not None:
        r = int(args.R) if float(args.R).is_integer() else args.R
        matches = [x for x in config.radii if float(x) == float(r)]
        config.radii = matches or [r]
    if args.p is not None:
        config.p = int(args.p) if args.p.is_integer() else args.p
    if args.seed is not None:
        config.seeds["model"] = args.seed
    return config


def _filter_format(manifest_paths, out_dir, fmt):
    """Keep only artifacts of the requested format in the output directory."""
    if fmt is None:
        return
    keep = [n for n in manifest_paths if n.endswith("." + fmt)]
    if not keep:
        raise ValidationError(
            f"this stage produces no .{fmt} artifacts; available: "
            f"{sorted(manifest_paths)}")
    for name in manifest_paths:
        if name not in keep:
            path = out_dir / name
            if path.exists():
                path.unlink()


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config)
        config = _narrow(config, args)
        runner = Runner(config, out_dir=args.out)
        if args.command == "run":
            manifest = runner.run()
            worst = 0
            for stage in manifest.stages:
                if stage.status == "failed":
                    worst = 3 if stage.property_violation else max(worst, 2)
            print(f"run: {len(manifest.stages)} stage(s), manifest at "
                  f"{runner.out / 'manifest.json'}")
            return worst
        result = runner.run_stage(args.command)
        _filter_format(result.artifacts, runner.out, args.format)
        print(f"{args.command}: {result.status}, "
              f"{len(result.artifacts)} artifact(s) in {runner.out}")
        return 0
    except PropertyViolationError as exc:
        print(f"property violation: {exc}", file=sys.stderr)
        return 3
    except WarpbenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
