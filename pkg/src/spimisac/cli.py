"""Command line entry point: ``spimisac simulate | plot | arraygain``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .experiments.config import ConfigError, load_config, load_preset, preset_names
from .experiments.plotting import emit_plots, load_result
from .experiments.runner import WORKERS_ENV, run_arraygain_demo, run_experiment, write_arraygain_cases

__all__ = ["main", "build_parser"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spimisac", description="SPIM-ISAC wideband beamforming simulator.")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a Monte Carlo sweep and write CSV files")
    src = sim.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", help=f"built-in preset ({', '.join(preset_names())})")
    src.add_argument("--config", type=Path, help="JSON config file")
    sim.add_argument("--trials", type=int, help="override the trial count")
    sim.add_argument("--seed", type=int, help="override the seed")
    sim.add_argument("--out", type=Path, default=Path("results"), help="output directory (default: results)")
    sim.add_argument("--se-variant", choices=("paper", "derivation", "normalized"))
    sim.add_argument("--estimation", choices=("genie", "estimated"))
    sim.add_argument("--workers", type=int, help=f"worker processes (default: ${WORKERS_ENV} or 1)")
    sim.add_argument("--plot", action="store_true", help="also write SVG plots")

    plot = sub.add_parser("plot", help="write SVG plots for a results directory")
    plot.add_argument("--in", dest="in_dir", type=Path, required=True)
    plot.add_argument("--out", type=Path, help="plot directory (default: the input directory)")

    ag = sub.add_parser("arraygain", help="array gain vs direction for three carrier/bandwidth pairs")
    ag.add_argument("--out", type=Path, default=Path("arraygain"))
    return parser


def _simulate(args) -> int:
    cfg = load_preset(args.preset) if args.preset else load_config(args.config)
    overrides = {
        "trials": args.trials,
        "seed": args.seed,
        "se_variant": args.se_variant,
        "estimation": args.estimation,
    }
    cfg = cfg.replace(**{k: v for k, v in overrides.items() if v is not None})
    result = run_experiment(cfg, workers=args.workers)
    paths = result.write_csv(args.out)
    (args.out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2) + "\n", encoding="utf-8")
    if cfg.sweep.axis == "arraygain":
        paths += write_arraygain_cases(result, args.out)
    if args.plot:
        paths += emit_plots(result, args.out)
    for p in paths:
        print(p)
    return 0


def _plot(args) -> int:
    result = load_result(args.in_dir)
    for p in emit_plots(result, args.out or args.in_dir):
        print(p)
    return 0


def _arraygain(args) -> int:
    result = run_arraygain_demo()
    paths = result.write_csv(args.out) + write_arraygain_cases(result, args.out)
    (args.out / "config.json").write_text(json.dumps(result.config.to_dict(), indent=2) + "\n", encoding="utf-8")
    for p in paths:
        print(p)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"simulate": _simulate, "plot": _plot, "arraygain": _arraygain}[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
