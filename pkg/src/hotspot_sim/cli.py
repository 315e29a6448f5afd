"""Command-line interface.

Subcommands:

    simulate   sample datasets and dump them as CSV
    fit        simulate and fit the point-process models, dump fit reports
    evaluate   full pipeline, write the metric tables
    all        evaluate plus any requested optional dumps
    sanity     district-wise daily-count sanity table

Common flags: --config (path or "default"), --seed, --runs, --out,
--models, --jobs.  Unknown flags or an unreadable config exit with code 2.
"""

import argparse
import dataclasses
import json
import sys

from .experiment import (
    ExperimentConfig,
    load_config,
    resolve_out_dir,
    run_experiment,
    run_fit_only,
    run_sanity,
    run_simulate_only,
)
from .predictors import VARIANTS


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hotspot-sim",
        description="Synthetic crime simulation and hot-spot equity lab",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("simulate", "sample candidate/true/reported datasets"),
        ("fit", "fit point-process models on simulated data"),
        ("evaluate", "run the full prediction study"),
        ("all", "full study plus optional dumps"),
        ("sanity", "district-wise daily count sanity table"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", default="default",
                       help="config file path or 'default'")
        p.add_argument("--seed", type=int, default=None,
                       help="master seed override")
        p.add_argument("--runs", type=int, default=None,
                       help="number of simulation runs override")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--models", default=None,
                       help="comma list of variants, e.g. S1,S2")
        p.add_argument("--jobs", type=int, default=None,
                       help="concurrent runs")
        if name in ("all",):
            p.add_argument("--dump-datasets", action="store_true")
            p.add_argument("--dump-predictions", action="store_true")
        if name == "sanity":
            p.add_argument("--integral-step", type=int, default=7,
                           help="day stride for the intensity integrals")
    return parser


def _apply_overrides(config: ExperimentConfig, args) -> ExperimentConfig:
    sim = config.sim
    if args.seed is not None:
        sim = dataclasses.replace(sim, seed=args.seed)
    updates = {"sim": sim}
    if args.runs is not None:
        updates["runs"] = args.runs
    if args.out is not None:
        updates["out_dir"] = args.out
    if args.jobs is not None:
        updates["jobs"] = args.jobs
    if args.models is not None:
        models = tuple(m.strip() for m in args.models.split(",") if m.strip())
        bad = [m for m in models if m not in VARIANTS]
        if bad:
            raise ValueError(f"unknown model variants: {bad}")
        updates["models"] = models
    if getattr(args, "dump_datasets", False):
        updates["dump_datasets"] = True
    if getattr(args, "dump_predictions", False):
        updates["dump_predictions"] = True
    return dataclasses.replace(config, **updates)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config)
    except (OSError, json.JSONDecodeError) as exc:
        parser.exit(2, f"error: cannot read config {args.config!r}: {exc}\n"
                       f"{parser.format_usage()}")
    try:
        config = _apply_overrides(config, args)
    except ValueError as exc:
        parser.exit(2, f"error: {exc}\n{parser.format_usage()}")

    if args.command == "simulate":
        out = run_simulate_only(config)
        print(f"datasets written to {out}")
    elif args.command == "fit":
        out = run_fit_only(config)
        print(f"fit reports written to {out}")
    elif args.command in ("evaluate", "all"):
        result = run_experiment(config)
        print(f"metric tables written to {result.out_dir}")
        if result.failures:
            for f in result.failures:
                print(f"run {f.run_index} failed in {f.stage}: "
                      f"{f.error_text}", file=sys.stderr)
            print(f"{len(result.failures)} of {config.runs} runs failed",
                  file=sys.stderr)
            return 1
    elif args.command == "sanity":
        table = run_sanity(config, integral_step=args.integral_step)
        out_dir = resolve_out_dir(config)
        out_dir.mkdir(parents=True, exist_ok=True)
        table.to_csv(out_dir / "sanity.csv", index=False)
        print(table.to_string(index=False))
        print(f"sanity table written to {out_dir / 'sanity.csv'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
