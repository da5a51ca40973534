"""Command-line entry point.

Exit codes: 0 success, 1 usage or validation error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .harness import (PRESET_NAMES, ExperimentSpec, SpecError, default_workers, load_spec,
                      preset, run_calibration, run_pd_vs_snr, run_profile_experiment, run_roc,
                      run_timing, write_manifest)
from .selftest import run_selftest

OUTPUT_ENV = "SPARSE_STAP_OUTPUT"
SUBCOMMANDS = ("profile", "pd-curve", "roc", "timing", "calibrate-threshold", "selftest")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--spec", metavar="PATH", help="experiment spec JSON file")
    common.add_argument("--preset", choices=PRESET_NAMES,
                        help="start from a named preset instead of a spec file")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a spec field by dotted path, e.g. solver.beta=0.1 (repeatable)")
    common.add_argument("--seed", type=int, help="base seed (overrides base_seed in the experiment file)")
    common.add_argument("--output-dir", metavar="DIR",
                        help=f"output directory (default: ${OUTPUT_ENV}/<subcommand> if set, else output_dir from the experiment file)")
    common.add_argument("--workers", type=int, metavar="K",
                        help="maximum worker processes (default: available CPUs)")
    common.add_argument("--allow-few-trials", action="store_true",
                        help=f"permit fewer than the minimum number of Monte Carlo trials")
    common.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")

    parser = _Parser(prog="sparse-stap",
                     description="Sparse-recovery STAP with joint array gain/phase calibration.")
    parser.add_argument("--version", action="version",
                        version=json.dumps({"name": "sparse-stap", "version": __version__}))
    sub = parser.add_subparsers(dest="command", metavar="SUBCOMMAND", parser_class=_Parser)
    helps = {
        "profile": "reconstruct spatio-Doppler profiles for one realization per error case",
        "pd-curve": "probability of detection against SNR",
        "roc": "ROC curves per target Doppler",
        "timing": "wall time per solve and per iteration against dictionary size",
        "calibrate-threshold": "empirical CFAR thresholds from H0 trials",
        "selftest": "run oracle-equivalence and invariant checks",
    }
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name], description=helps[name])
    return parser


def resolve_spec(args) -> ExperimentSpec:
    if args.spec and args.preset:
        raise SpecError("give either --spec or --preset, not both")
    spec = load_spec(args.spec) if args.spec else preset(args.preset or "desk")
    if args.overrides:
        spec = spec.with_overrides(args.overrides)
    if args.seed is not None:
        spec = spec.with_overrides([f"base_seed={args.seed}"])
    return spec


def output_dir(args, spec: ExperimentSpec) -> Path:
    if args.output_dir:
        return Path(args.output_dir)
    root = os.environ.get(OUTPUT_ENV)
    if root:
        return Path(root) / args.command
    return Path(spec.output_dir)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            raise UsageError("a subcommand is required: " + ", ".join(SUBCOMMANDS))
        if args.workers is not None and args.workers < 1:
            raise UsageError("--workers must be >= 1")
        logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                            format="%(levelname)s %(name)s: %(message)s")
        spec = resolve_spec(args)
    except (UsageError, SpecError) as exc:
        print(exc, file=sys.stderr)
        return 1

    if args.command == "selftest":
        return 0 if run_selftest(seed=spec.base_seed) else 2

    out = output_dir(args, spec)
    workers = args.workers or default_workers()
    try:
        write_manifest(out, spec, args.command, {"status": "running"})
        if args.command == "profile":
            run_profile_experiment(spec, out)
        elif args.command == "pd-curve":
            run_pd_vs_snr(spec, out_dir=out, workers=workers, allow_few_trials=args.allow_few_trials)
        elif args.command == "roc":
            run_roc(spec, out_dir=out, workers=workers, allow_few_trials=args.allow_few_trials)
        elif args.command == "timing":
            run_timing(spec, out)
        elif args.command == "calibrate-threshold":
            run_calibration(spec, out, workers=workers)
    except SpecError as exc:
        write_manifest(out, spec, args.command, {"status": "invalid", "error": str(exc)})
        print(f"sparse-stap: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        write_manifest(out, spec, args.command, {"status": "failed", "error": repr(exc)})
        print(f"sparse-stap: runtime failure: {exc!r}", file=sys.stderr)
        return 2
    write_manifest(out, spec, args.command, {"status": "complete"})
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
