"""Command-line entry point: ``simprior {train-upn,build-prior,search,report,run}``."""
from __future__ import annotations

import argparse
import logging
import sys

from simprior import config as _config
from simprior import harness
from simprior._backend import BACKEND
from simprior.config import METHODS, PRESETS


def _load_config(args) -> _config.ExperimentConfig:
    if args.config:
        return _config.load(args.config)
    return PRESETS[args.preset]()


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="simprior", description="Simulator-prior policy search experiments.")
    p.add_argument("-v", "--verbose", action="store_true", help="log per-trial progress")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help_text, config=True):
        sp = sub.add_parser(name, help=help_text)
        if config:
            g = sp.add_mutually_exclusive_group()
            g.add_argument("--config", help="JSON experiment config (defaults apply to missing keys)")
            g.add_argument("--preset", choices=sorted(PRESETS), default="default",
                           help="built-in config when --config is not given (default: %(default)s)")
        sp.add_argument("--out", required=True, help="run directory")
        return sp

    add("train-upn", "generate tasks and train the policy table")
    add("build-prior", "build the simulated policy prior")
    s = add("search", "run every trial seed for the chosen methods")
    s.add_argument("--method", action="append", choices=METHODS,
                   help="method to run (repeatable; default: the config's methods)")
    r = add("report", "aggregate persisted trial results", config=False)
    r.add_argument("--method", action="append", choices=METHODS, help="restrict to these methods")
    s.add_argument("-j", "--jobs", type=int, default=1, help="worker processes for trial seeds")
    rr = add("run", "all stages in order")
    rr.add_argument("-j", "--jobs", type=int, default=1, help="worker processes for trial seeds")
    d = sub.add_parser("dump-config", help="write a config file with every default filled in")
    d.add_argument("--preset", choices=sorted(PRESETS), default="default")
    d.add_argument("path")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    logging.getLogger("simprior").info("kernel backend: %s", BACKEND)
    try:
        if args.command == "dump-config":
            _config.dump(PRESETS[args.preset](), args.path)
        elif args.command == "train-upn":
            print(harness.cmd_train_upn(_load_config(args), args.out))
        elif args.command == "build-prior":
            print(harness.cmd_build_prior(_load_config(args), args.out))
        elif args.command == "search":
            for path in harness.cmd_search(_load_config(args), args.out, args.method, args.jobs):
                print(path)
        elif args.command == "report":
            harness.cmd_report(args.out, args.method)
        elif args.command == "run":
            harness.run_all(_load_config(args), args.out, args.jobs)
    except (FileNotFoundError, ValueError, RuntimeError) as exc:
        print(f"simprior: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
