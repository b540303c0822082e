"""
Main Application Entry Point
Command-line front end for the aggregation experiments

Usage:
    python main.py run --config experiments/flocklab26.cfg [--variant both] [--seed 42]
    python main.py profile --topology flocklab26 --max-ntx 8
    python main.py mincov --topology dcube45 --loss 0.1
"""

import argparse
import logging
import signal
import sys

import config
from ctsim import TopologyError
from ffield import FieldError
from harness import (
    ConfigError,
    ExperimentConfig,
    config_keys,
    load_or_generate_topology,
    mincov_report,
    profile_report,
    run_experiment,
    write_results,
)
from protocol import ProtocolError
from utils import Timer, setup_logging

logger = logging.getLogger("main")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="main.py",
        description="Shamir secret sharing aggregation over simulated concurrent-transmission floods",
    )
    parser.add_argument("--debug", action="store_true", help="verbose per-round logging")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="run an S3/S4 experiment and write results")
    run.add_argument("--config", help="key=value experiment file")
    for key in config_keys():
        flags = [f"--{key}"]
        if "_" in key:
            flags.append(f"--{key.replace('_', '-')}")
        run.add_argument(*flags, dest=key, default=None, help=argparse.SUPPRESS)

    profile = commands.add_parser("profile", help="print per-node reachability by NTX")
    profile.add_argument("--topology", required=True, help="preset name, 'rgg' or topology file")
    profile.add_argument("--max-ntx", type=int, required=True)
    profile.add_argument("--loss", type=float, default=config.LOSS_PROB)
    profile.add_argument("--trials", type=int, default=config.PROFILE_TRIALS)
    profile.add_argument("--threshold", type=float, default=config.REACH_THRESHOLD)
    profile.add_argument("--seed", type=int, default=config.SEED)

    mincov = commands.add_parser("mincov", help="print the smallest NTX reaching full coverage")
    mincov.add_argument("--topology", required=True, help="preset name, 'rgg' or topology file")
    mincov.add_argument("--loss", type=float, default=config.LOSS_PROB)
    mincov.add_argument("--trials", type=int, default=config.COVERAGE_TRIALS)
    mincov.add_argument("--quantile", type=float, default=config.COVERAGE_QUANTILE)
    mincov.add_argument("--slots-per-node", type=int, default=1)
    mincov.add_argument("--seed", type=int, default=config.SEED)
    return parser


def cmd_run(args):
    overrides = {key: getattr(args, key) for key in config_keys()}
    cfg = ExperimentConfig.load(args.config, overrides)
    with Timer("experiment"):
        table = run_experiment(cfg)
    write_results(table, cfg.out, cfg.format)
    return 0


def _topology_for(args):
    cfg = ExperimentConfig.load(overrides={"topology": args.topology, "loss": args.loss})
    return load_or_generate_topology(cfg)


def cmd_profile(args):
    if args.max_ntx < 1:
        raise ConfigError("--max-ntx must be >= 1")
    profile_report(_topology_for(args), args.max_ntx, args.trials, args.seed, args.threshold)
    return 0


def cmd_mincov(args):
    topology = _topology_for(args)
    ntx = mincov_report(topology, args.trials, args.quantile, args.seed, args.slots_per_node)
    return 0 if ntx is not None else 1


COMMANDS = {"run": cmd_run, "profile": cmd_profile, "mincov": cmd_mincov}


def signal_handler(sig, frame):
    """Handle Ctrl+C gracefully"""
    print("\n\nReceived interrupt signal...", file=sys.stderr)
    sys.exit(130)


def main(argv=None):
    """Main entry point; returns the process exit code"""
    signal.signal(signal.SIGINT, signal_handler)
    args = build_parser().parse_args(argv)
    setup_logging(debug=args.debug or None)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, TopologyError, ProtocolError, FieldError) as exc:
        print(f"Error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
