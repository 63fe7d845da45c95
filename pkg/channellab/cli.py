import argparse
import logging
import sys
from typing import Optional, Sequence

from channellab import exceptions
from channellab.experiments import run_config
from channellab.models import ExperimentConfig

logger = logging.getLogger(__name__)

EXPERIMENTS = ("ladder", "nonradiative", "channel", "drift", "resonant", "wavemap")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="channellab", description="Channels of energy for the linearized radial wave equation."
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    subparsers = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        sub = subparsers.add_parser(name, help="run the %s experiment" % name)
        sub.add_argument("--config", help="JSON experiment config; defaults apply when omitted")
        sub.add_argument("--out", default="out", help="output directory (default: out)")
        sub.add_argument("--seed", type=int, help="overrides ensemble.seed")
        sub.add_argument("--workers", type=int, help="worker processes (capped by CHANNEL_LAB_WORKERS)")
        if name == "nonradiative":
            sub.add_argument("--level", type=int, help="ladder level k")
            sub.add_argument("--sigma", type=int, choices=(0, 1), help="time parity of the member")
    return parser


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    if args.config:
        config = ExperimentConfig.build_config(args.config)
    else:
        config = ExperimentConfig.from_payload({"experiment": args.experiment})
    return config.with_overrides(
        experiment=args.experiment,
        seed=args.seed,
        level=getattr(args, "level", None),
        sigma=getattr(args, "sigma", None),
    )


def main(argv: Optional[Sequence[str]] = None, f_err=sys.stderr) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        config = load_config(args)
        _, paths = run_config(config, args.out, args.workers)
    except exceptions.ChannelLabError as error:
        print("channellab: %s" % error, file=f_err)
        return 2
    for kind, path in sorted(paths.items()):
        logger.info("wrote %s: %s", kind, path)
    return 0
