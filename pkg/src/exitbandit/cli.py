"""Command line entry point: ``exitbandit {run,regret,pareto,validate,gen-trace}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import harness
from .environment import batch_to_records, write_trace
from .harness import ConfigError, load_config


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed-offset", type=int, default=argparse.SUPPRESS,
                   help="add N to every seed in the config")
    p.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS,
                   help="print nothing on success")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="exitbandit", parents=[common],
                                     description="UCB threshold selection for early-exit inference")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, help_ in (
        ("run", "run the full grid; write regret, trade-off and sub-linearity CSVs"),
        ("regret", "run the grid; write regret CSVs only"),
        ("pareto", "run the grid; write the trade-off table only"),
        ("validate", "check a config file without running anything"),
    ):
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.add_argument("config", type=Path)
    gt = sub.add_parser("gen-trace", parents=[common], help="dump synthetic samples as a replay trace")
    gt.add_argument("config", type=Path)
    gt.add_argument("out", type=Path)
    gt.add_argument("--policy", help="policy name whose sample stream is dumped (default: first)")
    gt.add_argument("--arm-set", help="arm set whose sample stream is dumped (default: first)")
    gt.add_argument("--seed", type=int, help="seed (default: first seed of the config)")
    gt.add_argument("-n", "--num-samples", type=int, help="number of samples (default: horizon)")
    return parser


def _gen_trace(cfg, args, seed_offset: int, say) -> None:
    if cfg.trace_path is not None:
        raise ConfigError("gen-trace needs a synthetic environment")
    policy = args.policy or cfg.policies[0].name
    if policy not in {p.name for p in cfg.policies}:
        raise ConfigError(f"unknown policy {policy!r}")
    arm_set = args.arm_set or next(iter(cfg.arm_sets))
    if arm_set not in cfg.arm_sets:
        raise ConfigError(f"unknown arm set {arm_set!r}")
    seed = cfg.seeds[0] if args.seed is None else args.seed
    n = cfg.horizon if args.num_samples is None else args.num_samples
    if n < 1:
        raise ConfigError("number of samples must be positive")
    rng = harness.env_stream(policy, arm_set, (seed + seed_offset) & harness.MASK64)
    batch = cfg.make_environment().draw(n, rng)
    write_trace(batch_to_records(batch), args.out)
    say(f"wrote {n} samples to {args.out}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    quiet = getattr(args, "quiet", False)
    seed_offset = getattr(args, "seed_offset", 0)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")

    def say(msg: str) -> None:
        if not quiet:
            print(msg)

    try:
        cfg = load_config(args.config)
        if args.command == "validate":
            say(f"{args.config}: ok ({len(cfg.policies)} policies x {len(cfg.arm_sets)} arm sets "
                f"x {len(cfg.seeds)} seeds, horizon {cfg.horizon})")
            return 0
        if args.command == "gen-trace":
            _gen_trace(cfg, args, seed_offset, say)
            return 0
        result = harness.run_grid(cfg, seed_offset=seed_offset)
        out = cfg.output_dir
        written = []
        if args.command in ("run", "regret"):
            written += harness.write_regret_csvs(result, out)
        if args.command in ("run", "pareto"):
            written.append(harness.write_tradeoff_csv(result, out))
        if args.command == "run":
            sub = harness.write_sublinearity_csv(result, out)
            if sub is not None:
                written.append(sub)
        say(f"{len(result.episodes)} episodes; wrote {len(written)} files under {out}")
        if args.command in ("run", "pareto") and not quiet:
            for row in harness.tradeoff_rows(result):
                print("  {:<12} {:<8} acc={:.4f} latency={:.4f} energy={:.4f} pareto(lat,en)=({},{})".format(
                    row[0], row[1], row[2], row[3], row[4], int(row[5]), int(row[6])))
        return 0
    except (ConfigError, ValueError, OSError) as exc:
        print(f"exitbandit: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
