"""Command line entry point: ``splitq <command> --config cfg.json``.

Exit codes: 0 success, 2 configuration or input error, 3 I/O error,
4 numeric error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ..core import NumericOverflowError
from ..adaptive import SingularKernelError
from ..profiles import DESCRIPTIONS, PRESETS
from ..recovery import TrajectoryParseError, read_trajectories, write_trajectories
from . import runs
from .config import ConfigError, load_config

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4


def _num(x: float) -> str:
    return f"{x:g}"


def format_profiles() -> str:
    lines = [f"{'profile':<10}{'phi1':>12}{'phi2':>12}{'phi3':>12}{'phi4':>12}  description"]
    for label, p in PRESETS.items():
        cells = []
        for mean, half in zip(p.weights, p.ranges):
            cells.append(f"{_num(mean)} ± {_num(half)}" if half else _num(mean))
        lines.append(f"{label:<10}" + "".join(f"{c:>12}" for c in cells) + f"  {DESCRIPTIONS[label]}")
    return "\n".join(lines)


def cmd_list_profiles(args) -> int:
    print(format_profiles())
    return EXIT_OK


def _load(args):
    cfg = load_config(args.config)
    if args.deterministic_profiles:
        cfg.deterministic_profiles = True
    if getattr(args, "workers", None):
        cfg.workers = args.workers
    out = Path(args.out) if args.out else Path(cfg.output_dir)
    return cfg, out


def cmd_train(args) -> int:
    cfg, out = _load(args)
    records = runs.run_train(cfg, out, args.seed)
    print(f"wrote {len(records)} runs to {out}")
    print((out / "summary.csv").read_text(), end="")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg, out = _load(args)
    result = runs.run_sweep(cfg, out, args.seed)
    print((out / "matrix.csv").read_text(), end="")
    for name, label, episode, before, after, delta, flagged in result["switches"]:
        if flagged:
            print(f"switch at episode {episode} in {name}/{label}: moving average {before:.3f} -> {after:.3f}")
    return EXIT_OK


def cmd_adapt(args) -> int:
    cfg, out = _load(args)
    result = runs.run_adapt(cfg, out, args.seed)
    rep = result["report"]
    print(f"incumbent phi = {rep['incumbent_phi']}  return = {rep['incumbent_return']:.4f}")
    print(f"re-evaluated: adapted {rep['adapted_mean_return']:.4f} ± {rep['adapted_stderr']:.4f}, "
          f"standard {rep['standard_mean_return']:.4f} ± {rep['standard_stderr']:.4f}")
    return EXIT_OK


def cmd_recover(args) -> int:
    cfg, out = _load(args)
    trajs = read_trajectories(args.trajectories)
    if not trajs:
        raise ConfigError(f"{args.trajectories}: no trajectories")
    result = runs.run_recover(cfg, trajs, out, args.seed)
    print(f"{'rank':<6}{'profile':<10}distance")
    for rank, label, *_, dist in result["rows"]:
        print(f"{rank:<6}{label:<10}{dist:.6f}")
    print(f"best: {result['result'].best.label}")
    return EXIT_OK


def cmd_expert(args) -> int:
    cfg, _ = _load(args)
    if args.profile not in PRESETS:
        raise ConfigError(f"--profile: unknown profile label {args.profile!r}")
    trajs = runs.run_expert(cfg, args.profile, args.n, args.seed)
    Path(args.output).parent.mkdir(parents=True, exist_ok=True)
    write_trajectories(args.output, trajs)
    print(f"wrote {len(trajs)} trajectories to {args.output}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="splitq", description="Split Q-learning experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON experiment config")
    common.add_argument("--out", help="output directory (overrides output_dir)")
    common.add_argument("--seed", type=int, help="base seed (overrides learning.seed)")
    common.add_argument("--deterministic-profiles", action="store_true",
                        help="use preset means, no perturbation sampling")
    common.add_argument("--workers", type=int, help="worker processes")

    sub.add_parser("list-profiles", help="print the bias profile presets").set_defaults(func=cmd_list_profiles)
    sub.add_parser("train", parents=[common], help="train profiles, write learning curves").set_defaults(func=cmd_train)
    sub.add_parser("sweep", parents=[common], help="profiles x reward transforms").set_defaults(func=cmd_sweep)
    sub.add_parser("adapt", parents=[common], help="GP-UCB tuning of the bias weights").set_defaults(func=cmd_adapt)
    p = sub.add_parser("recover", parents=[common], help="fit a profile to expert trajectories")
    p.add_argument("trajectories", help="trajectory CSV (episode_id,t,state,action,reward)")
    p.set_defaults(func=cmd_recover)
    p = sub.add_parser("expert", parents=[common], help="write greedy trajectories of a trained preset")
    p.add_argument("--profile", required=True)
    p.add_argument("-n", type=int, default=10, help="number of trajectories")
    p.add_argument("--output", required=True, help="trajectory CSV path")
    p.set_defaults(func=cmd_expert)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, TrajectoryParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NumericOverflowError, SingularKernelError, FloatingPointError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
