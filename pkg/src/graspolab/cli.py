"""Command-line front end: graspolab <subcommand> [--config FILE] [options]."""

from __future__ import annotations

import argparse
import sys

from .errors import GraspolabError
from .harness import (cmd_compare_fitness, cmd_eval_orient, cmd_fit_position,
                      cmd_gen_data, cmd_train_orient, load_config)

_COMMANDS = {
    "gen-data": cmd_gen_data,
    "compare-fitness": cmd_compare_fitness,
    "fit-position": cmd_fit_position,
    "train-orient": cmd_train_orient,
    "eval-orient": cmd_eval_orient,
}

# direct flags; anything else comes from the config file
_FLAGS = {
    "gen-data": ("n", "noise", "strip"),
    "compare-fitness": ("data",),
    "fit-position": ("data", "method", "fitness"),
    "train-orient": ("actions", "episodes"),
    "eval-orient": ("checkpoint", "attempts", "eval-epsilon"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="graspolab",
        description="Grasp-pose lab: position-mapping estimation and "
                    "orientation learning on a simulated table.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="flat key=value config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory")
        for flag in _FLAGS[name]:
            p.add_argument(f"--{flag}", default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {}
    for key in ("seed", "out", *_FLAGS[args.command]):
        attr = key.replace("-", "_")
        value = getattr(args, attr, None)
        if value is not None:
            overrides[attr] = value
    try:
        cfg = load_config(args.config, overrides)
        result = _COMMANDS[args.command](cfg)
    except GraspolabError as exc:
        print(f"error category={exc.category} message={exc}", file=sys.stderr)
        return 1
    for name, path in sorted(result.get("paths", {}).items()):
        print(f"{name}: {path}")
    for key in ("winner", "train_rmse", "test_rmse", "rate",
                "final_block_reward_rate", "final_block_greedy_rate"):
        if key in result:
            print(f"{key}: {result[key]}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
