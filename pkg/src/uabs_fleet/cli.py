"""Command-line entry point: train, matrix, replay, validate-config."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigError, ExperimentConfig, load_config, load_profile, parse_strategy
from .harness import build_experiment, evaluate, replay, run_matrix, run_training, write_episode_log

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


def _add_config_args(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group()
    g.add_argument("--config", type=Path, help="YAML experiment config")
    g.add_argument("--profile", choices=("desk", "full"), help="bundled profile (default: desk)")


def _load(args) -> ExperimentConfig:
    if args.config is not None:
        return load_config(args.config)
    return load_profile(args.profile or "desk")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uabs-fleet", description="UABS fleet trajectory learning simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one strategy")
    _add_config_args(p)
    p.add_argument("--strategy", default="mamo", help="mamo | mama | generalized | egreedy-<frac>")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--episodes", type=int, help="override the number of training rounds")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("matrix", help="compare strategies across seeds")
    _add_config_args(p)
    p.add_argument("--strategies", nargs="+")
    p.add_argument("--seeds", nargs="+", type=int)
    p.add_argument("--seed", type=int, help="single seed shortcut")
    p.add_argument("--episodes", type=int)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--no-plots", action="store_true")

    p = sub.add_parser("replay", help="render an episode log to PNG")
    _add_config_args(p)
    p.add_argument("log", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--task", type=int)
    p.add_argument("--episode", type=int)

    p = sub.add_parser("validate-config", help="check a config file or profile")
    _add_config_args(p)
    return parser


def cmd_train(args) -> int:
    cfg = _load(args)
    parse_strategy(args.strategy)
    exp = build_experiment(cfg)
    res = run_training(cfg, args.strategy, args.seed, args.out, n_episodes=args.episodes, experiment=exp)
    ev = evaluate(exp, res.learners, args.seed, cfg.run.eval_episodes, log_episodes=True)
    write_episode_log(args.out / "episodes.csv", ev.episode_log)
    print(f"wrote {args.out / 'metrics.csv'} ({len(res.records)} rows), {len(res.checkpoints)} checkpoints")
    return EXIT_OK


def cmd_matrix(args) -> int:
    cfg = _load(args)
    seeds = args.seeds if args.seeds is not None else ([args.seed] if args.seed is not None else None)
    res = run_matrix(cfg, args.strategies, seeds, args.out, n_episodes=args.episodes, plots=not args.no_plots)
    print(f"wrote {args.out / 'summary.md'}")
    if res.failures:
        for (s, sd), msg in res.failures.items():
            print(f"failed: {s} seed {sd}: {msg}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_replay(args) -> int:
    exp = build_experiment(_load(args)) if (args.config or args.profile) else None
    path = replay(args.log, exp, args.out, args.task, args.episode)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = _load(args)
    exp = build_experiment(cfg)
    print(f"ok: profile={cfg.profile} tasks={len(exp.tasks)} users_per_area={[a.gue_count for a in exp.areas]} "
          f"episodes={cfg.run.N} strategies={cfg.run.strategies}")
    return EXIT_OK


COMMANDS = {"train": cmd_train, "matrix": cmd_matrix, "replay": cmd_replay, "validate-config": cmd_validate}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
