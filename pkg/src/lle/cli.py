"""Command line entry point: ``lle train | eval | gen | solve | aggregate``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

from .harness import ExperimentConfig, aggregate, evaluate, train, write_aggregate, write_rows
from .harness import Q_DUMP_COLUMNS
from .mapfmt import load_map, serialize_map
from .mapgen import GenParams, GenerationExhausted, StateSpaceTooLarge, generate, search
from .qlearn import MIXERS, TrainConfig


def _map_arg(args) -> str:
    if getattr(args, "map", None):
        return args.map
    return str(args.level)


def cmd_train(args) -> int:
    base = TrainConfig()
    overrides = {
        "eps_anneal": args.eps_anneal,
        "batch_size": args.batch,
        "memory": args.memory,
        "train_interval": args.train_interval,
        "lr": args.lr,
    }
    train_cfg = replace(base, **{k: v for k, v in overrides.items() if v is not None})
    seeds = args.seed
    for seed in seeds:
        out = Path(args.out)
        if len(seeds) > 1:
            out = out / f"seed_{seed}"
        config = ExperimentConfig(
            map=_map_arg(args),
            algo=args.algo,
            per=args.per,
            nstep=args.nstep,
            rnd=args.rnd,
            total_steps=args.steps,
            seed=seed,
            eval_interval=args.eval_interval,
            eval_episodes=args.eval_episodes,
            checkpoint_interval=args.checkpoint_interval,
            out_dir=str(out),
            train=train_cfg,
        )
        result = train(config)
        last = result.metrics[-1]
        print(f"seed {seed}: {len(result.metrics)} episodes, last score {last.score}, "
              f"last exit rate {last.exit_rate} -> {out}")
    return 0


def cmd_eval(args) -> int:
    spec = load_map(args.map)
    if args.dump_q:
        summary, rows = evaluate(args.ckpt, spec, args.episodes, dump_q=True)
        out = Path(args.out) if args.out else Path(args.ckpt).parent
        out.mkdir(parents=True, exist_ok=True)
        write_rows(out / "q_dump.csv", Q_DUMP_COLUMNS, rows)
    else:
        summary = evaluate(args.ckpt, spec, args.episodes)
    print(json.dumps(asdict(summary), indent=2))
    return 0


def cmd_gen(args) -> int:
    params = GenParams(
        width=args.width,
        height=args.height,
        n_agents=args.agents,
        n_gems=args.gems,
        n_lasers=args.lasers,
        wall_density=args.density,
        min_coordination_steps=args.min_coord,
        seed=args.seed,
        max_attempts=args.attempts,
    )
    try:
        spec = generate(params)
    except GenerationExhausted as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    text = serialize_map(spec)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_solve(args) -> int:
    spec = load_map(args.map)
    try:
        result = search(spec, require_gems=args.gems)
    except StateSpaceTooLarge as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    print(f"solvable: {str(result.solvable).lower()}")
    print(f"states: {result.n_states}")
    if result.solvable:
        print(f"plan_length: {len(result.plan)}")
        print(f"coordination_depth: {result.coordination_depth}")
        for t, joint in enumerate(result.plan):
            print(t, " ".join(a.name for a in joint))
    return 0 if result.solvable else 1


def cmd_aggregate(args) -> int:
    rows = aggregate(args.dirs, n_points=args.points)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_aggregate(rows, out / "aggregate.csv")
    from .plotting import plot_aggregate

    plot_aggregate(rows, out / "aggregate.png", args.max_score)
    print(f"{len(rows)} rows from {rows[0]['n_runs']} runs -> {out / 'aggregate.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lle", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train IQL/VDN/QMIX on a level")
    where = p.add_mutually_exclusive_group()
    where.add_argument("--level", type=int, default=6)
    where.add_argument("--map", help="map file or embedded map name (e.g. toy)")
    p.add_argument("--algo", choices=MIXERS, default="vdn")
    p.add_argument("--per", action="store_true", help="prioritized experience replay")
    p.add_argument("--nstep", type=int, default=1, choices=(1, 3, 5, 7, 9))
    p.add_argument("--rnd", action="store_true", help="random network distillation bonus")
    p.add_argument("--steps", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, nargs="+", default=[0])
    p.add_argument("--out", required=True)
    p.add_argument("--eval-interval", type=int, default=0)
    p.add_argument("--eval-episodes", type=int, default=10)
    p.add_argument("--checkpoint-interval", type=int, default=0)
    p.add_argument("--eps-anneal", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--memory", type=int)
    p.add_argument("--train-interval", type=int)
    p.add_argument("--lr", type=float)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="greedy rollouts of a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--map", required=True)
    p.add_argument("--episodes", type=int, default=10)
    p.add_argument("--dump-q", action="store_true", help="write per-step utilities to q_dump.csv")
    p.add_argument("--out", help="directory for q_dump.csv (default: next to the checkpoint)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gen", help="generate a random solvable map")
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--agents", type=int, default=2)
    p.add_argument("--gems", type=int, default=1)
    p.add_argument("--lasers", type=int, default=1)
    p.add_argument("--density", type=float, default=0.0)
    p.add_argument("--min-coord", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--attempts", type=int, default=1000)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("solve", help="run the solvability oracle on a map")
    p.add_argument("--map", required=True)
    p.add_argument("--gems", action="store_true", help="also require every gem to be collected")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("aggregate", help="mean and 95%% band across run directories")
    p.add_argument("dirs", nargs="+")
    p.add_argument("--out", default=".")
    p.add_argument("--points", type=int, default=200)
    p.add_argument("--max-score", type=float)
    p.set_defaults(func=cmd_aggregate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
