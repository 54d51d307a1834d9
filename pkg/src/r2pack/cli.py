"""Command-line interface.

Subcommands: ``gen`` (write instance files), ``train`` (self-play
training), ``train-supervised``, ``solve`` (one instance, one agent),
``eval`` (agent comparison harness), ``inspect`` (file metadata).

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .agents import AGENT_KINDS, MctsAgent, SupervisedConfig, make_agent, supervised_train
from .env import bin_cost, terminal_reward
from .evaluation import evaluate, make_test_set
from .instances import generate, load_instance, save_instance
from .net import CHECKPOINT_MAGIC, feature_width, load_checkpoint, save_checkpoint
from .training import TrainConfig, derive_rng, derive_seed, train


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _common_flags(parser):
    parser.add_argument("--seed", type=int, default=0, help="master random seed")
    parser.add_argument("--config", type=Path, help="JSON config file (train fields)")
    parser.add_argument("--dim", type=int, choices=(2, 3), default=2)
    parser.add_argument("--items", type=int, default=10, help="items per instance")
    parser.add_argument("--alpha", type=float, default=75.0, help="ranking percentile")
    parser.add_argument("--threads", type=int,
                        default=int(os.environ.get("R2_THREADS", "1")),
                        help="episode workers (R2_THREADS is the fallback)")
    parser.add_argument("--out", type=Path, default=Path("runs"), help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="r2pack", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parser_class=_Parser, help="write instance files")
    _common_flags(p)
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--bin", type=int, default=10, help="origin bin edge length")

    p = sub.add_parser("train", parser_class=_Parser, help="self-play training")
    _common_flags(p)
    p.add_argument("--iterations", type=int)
    p.add_argument("--episodes", type=int, help="episodes per iteration")
    p.add_argument("--sims", type=int, help="search simulations per move")
    p.add_argument("--bin", type=int, help="origin bin edge length")
    p.add_argument("--batch", type=int)
    p.add_argument("--steps", type=int, help="optimization steps per iteration")
    p.add_argument("--buffer", type=int, help="reward buffer capacity")
    p.add_argument("--dataset", type=int, help="example store capacity in games")
    p.add_argument("--lr", type=float)
    p.add_argument("--hidden", type=int)
    p.add_argument("--rank-free", action="store_true",
                   help="train the value head on raw rewards (ablation)")
    p.add_argument("--no-timing", action="store_true",
                   help="write zeros in the metrics seconds column")
    p.add_argument("--resume", type=Path, help="checkpoint to continue from")

    p = sub.add_parser("train-supervised", parser_class=_Parser,
                       help="supervised baseline training")
    _common_flags(p)
    p.add_argument("--count", type=int, default=300, help="training instances")
    p.add_argument("--epochs", type=int, default=3)
    p.add_argument("--bin", type=int, default=10)
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--lr", type=float, default=1e-3)

    p = sub.add_parser("solve", parser_class=_Parser, help="solve one saved instance")
    _common_flags(p)
    p.add_argument("--instance", type=Path, required=True)
    p.add_argument("--agent", choices=AGENT_KINDS, default="lego")
    p.add_argument("--checkpoint", type=Path, help="net checkpoint for net agents")
    p.add_argument("--sims", type=int, default=300)
    p.add_argument("--trace", type=Path, help="write per-move search statistics here")

    p = sub.add_parser("eval", parser_class=_Parser, help="agent comparison harness")
    _common_flags(p)
    p.add_argument("--agents", default="lego,random",
                   help="comma-separated agent kinds")
    p.add_argument("--count", type=int, default=100, help="test-set size")
    p.add_argument("--bin", type=int, default=10)
    p.add_argument("--instances", type=Path,
                   help="directory of instance files to use instead of generating")
    p.add_argument("--checkpoint", type=Path, help="checkpoint for r2-mcts/net-only")
    p.add_argument("--checkpoint-supervised", type=Path,
                   help="checkpoint for supervised-net")
    p.add_argument("--sims", type=int, default=300)

    p = sub.add_parser("inspect", parser_class=_Parser,
                       help="print instance or checkpoint metadata")
    _common_flags(p)
    p.add_argument("path", type=Path)
    return parser


def _train_config(args) -> TrainConfig:
    base = {}
    if args.config:
        base = json.loads(Path(args.config).read_text())
    overrides = {
        "dim": args.dim, "n_items": args.items, "alpha": args.alpha,
        "seed": args.seed, "threads": args.threads, "out_dir": str(args.out),
        "iterations": args.iterations, "episodes_per_iter": args.episodes,
        "simulations": args.sims, "bin_edge": args.bin,
        "batch_size": args.batch, "train_steps": args.steps,
        "buffer_capacity": args.buffer, "dataset_games": args.dataset,
        "lr": args.lr, "hidden": args.hidden,
    }
    flag_defaults = {"dim": 2, "n_items": 10, "alpha": 75.0, "seed": 0,
                     "threads": int(os.environ.get("R2_THREADS", "1")),
                     "out_dir": "runs"}
    for key, value in overrides.items():
        if value is None:
            continue
        # common flags only override the config file when set away from
        # their defaults; train-specific flags always win when present
        if key in flag_defaults and key in base and value == flag_defaults[key]:
            continue
        base[key] = value
    if args.rank_free:
        base["ranked"] = False
    if args.no_timing:
        base["timing"] = False
    return TrainConfig.from_dict(base)


def _load_params(path, dim):
    params, extra = load_checkpoint(path, expect_feature_width=feature_width(dim))
    return params


def _cmd_gen(args):
    args.out.mkdir(parents=True, exist_ok=True)
    bin_dims = (args.bin,) * args.dim
    for i in range(args.count):
        inst = generate(args.items, bin_dims, derive_seed(args.seed, 0x6E, i))
        save_instance(inst, args.out / f"inst_{i:05d}.txt")
    print(f"wrote {args.count} instances to {args.out}")
    return 0


def _cmd_train(args):
    cfg = _train_config(args)
    _, rows = train(cfg, resume=args.resume, log=print)
    print(f"finished {len(rows)} iterations; outputs in {cfg.out_dir}")
    return 0


def _cmd_train_supervised(args):
    cfg = SupervisedConfig(dim=args.dim, n_items=args.items, bin_edge=args.bin,
                           n_instances=args.count, epochs=args.epochs,
                           hidden=args.hidden, lr=args.lr, seed=args.seed)
    params, skipped = supervised_train(cfg, log=print)
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / "supervised.r2"
    save_checkpoint(params, path, extra={"kind": "supervised",
                                         "skipped_instances": skipped,
                                         "config": cfg.__dict__})
    print(f"saved supervised checkpoint to {path} ({skipped} instances skipped)")
    return 0


def _cmd_solve(args):
    inst = load_instance(args.instance)
    params = _load_params(args.checkpoint, inst.dim) if args.checkpoint else None
    agent = make_agent(args.agent, checkpoint_params=params, simulations=args.sims)
    traces = [] if args.trace else None
    if traces is not None and isinstance(agent, MctsAgent):
        agent.trace_sink = traces
    state = agent.solve(inst, derive_rng(args.seed, 0x50))
    for pl in state.placements:
        item = inst.items[pl.item_id]
        print(f"item={pl.item_id} dims={item.dims} pos={pl.pos} orient={pl.orient}")
    print(f"cost={bin_cost(state):g} reward={terminal_reward(state):.6f}")
    if traces is not None:
        if traces:
            args.trace.write_text("".join(traces))
            print(f"wrote search trace to {args.trace}")
        else:
            print("note: --trace only applies to search agents", file=sys.stderr)
    return 0


def _cmd_eval(args):
    kinds = [k.strip() for k in args.agents.split(",") if k.strip()]
    params = _load_params(args.checkpoint, args.dim) if args.checkpoint else None
    sup = (_load_params(args.checkpoint_supervised, args.dim)
           if args.checkpoint_supervised else None)
    agents = {}
    for kind in kinds:
        cp = sup if kind == "supervised-net" else params
        agents[kind] = make_agent(kind, checkpoint_params=cp, simulations=args.sims)
    if args.instances:
        paths = sorted(Path(args.instances).glob("*.txt"))
        instances = [load_instance(p) for p in paths]
    else:
        instances = make_test_set(args.count, args.items, (args.bin,) * args.dim,
                                  args.seed)
    report = evaluate(agents, instances, seed=args.seed, out_dir=args.out)
    print(f"{'agent':<16}{'mean':>8}{'std':>8}{'opt%':>7}")
    for agg in report.aggregates:
        print(f"{agg['agent']:<16}{agg['mean_reward']:>8.4f}"
              f"{agg['std_reward']:>8.4f}{agg['optimality_pct']:>7.1f}")
    print(f"reports written to {args.out}")
    return 0


def _cmd_inspect(args):
    with open(args.path, "rb") as fh:
        head = fh.read(len(CHECKPOINT_MAGIC))
    if head == CHECKPOINT_MAGIC:
        params, extra = load_checkpoint(args.path)
        print(f"checkpoint: feature_width={params.feature_width} "
              f"hidden={params.hidden} adam_step={params.step}")
        for key in ("kind", "iteration", "skipped_instances"):
            if key in extra:
                print(f"{key}: {extra[key]}")
        if "buffer" in extra:
            print(f"reward buffer: {len(extra['buffer'])} entries")
        if "config" in extra:
            print(f"config: {json.dumps(extra['config'], sort_keys=True)}")
    else:
        inst = load_instance(args.path)
        print(f"instance: dim={inst.dim} seed={inst.seed} items={inst.n_items} "
              f"bin={inst.bin}")
        print(f"total volume: {inst.total_volume}")
        print(f"items: {[it.dims for it in inst.items]}")
    return 0


_COMMANDS = {
    "gen": _cmd_gen,
    "train": _cmd_train,
    "train-supervised": _cmd_train_supervised,
    "solve": _cmd_solve,
    "eval": _cmd_eval,
    "inspect": _cmd_inspect,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else 1
    try:
        return _COMMANDS[args.command](args)
    except Exception as exc:  # runtime failure -> exit 2
        print(f"r2pack: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
