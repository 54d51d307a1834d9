"""Self-training loop: generations of episodes, reward ranking, net updates.

Each iteration plays M episodes with search guided by the iteration-start
parameter snapshot, pushes every terminal reward through the ranking
buffer (push first, then threshold), stores the reshaped games in a
FIFO-of-games example store, and runs J Adam steps on uniform minibatches
of stored triplets.  Checkpoints bundle the network, optimizer state and
reward buffer; the example store is cheap to refill and is rebuilt after
a resume.

All randomness derives from the master seed and the (iteration, episode)
indices, so runs are reproducible and resumable; with more than one
worker the buffer serialization order follows episode completion order,
which is the one documented source of run-to-run variation.
"""

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .env import bin_cost, initial_state, is_optimal, terminal_reward
from .instances import generate
from .mcts import PackingGame, SearchConfig, SearchTree, improved_policy, make_net_evaluator
from .net import NetParams, adam_step, feature_width, featurize, load_checkpoint, loss_and_grads, save_checkpoint
from .ranking import RewardBuffer, rank, validate_alpha

METRICS_COLUMNS = (
    ["iter", "mean_reward", "optimality_pct", "r_alpha"]
    + [f"hist_{i:02d}" for i in range(20)]
    + ["seconds"]
)

# fields that must match between a checkpoint and the resuming config
_RESUME_FIELDS = (
    "dim", "n_items", "bin_edge", "episodes_per_iter", "simulations",
    "buffer_capacity", "dataset_games", "batch_size", "train_steps",
    "alpha", "lr", "hidden", "c_puct", "dirichlet_epsilon",
    "dirichlet_alpha", "seed", "ranked",
)


class TrainingDiverged(RuntimeError):
    """Training hit non-finite parameters; the last good checkpoint survives."""


@dataclass
class TrainConfig:
    dim: int = 2
    n_items: int = 10
    bin_edge: int = 10
    iterations: int = 40
    episodes_per_iter: int = 50
    simulations: int = 300
    buffer_capacity: int = 250
    dataset_games: int = 500
    batch_size: int = 32
    train_steps: int = 50
    alpha: float = 75.0
    lr: float = 1e-3
    hidden: int = 64
    c_puct: float = 1.25
    dirichlet_epsilon: float = 0.25
    dirichlet_alpha: float = 0.3
    seed: int = 0
    threads: int = 1
    ranked: bool = True  # False: rank-free ablation (raw reward value targets)
    timing: bool = True  # False: write 0.000 in the seconds column
    out_dir: str = "runs/train"

    def __post_init__(self):
        validate_alpha(self.alpha)
        if self.dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {self.dim}")
        for name in ("n_items", "bin_edge", "iterations", "episodes_per_iter",
                     "simulations", "buffer_capacity", "dataset_games",
                     "batch_size", "train_steps", "hidden", "threads"):
            if getattr(self, name) < (0 if name in ("iterations", "train_steps") else 1):
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")

    @property
    def bin_dims(self) -> tuple:
        return (self.bin_edge,) * self.dim

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "TrainConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from integer parts (master seed first)."""
    return int(np.random.SeedSequence(list(parts)).generate_state(1, np.uint64)[0])


def derive_rng(*parts) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(list(parts)))


@dataclass
class GameRecord:
    feats: list  # per move: float64 [R, F] feature matrix
    policies: list  # per move: float64 [R] improved policy
    reward: float
    optimal: bool
    cost: int
    instance_seed: int


class ExampleStore:
    """FIFO over games; every triplet of one game carries the same value target."""

    def __init__(self, capacity_games: int):
        self.capacity = capacity_games
        self.games = []

    def add_game(self, record: GameRecord, z: float) -> None:
        triplets = [(f, pi, z) for f, pi in zip(record.feats, record.policies)]
        self.games.append(triplets)
        if len(self.games) > self.capacity:
            del self.games[: len(self.games) - self.capacity]

    @property
    def n_triplets(self) -> int:
        return sum(len(g) for g in self.games)

    def flat(self) -> list:
        return [t for g in self.games for t in g]


def run_episode(params: NetParams, cfg: TrainConfig, inst_seed: int,
                threshold, rng) -> GameRecord:
    """Play one full self-play episode with search at every move."""
    inst = generate(cfg.n_items, cfg.bin_dims, inst_seed)
    search_cfg = SearchConfig(
        simulations=cfg.simulations,
        c_puct=cfg.c_puct,
        dirichlet_epsilon=cfg.dirichlet_epsilon,
        dirichlet_alpha=cfg.dirichlet_alpha,
        mode="guided",
    )
    tree = SearchTree(PackingGame(), search_cfg, rng, make_net_evaluator(params))
    state = initial_state(inst)
    tree.reset(state)
    tau_cutoff = math.ceil(cfg.n_items / 3)
    feats, policies = [], []
    for t in range(cfg.n_items):
        counts = tree.run(threshold)
        actions = tree.root_actions()
        tau = 1.0 if t < tau_cutoff else 0.0
        pi = improved_policy(counts, tau)
        feats.append(featurize(state, actions))
        policies.append(pi)
        idx = int(rng.choice(len(pi), p=pi))
        tree.advance(idx)
        state = tree.root.state
    return GameRecord(feats, policies, terminal_reward(state), is_optimal(state),
                      int(round(bin_cost(state))), inst_seed)


def rank_and_store(record: GameRecord, buffer: RewardBuffer, store: ExampleStore,
                   alpha: float, rng, ranked: bool = True):
    """Push the episode reward, rank it against the post-push threshold, store.

    Returns ``(z, r_alpha)``; in rank-free mode z is the raw MDP reward.
    """
    buffer.push(record.reward)
    r_alpha = buffer.threshold(alpha)
    if ranked:
        z = float(rank(record.reward, r_alpha, rng, optimal=record.optimal))
    else:
        z = record.reward
    store.add_game(record, z)
    return z, r_alpha


def train_iteration(params: NetParams, store: ExampleStore, cfg: TrainConfig,
                    rng) -> NetParams:
    """J minibatch Adam steps on triplets sampled uniformly from the store."""
    if cfg.train_steps == 0:
        return params
    triplets = store.flat()
    if not triplets:
        raise ValueError("train_iteration: empty example store")
    n = len(triplets)
    for _ in range(cfg.train_steps):
        idx = rng.choice(n, size=cfg.batch_size, replace=n < cfg.batch_size)
        total = None
        for i in idx:
            f, pi, z = triplets[int(i)]
            _, grads = loss_and_grads(params, f, pi, z)
            if total is None:
                total = grads
            else:
                for k in total:
                    total[k] += grads[k]
        for k in total:
            total[k] /= cfg.batch_size
        adam_step(params, total, cfg.lr)
    return params


def _episode_task(payload):
    params, cfg, k, m, threshold = payload
    rng = derive_rng(cfg.seed, 0xE0, k, m)
    inst_seed = derive_seed(cfg.seed, 0x15, k, m)
    return m, run_episode(params, cfg, inst_seed, threshold, rng)


def _origin_bin_cost(cfg: TrainConfig) -> int:
    e = cfg.bin_edge
    return 2 * e if cfg.dim == 2 else 3 * e * e


def train(cfg: TrainConfig, resume=None, log=None):
    """Run the full loop; returns (params, metrics rows).

    Writes ``ckpt_<iter>.r2`` and appends one metrics row per iteration
    under ``cfg.out_dir``.  ``resume`` names a checkpoint to continue
    from.  Aborts with :class:`TrainingDiverged` on non-finite updates,
    leaving the previous checkpoints on disk.
    """
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    metrics_path = out / "metrics.csv"

    if resume is not None:
        params, extra = load_checkpoint(resume, expect_feature_width=feature_width(cfg.dim))
        saved = extra.get("config", {})
        for name in _RESUME_FIELDS:
            if name in saved and saved[name] != getattr(cfg, name):
                raise ValueError(
                    f"resume config mismatch on '{name}': "
                    f"checkpoint has {saved[name]}, config has {getattr(cfg, name)}"
                )
        buffer = RewardBuffer(cfg.buffer_capacity, extra.get("buffer", ()))
        start_iter = extra["iteration"] + 1
    else:
        params = NetParams(feature_width(cfg.dim), cfg.hidden, seed=derive_seed(cfg.seed, 0xA0))
        buffer = RewardBuffer(cfg.buffer_capacity)
        start_iter = 0

    store = ExampleStore(cfg.dataset_games)
    if start_iter == 0 or not metrics_path.exists():
        metrics_path.write_text(",".join(METRICS_COLUMNS) + "\n")

    pool = ProcessPoolExecutor(max_workers=cfg.threads) if cfg.threads > 1 else None
    origin_cost = _origin_bin_cost(cfg)
    rows = []
    last_ckpt = resume
    try:
        for k in range(start_iter, cfg.iterations):
            t0 = time.perf_counter()
            rewards, n_optimal, r_alpha = [], 0, float("nan")
            hist = [0] * 20

            def absorb(m, record):
                nonlocal r_alpha, n_optimal
                z, r_alpha = rank_and_store(
                    record, buffer, store, cfg.alpha,
                    derive_rng(cfg.seed, 0x7E, k, m), cfg.ranked,
                )
                rewards.append(record.reward)
                hist[min(int(record.reward * 20), 19)] += 1
                n_optimal += record.cost == origin_cost

            if pool is None:
                for m in range(cfg.episodes_per_iter):
                    thr = buffer.threshold(cfg.alpha) if len(buffer) else None
                    absorb(*_episode_task((params, cfg, k, m, thr)))
            else:
                thr = buffer.threshold(cfg.alpha) if len(buffer) else None
                futures = [
                    pool.submit(_episode_task, (params, cfg, k, m, thr))
                    for m in range(cfg.episodes_per_iter)
                ]
                for fut in as_completed(futures):
                    absorb(*fut.result())

            try:
                train_iteration(params, store, cfg, derive_rng(cfg.seed, 0x77, k))
            except FloatingPointError as exc:
                raise TrainingDiverged(
                    f"iteration {k}: {exc}; last good checkpoint: {last_ckpt}"
                ) from exc

            seconds = time.perf_counter() - t0 if cfg.timing else 0.0
            row = {
                "iter": k,
                "mean_reward": float(np.mean(rewards)),
                "optimality_pct": 100.0 * n_optimal / cfg.episodes_per_iter,
                "r_alpha": r_alpha,
                **{f"hist_{i:02d}": hist[i] for i in range(20)},
                "seconds": seconds,
            }
            rows.append(row)
            with open(metrics_path, "a", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(_format_row(row))
            ckpt = out / f"ckpt_{k}.r2"
            save_checkpoint(params, ckpt, extra={
                "kind": "r2" if cfg.ranked else "rank-free",
                "iteration": k,
                "buffer": list(buffer.entries),
                "config": cfg.to_dict(),
            })
            last_ckpt = ckpt
            if log:
                log(f"iter {k}: mean_reward={row['mean_reward']:.4f} "
                    f"optimality={row['optimality_pct']:.1f}% r_alpha={r_alpha:.4f} "
                    f"({seconds:.1f}s)")
    finally:
        if pool is not None:
            pool.shutdown()
    return params, rows


def _format_row(row: dict) -> list:
    out = []
    for col in METRICS_COLUMNS:
        v = row[col]
        if col == "iter" or col.startswith("hist_"):
            out.append(str(int(v)))
        elif col == "seconds":
            out.append(f"{v:.3f}")
        else:
            out.append(f"{v:.6f}")
    return out
