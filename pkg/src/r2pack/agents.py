"""Solver agents: greedy heuristic, random, net-only, search, exhaustive.

Every agent exposes ``solve(instance, rng) -> PackState``; all of them
act through the shared environment action set, so no agent can bypass
the packing constraints.  ``make_agent`` builds agents from their CLI
names.
"""

import math
from dataclasses import dataclass

import numpy as np

from .env import (
    Instance,
    PackState,
    apply_row,
    bin_cost,
    initial_state,
    legal_action_rows,
    oriented_dims,
    orientation_codes,
    terminal_reward,
)
from .instances import SequenceError, generate, optimal_sequence
from .mcts import PackingGame, SearchConfig, SearchTree, make_net_evaluator
from .net import NetParams, adam_step, feature_width, featurize, forward, loss_and_grads
from .training import derive_rng, derive_seed

AGENT_KINDS = ("r2-mcts", "net-only", "plain-mcts", "lego", "supervised-net",
               "random", "exhaustive")

EXHAUSTIVE_MAX_ITEMS = 6


class SolveFailure(RuntimeError):
    """An agent could not finish; carries the partial state."""

    def __init__(self, message, state):
        super().__init__(message)
        self.state = state


def _enclosing_volume(ext, dim):
    return ext[0] * ext[1] * (ext[2] if dim == 3 else 1)


class LegoAgent:
    """Greedy heuristic: largest item first, then min wasted space, min surface.

    The opening move places the largest-volume item at the origin rotated
    so its dims are non-increasing.  Every later move picks, among all
    legal actions, the one with the highest placed-volume share of the
    minimal enclosing bin (least wasted space), breaking ties by smaller
    bin cost and then by the deterministic action order.  The 2D analog
    uses areas and the perimeter-style cost.
    """

    name = "lego"

    def solve(self, inst: Instance, rng=None) -> PackState:
        state = initial_state(inst)
        first = max(inst.items, key=lambda it: (it.volume, -it.id))
        want = tuple(sorted(first.dims, reverse=True))
        code = next(c for c in orientation_codes(first) if oriented_dims(first, c) == want)
        d3 = want if len(want) == 3 else (*want, 1)
        state = apply_row(state, np.array([first.id, code, 0, 0, 0, *d3], dtype=np.int64))
        placed_vol = first.volume
        while not state.is_terminal:
            rows = legal_action_rows(state)
            if len(rows) == 0:
                raise SolveFailure(f"lego dead end at step {state.step}", state)
            best = None
            for row in rows:
                ext = tuple(
                    max(int(e), int(p) + int(d))
                    for e, p, d in zip(state.ext, row[2:5], row[5:8])
                )
                vol = placed_vol + int(row[5] * row[6] * row[7])
                fill = vol / _enclosing_volume(ext, inst.dim)
                cost = (ext[0] + ext[1]) if inst.dim == 2 else (
                    ext[0] * ext[1] + ext[1] * ext[2] + ext[0] * ext[2])
                key = (-fill, cost)
                if best is None or key < best[0]:
                    best = (key, row, vol)
            _, row, placed_vol = best
            state = apply_row(state, row)
        return state


class RandomAgent:
    name = "random"

    def solve(self, inst: Instance, rng) -> PackState:
        state = initial_state(inst)
        while not state.is_terminal:
            rows = legal_action_rows(state)
            state = apply_row(state, rows[int(rng.integers(len(rows)))])
        return state


class NetGreedyAgent:
    """Follows the raw policy head greedily, no search."""

    name = "net-only"

    def __init__(self, params: NetParams):
        self.params = params

    def solve(self, inst: Instance, rng=None) -> PackState:
        state = initial_state(inst)
        while not state.is_terminal:
            rows = legal_action_rows(state)
            out = forward(self.params, featurize(state, rows))
            state = apply_row(state, rows[int(np.argmax(out.policy))])
        return state


class MctsAgent:
    """Search agent: network-guided (r2-mcts) or rollout-backed (plain-mcts).

    Runs in evaluation mode: no root noise, greedy visit-count argmax.
    Guided terminal backups use the 2r - 1 warm-up map, since there is
    no reward buffer at evaluation time.
    """

    def __init__(self, simulations=300, params=None, c_puct=1.25):
        mode = "guided" if params is not None else "rollout"
        self.name = "r2-mcts" if params is not None else "plain-mcts"
        self.cfg = SearchConfig(simulations=simulations, c_puct=c_puct,
                                dirichlet_epsilon=0.0, mode=mode)
        self.evaluator = make_net_evaluator(params) if params is not None else None
        self.trace_sink = None  # list collecting per-move search dumps

    def solve(self, inst: Instance, rng) -> PackState:
        tree = SearchTree(PackingGame(), self.cfg, rng, self.evaluator)
        state = initial_state(inst)
        tree.reset(state)
        while not state.is_terminal:
            counts = tree.run(threshold=None)
            if self.trace_sink is not None:
                self.trace_sink.append(tree.trace())
            tree.advance(int(np.argmax(counts)))
            state = tree.root.state
        return state


class ExhaustiveAgent:
    name = "exhaustive"

    def __init__(self, prune=True):
        self.prune = prune

    def solve(self, inst: Instance, rng=None) -> PackState:
        return exhaustive_solve(inst, prune=self.prune)[1]


def _lower_bound(ext, dim, total_volume):
    """Admissible lower bound on the final bin cost from a partial state."""
    a, b = ext[0], ext[1]
    if dim == 2:
        area = total_volume
        if a * b >= area:
            return float(a + b)
        s = math.sqrt(area)
        if a >= s:
            return a + max(b, area / a)
        if b >= s:
            return max(a, area / b) + b
        return 2.0 * s
    c = ext[2]
    return max(
        float(a * b + b * c + a * c),
        3.0 * float(total_volume) ** (2.0 / 3.0),
    )


def exhaustive_solve(inst: Instance, prune: bool = True):
    """Depth-first optimum over the full action tree; returns (reward, state).

    Admissibly pruned on an extent/volume lower bound and memoized on the
    placed-box set, so permutations of the same partial packing are
    explored once.  Guarded to small instances; the action tree is
    factorial in the item count.
    """
    if inst.n_items > EXHAUSTIVE_MAX_ITEMS:
        raise ValueError(
            f"exhaustive search refuses {inst.n_items} items "
            f"(limit {EXHAUSTIVE_MAX_ITEMS})"
        )
    total = inst.total_volume
    best_cost = math.inf
    best_state = None
    seen = set()

    def dfs(state: PackState):
        nonlocal best_cost, best_state
        if state.is_terminal:
            cost = bin_cost(state)
            if cost < best_cost:
                best_cost = cost
                best_state = state
            return
        key = frozenset(map(tuple, state.boxes.tolist()))
        if key in seen:
            return
        seen.add(key)
        rows = legal_action_rows(state)
        children = []
        for row in rows:
            ext = tuple(
                max(int(e), int(p) + int(d))
                for e, p, d in zip(state.ext, row[2:5], row[5:8])
            )
            children.append((_lower_bound(ext, inst.dim, total), row))
        children.sort(key=lambda c: c[0])
        for lb, row in children:
            if prune and lb > best_cost - 1 + 1e-9:
                continue  # integer costs: cannot strictly improve
            dfs(apply_row(state, row))

    dfs(initial_state(inst))
    return terminal_reward(best_state), best_state


@dataclass
class SupervisedConfig:
    dim: int = 2
    n_items: int = 10
    bin_edge: int = 10
    n_instances: int = 300
    epochs: int = 3
    batch_size: int = 32
    lr: float = 1e-3
    hidden: int = 64
    seed: int = 0

    @property
    def bin_dims(self):
        return (self.bin_edge,) * self.dim


def supervised_train(cfg: SupervisedConfig, log=None):
    """Train the same network toward the generator's optimal sequences.

    Policy targets are one-hot on the optimal action, value targets are
    +1 (these trajectories are optimal by construction).  Instances whose
    layout replay fails are skipped and counted.  Returns
    ``(params, n_skipped)``; the checkpoint format is shared with the
    self-play trainer.
    """
    params = NetParams(feature_width(cfg.dim), cfg.hidden, seed=derive_seed(cfg.seed, 0xA5))
    triplets = []
    skipped = 0
    for i in range(cfg.n_instances):
        inst = generate(cfg.n_items, cfg.bin_dims, derive_seed(cfg.seed, 0x5D, i))
        try:
            seq = optimal_sequence(inst)
        except SequenceError:
            skipped += 1
            continue
        state = initial_state(inst)
        for action in seq:
            rows = legal_action_rows(state)
            box = np.array([action.item_id, action.orient, *action.pos3], dtype=np.int64)
            idx = np.flatnonzero(np.all(rows[:, :5] == box, axis=1))
            target = np.zeros(len(rows))
            target[int(idx[0])] = 1.0
            triplets.append((featurize(state, rows), target))
            state = apply_row(state, rows[int(idx[0])])
    rng = derive_rng(cfg.seed, 0x51)
    n = len(triplets)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n - cfg.batch_size + 1, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            total = None
            for i in batch:
                f, t = triplets[int(i)]
                loss, grads = loss_and_grads(params, f, t, 1.0)
                losses.append(loss)
                if total is None:
                    total = grads
                else:
                    for k in total:
                        total[k] += grads[k]
            for k in total:
                total[k] /= len(batch)
            adam_step(params, total, cfg.lr)
        if log:
            log(f"epoch {epoch}: mean loss {np.mean(losses):.4f} "
                f"({n} pairs, {skipped} instances skipped)")
    return params, skipped


def make_agent(kind: str, checkpoint_params=None, simulations: int = 300):
    """Agent factory keyed by the CLI agent names."""
    if kind not in AGENT_KINDS:
        raise ValueError(f"unknown agent kind {kind!r} (choose from {AGENT_KINDS})")
    if kind == "lego":
        return LegoAgent()
    if kind == "random":
        return RandomAgent()
    if kind == "exhaustive":
        return ExhaustiveAgent()
    if kind == "plain-mcts":
        return MctsAgent(simulations=simulations)
    if checkpoint_params is None:
        raise ValueError(f"agent {kind!r} needs a checkpoint")
    if kind in ("net-only", "supervised-net"):
        agent = NetGreedyAgent(checkpoint_params)
        agent.name = kind
        return agent
    return MctsAgent(simulations=simulations, params=checkpoint_params)
