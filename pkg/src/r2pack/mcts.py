"""Monte Carlo tree search over packing states (and any compatible MDP).

Two modes share one selection rule (PUCT over child statistics):

* ``guided``: leaf nodes are evaluated by the policy/value network;
  terminal simulations back up the ranked reward z in {-1, +1} computed
  against a threshold snapshot frozen for the whole search.  While the
  reward buffer is still empty (no threshold yet) terminals back up
  2r - 1, the affine map of the MDP reward onto [-1, 1].
* ``rollout``: the no-network baseline; leaves get uniform priors and a
  single uniform-random playout, and terminals back up the raw MDP
  reward in (0, 1].

The search object owns one tree and is single-threaded; run independent
searches in separate workers for parallelism.  ``advance`` keeps the
chosen child's subtree (statistics intact) as the next root.

The tree works against a small duck-typed game interface —
``actions(state)``, ``step(state, action)``, ``is_terminal(state)``,
``terminal_outcome(state) -> (reward, optimal)`` — so tests can drive it
with hand-built micro-MDPs.
"""

import io
from dataclasses import dataclass

import numpy as np

from . import env as _env
from .net import featurize, forward
from .ranking import rank


@dataclass
class SearchConfig:
    simulations: int = 300
    c_puct: float = 1.25
    dirichlet_epsilon: float = 0.25  # 0 disables root noise (evaluation)
    dirichlet_alpha: float = 0.3
    mode: str = "guided"  # "guided" | "rollout"

    def __post_init__(self):
        if self.simulations < 1:
            raise ValueError(f"need at least one simulation, got {self.simulations}")
        if self.mode not in ("guided", "rollout"):
            raise ValueError(f"unknown search mode {self.mode!r}")


class PackingGame:
    """Adapter exposing the packing environment to the search."""

    def actions(self, state):
        return _env.legal_action_rows(state)

    def step(self, state, action):
        return _env.apply_row(state, action)

    def is_terminal(self, state):
        return state.is_terminal

    def terminal_outcome(self, state):
        return _env.terminal_reward(state), _env.is_optimal(state)


def make_net_evaluator(params):
    """(state, actions) -> (priors, value) using the policy/value net."""

    def evaluate(state, actions):
        out = forward(params, featurize(state, actions))
        return out.policy, out.value

    return evaluate


class _Node:
    __slots__ = ("state", "actions", "P", "N", "W", "children", "terminal", "reward", "optimal")

    def __init__(self, state):
        self.state = state
        self.actions = None
        self.P = None
        self.N = None
        self.W = None
        self.children = {}
        self.terminal = False
        self.reward = 0.0
        self.optimal = False


class SearchTree:
    """One reusable search tree; deterministic given its rng."""

    def __init__(self, game, cfg: SearchConfig, rng, evaluator=None):
        if cfg.mode == "guided" and evaluator is None:
            raise ValueError("guided search needs an evaluator")
        self.game = game
        self.cfg = cfg
        self.rng = rng
        self.evaluator = evaluator
        self.root = None
        self.root_visits = 0

    def reset(self, state) -> None:
        self.root = self._make_node(state)
        self.root_visits = 0

    def _make_node(self, state):
        node = _Node(state)
        if self.game.is_terminal(state):
            node.terminal = True
            node.reward, node.optimal = self.game.terminal_outcome(state)
        return node

    def _expand(self, node):
        actions = self.game.actions(node.state)
        n = len(actions)
        node.actions = actions
        if self.cfg.mode == "rollout":
            node.P = np.full(n, 1.0 / n)
            value = _rollout(self.game, node.state, self.rng)
        else:
            priors, value = self.evaluator(node.state, actions)
            node.P = np.asarray(priors, dtype=np.float64)
        node.N = np.zeros(n)
        node.W = np.zeros(n)
        return value

    def _terminal_value(self, node, threshold):
        if self.cfg.mode == "rollout":
            return node.reward
        if threshold is None:
            return 2.0 * node.reward - 1.0  # warm-up: no ranking context yet
        return float(rank(node.reward, threshold, self.rng, optimal=node.optimal))

    def run(self, threshold=None) -> np.ndarray:
        """Run the configured number of simulations; returns child visit counts.

        Counts sum to ``simulations`` for a fresh root (the root's own
        initial evaluation is not a child visit); a root reused via
        :meth:`advance` keeps its previous counts and adds to them.
        """
        cfg = self.cfg
        root = self.root
        if root is None:
            raise ValueError("run() before reset()")
        if root.terminal:
            raise ValueError("search from a terminal state")
        if root.actions is None:
            self._expand(root)
            self.root_visits += 1
        p_select = root.P
        if cfg.dirichlet_epsilon > 0.0:
            noise = self.rng.dirichlet(np.full(len(root.P), cfg.dirichlet_alpha))
            p_select = (1.0 - cfg.dirichlet_epsilon) * root.P + cfg.dirichlet_epsilon * noise
        for _ in range(cfg.simulations):
            node = root
            path = []
            while True:
                priors = p_select if node is root else node.P
                idx = _select(node, priors, cfg.c_puct)
                path.append((node, idx))
                child = node.children.get(idx)
                if child is None:
                    child = self._make_node(self.game.step(node.state, node.actions[idx]))
                    node.children[idx] = child
                    if child.terminal:
                        value = self._terminal_value(child, threshold)
                    else:
                        value = self._expand(child)
                    break
                if child.terminal:
                    value = self._terminal_value(child, threshold)
                    break
                if child.actions is None:
                    value = self._expand(child)
                    break
                node = child
            for n, i in path:
                n.N[i] += 1.0
                n.W[i] += value
            self.root_visits += 1
        return root.N.copy()

    def root_actions(self):
        return self.root.actions

    def advance(self, idx: int) -> None:
        """Make child ``idx`` the new root, keeping its subtree statistics."""
        if self.root is None or self.root.actions is None:
            raise ValueError("advance() before the root was searched")
        child = self.root.children.get(idx)
        if child is None:
            child = self._make_node(self.game.step(self.root.state, self.root.actions[idx]))
        self.root_visits = int(self.root.N[idx])
        self.root = child

    def trace(self) -> str:
        """Structured-text dump of the root statistics for debugging."""
        node = self.root
        buf = io.StringIO()
        width = 0 if node.P is None else len(node.P)
        buf.write(f"root step={getattr(node.state, 'step', '?')} children={width}\n")
        if node.actions is None:
            return buf.getvalue()
        for i in range(len(node.P)):
            q = node.W[i] / node.N[i] if node.N[i] else 0.0
            act = node.actions[i]
            label = list(act) if isinstance(act, np.ndarray) else act
            buf.write(f"  a={label} P={node.P[i]:.4f} N={int(node.N[i])} Q={q:+.4f}\n")
        return buf.getvalue()


def _select(node, priors, c_puct):
    n = node.N
    q = np.divide(node.W, n, out=np.zeros_like(node.W), where=n > 0)
    score = q + c_puct * priors * (np.sqrt(n.sum()) / (1.0 + n))
    return int(np.argmax(score))


def _rollout(game, state, rng):
    while not game.is_terminal(state):
        actions = game.actions(state)
        state = game.step(state, actions[int(rng.integers(len(actions)))])
    return game.terminal_outcome(state)[0]


def rollout_value(state, rng) -> float:
    """Terminal MDP reward of one uniform-random playout from ``state``."""
    return _rollout(PackingGame(), state, rng)


def improved_policy(counts, tau: float) -> np.ndarray:
    """Visit-count policy: proportional to N^(1/tau); argmax one-hot at tau=0.

    Ties at tau=0 break deterministically toward the first index.
    """
    counts = np.asarray(counts, dtype=np.float64)
    if counts.min() < 0 or not counts.any():
        raise ValueError("counts must be non-negative and not all zero")
    if tau == 0.0:
        out = np.zeros_like(counts)
        out[int(np.argmax(counts))] = 1.0
        return out
    scaled = (counts / counts.max()) ** (1.0 / tau)
    return scaled / scaled.sum()


def search(root_state, net_snapshot, threshold_snapshot, cfg: SearchConfig, rng):
    """One-shot guided/rollout search over a packing state.

    Returns ``(action_rows, visit_counts)``; build a move distribution
    with :func:`improved_policy`.
    """
    game = PackingGame()
    evaluator = make_net_evaluator(net_snapshot) if cfg.mode == "guided" else None
    tree = SearchTree(game, cfg, rng, evaluator)
    tree.reset(root_state)
    counts = tree.run(threshold_snapshot)
    return tree.root_actions(), counts
