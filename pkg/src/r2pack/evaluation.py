"""Evaluation harness: run agents over a shared test set, emit CSV reports.

Instances and per-instance rng seeds are paired across agents, so every
agent competes on identical problems.  A per-instance agent failure is
recorded as reward 0.  Every produced layout is replayed through the
validated environment before scoring; agents cannot bypass the
constraint checks.
"""

import time
from dataclasses import dataclass

import numpy as np

from .env import Action, apply_action, bin_cost, initial_state, is_optimal, terminal_reward
from .instances import generate
from .training import derive_rng, derive_seed


@dataclass
class EvalReport:
    rows: list  # per (agent, instance) result dicts
    aggregates: list  # per agent summary dicts
    boxplot: list  # per agent quartile/whisker dicts

    def write_csvs(self, out_dir) -> None:
        from pathlib import Path

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "results.csv",
                   ["agent", "instance_seed", "n_items", "dim", "reward", "cost",
                    "optimal", "millis"], self.rows)
        _write_csv(out / "summary.csv",
                   ["agent", "mean_reward", "std_reward", "optimality_pct"],
                   self.aggregates)
        _write_csv(out / "boxplot.csv",
                   ["agent", "whisker_lo", "q1", "median", "q3", "whisker_hi"],
                   self.boxplot)


def _write_csv(path, columns, rows):
    with open(path, "w") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row[c]) for c in columns) + "\n")


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def make_test_set(count, n_items, bin_dims, seed):
    """Deterministic list of fresh instances for evaluation."""
    return [
        generate(n_items, bin_dims, derive_seed(seed, 0x7357, i)) for i in range(count)
    ]


def _revalidate(inst, state) -> float:
    """Replay the layout through the validated environment; returns the reward."""
    check = initial_state(inst)
    for pl in state.placements:
        check = apply_action(check, Action(pl.item_id, pl.pos, pl.orient))
    reward = terminal_reward(check)
    if reward != terminal_reward(state):
        raise RuntimeError("re-validated reward differs from the agent's state")
    return reward


def evaluate(agents: dict, instances, seed: int = 0, out_dir=None) -> EvalReport:
    """Run every agent on every instance; returns (and optionally writes) the report.

    ``agents`` maps a report name to an agent object.  Stochastic agents
    get identical per-instance rng seeds across agents.
    """
    rows = []
    per_agent = {name: [] for name in agents}
    for name, agent in agents.items():
        for i, inst in enumerate(instances):
            rng = derive_rng(seed, 0xEA, i)
            t0 = time.perf_counter()
            try:
                state = agent.solve(inst, rng)
                if not state.is_terminal:
                    raise RuntimeError("agent returned a non-terminal state")
                reward = _revalidate(inst, state)
                cost = int(round(bin_cost(state)))
                optimal = int(is_optimal(state))
            except Exception:
                reward, cost, optimal = 0.0, 0, 0
            millis = 1000.0 * (time.perf_counter() - t0)
            rows.append({
                "agent": name, "instance_seed": inst.seed, "n_items": inst.n_items,
                "dim": inst.dim, "reward": reward, "cost": cost,
                "optimal": optimal, "millis": millis,
            })
            per_agent[name].append(reward)

    aggregates, boxplot = [], []
    for name, rewards in per_agent.items():
        arr = np.asarray(rewards)
        aggregates.append({
            "agent": name,
            "mean_reward": float(arr.mean()),
            "std_reward": float(arr.std()),
            "optimality_pct": 100.0 * sum(
                r["optimal"] for r in rows if r["agent"] == name) / len(arr),
        })
        q1, med, q3 = np.percentile(arr, [25, 50, 75])
        iqr = q3 - q1
        lo = float(arr[arr >= q1 - 1.5 * iqr].min())
        hi = float(arr[arr <= q3 + 1.5 * iqr].max())
        boxplot.append({
            "agent": name, "whisker_lo": lo, "q1": float(q1),
            "median": float(med), "q3": float(q3), "whisker_hi": hi,
        })
    report = EvalReport(rows, aggregates, boxplot)
    if out_dir is not None:
        report.write_csvs(out_dir)
    return report
