"""Ranked rewards: reward buffer, percentile threshold, and the ±1 reshape.

The buffer is single-writer: one owner serializes pushes and threshold
reads; episode workers only ever see threshold snapshots (plain floats).
"""

import math
from collections import deque

import numpy as np


def validate_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha < 100.0:
        raise ValueError(f"percentile must lie strictly inside (0, 100), got {alpha}")
    return alpha


class RewardBuffer:
    """Fixed-capacity FIFO of recent terminal MDP rewards in (0, 1]."""

    def __init__(self, capacity: int = 250, entries=()):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._entries = deque(maxlen=capacity)
        for r in entries:
            self.push(r)

    def __len__(self):
        return len(self._entries)

    @property
    def entries(self) -> tuple:
        """Current contents, oldest first."""
        return tuple(self._entries)

    def push(self, r: float) -> None:
        """Append a terminal reward, evicting the oldest entry when full.

        Rewards outside (0, 1] signal an environment bug and are rejected.
        """
        r = float(r)
        if not 0.0 < r <= 1.0:
            raise ValueError(f"terminal reward must lie in (0, 1], got {r}")
        self._entries.append(r)

    def threshold(self, alpha: float) -> float:
        """Nearest-rank percentile of the buffer contents.

        Sorts ascending and returns the entry at 1-based index
        ceil(alpha/100 * n), clamped to [1, n]; the result is always an
        element of the buffer, as the tie rule of the reshape requires.
        """
        alpha = validate_alpha(alpha)
        n = len(self._entries)
        if n == 0:
            raise ValueError("threshold of an empty reward buffer")
        idx = min(max(math.ceil(alpha / 100.0 * n), 1), n)
        return sorted(self._entries)[idx - 1]


def rank(r: float, r_alpha: float, rng: np.random.Generator, optimal=None) -> int:
    """Reshape an MDP reward into a ranked reward z in {-1, +1}.

    +1 when the reward beats the threshold or the episode is optimal
    (r = 1); -1 when it falls short; a fair coin on exact ties below 1,
    so matching the threshold never becomes a comfortable resting point.

    ``optimal`` overrides the r = 1 test with an exact integer-arithmetic
    verdict from the environment; by default exact float equality is
    used (rewards are ratios of an irrational to an integer, so spurious
    ties are not expected).
    """
    if optimal is None:
        optimal = r == 1.0
    if optimal or r > r_alpha:
        return 1
    if r < r_alpha:
        return -1
    return 1 if rng.random() < 0.5 else -1
