"""Per-step records of a single bandit run."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np


@dataclass
class RegretTrace:
    """Everything one (algorithm, seed) run produced, step by step.

    ``selected`` is the agent index played at each step, or ``-1`` when the
    action came from exploration or the algorithm has no agents.
    ``q_history[t-1]`` is the agent distribution used at step ``t``.
    """

    algorithm: str
    seed: int
    instant: np.ndarray
    explored: np.ndarray
    selected: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    q_history: np.ndarray | None = None
    oracle_index: int | None = None
    info: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.instant)

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.instant)

    def visited_counts(self) -> np.ndarray:
        """Number of distinct agents played up to and including each step."""
        seen: set[int] = set()
        out = np.empty(self.n, dtype=int)
        for i, j in enumerate(self.selected):
            if j >= 0:
                seen.add(int(j))
            out[i] = len(seen)
        return out

    def q_hash(self, step: int) -> str:
        if self.q_history is None:
            return ""
        return hashlib.sha1(np.ascontiguousarray(self.q_history[step]).tobytes()).hexdigest()[:12]


class TraceRecorder:
    """Accumulates step records and builds a :class:`RegretTrace`."""

    def __init__(self, algorithm: str, seed: int, oracle_index: int | None = None,
                 record_q: bool = False):
        self.algorithm = algorithm
        self.seed = seed
        self.oracle_index = oracle_index
        self.record_q = record_q
        self.rows: list[tuple] = []
        self.qs: list[np.ndarray] = []
        self.info: dict = {}

    def log(self, regret: float, explored: bool, selected: int, action: float, reward: float,
            q: np.ndarray | None = None) -> None:
        self.rows.append((regret, explored, selected, action, reward))
        if self.record_q and q is not None:
            self.qs.append(np.array(q, dtype=float))

    def build(self) -> RegretTrace:
        cols = list(zip(*self.rows)) if self.rows else [(), (), (), (), ()]
        return RegretTrace(
            algorithm=self.algorithm,
            seed=self.seed,
            instant=np.asarray(cols[0], dtype=float),
            explored=np.asarray(cols[1], dtype=bool),
            selected=np.asarray(cols[2], dtype=int),
            actions=np.asarray(cols[3], dtype=float),
            rewards=np.asarray(cols[4], dtype=float),
            q_history=np.asarray(self.qs) if self.qs else None,
            oracle_index=self.oracle_index,
            info=dict(self.info),
        )
