"""Synthetic sparse reward functions over a Legendre model class."""

from __future__ import annotations

import zlib

import numpy as np

from .features import ModelClass, action_grid

DEFAULT_SIGMA = 0.01

_STREAM_IDS = {"construction": 0, "noise": 1}


def rng_stream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for one consumer of a run seed.

    Streams are keyed by name, so adding or changing one consumer never
    shifts the draws seen by another.
    """
    key = _STREAM_IDS.get(name)
    if key is None:
        key = zlib.crc32(name.encode()) + len(_STREAM_IDS)
    return np.random.default_rng([int(seed), key])


class SyntheticEnv:
    """Reward ``r(x) = theta^T phi_{j*}(x)`` with Gaussian observation noise.

    Use :func:`make_env` to draw ``j*`` and ``theta`` from a seed.
    """

    def __init__(
        self,
        mc: ModelClass,
        oracle_index: int,
        theta_star,
        noise_sigma: float = DEFAULT_SIGMA,
        seed: int = 0,
        grid: np.ndarray | None = None,
    ):
        if noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        theta_star = np.asarray(theta_star, dtype=float)
        if theta_star.shape != (mc.group_size,):
            raise ValueError(f"theta_star must have shape ({mc.group_size},)")
        mc._check_index(oracle_index)
        self.mc = mc
        self.oracle_index = int(oracle_index)
        self.theta_star = theta_star
        self.noise_sigma = float(noise_sigma)
        self.seed = int(seed)
        self.grid = action_grid() if grid is None else np.asarray(grid, dtype=float)
        self.grid_values = self.reward_mean(self.grid)
        self.best_index = int(np.argmax(self.grid_values))
        self.best_action = float(self.grid[self.best_index])
        self.best_value = float(self.grid_values[self.best_index])
        self.reset()

    def reset(self) -> None:
        """Rewind the noise stream to its start."""
        self._noise = rng_stream(self.seed, "noise")

    @property
    def theta_full(self) -> np.ndarray:
        """``theta`` embedded in the concatenated coefficient space."""
        full = np.zeros(self.mc.n_features)
        full[self.mc.group_slice(self.oracle_index)] = self.theta_star
        return full

    def reward_mean(self, x):
        vals = self.mc.model_features(self.oracle_index, x) @ self.theta_star
        return float(vals[0]) if np.ndim(x) == 0 else vals

    def observe(self, x) -> float:
        mean = self.reward_mean(float(x))
        if self.noise_sigma == 0:
            return mean
        return mean + self.noise_sigma * float(self._noise.standard_normal())

    def regret_increment(self, x):
        return self.best_value - self.reward_mean(x)


def make_env(
    mc: ModelClass, sigma: float = DEFAULT_SIGMA, seed: int = 0, grid: np.ndarray | None = None
) -> SyntheticEnv:
    """Draw ``j*`` uniformly and a unit-norm Gaussian ``theta`` from ``seed``."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    rng = rng_stream(seed, "construction")
    j_star = int(rng.integers(mc.n_models))
    theta = rng.standard_normal(mc.group_size)
    theta /= np.linalg.norm(theta)
    return SyntheticEnv(mc, j_star, theta, noise_sigma=sigma, seed=seed, grid=grid)
