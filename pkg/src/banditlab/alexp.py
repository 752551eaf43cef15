"""Anytime exponential weights over Lasso-hallucinated agent rewards."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import softmax
from sklearn.base import BaseEstimator

from .agents import DEFAULT_BETA, DEFAULT_REG, AgentBank
from .environment import SyntheticEnv, rng_stream
from .grouplasso import DEFAULT_LAMBDA0, LassoSchedule, solve_gram
from .trace import RegretTrace, TraceRecorder


def schedule_gamma(gamma0: float, t: int) -> float:
    """Exploration probability ``min(1, gamma0 * t^{-1/4})``."""
    if gamma0 < 0:
        raise ValueError("gamma0 must be non-negative")
    if t < 1:
        raise ValueError("t must be >= 1")
    return min(1.0, gamma0 * t**-0.25)


def schedule_eta(eta0: float, t: int, cap: float | None = None) -> float:
    """Learning rate ``eta0 / sqrt(t)``.

    With ``cap`` (a bound on ``|r_hat|``) the rate is clipped to ``1 / cap``
    so that ``eta * |r_hat| <= 1``.
    """
    if t < 1:
        raise ValueError("t must be >= 1")
    eta = eta0 / math.sqrt(t)
    if cap is not None and cap > 0:
        eta = min(eta, 1.0 / cap)
    return eta


def exp_weights_update(cum_rhat, eta: float) -> np.ndarray:
    """``softmax(eta * cum_rhat)``, computed with max-subtraction."""
    if eta < 0:
        raise ValueError("eta must be non-negative")
    return softmax(eta * np.asarray(cum_rhat, dtype=float))


def sample_index(q: np.ndarray, u: float) -> int:
    """Inverse-CDF draw from ``q`` for a uniform ``u`` in [0, 1)."""
    cdf = np.cumsum(q)
    return min(int(np.searchsorted(cdf, u * cdf[-1], side="right")), len(q) - 1)


def mixture_density(q, proposals, gamma: float, grid_size: int) -> np.ndarray:
    """Probability of each grid action under the explore/agent mixture.

    ``proposals`` holds each agent's (Dirac) grid index.
    """
    dens = np.full(grid_size, gamma / grid_size)
    np.add.at(dens, np.asarray(proposals, dtype=int), (1.0 - gamma) * np.asarray(q, dtype=float))
    return dens


@dataclass
class MetaState:
    q: np.ndarray
    cum_rhat: np.ndarray
    t: int = 0
    gamma0: float = 1e-2
    eta0: float = 10.0
    eta: float = 0.0
    rhat_bound: float = 0.0
    visited: set = field(default_factory=set)

    @classmethod
    def initial(cls, n_models: int, gamma0: float, eta0: float) -> "MetaState":
        return cls(q=np.full(n_models, 1.0 / n_models), cum_rhat=np.zeros(n_models),
                   gamma0=gamma0, eta0=eta0)


class ALExp(BaseEstimator):
    """Model selection over the agents of a Legendre model class.

    Parameters
    ----------
    gamma0 : float
        Scale of the exploration probability ``gamma_t = gamma0 t^{-1/4}``.
    eta0 : float
        Scale of the learning rate ``eta_t = eta0 t^{-1/2}``.
    lambda0 : float
        Scale of the Lasso regularization schedule.
    lambda_ridge : float
        Ridge constant of the base agents.
    beta : float
        UCB exploration coefficient of the base agents.
    delta : float
        Confidence level entering the Lasso schedule.
    policy : {"ucb", "greedy"}
    clip_eta : bool
        Keep ``eta_t |r_hat| <= 1`` using the running maximum of ``|r_hat|``.
    solve_every : int
        Re-solve the Lasso every ``solve_every`` steps.
    sigma : float or None
        Noise level for the Lasso schedule; defaults to the environment's.
    """

    name = "alexp"

    def __init__(self, gamma0=1e-2, eta0=10.0, lambda0=DEFAULT_LAMBDA0, lambda_ridge=DEFAULT_REG,
                 beta=DEFAULT_BETA, delta=0.1, policy="ucb", clip_eta=True, solve_every=1,
                 tol=1e-6, max_iter=10000, record_q=True, sigma=None):
        self.gamma0 = gamma0
        self.eta0 = eta0
        self.lambda0 = lambda0
        self.lambda_ridge = lambda_ridge
        self.beta = beta
        self.delta = delta
        self.policy = policy
        self.clip_eta = clip_eta
        self.solve_every = solve_every
        self.tol = tol
        self.max_iter = max_iter
        self.record_q = record_q
        self.sigma = sigma

    def start(self, env: SyntheticEnv) -> "ALExpRun":
        return ALExpRun(self, env)

    def run(self, env: SyntheticEnv, n: int) -> RegretTrace:
        return self.start(env).advance(n).trace()


class ALExpRun:
    """Live state of one ALExp run; call :meth:`step` or :meth:`advance`."""

    def __init__(self, algo: ALExp, env: SyntheticEnv):
        mc = env.mc
        self.algo = algo
        self.env = env
        self.mc = mc
        self.grid = env.grid
        self.grid_features = mc.features(self.grid)  # (G, M*s)
        self.bank = AgentBank(self.grid_features.reshape(len(self.grid), mc.n_models, mc.group_size),
                              reg=algo.lambda_ridge, beta=algo.beta, policy=algo.policy)
        sigma = env.noise_sigma if algo.sigma is None else algo.sigma
        self.schedule = LassoSchedule(sigma, mc.n_models, mc.group_size, algo.delta, algo.lambda0)
        self.rng = rng_stream(env.seed, algo.name)
        self.state = MetaState.initial(mc.n_models, algo.gamma0, algo.eta0)
        self.proposals = self.bank.proposals()
        self.theta = np.zeros(mc.n_features)
        self._xtx = np.zeros((mc.n_features, mc.n_features))
        self._xty = np.zeros(mc.n_features)
        self._yty = 0.0
        self.recorder = TraceRecorder(algo.name, env.seed, env.oracle_index, algo.record_q)
        self.recorder.info["solver_failures"] = []
        self.last_rhat = np.zeros(mc.n_models)

    def step(self) -> float:
        """Play one round; returns the action taken."""
        algo, st = self.algo, self.state
        st.t += 1
        t = st.t
        q_now = st.q
        gamma = schedule_gamma(algo.gamma0, t)
        explore = bool(self.rng.random() < gamma)
        if explore:
            idx = int(self.rng.integers(len(self.grid)))
            j = -1
        else:
            j = sample_index(q_now, self.rng.random())
            idx = int(self.proposals[j])
            st.visited.add(j)
        x = float(self.grid[idx])
        y = self.env.observe(x)
        regret = self.env.best_value - self.env.grid_values[idx]

        phi = self.grid_features[idx]
        self._xtx += np.outer(phi, phi)
        self._xty += phi * y
        self._yty += y * y
        if (t - 1) % algo.solve_every == 0:
            est = solve_gram(self._xtx / t, self._xty / t, self._yty / t, self.mc.n_models,
                             self.schedule(t), tol=algo.tol, max_iter=algo.max_iter,
                             init=self.theta)
            self.theta = est.theta_hat
            if not est.converged:
                self.recorder.info["solver_failures"].append(t)

        self.bank.add(idx, y)
        self.proposals = self.bank.proposals()
        rhat = (self.grid_features @ self.theta)[self.proposals]
        self.last_rhat = rhat
        st.cum_rhat = st.cum_rhat + rhat
        st.rhat_bound = max(st.rhat_bound, float(np.abs(rhat).max()))
        st.eta = schedule_eta(algo.eta0, t, st.rhat_bound if algo.clip_eta else None)
        st.q = exp_weights_update(st.cum_rhat, st.eta)

        self.recorder.log(regret, explore, j, x, y, q_now)
        return x

    def advance(self, n: int) -> "ALExpRun":
        for _ in range(n):
            self.step()
        return self

    def trace(self) -> RegretTrace:
        return self.recorder.build()
