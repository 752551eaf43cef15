"""Comparison algorithms: UCB (oracle and naive), ETC, ETS and Corral."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .agents import DEFAULT_BETA, DEFAULT_REG, RidgeAgent, ucb_propose
from .alexp import sample_index
from .environment import SyntheticEnv, rng_stream
from .grouplasso import DEFAULT_LAMBDA0, solve
from .trace import RegretTrace, TraceRecorder


def _ucb_loop(env, agent, grid_features, start, n, beta, recorder):
    """UCB on precomputed grid features from step ``start`` through ``n``."""
    for _ in range(start, n + 1):
        idx = ucb_propose(agent, grid_features, beta)
        y = env.observe(env.grid[idx])
        agent.partial_fit(grid_features[idx], y)
        recorder.log(env.best_value - env.grid_values[idx], False, -1, float(env.grid[idx]), y)


class UCB(BaseEstimator):
    """Ridge UCB over the oracle feature map or the full concatenation.

    Parameters
    ----------
    mode : {"oracle", "naive"}
    lambda_ridge : float
    beta : float
    """

    def __init__(self, mode="oracle", lambda_ridge=DEFAULT_REG, beta=DEFAULT_BETA):
        self.mode = mode
        self.lambda_ridge = lambda_ridge
        self.beta = beta

    @property
    def name(self) -> str:
        return f"{self.mode}_ucb"

    def feature_columns(self, env: SyntheticEnv) -> np.ndarray:
        if self.mode == "oracle":
            return np.arange(env.mc.n_features)[env.mc.group_slice(env.oracle_index)]
        if self.mode == "naive":
            return np.arange(env.mc.n_features)
        raise ValueError(f"unknown UCB mode {self.mode!r}")

    def run(self, env: SyntheticEnv, n: int) -> RegretTrace:
        feats = env.mc.features(env.grid)[:, self.feature_columns(env)]
        rec = TraceRecorder(self.name, env.seed, env.oracle_index)
        _ucb_loop(env, RidgeAgent(self.lambda_ridge), feats, 1, n, self.beta, rec)
        return rec.build()


def commit_lambda(lambda0: float, n_models: int, n0: int) -> float:
    """Regularization for a single Lasso fit after ``n0`` exploratory rounds."""
    return lambda0 * math.sqrt(math.log(n_models) / n0)


@dataclass(frozen=True)
class EtcConfig:
    n0: int
    n: int
    lambda1: float

    def __post_init__(self):
        if not 1 <= self.n0 <= self.n:
            raise ValueError(f"need 1 <= n0 <= n, got n0={self.n0}, n={self.n}")


def _explore(env, rng, n0, recorder):
    idx = rng.integers(len(env.grid), size=n0)
    ys = []
    for i in idx:
        y = env.observe(env.grid[i])
        ys.append(y)
        recorder.log(env.best_value - env.grid_values[i], True, -1, float(env.grid[i]), y)
    return idx, np.array(ys)


class ETC(BaseEstimator):
    """Uniform exploration for ``n0`` rounds, one Lasso fit, then a fixed action.

    Parameters
    ----------
    n0 : int
    lambda0 : float
        Scale of the commit regularization ``lambda0 * sqrt(log M / n0)``.
    """

    name = "etc"

    def __init__(self, n0=20, lambda0=DEFAULT_LAMBDA0, tol=1e-6, max_iter=10000):
        self.n0 = n0
        self.lambda0 = lambda0
        self.tol = tol
        self.max_iter = max_iter

    def _fit_lasso(self, env, n0, rec):
        mc = env.mc
        feats = mc.features(env.grid)
        idx, ys = _explore(env, rng_stream(env.seed, self.name), n0, rec)
        lam = commit_lambda(self.lambda0, mc.n_models, n0)
        est = solve(feats[idx], ys, lam, mc.n_models, self.tol, self.max_iter)
        rec.info["lambda1"] = lam
        rec.info["solver_converged"] = est.converged
        return feats, idx, ys, est

    def run(self, env: SyntheticEnv, n: int) -> RegretTrace:
        cfg = EtcConfig(min(self.n0, n), n, commit_lambda(self.lambda0, env.mc.n_models, min(self.n0, n)))
        rec = TraceRecorder(self.name, env.seed, env.oracle_index)
        feats, _, _, est = self._fit_lasso(env, cfg.n0, rec)
        commit = int(np.argmax(feats @ est.theta_hat))
        rec.info["commit_action"] = float(env.grid[commit])
        for _ in range(cfg.n0, n):
            y = env.observe(env.grid[commit])
            rec.log(env.best_value - env.grid_values[commit], False, -1, float(env.grid[commit]), y)
        return rec.build()


def select_models(est) -> tuple[list[int], str]:
    """Group support of a Lasso fit, with fallbacks when it is empty."""
    support = list(est.support)
    if support:
        return support, "support"
    norms = est.group_norms
    if norms.max() > 0:
        return [int(np.argmax(norms))], "largest_group"
    return list(range(est.n_groups)), "all_models"


class ETS(ETC):
    """ETC variant that keeps the Lasso's selected models and runs UCB on them.

    Parameters
    ----------
    n0 : int
    lambda0 : float
    lambda_ridge : float
    beta : float
    """

    name = "ets"

    def __init__(self, n0=20, lambda0=DEFAULT_LAMBDA0, lambda_ridge=DEFAULT_REG, beta=DEFAULT_BETA,
                 tol=1e-6, max_iter=10000):
        super().__init__(n0=n0, lambda0=lambda0, tol=tol, max_iter=max_iter)
        self.lambda_ridge = lambda_ridge
        self.beta = beta

    def run(self, env: SyntheticEnv, n: int) -> RegretTrace:
        n0 = min(self.n0, n)
        mc = env.mc
        rec = TraceRecorder(self.name, env.seed, env.oracle_index)
        feats, idx, ys, est = self._fit_lasso(env, n0, rec)
        chosen, how = select_models(est)
        rec.info["selected_models"] = chosen
        rec.info["selection"] = how
        cols = np.concatenate([np.arange(mc.n_features)[mc.group_slice(j)] for j in chosen])
        sub = feats[:, cols]
        agent = RidgeAgent(self.lambda_ridge).fit(sub[idx], ys)
        _ucb_loop(env, agent, sub, n0 + 1, n, self.beta, rec)
        return rec.build()


def _omd_sum(q_inv, loss, eta, xi):
    denom = q_inv + eta * (loss - xi)
    if np.any(denom <= 0):
        return math.inf
    return float(np.sum(1.0 / denom))


def log_barrier_omd(q, loss, eta, max_iter: int = 200) -> np.ndarray:
    """Log-barrier mirror step: ``1/q'_j = 1/q_j + eta_j (loss_j - xi)``.

    ``xi`` is found by bisection on ``[min loss, max loss]`` so that the
    new weights sum to one.
    """
    q = np.asarray(q, dtype=float)
    loss = np.asarray(loss, dtype=float)
    eta = np.asarray(eta, dtype=float) * np.ones_like(q)
    if np.any(q <= 0) or np.any(eta <= 0):
        raise ValueError("q and eta must be strictly positive")
    lo, hi = float(loss.min()), float(loss.max())
    if lo == hi:
        return q.copy()
    q_inv = 1.0 / q
    f_lo = _omd_sum(q_inv, loss, eta, lo) - 1.0
    f_hi = _omd_sum(q_inv, loss, eta, hi) - 1.0
    if f_lo > 1e-12 or f_hi < -1e-12:
        raise FloatingPointError(f"log-barrier root not bracketed: f(lo)={f_lo}, f(hi)={f_hi}")
    best_xi, best_f = (lo, f_lo) if abs(f_lo) <= abs(f_hi) else (hi, f_hi)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        f_mid = _omd_sum(q_inv, loss, eta, mid) - 1.0
        if abs(f_mid) < abs(best_f):
            best_xi, best_f = mid, f_mid
        if f_mid == 0.0:
            break
        if f_mid < 0:
            lo = mid
        else:
            hi = mid
    # xi can be as large as the importance-weighted losses, so its ulp limits
    # the sum; refine a small shift u around best_xi with the base held fixed
    a = q_inv + eta * (loss - best_xi)
    u_lo, u_hi = lo - best_xi, hi - best_xi
    g = lambda u: _omd_sum(a, 0.0, eta, u) - 1.0  # noqa: E731
    for _ in range(60):
        if g(u_lo) <= 0:
            break
        u_lo = 2 * u_lo - 1e-300
    for _ in range(60):
        if g(u_hi) >= 0:
            break
        u_hi = 2 * u_hi + 1e-300
    best_u, best_g = 0.0, g(0.0)
    for _ in range(max_iter):
        mid = 0.5 * (u_lo + u_hi)
        if mid <= u_lo or mid >= u_hi:
            break
        g_mid = g(mid)
        if abs(g_mid) < abs(best_g):
            best_u, best_g = mid, g_mid
        if g_mid == 0.0:
            break
        if g_mid < 0:
            u_lo = mid
        else:
            u_hi = mid
    return 1.0 / (a + eta * (0.0 - best_u))


@dataclass
class CorralState:
    q: np.ndarray
    q_bar: np.ndarray
    rho: np.ndarray
    eta_vec: np.ndarray
    beta_growth: float
    gamma_mix: float
    horizon: int

    @classmethod
    def initial(cls, n_models: int, horizon: int, gamma: float, eta: float) -> "CorralState":
        uniform = np.full(n_models, 1.0 / n_models)
        growth = math.exp(1.0 / math.log(horizon)) if horizon > 1 else math.e
        return cls(q=uniform.copy(), q_bar=uniform.copy(), rho=np.full(n_models, 2.0 * n_models),
                   eta_vec=np.full(n_models, float(eta)), beta_growth=growth, gamma_mix=gamma,
                   horizon=horizon)


def corral_update(state: CorralState, j: int, y: float, negate: bool = False) -> np.ndarray:
    """Update ``state`` in place after agent ``j`` earned ``y``; returns the IW estimates."""
    M = len(state.q)
    rhat = np.zeros(M)
    rhat[j] = y / state.q_bar[j]
    feedback = -rhat if negate else rhat
    state.q = log_barrier_omd(state.q, feedback, state.eta_vec)
    state.q_bar = (1.0 - state.gamma_mix) * state.q + state.gamma_mix / M
    grow = 1.0 / state.q_bar > state.rho
    state.rho = np.where(grow, 2.0 / state.q_bar, state.rho)
    state.eta_vec = np.where(grow, state.beta_growth * state.eta_vec, state.eta_vec)
    return rhat


class Corral(BaseEstimator):
    """Log-barrier OMD over UCB agents fed with importance-weighted rewards.

    Only the sampled agent receives the new data point.  The mixing rate is
    ``gamma_scale / n`` and the initial learning rate ``eta_scale * sqrt(M / n)``.

    Parameters
    ----------
    gamma_scale, eta_scale : float
    lambda_ridge, beta : float
        Base-agent ridge constant and UCB coefficient.
    negate_corral_feedback : bool
        Feed ``-r_hat`` (a loss) to the mirror step instead of ``r_hat``.
    """

    name = "corral"

    def __init__(self, gamma_scale=1.0, eta_scale=1.0, lambda_ridge=DEFAULT_REG, beta=DEFAULT_BETA,
                 negate_corral_feedback=False, record_q=True):
        self.gamma_scale = gamma_scale
        self.eta_scale = eta_scale
        self.lambda_ridge = lambda_ridge
        self.beta = beta
        self.negate_corral_feedback = negate_corral_feedback
        self.record_q = record_q

    def initial_state(self, n_models: int, n: int) -> CorralState:
        gamma = min(1.0, self.gamma_scale / n)
        eta = self.eta_scale * math.sqrt(n_models / n)
        return CorralState.initial(n_models, n, gamma, eta)

    def run(self, env: SyntheticEnv, n: int) -> RegretTrace:
        mc = env.mc
        M = mc.n_models
        grid_feats = mc.features(env.grid).reshape(len(env.grid), M, mc.group_size)
        agents = [RidgeAgent(self.lambda_ridge) for _ in range(M)]
        proposals = np.array([ucb_propose(a, grid_feats[:, j], self.beta)
                              for j, a in enumerate(agents)])
        state = self.initial_state(M, n)
        rng = rng_stream(env.seed, self.name)
        rec = TraceRecorder(self.name, env.seed, env.oracle_index, self.record_q)
        rec.info["history_sizes"] = []
        for _ in range(n):
            q_now = state.q_bar.copy()
            j = sample_index(state.q_bar, rng.random())
            idx = int(proposals[j])
            y = env.observe(env.grid[idx])
            agents[j].partial_fit(grid_feats[idx, j], y)
            proposals[j] = ucb_propose(agents[j], grid_feats[:, j], self.beta)
            corral_update(state, j, y, self.negate_corral_feedback)
            rec.info["history_sizes"].append(agents[j].n_observations)
            rec.log(env.best_value - env.grid_values[idx], False, j, float(env.grid[idx]), y, q_now)
        return rec.build()
