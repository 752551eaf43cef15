"""Ridge-regression base agents with UCB and greedy proposals.

Posteriors use the kernel form: with ``K = Phi Phi^T`` and
``V = K + reg^2 I``,

    mu(x)    = k(x)^T V^{-1} y
    sigma(x) = sqrt(phi(x)^T phi(x) - k(x)^T V^{-1} k(x))

Note that ``reg`` enters squared.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.linalg
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

DEFAULT_REG = 0.1
DEFAULT_BETA = 2.0


class PosteriorError(np.linalg.LinAlgError):
    """Kernel system could not be factorized."""


def _cholesky(V: np.ndarray):
    try:
        return scipy.linalg.cho_factor(V, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        cond = np.linalg.cond(V)
        raise PosteriorError(f"kernel matrix not positive definite (cond={cond:.3g})") from exc


def get_posterior(hist_features, targets, query_features, reg: float = DEFAULT_REG):
    """Posterior mean and width at ``query_features`` given the history.

    Parameters
    ----------
    hist_features : array of shape (t, d)
        Feature rows of the observed actions; ``t`` may be zero.
    targets : array of shape (t,)
    query_features : array of shape (n, d)
    reg : float
        Ridge constant; the kernel system is regularized by ``reg**2``.

    Returns
    -------
    mu, sigma : arrays of shape (n,)
    """
    Phi = np.asarray(hist_features, dtype=float)
    Q = np.atleast_2d(np.asarray(query_features, dtype=float))
    y = np.asarray(targets, dtype=float)
    prior = np.einsum("ij,ij->i", Q, Q)
    if Phi.shape[0] == 0:
        return np.zeros(len(Q)), np.sqrt(prior)
    V = Phi @ Phi.T + reg**2 * np.eye(len(Phi))
    k = Phi @ Q.T
    factor = _cholesky(V)
    mu = k.T @ scipy.linalg.cho_solve(factor, y, check_finite=False)
    var = prior - np.einsum("ij,ij->j", k, scipy.linalg.cho_solve(factor, k, check_finite=False))
    return mu, np.sqrt(np.maximum(var, 0.0))


class RidgeAgent(RegressorMixin, BaseEstimator):
    """Single ridge agent over a fixed feature map.

    ``fit`` and ``partial_fit`` take feature rows, not raw actions; callers
    evaluate the feature map.  The kernel matrix grows by one row and column
    per :meth:`partial_fit` call.

    Parameters
    ----------
    reg : float, default=0.1
    """

    def __init__(self, reg: float = DEFAULT_REG):
        self.reg = reg

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        self.X_ = X
        self.y_ = y
        self.kernel_ = X @ X.T
        self._refactor()
        return self

    def partial_fit(self, X, y):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if not hasattr(self, "X_"):
            return self.fit(X, y)
        cross = self.X_ @ X.T
        self.kernel_ = np.block([[self.kernel_, cross], [cross.T, X @ X.T]])
        self.X_ = np.vstack([self.X_, X])
        self.y_ = np.concatenate([self.y_, y])
        self._refactor()
        return self

    def _refactor(self):
        t = len(self.y_)
        self._factor = _cholesky(self.kernel_ + self.reg**2 * np.eye(t))
        self._alpha = scipy.linalg.cho_solve(self._factor, self.y_, check_finite=False)

    @property
    def n_observations(self) -> int:
        return len(self.y_) if hasattr(self, "y_") else 0

    def predict(self, X, return_std: bool = False):
        X = check_array(X)
        if not hasattr(self, "X_"):
            mu = np.zeros(len(X))
            sd = np.sqrt(np.einsum("ij,ij->i", X, X))
        else:
            k = self.X_ @ X.T
            mu = k.T @ self._alpha
            if return_std:
                prior = np.einsum("ij,ij->i", X, X)
                solved = scipy.linalg.cho_solve(self._factor, k, check_finite=False)
                sd = np.sqrt(np.maximum(prior - np.einsum("ij,ij->j", k, solved), 0.0))
        return (mu, sd) if return_std else mu

    def ridge_coef(self) -> np.ndarray:
        """Primal coefficients ``Phi^T V^{-1} y`` of the fitted agent."""
        check_is_fitted(self, "X_")
        return self.X_.T @ self._alpha


def ucb_propose(agent: RidgeAgent, grid_features, beta: float = DEFAULT_BETA) -> int:
    """Grid index maximizing ``mu + beta * sigma``; ties go to the lowest index."""
    mu, sd = agent.predict(grid_features, return_std=True)
    return int(np.argmax(mu + beta * sd))


def greedy_propose(agent: RidgeAgent, grid_features) -> int:
    """Grid index maximizing the posterior mean; ties go to the lowest index."""
    return int(np.argmax(agent.predict(grid_features)))


class AgentBank:
    """All ``M`` agents of a model class trained on one shared history.

    ``grid_features`` has shape ``(G, M, s)``: the per-model features of
    every grid action.  Actions are tracked as grid indices.
    """

    def __init__(self, grid_features, reg: float = DEFAULT_REG, beta: float = DEFAULT_BETA,
                 policy: str = "ucb"):
        if policy not in ("ucb", "greedy"):
            raise ValueError(f"unknown policy {policy!r}")
        self.grid_features = np.asarray(grid_features, dtype=float)
        self.reg = reg
        self.beta = beta
        self.policy = policy
        G, M, s = self.grid_features.shape
        self.n_agents = M
        # (M, s, G) for batched products
        self._grid_t = np.ascontiguousarray(self.grid_features.transpose(1, 2, 0))
        self._prior = np.einsum("gms,gms->mg", self.grid_features, self.grid_features)
        self.indices: list[int] = []
        self.targets: list[float] = []
        self.kernel = np.zeros((M, 0, 0))

    def add(self, index: int, y: float) -> None:
        phi_new = self.grid_features[index]  # (M, s)
        if self.indices:
            hist = self.grid_features[self.indices].transpose(1, 0, 2)  # (M, t, s)
            cross = np.einsum("mts,ms->mt", hist, phi_new)
        else:
            cross = np.zeros((self.n_agents, 0))
        diag = np.einsum("ms,ms->m", phi_new, phi_new)
        t = len(self.indices)
        grown = np.empty((self.n_agents, t + 1, t + 1))
        grown[:, :t, :t] = self.kernel
        grown[:, :t, t] = cross
        grown[:, t, :t] = cross
        grown[:, t, t] = diag
        self.kernel = grown
        self.indices.append(int(index))
        self.targets.append(float(y))

    def posterior(self):
        """Posterior mean and width of every agent on the grid, shape ``(M, G)``."""
        if not self.indices:
            return np.zeros_like(self._prior), np.sqrt(self._prior)
        t = len(self.indices)
        hist = self.grid_features[self.indices].transpose(1, 0, 2)  # (M, t, s)
        V = self.kernel + self.reg**2 * np.eye(t)
        y = np.broadcast_to(np.asarray(self.targets)[None, :, None], (self.n_agents, t, 1))
        try:
            # k(x) = Phi phi(x), so V^{-1} k(x) = (V^{-1} Phi) phi(x): solve against
            # [y, Phi] (1 + s columns) instead of every grid column
            w = np.linalg.solve(V, np.concatenate([y, hist], axis=2))
        except np.linalg.LinAlgError as exc:
            raise PosteriorError("batched kernel matrix is singular") from exc
        coef = np.einsum("mts,mt->ms", hist, w[:, :, 0])  # Phi^T V^{-1} y
        inner = np.einsum("mts,mtr->msr", hist, w[:, :, 1:])  # Phi^T V^{-1} Phi
        mu = np.einsum("ms,msg->mg", coef, self._grid_t)
        quad = np.einsum("msg,msr,mrg->mg", self._grid_t, inner, self._grid_t)
        var = self._prior - quad
        return mu, np.sqrt(np.maximum(var, 0.0))

    def proposals(self) -> np.ndarray:
        """Next grid index proposed by each agent."""
        mu, sd = self.posterior()
        score = mu + self.beta * sd if self.policy == "ucb" else mu
        return np.argmax(score, axis=1)


def oracle_width(
    t: int,
    delta: float,
    d: int,
    lambda_ridge: float,
    B: float,
    sigma: float,
    cmin: float,
    n_models: int,
    c1: float = 1.0,
) -> float:
    """Anytime confidence radius of the oracle agent's ridge estimate."""
    if t < 1:
        raise ValueError("t must be >= 1")
    if not 0 < delta <= 1:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    if cmin <= 0:
        raise ValueError("cmin must be positive")
    num = (sigma**2 * d * math.log(t / (lambda_ridge * d) + 1)
           + 2 * sigma**2 * math.log(1 / delta) + lambda_ridge * B**2)
    base = math.sqrt(num / (lambda_ridge + cmin * t**0.75))
    loglog = math.log(math.log(t)) if t > 1 else -math.inf
    boost = 1 + t ** (-3 / 8) / cmin * math.sqrt(math.log(n_models * d / delta) + max(loglog, 0.0))
    return c1 * base * boost
