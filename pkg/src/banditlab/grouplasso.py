"""Online group Lasso.

Minimizes ``(1/t) ||y - X theta||^2 + 2 lam * sum_j ||theta_j||_2`` over a
coefficient vector split into equal-sized contiguous groups.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.exceptions import ConvergenceWarning
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .features import ModelClass

SUPPORT_TOL = 1e-10
DEFAULT_LAMBDA0 = 0.009


def group_soft_threshold(v, tau: float) -> np.ndarray:
    """Proximal map of ``tau * ||.||_2`` applied to a single group."""
    if tau < 0:
        raise ValueError("tau must be non-negative")
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v)
    if norm <= tau:
        return np.zeros_like(v)
    return (1.0 - tau / norm) * v


def _prox_groups(v: np.ndarray, tau: float, n_groups: int) -> np.ndarray:
    blocks = v.reshape(n_groups, -1)
    norms = np.sqrt(np.einsum("ij,ij->i", blocks, blocks))
    with np.errstate(divide="ignore", invalid="ignore"):
        shrink = np.where(norms > tau, 1.0 - tau / norms, 0.0)
    return (blocks * shrink[:, None]).reshape(-1)


@dataclass
class GroupEstimate:
    theta_hat: np.ndarray
    n_groups: int
    lam: float
    objective_value: float
    iterations: int
    converged: bool
    kkt_residual: float
    objective_history: np.ndarray | None = None

    @property
    def group_size(self) -> int:
        return self.theta_hat.size // self.n_groups

    @property
    def group_norms(self) -> np.ndarray:
        return np.linalg.norm(self.theta_hat.reshape(self.n_groups, -1), axis=1)

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(int(j) for j in np.flatnonzero(self.group_norms > SUPPORT_TOL))


def objective(features, targets, theta, lam: float, n_groups: int) -> float:
    """Group-Lasso objective evaluated from the residual."""
    features = np.asarray(features, dtype=float)
    resid = np.asarray(targets, dtype=float) - features @ theta
    pen = np.linalg.norm(np.asarray(theta).reshape(n_groups, -1), axis=1).sum()
    return float(resid @ resid / len(resid) + 2.0 * lam * pen)


def kkt_residual(grad: np.ndarray, theta: np.ndarray, lam: float, n_groups: int) -> float:
    """Worst group-wise optimality violation, scaled by ``1 + 2 lam``.

    ``grad`` is the gradient of the smooth term.  Nonzero groups need
    ``grad_j = -2 lam theta_j / ||theta_j||``; zero groups need
    ``||grad_j|| <= 2 lam``.
    """
    g = grad.reshape(n_groups, -1)
    th = theta.reshape(n_groups, -1)
    norms = np.linalg.norm(th, axis=1)
    active = norms > 0
    viol = np.maximum(np.linalg.norm(g, axis=1) - 2.0 * lam, 0.0)
    if active.any():
        unit = th[active] / norms[active, None]
        viol[active] = np.linalg.norm(g[active] + 2.0 * lam * unit, axis=1)
    return float(viol.max(initial=0.0) / (1.0 + 2.0 * lam))


def _lipschitz(gram: np.ndarray) -> float:
    n = gram.shape[0]
    top = scipy.linalg.eigvalsh(gram, subset_by_index=[n - 1, n - 1], check_finite=False)[0]
    # guard the step against round-off in the eigen-solve
    return 2.0 * max(float(top), 0.0) * (1.0 + 1e-10) + 1e-300


def solve_gram(
    gram: np.ndarray,
    xty: np.ndarray,
    yty: float,
    n_groups: int,
    lam: float,
    tol: float = 1e-6,
    max_iter: int = 10000,
    init: np.ndarray | None = None,
    record_history: bool = False,
) -> GroupEstimate:
    """Group Lasso from the normalized Gram form.

    ``gram = X^T X / t``, ``xty = X^T y / t`` and ``yty = y^T y / t``.
    Runs monotone FISTA with function-value restarts and stops once the
    scaled KKT residual drops to ``tol``.  The returned ``objective_value``
    is the Gram-form objective; :func:`solve` recomputes it from residuals.
    """
    if lam < 0:
        raise ValueError("lam must be non-negative")
    n = gram.shape[0]
    if n % n_groups:
        raise ValueError(f"{n} coefficients do not split into {n_groups} groups")
    L = _lipschitz(gram)
    x = np.zeros(n) if init is None else np.array(init, dtype=float)

    def penalty(theta):
        blocks = theta.reshape(n_groups, -1)
        return np.sqrt(np.einsum("ij,ij->i", blocks, blocks)).sum()

    def change(a, g_a, b, g_b):
        # f(a) - f(b) without the cancellation of differencing two totals;
        # ||a_j|| - ||b_j|| = (a_j - b_j).(a_j + b_j) / (||a_j|| + ||b_j||)
        diff = a - b
        A, B = a.reshape(n_groups, -1), b.reshape(n_groups, -1)
        na, nb = np.linalg.norm(A, axis=1), np.linalg.norm(B, axis=1)
        num = np.einsum("ij,ij->i", A - B, A + B)
        with np.errstate(invalid="ignore", divide="ignore"):
            pen = np.where(na + nb > 0, num / (na + nb), 0.0).sum()
        return diff @ (g_a + g_b) - 2.0 * (xty @ diff) + 2.0 * lam * pen

    gx = gram @ x
    fx = x @ gx - 2.0 * (xty @ x) + yty + 2.0 * lam * penalty(x)
    history = [fx] if record_history else None
    res = kkt_residual(2.0 * (gx - xty), x, lam, n_groups)
    converged = res <= tol
    y, gy, tk = x, gx, 1.0
    restarted = False
    it = 0
    if L <= 1e-300:
        # zero design: the minimizer is theta = 0
        x = np.zeros(n)
        fx, res, converged = yty, 0.0, True
    while not converged and it < max_iter:
        it += 1
        z = _prox_groups(y - 2.0 * (gy - xty) / L, 2.0 * lam / L, n_groups)
        gz = gram @ z
        delta = change(z, gz, x, gx)
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * tk * tk))
        if delta <= 0:
            x_prev, x, gx_prev, gx = x, z, gx, gz
            # adding a non-positive delta can never increase fx
            fx = fx + delta
            y = x + ((tk - 1.0) / t_next) * (x - x_prev)
            gy = gx + ((tk - 1.0) / t_next) * (gx - gx_prev)
            tk = t_next
            restarted = False
        elif restarted:
            # a plain proximal step from x failed to descend: round-off floor
            break
        else:
            # restart momentum from the current best iterate
            y, gy, tk = x, gx, 1.0
            restarted = True
        if history is not None:
            assert fx <= history[-1]
            history.append(fx)
        res = kkt_residual(2.0 * (gx - xty), x, lam, n_groups)
        converged = res <= tol
    return GroupEstimate(
        theta_hat=x,
        n_groups=n_groups,
        lam=float(lam),
        objective_value=float(fx),
        iterations=it,
        converged=bool(converged),
        kkt_residual=res,
        objective_history=None if history is None else np.asarray(history),
    )


def solve(
    features,
    targets,
    lam: float,
    n_groups: int,
    tol: float = 1e-6,
    max_iter: int = 10000,
    init=None,
    record_history: bool = False,
) -> GroupEstimate:
    """Solve the group Lasso for a ``(t, M*s)`` design and ``t`` targets.

    A run that exhausts ``max_iter`` still returns its best iterate but
    with ``converged=False`` and a :class:`ConvergenceWarning`.
    """
    X = np.asarray(features, dtype=float)
    y = np.asarray(targets, dtype=float)
    if X.ndim != 2 or y.shape != (X.shape[0],) or X.shape[0] < 1:
        raise ValueError("features must be (t, M*s) and targets (t,) with t >= 1")
    t = X.shape[0]
    est = solve_gram(
        X.T @ X / t, X.T @ y / t, float(y @ y) / t, n_groups, lam,
        tol=tol, max_iter=max_iter, init=init, record_history=record_history,
    )
    est.objective_value = objective(X, y, est.theta_hat, lam, n_groups)
    if not est.converged:
        warnings.warn(
            f"group Lasso stopped after {est.iterations} iterations "
            f"with KKT residual {est.kkt_residual:.3g} > tol {tol:g}",
            ConvergenceWarning,
        )
    return est


class GroupLasso(RegressorMixin, BaseEstimator):
    """Group Lasso regressor without intercept.

    Parameters
    ----------
    alpha : float
        Regularization ``lam`` in ``(1/t)||y - X w||^2 + 2 lam sum_j ||w_j||``.
    n_groups : int
        Number of equal, contiguous coefficient groups.
    tol : float
        Scaled KKT tolerance.
    max_iter : int
    warm_start : bool
        Reuse ``coef_`` from the previous fit as the starting point.
    """

    def __init__(self, alpha=1e-3, n_groups=1, tol=1e-6, max_iter=10000, warm_start=False):
        self.alpha = alpha
        self.n_groups = n_groups
        self.tol = tol
        self.max_iter = max_iter
        self.warm_start = warm_start

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        init = None
        if self.warm_start and hasattr(self, "coef_") and self.coef_.shape == (X.shape[1],):
            init = self.coef_
        est = solve(X, y, self.alpha, self.n_groups, self.tol, self.max_iter, init=init)
        self.coef_ = est.theta_hat
        self.support_ = np.array(est.support, dtype=int)
        self.objective_ = est.objective_value
        self.n_iter_ = est.iterations
        self.converged_ = est.converged
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X)
        return X @ self.coef_


@dataclass(frozen=True)
class LassoSchedule:
    """Anytime regularization ``lam_t``, decaying as ``t^{-1/2}``."""

    sigma: float
    n_models: int
    group_size: int
    delta: float = 0.1
    lambda0: float = DEFAULT_LAMBDA0

    def __post_init__(self):
        if not 0 < self.delta <= 1:
            raise ValueError(f"delta must lie in (0, 1], got {self.delta}")

    def __call__(self, t: int) -> float:
        return lambda_schedule(self, t)


def lambda_schedule(sched: LassoSchedule, t: int) -> float:
    if t < 1:
        raise ValueError("t must be >= 1")
    if not 0 < sched.delta <= 1:
        raise ValueError(f"delta must lie in (0, 1], got {sched.delta}")
    d = sched.group_size
    loglog = math.log(math.log(d)) if d > 1 and math.log(d) > 0 else -math.inf
    conf = math.log(2 * sched.n_models / sched.delta) + max(loglog, 0.0)
    width = math.sqrt(1 + 12 / math.sqrt(2) * conf + 5 / math.sqrt(2) * math.sqrt(d * conf))
    return sched.lambda0 * 2.0 * sched.sigma / math.sqrt(t) * width


def hallucinate_rewards(theta_hat, mc: ModelClass, proposals, weights=None) -> np.ndarray:
    """Estimated mean reward of every agent's next policy under ``theta_hat``.

    ``proposals`` holds one action per agent, or a row of support points per
    agent together with matching probability ``weights``.
    """
    if isinstance(theta_hat, GroupEstimate):
        theta_hat = theta_hat.theta_hat
    pts = np.asarray(proposals, dtype=float)
    vals = (mc.features(pts.reshape(-1)) @ theta_hat).reshape(pts.shape)
    if weights is None:
        if pts.ndim != 1:
            raise ValueError("weights are required for stochastic proposals")
        return vals
    return np.sum(np.asarray(weights, dtype=float) * vals, axis=-1)
