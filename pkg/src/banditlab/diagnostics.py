"""Restricted-eigenvalue and covariance diagnostics for a feature matrix.

Nothing here feeds back into an algorithm's choices; these are reporting
and testing tools.
"""

from __future__ import annotations

import itertools
import math
import zlib
from dataclasses import dataclass

import numpy as np

from .features import ModelClass, action_grid

CONE_FACTOR = 3.0


@dataclass(frozen=True)
class EigenReport:
    kappa_hat: float
    lambda_min_empirical: float
    t: int
    s: int
    method: str  # "exact_orthonormal" | "projected_subgradient" | "brute_force"


def _project_group_l1(blocks: np.ndarray, radius) -> np.ndarray:
    """Projection of stacked groups onto ``sum_j ||b_j|| <= radius``.

    ``blocks`` has shape ``(K, m, d)``: ``K`` independent problems, each
    with its own entry of ``radius``.
    """
    radius = np.broadcast_to(np.asarray(radius, dtype=float), blocks.shape[:1])
    norms = np.linalg.norm(blocks, axis=2)
    if norms.shape[1] == 0:
        return blocks
    # project each norm vector onto its l1 ball, then rescale the groups
    u = -np.sort(-norms, axis=1)
    css = np.cumsum(u, axis=1)
    idx = np.arange(1, u.shape[1] + 1)
    k = np.maximum((u * idx > css - radius[:, None]).sum(axis=1), 1)
    theta = (css[np.arange(len(u)), k - 1] - radius) / k
    theta = np.where(norms.sum(axis=1) <= radius, 0.0, np.maximum(theta, 0.0))
    new = np.maximum(norms - theta[:, None], 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(norms > 0, new / norms, 0.0)
    return blocks * scale[:, :, None]


def _project_cone(blocks, J_mask):
    """Feasible cone points normalized so ``sum_{j in J} ||b_j||^2 = 1``.

    Rows with ``b_J = 0`` cannot be normalized and come back as NaN.
    """
    nrm = np.sqrt(np.sum(blocks[:, J_mask] ** 2, axis=(1, 2)))
    with np.errstate(invalid="ignore", divide="ignore"):
        out = blocks / np.where(nrm > 0, nrm, np.nan)[:, None, None]
    radius = CONE_FACTOR * np.linalg.norm(out[:, J_mask], axis=2).sum(axis=1)
    out[:, ~J_mask] = _project_group_l1(out[:, ~J_mask], radius)
    return out


def _ratio(H, b, J_mask):
    """``b^T H b / ||b_J||^2`` for each row of ``b``."""
    v = b.reshape(len(b), -1)
    den = np.sum(b[:, J_mask] ** 2, axis=(1, 2))
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.einsum("ki,ij,kj->k", v, H, v) / den
    return np.where(np.isfinite(r), r, np.inf)


def _descend(H, b, J_mask, n_iter, step):
    """Backtracking projected gradient on ``b^T H b / ||b_J||^2``, batched.

    The ratio is scale-invariant, so rescaling to ``||b_J|| = 1`` after a
    step leaves it unchanged and only the off-support projection matters.
    Each start keeps its own step size; a start stops once no step down to
    ``1e-14`` improves it.
    """
    K, m, d = b.shape
    in_J = np.repeat(J_mask, d)
    val = _ratio(H, b, J_mask)
    lr = np.full(K, step)
    active = np.isfinite(val)
    for _ in range(n_iter):
        if not active.any():
            break
        v = b.reshape(K, -1)
        g = (2.0 * v @ H - 2.0 * val[:, None] * v * in_J).reshape(b.shape)
        cand = _project_cone(b - lr[:, None, None] * g, J_mask)
        cv = _ratio(H, cand, J_mask)
        better = active & (cv < val)
        gain = np.where(better, val - cv, 0.0)
        b = np.where(better[:, None, None], cand, b)
        val = np.where(better, cv, val)
        lr = np.where(better, lr * 2.0, lr * 0.5)
        active &= (lr > 1e-14) & ~(better & (gain <= 1e-15 * np.maximum(val, 1e-300)))
    return b, val


def _schur_start(H, J_mask, d):
    """Unconstrained minimizer of the ratio: eliminate the off-support block."""
    in_J = np.repeat(J_mask, d)
    A = H[np.ix_(in_J, in_J)]
    if in_J.all():
        _, vecs = np.linalg.eigh(A)
        return vecs[:, 0].reshape(-1, d)
    B = H[np.ix_(in_J, ~in_J)]
    C = H[np.ix_(~in_J, ~in_J)]
    C_pinv = np.linalg.pinv(C)
    _, vecs = np.linalg.eigh(A - B @ C_pinv @ B.T)
    u = vecs[:, 0]
    b = np.empty(len(in_J))
    b[in_J] = u
    b[~in_J] = -C_pinv @ B.T @ u
    return b.reshape(-1, d)


def _support_rng(seed: int, J: tuple[int, ...]) -> np.random.Generator:
    return np.random.default_rng([seed, zlib.crc32(repr(J).encode())])


def restricted_eigenvalue(
    features,
    s: int,
    n_groups: int,
    restarts: int = 64,
    n_iter: int = 300,
    max_supports: int | None = None,
    seed: int = 0,
) -> EigenReport:
    """Estimate ``kappa(Phi, s)`` from above.

    Minimizes ``||Phi b|| / (sqrt(t) ||b_J||)`` over the cone
    ``sum_{j not in J} ||b_j|| <= 3 sum_{j in J} ||b_j||`` for every support
    ``|J| <= s``, by projected gradient from ``restarts`` random cone points
    plus the smallest eigenvector of each single group's Gram block.  The
    smallest ratio found is reported, so the estimate is an upper bound.
    When ``Phi^T Phi / t`` is the identity the exact value 1 is returned.
    ``max_supports`` caps the number of supports examined per size (sampled
    deterministically), which keeps the estimate an upper bound.
    """
    Phi = np.asarray(features, dtype=float)
    t, p = Phi.shape
    if p % n_groups:
        raise ValueError("feature columns do not split into groups")
    if not 1 <= s <= n_groups:
        raise ValueError(f"need 1 <= s <= M, got s={s}")
    d = p // n_groups
    H = Phi.T @ Phi / t
    lam_min = float(np.linalg.eigvalsh(H)[0])
    if np.max(np.abs(H - np.eye(p))) < 1e-9:
        return EigenReport(1.0, lam_min, t, s, "exact_orthonormal")

    top = float(np.linalg.eigvalsh(H)[-1])
    step = 0.5 / max(top, 1e-12)
    best = math.inf
    for size in range(1, s + 1):
        supports = list(itertools.combinations(range(n_groups), size))
        if max_supports is not None and len(supports) > max_supports:
            pick = np.random.default_rng([seed, size]).choice(len(supports), max_supports, replace=False)
            supports = [supports[i] for i in sorted(pick)]
        for J in supports:
            J_mask = np.zeros(n_groups, dtype=bool)
            J_mask[list(J)] = True
            rng = _support_rng(seed, J)
            starts = [_schur_start(H, J_mask, d)]
            for j in J:
                _, vecs = np.linalg.eigh(H[j * d:(j + 1) * d, j * d:(j + 1) * d])
                b0 = np.zeros((n_groups, d))
                b0[j] = vecs[:, 0]
                starts.append(b0)
            rand = rng.standard_normal((restarts, n_groups, d))
            rand[:, ~J_mask] *= rng.uniform(0, 1, size=(restarts, 1, 1))
            b = _project_cone(np.concatenate([np.stack(starts), rand]), J_mask)
            _, val = _descend(H, b, J_mask, n_iter, step)
            best = min(best, math.sqrt(max(float(val.min()), 0.0)))
            if best == 0.0:
                return EigenReport(0.0, lam_min, t, s, "projected_subgradient")
    return EigenReport(best, lam_min, t, s, "projected_subgradient")


def restricted_eigenvalue_upper(features, s: int, n_groups: int) -> float:
    """Cheap value that :func:`restricted_eigenvalue` never exceeds.

    It is the cone ratio at the projected Schur-complement start of every
    support, which the full estimator also descends from.
    """
    Phi = np.asarray(features, dtype=float)
    t, p = Phi.shape
    d = p // n_groups
    H = Phi.T @ Phi / t
    if np.max(np.abs(H - np.eye(p))) < 1e-9:
        return 1.0
    best = math.inf
    for size in range(1, s + 1):
        for J in itertools.combinations(range(n_groups), size):
            J_mask = np.zeros(n_groups, dtype=bool)
            J_mask[list(J)] = True
            b = _project_cone(_schur_start(H, J_mask, d)[None], J_mask)
            best = min(best, float(_ratio(H, b, J_mask)[0]))
    return math.sqrt(max(best, 0.0))


def restricted_eigenvalue_bruteforce(features, s: int, n_groups: int, resolution: int = 200,
                                     zoom_rounds: int = 6) -> float:
    """Dense-grid minimum of the cone ratio; feasible only for ``M*d <= 3``.

    Directions are parametrized by spherical angles; the grid is refined
    around the best cell ``zoom_rounds`` times.
    """
    Phi = np.asarray(features, dtype=float)
    p = Phi.shape[1]
    if p > 3 or s > 2:
        raise ValueError("brute force supports at most 3 coordinates and s <= 2")
    d = p // n_groups
    t = Phi.shape[0]
    masks = []
    for size in range(1, s + 1):
        for J in itertools.combinations(range(n_groups), size):
            m = np.zeros(n_groups, dtype=bool)
            m[list(J)] = True
            masks.append(m)

    def directions(a_lo, a_hi, b_lo, b_hi):
        a = np.linspace(a_lo, a_hi, resolution)
        if p == 1:
            return np.ones((1, 1)), [(a_lo, a_hi, 0.0, 0.0)]
        if p == 2:
            return np.stack([np.cos(a), np.sin(a)], axis=1), a
        b = np.linspace(b_lo, b_hi, resolution)
        A, B = np.meshgrid(a, b, indexing="ij")
        pts = np.stack([np.sin(A) * np.cos(B), np.sin(A) * np.sin(B), np.cos(A)], axis=-1)
        return pts.reshape(-1, 3), (A.reshape(-1), B.reshape(-1))

    def evaluate(pts):
        blocks = pts.reshape(len(pts), n_groups, d)
        gnorm = np.linalg.norm(blocks, axis=2)
        num = np.linalg.norm(pts @ Phi.T, axis=1) / math.sqrt(t)
        best = np.full(len(pts), np.inf)
        for m in masks:
            inJ = gnorm[:, m]
            feasible = gnorm[:, ~m].sum(axis=1) <= CONE_FACTOR * inJ.sum(axis=1) + 1e-12
            den = np.sqrt((inJ**2).sum(axis=1))
            with np.errstate(divide="ignore", invalid="ignore"):
                r = np.where(feasible & (den > 0), num / den, np.inf)
            best = np.minimum(best, r)
        return best

    if p == 1:
        return float(evaluate(np.ones((1, 1)))[0])
    lo_a, hi_a = 0.0, (2 * math.pi if p == 2 else math.pi)
    lo_b, hi_b = 0.0, 2 * math.pi
    value = math.inf
    for _ in range(zoom_rounds + 1):
        pts, params = directions(lo_a, hi_a, lo_b, hi_b)
        vals = evaluate(pts)
        i = int(np.argmin(vals))
        value = min(value, float(vals[i]))
        if p == 2:
            ca, wa = params[i], (hi_a - lo_a) / resolution * 4
            lo_a, hi_a = ca - wa, ca + wa
        else:
            ca, cb = params[0][i], params[1][i]
            wa, wb = (hi_a - lo_a) / resolution * 4, (hi_b - lo_b) / resolution * 4
            lo_a, hi_a, lo_b, hi_b = ca - wa, ca + wa, cb - wb, cb + wb
    return value


def empirical_covariance(mc: ModelClass, actions) -> np.ndarray:
    """Average outer product of the concatenated features over ``actions``."""
    actions = np.atleast_1d(np.asarray(actions, dtype=float))
    if actions.size == 0:
        raise ValueError("need at least one action")
    F = mc.features(actions)
    return F.T @ F / len(actions)


def cmin_uniform(mc: ModelClass, grid=None) -> float:
    """Smallest eigenvalue of the feature covariance under uniform exploration."""
    grid = action_grid() if grid is None else grid
    return float(np.linalg.eigvalsh(empirical_covariance(mc, grid))[0])


def covariance_entry_radius(t: int, n_models: int, d: int, delta: float) -> float:
    """Anytime bound on the largest entry-wise error of the empirical covariance."""
    if t < 1:
        raise ValueError("t must be >= 1")
    loglog = math.log(math.log(4 * t)) if 4 * t > math.e else -math.inf
    return 5.0 / math.sqrt(t) * math.sqrt(max(loglog, 0.0) + math.log(2 * n_models * d / delta))
