"""Legendre-polynomial model classes on the interval [-1, 1].

Each model is a subset of ``s`` Legendre polynomials drawn from degrees
``0..p``.  The concatenation of all ``M = C(p+1, s)`` models is scaled by a
single constant so that its Euclidean norm never exceeds one on the action
grid.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

GRID_SIZE = 512


def action_grid(size: int = GRID_SIZE) -> np.ndarray:
    """Evenly spaced actions on [-1, 1], endpoints included."""
    if size < 1:
        raise ValueError(f"grid size must be positive, got {size}")
    if size == 1:
        return np.zeros(1)
    return np.linspace(-1.0, 1.0, size)


def _check_domain(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)) or np.any(np.abs(x) > 1.0):
        raise ValueError("Legendre polynomials are evaluated on [-1, 1] only")
    return x


def legendre_table(max_degree: int, x) -> np.ndarray:
    """Evaluate ``P_0..P_max_degree`` at every point of ``x``.

    Returns an array of shape ``x.shape + (max_degree + 1,)``.  Uses Bonnet's
    recurrence ``(k+1) P_{k+1} = (2k+1) x P_k - k P_{k-1}``.
    """
    if max_degree < 0:
        raise ValueError("degree must be non-negative")
    x = _check_domain(x)
    out = np.empty(x.shape + (max_degree + 1,))
    out[..., 0] = 1.0
    if max_degree >= 1:
        out[..., 1] = x
    for k in range(1, max_degree):
        out[..., k + 1] = ((2 * k + 1) * x * out[..., k] - k * out[..., k - 1]) / (k + 1)
    return out


def legendre_eval(k: int, x):
    """Legendre polynomial of degree ``k`` at ``x`` (scalar or array)."""
    vals = legendre_table(k, x)[..., k]
    return float(vals) if np.ndim(vals) == 0 else vals


@dataclass(frozen=True)
class ModelClass:
    """A family of feature maps, each a tuple of Legendre degrees.

    ``scale`` multiplies every polynomial evaluation.  Models are indexed
    from zero in the order of ``models``.
    """

    max_degree: int
    group_size: int
    models: tuple[tuple[int, ...], ...]
    scale: float = 1.0
    _columns: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        models = tuple(tuple(int(k) for k in m) for m in self.models)
        for m in models:
            if len(m) != self.group_size or len(set(m)) != self.group_size:
                raise ValueError(f"model {m} must hold {self.group_size} distinct degrees")
            if min(m) < 0 or max(m) > self.max_degree:
                raise ValueError(f"model {m} has degrees outside 0..{self.max_degree}")
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        object.__setattr__(self, "models", models)
        # polynomial degree feeding each concatenated coordinate
        cols = np.array([k for m in models for k in m], dtype=int)
        object.__setattr__(self, "_columns", cols)

    @property
    def n_models(self) -> int:
        return len(self.models)

    @property
    def n_features(self) -> int:
        return self.n_models * self.group_size

    def group_slice(self, j: int) -> slice:
        return slice(j * self.group_size, (j + 1) * self.group_size)

    def features(self, x) -> np.ndarray:
        """Concatenated, scaled features; shape ``(n, M*s)`` for 1-D ``x``."""
        table = legendre_table(self.max_degree, np.atleast_1d(x))
        return self.scale * table[..., self._columns]

    def model_features(self, j: int, x) -> np.ndarray:
        """Scaled features of model ``j``; shape ``(n, s)`` for 1-D ``x``."""
        self._check_index(j)
        table = legendre_table(self.max_degree, np.atleast_1d(x))
        return self.scale * table[..., list(self.models[j])]

    def _check_index(self, j: int) -> None:
        if not 0 <= j < self.n_models:
            raise IndexError(f"model index {j} out of range for M={self.n_models}")


def max_concat_norm(max_degree: int, models, grid: np.ndarray) -> float:
    """Supremum over ``grid`` of the unscaled concatenated feature norm."""
    counts = np.zeros(max_degree + 1)
    for m in models:
        counts[list(m)] += 1
    table = legendre_table(max_degree, grid)
    return float(np.sqrt((table**2 @ counts).max()))


def enumerate_models(p: int, s: int, grid: np.ndarray | None = None) -> ModelClass:
    """All ``C(p+1, s)`` subsets of degrees ``0..p`` in lexicographic order.

    The scale is the reciprocal of the largest concatenated norm over the
    grid, so every grid point has ``||phi(x)|| <= 1``.
    """
    if p < 0 or not 1 <= s <= p + 1:
        raise ValueError(f"need 1 <= s <= p+1, got p={p}, s={s}")
    grid = action_grid() if grid is None else np.asarray(grid, dtype=float)
    models = tuple(itertools.combinations(range(p + 1), s))
    assert len(models) == math.comb(p + 1, s)
    scale = 1.0 / max_concat_norm(p, models, grid)
    return ModelClass(max_degree=p, group_size=s, models=models, scale=scale)


def feature_vector(mc: ModelClass, j: int, x: float) -> np.ndarray:
    """Scaled features of model ``j`` at a single action."""
    return mc.model_features(j, x)[0]


def concat_feature_vector(mc: ModelClass, x: float) -> np.ndarray:
    """All ``M`` model feature vectors at ``x``, concatenated in model order."""
    return mc.features(x)[0]


def overlap_census(mc: ModelClass, j: int, min_shared: int) -> int:
    """Number of models other than ``j`` sharing at least ``min_shared`` degrees with it."""
    ref = set(mc.models[j])
    return sum(
        1 for i, m in enumerate(mc.models) if i != j and len(ref.intersection(m)) >= min_shared
    )


class LegendreFeatures(TransformerMixin, BaseEstimator):
    """Map scalar actions to the concatenated Legendre model-class features.

    Parameters
    ----------
    max_degree : int
        Highest polynomial degree ``p``.
    group_size : int
        Number of polynomials per model ``s``.
    grid_size : int
        Size of the action grid used to compute the normalization.

    Attributes
    ----------
    model_class_ : ModelClass
    n_features_out_ : int
    """

    def __init__(self, max_degree: int = 10, group_size: int = 2, grid_size: int = GRID_SIZE):
        self.max_degree = max_degree
        self.group_size = group_size
        self.grid_size = grid_size

    def fit(self, X=None, y=None):
        self.model_class_ = enumerate_models(
            self.max_degree, self.group_size, action_grid(self.grid_size)
        )
        self.n_features_out_ = self.model_class_.n_features
        return self

    def transform(self, X):
        check_is_fitted(self, "model_class_")
        X = check_array(X, ensure_2d=False)
        return self.model_class_.features(X.reshape(-1))
