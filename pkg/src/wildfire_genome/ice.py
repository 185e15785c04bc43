"""Individual conditional expectation and partial dependence curves."""

import csv
from dataclasses import dataclass

import numpy as np
from sklearn.pipeline import Pipeline

from . import _tree_kernels as K
from .exceptions import DegenerateFeature, EmptyGrid, KExceedsFeatures
from .forest import RiskForestClassifier
from .transforms import MedianIQRScaler

VERY_HIGH = 3


@dataclass
class IceResult:
    """``pdp`` is ``ice_curves.mean(axis=0)`` (numpy pairwise summation over instances)."""

    feature: str
    feature_index: int
    grid: np.ndarray
    ice_curves: np.ndarray
    pdp: np.ndarray
    target_class: int = VERY_HIGH

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["instance_id", "grid_value", "probability"])
            for i, curve in enumerate(self.ice_curves):
                for g, p in zip(self.grid, curve):
                    writer.writerow([i, repr(float(g)), repr(float(p))])
            for g, p in zip(self.grid, self.pdp):
                writer.writerow(["__pdp__", repr(float(g)), repr(float(p))])


def make_grid(values, points=50, lo_pct=1.0, hi_pct=99.0):
    """Evenly spaced values between two percentiles of the observed column."""
    values = np.asarray(values, dtype=np.float64).ravel()
    if points < 1:
        raise EmptyGrid("grid needs at least one point")
    if np.unique(values).size < 2:
        raise DegenerateFeature("feature is constant; no grid to sweep")
    lo, hi = np.percentile(values, [lo_pct, hi_pct])
    if points == 1:
        return np.array([lo])
    grid = np.linspace(lo, hi, points)
    grid[-1] = hi
    return grid


def top_k_features(ranking, k=3):
    """First k feature indices of a global importance ranking."""
    if k < 1:
        raise KExceedsFeatures(f"k must be >= 1, got {k}")
    if k > len(ranking):
        raise KExceedsFeatures(f"k={k} exceeds the {len(ranking)} ranked features")
    return [int(j) for j, _ in ranking[:k]]


def _forest_and_prefix(model):
    """Split a model into (elementwise column transforms, forest) when possible."""
    if isinstance(model, RiskForestClassifier):
        return [], model
    if isinstance(model, Pipeline):
        *pre, (_, last) = model.steps
        if isinstance(last, RiskForestClassifier) and all(isinstance(s, MedianIQRScaler) for _, s in pre):
            return [s for _, s in pre], last
    return None, None


def _ice_bruteforce(model, X, feature, grid, target_class):
    n, G = X.shape[0], len(grid)
    stacked = np.repeat(X, G, axis=0)
    stacked[:, feature] = np.tile(grid, n)
    return model.predict_proba(stacked)[:, target_class].reshape(n, G)


def ice_pdp(model, X, feature, grid, target_class=VERY_HIGH, feature_name=None, method="auto"):
    """Sweep one feature over ``grid`` for every row of X.

    ``model`` is anything with ``predict_proba``. For a :class:`RiskForestClassifier`
    (optionally behind median/IQR scalers in a Pipeline) an exact single-pass
    tree walk is used; ``method="brute"`` forces row-by-row evaluation.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    grid = np.asarray(grid, dtype=np.float64).ravel()
    if grid.size == 0:
        raise EmptyGrid("empty grid")
    if X.shape[0] == 0:
        raise ValueError("X has no rows")
    if not 0 <= feature < X.shape[1]:
        raise IndexError(f"feature index {feature} out of range")

    prefix, forest = _forest_and_prefix(model) if method == "auto" else (None, None)
    if forest is not None:
        Xt = X
        col = np.zeros((len(grid), X.shape[1]))
        col[:, feature] = grid
        for step in prefix:
            Xt = step.transform(Xt)
            col = step.transform(col)
        g = col[:, feature]
        order = np.argsort(g, kind="stable")
        f = forest.flat_
        sorted_curves = K.ice_forest(np.ascontiguousarray(Xt), feature, np.ascontiguousarray(g[order]),
                                     target_class, f.feature, f.threshold, f.left, f.right, f.value, f.roots)
        curves = np.empty_like(sorted_curves)
        curves[:, order] = sorted_curves
    else:
        curves = _ice_bruteforce(model, X, feature, grid, target_class)

    name = feature_name if feature_name is not None else str(feature)
    return IceResult(name, int(feature), grid, curves, curves.mean(axis=0), target_class)


def threshold_onset(result, factor=1.5):
    """First grid value where the PDP exceeds ``factor`` times its left-edge value (or None)."""
    base = result.pdp[0]
    hits = np.flatnonzero(result.pdp > factor * base)
    return None if hits.size == 0 else float(result.grid[hits[0]])


def max_slope_location(result):
    """Midpoint of the grid interval with the steepest PDP increase."""
    slope = np.diff(result.pdp) / np.diff(result.grid)
    k = int(np.argmax(slope))
    return float(0.5 * (result.grid[k] + result.grid[k + 1]))

