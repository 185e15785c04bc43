"""Exact path-dependent tree SHAP for the risk forest, plus a brute-force oracle."""

import csv
import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _shap_kernels as SK
from .exceptions import DimensionMismatch, MissingCoverage, TooManyFeatures
from .forest import DecisionTree, FlatForest, RiskForestClassifier

ORACLE_MAX_FEATURES = 8


def _as_flat(model):
    if isinstance(model, RiskForestClassifier):
        return model.flat_
    if isinstance(model, DecisionTree):
        return FlatForest.from_trees([model])
    if isinstance(model, FlatForest):
        return model
    raise TypeError(f"cannot explain {type(model).__name__}")


def _check_coverage(flat):
    if flat.coverage is None or len(flat.coverage) != len(flat.feature) or np.any(flat.coverage <= 0):
        raise MissingCoverage("every node needs a positive training coverage count")


def _parents(flat):
    parent = np.full(len(flat.feature), -1, dtype=np.int64)
    internal = np.flatnonzero(flat.left >= 0)
    parent[flat.left[internal]] = internal
    parent[flat.right[internal]] = internal
    return parent


@dataclass
class ShapResult:
    """Per-class attributions and their aggregates.

    ``per_class`` is (instances, features, classes); ``base_values`` the
    coverage-weighted expected output per class; ``expected_level`` the
    probability-weighted collapse over classes; ``global_importance`` a list of
    (feature index, mean |expected_level|) sorted descending.
    """

    per_class: np.ndarray
    base_values: np.ndarray
    probabilities: np.ndarray
    expected_level: np.ndarray
    global_importance: list

    def importance_records(self, feature_names=None):
        return [
            {"feature": feature_names[j] if feature_names is not None else j,
             "importance": float(v), "rank": rank}
            for rank, (j, v) in enumerate(self.global_importance, start=1)
        ]


class TreeExplainer:
    """Exact SHAP values for a fitted :class:`RiskForestClassifier` or single tree.

    Instances are processed in chunks of ``chunk_size`` so peak memory is
    O(chunk_size x features x classes) beyond the output itself.
    """

    def __init__(self, model, chunk_size=256, n_jobs=1):
        self.model = model
        self.flat = _as_flat(model)
        _check_coverage(self.flat)
        self.chunk_size = chunk_size
        self.n_jobs = n_jobs
        self._parent = _parents(self.flat)
        self.n_features = int(getattr(model, "n_features_in_", 0)) or None
        depth = self._max_distinct_path_features()
        self._qmax = max(1, (depth + 1) // 2)
        self._gl_t, self._gl_w = SK.gauss_legendre_table(self._qmax)
        self.expected_value = SK.forest_base_values(
            self.flat.value, self.flat.coverage, self.flat.left, self.flat.roots,
            len(self.flat.feature)) / self.flat.n_trees

    def _max_distinct_path_features(self):
        f = self.flat
        depth = np.zeros(len(f.feature), dtype=np.int64)
        for node in range(len(f.feature)):
            if f.left[node] >= 0:
                depth[f.left[node]] = depth[f.right[node]] = depth[node] + 1
        n_feat = int(f.feature.max()) + 1 if np.any(f.feature >= 0) else 1
        return int(min(depth.max(), max(n_feat, self.n_features or 0)))

    def _chunk(self, X):
        f = self.flat
        outT = np.zeros((X.shape[1], f.value.shape[1], X.shape[0]))
        SK.forest_shap(np.ascontiguousarray(X.T), f.feature, f.threshold, f.left, f.right, f.coverage.astype(np.float64),
                       f.value, f.roots, self._parent, len(f.feature), self._gl_t, self._gl_w,
                       self._qmax, outT)
        out = np.ascontiguousarray(outT.transpose(2, 0, 1))
        out /= f.n_trees
        return out

    def shap_values(self, X):
        """Array (n, features, classes) of per-class SHAP values."""
        X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=np.float64)))
        if self.n_features is not None and X.shape[1] != self.n_features:
            raise DimensionMismatch(f"expected {self.n_features} features, got {X.shape[1]}")
        if X.shape[1] <= int(self.flat.feature.max(initial=-1)):
            raise DimensionMismatch("model splits on a feature index beyond X's columns")
        bounds = range(0, X.shape[0], self.chunk_size)
        parts = [X[s:s + self.chunk_size] for s in bounds]
        if self.n_jobs and self.n_jobs > 1 and len(parts) > 1:
            with ThreadPoolExecutor(self.n_jobs) as pool:
                results = list(pool.map(self._chunk, parts))
        else:
            results = [self._chunk(p) for p in parts]
        if not results:
            return np.zeros((0, X.shape[1], self.flat.value.shape[1]))
        return np.concatenate(results)

    def explain(self, X):
        per_class = self.shap_values(X)
        if isinstance(self.model, RiskForestClassifier):
            probs = self.model.predict_proba(X)
        else:
            probs = _as_tree_model(self.flat).predict_proba(X)
        level = expected_level(per_class, probs)
        return ShapResult(per_class, self.expected_value, probs, level, global_importance(level))


def _as_tree_model(flat):
    class _Wrap:
        def predict_proba(self, X):
            from . import _tree_kernels as K
            X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
            return K.predict_proba_forest(X, flat.feature, flat.threshold, flat.left, flat.right,
                                          flat.value, flat.roots)
    return _Wrap()


def tree_shap(model, x):
    """SHAP matrix (features x classes) for one instance, averaged over trees."""
    x = np.asarray(x, dtype=np.float64)
    return TreeExplainer(model).shap_values(x[None, :])[0]


def conditional_expectation(tree, x, S):
    """Path-dependent expectation of a tree's class distribution given features S.

    Splits on features in S follow x; other splits average both children by
    training coverage.
    """
    if np.any(np.asarray(tree.coverage) <= 0):
        raise MissingCoverage("tree has nodes without coverage")
    S = set(S)
    value = tree.value

    def rec(node):
        if tree.left[node] < 0:
            return value[node]
        f = tree.feature[node]
        lc, rc = tree.left[node], tree.right[node]
        if f in S:
            return rec(lc if x[f] <= tree.threshold[node] else rc)
        cov = tree.coverage[node]
        return (tree.coverage[lc] * rec(lc) + tree.coverage[rc] * rec(rc)) / cov

    return np.asarray(rec(0), dtype=np.float64)


def shapley_oracle(tree, x, n_features):
    """Shapley values by enumerating all 2^M subsets (M <= 8)."""
    M = int(n_features)
    if M > ORACLE_MAX_FEATURES:
        raise TooManyFeatures(f"oracle enumerates 2^M subsets; M={M} exceeds {ORACLE_MAX_FEATURES}")
    x = np.asarray(x, dtype=np.float64)
    cache = {}

    def v(S):
        key = frozenset(S)
        if key not in cache:
            cache[key] = conditional_expectation(tree, x, key)
        return cache[key]

    n_classes = tree.class_counts.shape[1]
    phi = np.zeros((M, n_classes))
    for j in range(M):
        others = [f for f in range(M) if f != j]
        for size in range(M):
            weight = math.factorial(size) * math.factorial(M - size - 1) / math.factorial(M)
            for S in itertools.combinations(others, size):
                phi[j] += weight * (v(S + (j,)) - v(S))
    return phi


def expected_level(per_class, probs):
    """Collapse class slices by the instance's predicted class probabilities."""
    per_class = np.asarray(per_class, dtype=np.float64)
    probs = np.asarray(probs, dtype=np.float64)
    if per_class.ndim != 3 or probs.shape != (per_class.shape[0], per_class.shape[2]):
        raise DimensionMismatch(
            f"per-class tensor {per_class.shape} does not match probabilities {probs.shape}")
    return np.einsum("ijc,ic->ij", per_class, probs)


def global_importance(level):
    """(feature, mean |value|) pairs, descending; ties keep the lower index first."""
    level = np.atleast_2d(np.asarray(level, dtype=np.float64))
    if level.shape[0] < 1:
        raise ValueError("need at least one instance")
    imp = np.abs(level).mean(axis=0)
    order = sorted(range(len(imp)), key=lambda j: (-imp[j], j))
    return [(j, float(imp[j])) for j in order]


def export_beeswarm(level, X, path, feature_names=None, top_k=10, ranking=None):
    """Long-form CSV (instance, feature, feature_value, shap_value) for the top_k features."""
    level = np.asarray(level, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    ranking = ranking if ranking is not None else global_importance(level)
    keep = [j for j, _ in ranking[: max(0, min(top_k, len(ranking)))]]
    names = feature_names if feature_names is not None else [str(j) for j in range(X.shape[1])]
    rows = 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["instance", "feature", "feature_value", "shap_value"])
        for i in range(level.shape[0]):
            for j in keep:
                writer.writerow([i, names[j], repr(float(X[i, j])), repr(float(level[i, j]))])
                rows += 1
    return rows


def dump_tensor(per_class, path, feature_names=None, class_names=None):
    """Raw float64 little-endian C-order dump plus a JSON sidecar ``<path>.json``."""
    arr = np.ascontiguousarray(per_class, dtype="<f8")
    arr.tofile(path)
    sidecar = {
        "dtype": "float64", "byteorder": "little", "order": "C",
        "shape": list(arr.shape), "axes": ["instance", "feature", "class"],
        "feature_names": feature_names, "class_names": class_names,
    }
    with open(f"{path}.json", "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
