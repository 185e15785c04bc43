"""Random forest classifier grown from scratch with per-node coverage counts."""

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import _tree_kernels as K
from .exceptions import DimensionMismatch, LabelOutOfRange, LengthMismatch

FOREST_SCHEMA_VERSION = 1


@dataclass
class DecisionTree:
    """Flat node arrays; ``feature == -1`` marks a leaf.

    ``coverage`` counts bootstrap rows (with multiplicity) reaching each node
    and ``class_counts`` their class split, so ``value`` (the class
    distribution) is ``class_counts / coverage``.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    coverage: np.ndarray
    class_counts: np.ndarray

    @property
    def n_nodes(self):
        return len(self.feature)

    @property
    def value(self):
        cov = self.coverage[:, None].astype(np.float64)
        return np.divide(self.class_counts, cov, out=np.zeros(self.class_counts.shape), where=cov > 0)

    @property
    def is_leaf(self):
        return self.left < 0

    @property
    def max_depth(self):
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for node in range(self.n_nodes):
            if self.left[node] >= 0:
                depth[self.left[node]] = depth[self.right[node]] = depth[node] + 1
        return int(depth.max())

    def predict_proba(self, X):
        X = np.ascontiguousarray(X, dtype=np.float64)
        return K.predict_proba_forest(X, self.feature, self.threshold, self.left, self.right,
                                      self.value, np.zeros(1, dtype=np.int64))

    def check_structure(self):
        """Raise AssertionError if coverage or tree shape is inconsistent."""
        internal = np.flatnonzero(self.left >= 0)
        assert np.array_equal(self.coverage[internal],
                              self.coverage[self.left[internal]] + self.coverage[self.right[internal]])
        assert np.array_equal(self.class_counts.sum(axis=1), self.coverage)
        children = np.concatenate([self.left[internal], self.right[internal]])
        assert len(np.unique(children)) == len(children) == self.n_nodes - 1
        assert 0 not in children

    def to_dict(self):
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "coverage": self.coverage.tolist(),
            "class_counts": self.class_counts.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            np.asarray(d["feature"], dtype=np.int64),
            np.asarray(d["threshold"], dtype=np.float64),
            np.asarray(d["left"], dtype=np.int64),
            np.asarray(d["right"], dtype=np.int64),
            np.asarray(d["coverage"], dtype=np.int64),
            np.asarray(d["class_counts"], dtype=np.int64).reshape(len(d["feature"]), -1),
        )


@dataclass
class FlatForest:
    """All trees concatenated with global child indices, for the kernels."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    coverage: np.ndarray
    value: np.ndarray
    roots: np.ndarray

    @classmethod
    def from_trees(cls, trees):
        sizes = np.array([t.n_nodes for t in trees], dtype=np.int64)
        roots = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)

        def shift(arr, off):
            return np.where(arr >= 0, arr + off, -1)

        return cls(
            np.concatenate([t.feature for t in trees]),
            np.concatenate([t.threshold for t in trees]),
            np.concatenate([shift(t.left, o) for t, o in zip(trees, roots)]),
            np.concatenate([shift(t.right, o) for t, o in zip(trees, roots)]),
            np.concatenate([t.coverage for t in trees]),
            np.concatenate([t.value for t in trees]),
            roots,
        )

    @property
    def n_trees(self):
        return len(self.roots)


def resolve_max_features(rule, n_features):
    if rule in (None, "all"):
        return n_features
    if rule == "sqrt":
        return max(1, math.ceil(math.sqrt(n_features)))
    k = int(rule)
    if not 1 <= k <= n_features:
        raise ValueError(f"max_features={k} outside [1, {n_features}]")
    return k


def tree_seeds(random_state, n_trees):
    """One independent 64-bit seed per tree (numpy SeedSequence spawning)."""
    children = np.random.SeedSequence(random_state).spawn(n_trees)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in children]


def fit_tree(X, y, n_classes=4, max_depth=None, min_samples_leaf=1, max_features="all",
             seed=0, bootstrap=False):
    """Grow a single tree. ``bootstrap=False`` trains on the rows as given."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.int64)
    arrays = K.fit_one(X, y, n_classes, -1 if max_depth is None else int(max_depth),
                       int(min_samples_leaf), resolve_max_features(max_features, X.shape[1]),
                       np.uint64(seed), bootstrap)
    return DecisionTree(*arrays)


def gini(class_counts):
    counts = np.asarray(class_counts, dtype=np.float64)
    total = counts.sum()
    if total == 0:
        return 0.0
    p = counts / total
    return float(1.0 - np.sum(p * p))


class RiskForestClassifier(ClassifierMixin, BaseEstimator):
    """Bootstrap-aggregated Gini decision trees for ordinal risk classes.

    Labels must be integers in ``[0, n_classes)``. Probabilities are the mean
    of the leaf class distributions; ``predict`` takes the argmax, so ties go
    to the lower class.

    Parameters
    ----------
    n_estimators : int, default=500
    max_depth : int or None, default=None
        None grows until leaves are pure or too small.
    min_samples_leaf : int, default=1
    max_features : {"sqrt", "all"} or int, default="sqrt"
        Candidate features per split; "sqrt" rounds up.
    random_state : int, default=0
    n_classes : int, default=4
    n_jobs : int, default=1
        Worker threads for fitting and prediction. Results do not depend on it.
    """

    def __init__(self, n_estimators=500, max_depth=None, min_samples_leaf=1, max_features="sqrt",
                 random_state=0, n_classes=4, n_jobs=1):
        self.n_estimators = n_estimators
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.max_features = max_features
        self.random_state = random_state
        self.n_classes = n_classes
        self.n_jobs = n_jobs

    def fit(self, X, y):
        X = np.ascontiguousarray(check_array(X, dtype=np.float64))
        y = np.asarray(y)
        if len(y) != X.shape[0]:
            raise LengthMismatch(f"X has {X.shape[0]} rows but y has {len(y)}")
        if len(y) == 0:
            raise LengthMismatch("cannot fit on an empty training set")
        if not np.all((y >= 0) & (y < self.n_classes) & (y == np.round(y))):
            raise LabelOutOfRange(f"labels must be integers in [0, {self.n_classes})")
        y = y.astype(np.int64)
        if self.n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")
        mtry = resolve_max_features(self.max_features, X.shape[1])
        depth = -1 if self.max_depth is None else int(self.max_depth)
        seeds = tree_seeds(self.random_state, self.n_estimators)

        def grow(seed):
            arrays = K.fit_one(X, y, self.n_classes, depth, int(self.min_samples_leaf), mtry,
                               np.uint64(seed), True)
            return DecisionTree(*arrays)

        if self.n_jobs and self.n_jobs > 1:
            with ThreadPoolExecutor(self.n_jobs) as pool:
                self.trees_ = list(pool.map(grow, seeds))
        else:
            self.trees_ = [grow(s) for s in seeds]
        self.classes_ = np.arange(self.n_classes)
        self.n_features_in_ = X.shape[1]
        self._flat = None
        return self

    @property
    def flat_(self):
        check_is_fitted(self, "trees_")
        if getattr(self, "_flat", None) is None:
            self._flat = FlatForest.from_trees(self.trees_)
        return self._flat

    def _check_X(self, X):
        check_is_fitted(self, "trees_")
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features_in_:
            raise DimensionMismatch(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return np.ascontiguousarray(X)

    def predict_proba(self, X):
        X = self._check_X(X)
        f = self.flat_
        run = lambda part: K.predict_proba_forest(part, f.feature, f.threshold, f.left, f.right,
                                                  f.value, f.roots)
        if self.n_jobs and self.n_jobs > 1 and len(X) > 1:
            parts = np.array_split(X, self.n_jobs)
            with ThreadPoolExecutor(self.n_jobs) as pool:
                return np.concatenate(list(pool.map(run, parts)))
        return run(X)

    def predict(self, X):
        return np.argmax(self.predict_proba(X), axis=1)

    def apply(self, X):
        X = self._check_X(X)
        f = self.flat_
        return K.apply_forest(X, f.feature, f.threshold, f.left, f.right, f.roots) - f.roots

    def to_dict(self, feature_names=None, class_names=None):
        check_is_fitted(self, "trees_")
        params = self.get_params()
        params.pop("n_jobs")
        return {
            "schema_version": FOREST_SCHEMA_VERSION,
            "kind": "RiskForestClassifier",
            "params": params,
            "n_features": self.n_features_in_,
            "feature_names": list(feature_names) if feature_names is not None else None,
            "class_names": list(class_names) if class_names is not None else None,
            "trees": [t.to_dict() for t in self.trees_],
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("schema_version") != FOREST_SCHEMA_VERSION:
            raise ValueError(f"unsupported forest schema version {d.get('schema_version')!r}")
        obj = cls(**d["params"])
        obj.trees_ = [DecisionTree.from_dict(t) for t in d["trees"]]
        obj.classes_ = np.arange(obj.n_classes)
        obj.n_features_in_ = d["n_features"]
        obj._flat = None
        return obj

    def digest(self):
        """SHA-256 of the canonical serialization."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()
