"""Composite risk labels from a sign-aligned two-component PCA.

Pipeline per region: indicator transform -> median/IQR scaling -> PCA (SVD of
the mean-centered matrix) -> sign alignment against a reference indicator ->
variance-weighted mean of z-scored component scores -> quartile classes.
"""

import warnings
from dataclasses import dataclass, replace

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import DimensionMismatch, RankDeficient, TooFewRows, ZeroVariance
from .schema import IndicatorSchema
from .transforms import DEFAULT_CLAMP_EPSILON, IndicatorTransformer, MedianIQRScaler

N_COMPONENTS = 2
N_CLASSES = 4
CLASS_NAMES = ("Low", "Moderate", "High", "Very High")
_RANK_TOL = 1e-12


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray          # column means removed before projection
    components: np.ndarray    # (2, n_indicators), orthonormal rows
    evr: np.ndarray           # (2,)
    sign_flips: np.ndarray = None
    score_mean: np.ndarray = None
    score_std: np.ndarray = None

    @property
    def weights(self):
        e1, e2 = float(self.evr[0]), float(self.evr[1])
        w1 = e1 / (e1 + e2)
        return np.array([w1, 1.0 - w1])

    def project(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.components.shape[1]:
            raise DimensionMismatch(f"expected {self.components.shape[1]} indicators, got {X.shape[-1]}")
        return (X - self.mean) @ self.components.T

    def to_dict(self):
        return {
            "mean": self.mean.tolist(),
            "components": self.components.tolist(),
            "evr": self.evr.tolist(),
            "sign_flips": None if self.sign_flips is None else self.sign_flips.astype(int).tolist(),
            "score_mean": None if self.score_mean is None else self.score_mean.tolist(),
            "score_std": None if self.score_std is None else self.score_std.tolist(),
            "weights": self.weights.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        opt = lambda k, dt=np.float64: None if d.get(k) is None else np.asarray(d[k], dtype=dt)
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["components"], dtype=np.float64),
                   np.asarray(d["evr"], dtype=np.float64), opt("sign_flips", np.int64),
                   opt("score_mean"), opt("score_std"))


def fit_pca(scaled_indicators, sign_convention=None):
    """Top-2 principal axes of the centered matrix via SVD.

    ``sign_convention`` (length-2 of +/-1) multiplies the raw singular vectors,
    which lets tests emulate solvers with different sign conventions.
    """
    X = np.asarray(scaled_indicators, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 8:
        raise TooFewRows(f"PCA needs at least 8 rows, got {X.shape[0] if X.ndim == 2 else X.ndim}")
    if X.shape[1] < N_COMPONENTS:
        raise RankDeficient(f"need at least {N_COMPONENTS} indicator columns")
    mean = X.mean(axis=0)
    _, s, vt = np.linalg.svd(X - mean, full_matrices=False)
    if s[0] <= 0.0:
        raise RankDeficient("indicator matrix has no variance")
    s = np.where(s <= _RANK_TOL * s[0], 0.0, s)
    var = s**2
    evr = var[:N_COMPONENTS] / var.sum()
    comps = vt[:N_COMPONENTS].copy()
    if sign_convention is not None:
        comps *= np.asarray(sign_convention, dtype=np.float64)[:, None]
    return PcaModel(mean, comps, evr)


def _pearson(a, b):
    a = a - a.mean()
    b = b - b.mean()
    den = np.sqrt((a @ a) * (b @ b))
    return 0.0 if den == 0.0 else float(a @ b / den)


def align_signs(model, training_scores, reference_column):
    """Flip each component whose training scores correlate negatively with the reference."""
    ref = np.asarray(reference_column, dtype=np.float64)
    if np.ptp(ref) == 0.0:
        raise ZeroVariance("reference indicator is constant; sign alignment undefined")
    scores = np.asarray(training_scores, dtype=np.float64)
    flips = np.ones(N_COMPONENTS, dtype=np.int64)
    for k in range(N_COMPONENTS):
        if _pearson(scores[:, k], ref) < 0.0:
            flips[k] = -1
    prior = model.sign_flips if model.sign_flips is not None else np.ones(N_COMPONENTS, dtype=np.int64)
    return replace(model, components=model.components * flips[:, None], sign_flips=prior * flips)


def fit_score_standardizers(model, training_scores):
    scores = np.asarray(training_scores, dtype=np.float64)
    return replace(model, score_mean=scores.mean(axis=0), score_std=scores.std(axis=0))


def composite_score(model, scaled_indicators):
    """z(PC1) * w1 + z(PC2) * w2 using the stored training standardizers.

    A component with zero training spread (rank-1 data) contributes z = 0.
    """
    if model.score_mean is None:
        raise ValueError("PCA model has no score standardizers; fit them first")
    proj = model.project(scaled_indicators)
    std = model.score_std
    degenerate = std <= _RANK_TOL * max(float(std.max()), 1e-300)
    z = (proj - model.score_mean) / np.where(degenerate, 1.0, std)
    z = np.where(degenerate, 0.0, z)
    return z @ model.weights


@dataclass(frozen=True)
class QuartileThresholds:
    q25: float
    q50: float
    q75: float

    def as_array(self):
        return np.array([self.q25, self.q50, self.q75])

    def assign(self, scores):
        """Class = number of thresholds strictly below the score."""
        scores = np.asarray(scores, dtype=np.float64)
        return (scores[..., None] > self.as_array()).sum(axis=-1).astype(np.int64)


def quartile_bin(scores):
    scores = np.asarray(scores, dtype=np.float64).ravel()
    if scores.size < 4:
        raise TooFewRows(f"quartile binning needs at least 4 scores, got {scores.size}")
    q = np.quantile(scores, [0.25, 0.5, 0.75], method="linear")
    thresholds = QuartileThresholds(*map(float, q))
    classes = thresholds.assign(scores)
    if np.unique(scores).size < 4 or len(set(q.tolist())) < 3:
        warnings.warn("degenerate composite scores: quartile classes are not balanced", stacklevel=2)
    return thresholds, classes


class CompositeRiskLabeler(TransformerMixin, BaseEstimator):
    """Fit the per-region labeling model on raw indicators.

    ``transform`` returns composite scores, ``predict`` returns the ordinal
    class (0=Low .. 3=Very High) under the fitted quartile thresholds.

    Parameters
    ----------
    schema : IndicatorSchema, optional
        Column kinds and reference indicator. Defaults to the seven standard
        indicators with RPS as reference.
    clamp_epsilon : float
        Logit clamp for probability indicators.
    """

    def __init__(self, schema=None, clamp_epsilon=DEFAULT_CLAMP_EPSILON):
        self.schema = schema
        self.clamp_epsilon = clamp_epsilon

    def _schema(self):
        return self.schema if self.schema is not None else IndicatorSchema()

    def fit(self, X, y=None, sign_convention=None):
        schema = self._schema()
        X = check_array(X, dtype=np.float64)
        self.transformer_ = IndicatorTransformer(schema.kinds, self.clamp_epsilon).fit(X)
        T = self.transformer_.transform(X)
        self.scaler_ = MedianIQRScaler().fit(T)
        S = self.scaler_.transform(T)
        self.reference_index_ = schema.reference_index()
        pca = fit_pca(S, sign_convention)
        pca = align_signs(pca, pca.project(S), T[:, self.reference_index_])
        self.pca_ = fit_score_standardizers(pca, pca.project(S))
        self.training_scores_ = composite_score(self.pca_, S)
        self.thresholds_, self.training_classes_ = quartile_bin(self.training_scores_)
        self.n_features_in_ = X.shape[1]
        return self

    @property
    def explained_variance_ratio_(self):
        return self.pca_.evr

    @property
    def components_(self):
        return self.pca_.components

    @property
    def weights_(self):
        return self.pca_.weights

    def scaled_indicators(self, X):
        check_is_fitted(self, "pca_")
        return self.scaler_.transform(self.transformer_.transform(X))

    def transform(self, X):
        return composite_score(self.pca_, self.scaled_indicators(X))

    def predict(self, X):
        return self.thresholds_.assign(self.transform(X))

    def fit_predict(self, X, y=None):
        return self.fit(X).training_classes_

    def to_dict(self):
        check_is_fitted(self, "pca_")
        schema = self._schema()
        return {
            "schema": schema.to_dict(),
            "clamp_epsilon": self.clamp_epsilon,
            "reference": schema.names[self.reference_index_],
            "scaler": self.scaler_.to_dict(schema.names),
            "pca": self.pca_.to_dict(),
            "thresholds": self.thresholds_.as_array().tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        schema = IndicatorSchema.from_dict(d["schema"])
        obj = cls(schema=schema, clamp_epsilon=d["clamp_epsilon"])
        obj.transformer_ = IndicatorTransformer(schema.kinds, obj.clamp_epsilon)
        obj.transformer_.specs_ = obj.transformer_._specs()
        obj.transformer_.n_features_in_ = len(schema.names)
        obj.scaler_ = MedianIQRScaler.from_dict(d["scaler"], schema.names)
        obj.reference_index_ = schema.names.index(d["reference"])
        obj.pca_ = PcaModel.from_dict(d["pca"])
        obj.thresholds_ = QuartileThresholds(*d["thresholds"])
        obj.n_features_in_ = len(schema.names)
        return obj
