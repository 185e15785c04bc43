"""Indicator transforms and the median/IQR robust scaler."""

import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np
from sklearn.base import BaseEstimator, OneToOneFeatureMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import DimensionMismatch, DomainError, TooFewRows
from .schema import IndicatorKind

DEFAULT_CLAMP_EPSILON = 1e-6


class TransformKind(str, Enum):
    LOGIT = "logit"
    ARCSINE_SQRT = "arcsine_sqrt"
    LOG1P = "log1p"
    IDENTITY = "identity"


KIND_FOR_INDICATOR = {
    IndicatorKind.PROBABILITY: TransformKind.LOGIT,
    IndicatorKind.PROPORTION: TransformKind.ARCSINE_SQRT,
    IndicatorKind.NONNEG_SKEWED: TransformKind.LOG1P,
}


@dataclass(frozen=True)
class TransformSpec:
    kind: TransformKind
    clamp_epsilon: float = DEFAULT_CLAMP_EPSILON

    def __post_init__(self):
        object.__setattr__(self, "kind", TransformKind(self.kind))
        if not 0.0 < self.clamp_epsilon < 0.5:
            raise DomainError(f"clamp_epsilon must lie in (0, 0.5), got {self.clamp_epsilon}")


def _check_domain(kind, x):
    x = np.asarray(x, dtype=np.float64)
    if kind in (TransformKind.LOGIT, TransformKind.ARCSINE_SQRT):
        bad = ~((x >= 0.0) & (x <= 1.0))
    elif kind is TransformKind.LOG1P:
        bad = ~(x >= 0.0)
    else:
        bad = ~np.isfinite(x)
    if np.any(bad):
        raise DomainError(f"{kind.value} transform: {np.asarray(x)[bad].ravel()[0]!r} outside its domain")
    return x


def apply_transform(spec, x):
    """Apply one transform to a scalar or array.

    Logit clamps its input to ``[eps, 1 - eps]`` first so that boundary
    probabilities stay finite.
    """
    scalar = np.ndim(x) == 0
    x = _check_domain(spec.kind, x)
    if spec.kind is TransformKind.LOGIT:
        eps = spec.clamp_epsilon
        xc = np.clip(x, eps, 1.0 - eps)
        out = np.log(xc) - np.log1p(-xc)
    elif spec.kind is TransformKind.ARCSINE_SQRT:
        out = np.arcsin(np.sqrt(x))
    elif spec.kind is TransformKind.LOG1P:
        out = np.log1p(x)
    else:
        out = x.copy()
    return float(out) if scalar else out


class IndicatorTransformer(TransformerMixin, BaseEstimator):
    """Column-wise indicator transform (stateless).

    Parameters
    ----------
    kinds : sequence of IndicatorKind or TransformKind
        One entry per column.
    clamp_epsilon : float
        Logit clamp.
    """

    def __init__(self, kinds=(), clamp_epsilon=DEFAULT_CLAMP_EPSILON):
        self.kinds = kinds
        self.clamp_epsilon = clamp_epsilon

    def _specs(self):
        specs = []
        for k in self.kinds:
            tk = KIND_FOR_INDICATOR.get(k) if isinstance(k, IndicatorKind) else None
            if tk is None:
                try:
                    tk = KIND_FOR_INDICATOR[IndicatorKind(k)]
                except ValueError:
                    tk = TransformKind(k)
            specs.append(TransformSpec(tk, self.clamp_epsilon))
        return specs

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        self.specs_ = self._specs()
        if X.shape[1] != len(self.specs_):
            raise DimensionMismatch(f"expected {len(self.specs_)} columns, got {X.shape[1]}")
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "specs_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise DimensionMismatch(f"expected {self.n_features_in_} columns, got {X.shape[1]}")
        out = np.empty_like(X)
        for j, spec in enumerate(self.specs_):
            out[:, j] = apply_transform(spec, X[:, j])
        return out


@dataclass(frozen=True)
class RobustScalerParams:
    median: np.ndarray
    iqr: np.ndarray
    degenerate: np.ndarray

    def to_dict(self, names=None):
        names = names or [str(j) for j in range(len(self.median))]
        return {
            name: {"median": float(m), "iqr": float(q), "degenerate": bool(d)}
            for name, m, q, d in zip(names, self.median, self.iqr, self.degenerate)
        }

    @classmethod
    def from_dict(cls, d, names=None):
        names = names or list(d)
        return cls(
            np.array([d[n]["median"] for n in names], dtype=np.float64),
            np.array([d[n]["iqr"] for n in names], dtype=np.float64),
            np.array([d[n]["degenerate"] for n in names], dtype=bool),
        )


def fit_robust_scaler(columns):
    """Per-column median and IQR with linear-interpolation quantiles."""
    X = np.asarray(columns, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] < 2:
        raise TooFewRows(f"robust scaler needs at least 2 rows, got {X.shape[0]}")
    q1, med, q3 = np.quantile(X, [0.25, 0.5, 0.75], axis=0, method="linear")
    iqr = q3 - q1
    degenerate = iqr == 0.0
    if np.any(degenerate):
        warnings.warn(f"{int(degenerate.sum())} column(s) have zero IQR; centering only", stacklevel=2)
    return RobustScalerParams(med, iqr, degenerate)


def apply_robust_scaler(params, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != len(params.median):
        raise DimensionMismatch(f"expected {len(params.median)} columns, got {x.shape[-1]}")
    scale = np.where(params.degenerate, 1.0, params.iqr)
    return (x - params.median) / scale


class MedianIQRScaler(OneToOneFeatureMixin, TransformerMixin, BaseEstimator):
    """Center by the median and divide by the interquartile range.

    Zero-IQR columns are only centered; they are listed in ``degenerate_``.
    """

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        self.params_ = fit_robust_scaler(X)
        self.n_features_in_ = X.shape[1]
        return self

    @property
    def center_(self):
        return self.params_.median

    @property
    def scale_(self):
        return self.params_.iqr

    @property
    def degenerate_(self):
        return self.params_.degenerate

    def transform(self, X):
        check_is_fitted(self, "params_")
        return apply_robust_scaler(self.params_, check_array(X, dtype=np.float64))

    def inverse_transform(self, X):
        check_is_fitted(self, "params_")
        X = np.asarray(X, dtype=np.float64)
        scale = np.where(self.params_.degenerate, 1.0, self.params_.iqr)
        return X * scale + self.params_.median

    def to_dict(self, names=None):
        return self.params_.to_dict(names)

    @classmethod
    def from_dict(cls, d, names=None):
        obj = cls()
        obj.params_ = RobustScalerParams.from_dict(d, names)
        obj.n_features_in_ = len(obj.params_.median)
        return obj


def logit(x, eps=DEFAULT_CLAMP_EPSILON):
    return apply_transform(TransformSpec(TransformKind.LOGIT, eps), x)


__all__ = [
    "TransformKind", "TransformSpec", "apply_transform", "IndicatorTransformer",
    "RobustScalerParams", "fit_robust_scaler", "apply_robust_scaler", "MedianIQRScaler",
    "logit",
]
