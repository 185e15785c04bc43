"""Deterministic multi-region synthetic cell tables with planted structure.

Features
    Climate and topography are independent uniforms on the supports in
    ``FEATURE_SUPPORT``; the twelve vegetation classes are a Dirichlet
    composition (needleleaf alpha 2.0, the others 0.5) scaled to percent.
Latent risk
    ``r = sign * g(x)`` of the region's dominant feature ``x`` only, with
    ``g(x) = (x - lo) / (hi - lo)`` (linear) or ``1[x >= at]`` (threshold),
    so the latent range is 1.
Indicators
    Indicator k sees ``s_k = r + noise_sd * e_k`` (independent standard
    normals) and is the inverse of its own transform applied to an increasing
    affine map of ``s_k``: logistic for probabilities, squared sine for the
    proportion, expm1 for skewed indicators. After transformation every
    indicator is affine in ``s_k``; with ``noise_sd = 0`` the transformed
    indicator matrix has rank one.
"""

import zlib
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .exceptions import ConfigInvalid
from .ingest import CellTable
from .schema import (CLIMATE_FEATURES, TOPOGRAPHIC_FEATURES, VEGETATION_FEATURES, FeatureSchema,
                     IndicatorSchema)

FEATURE_SUPPORT = {
    "precipitation": (200.0, 2000.0),
    "temperature": (5.0, 35.0),
    "vapor_pressure": (300.0, 1500.0),
    "wind_speed": (1.0, 8.0),
    "drought_index": (-2.5, 2.5),
    "elevation": (0.0, 3500.0),
    "slope": (0.0, 45.0),
    "latitude": (30.0, 45.0),
    **{name: (0.0, 1.0) for name in VEGETATION_FEATURES},
}
VEGETATION_ALPHA = {name: (2.0 if name == "tsp_nf_pct" else 0.5) for name in VEGETATION_FEATURES}

# (offset, slope) of each transformed indicator as a function of s
_INDICATOR_MAPS = {
    "BP": (-4.0, 3.0),
    "FLEP4": (-1.0, 2.5),
    "FLEP8": (-2.0, 2.5),
    "CFL": (3.0, 1.2),
    "WHP": (6.0, 2.0),
    "RPS": (5.0, 2.0),
    "Exposure": (np.pi / 4, 0.25),
}


@dataclass(frozen=True)
class DriverSpec:
    dominant_feature: str = "elevation"
    effect_shape: str = "linear"
    threshold_at: float = 0.35
    noise_sd: float = 0.1
    sign: int = 1

    def latent(self, x):
        lo, hi = FEATURE_SUPPORT[self.dominant_feature]
        if self.effect_shape == "linear":
            g = (x - lo) / (hi - lo)
        else:
            g = (x >= self.threshold_at).astype(np.float64)
        return self.sign * g

    def to_dict(self):
        return {"dominant_feature": self.dominant_feature, "effect_shape": self.effect_shape,
                "threshold_at": self.threshold_at, "noise_sd": self.noise_sd, "sign": self.sign}


@dataclass(frozen=True)
class RegionSpec:
    name: str
    n_cells: int = 5000
    driver: DriverSpec = field(default_factory=DriverSpec)

    def to_dict(self):
        return {"name": self.name, "n_cells": self.n_cells, "driver": self.driver.to_dict()}


@dataclass(frozen=True)
class SynthConfig:
    regions: tuple = (RegionSpec("A"), RegionSpec("B"))
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "regions", tuple(self.regions))
        self.validate()

    def validate(self):
        if not self.regions:
            raise ConfigInvalid("synthetic config needs at least one region")
        names = [r.name for r in self.regions]
        if len(set(names)) != len(names):
            raise ConfigInvalid(f"duplicate region names {names}")
        for r in self.regions:
            d = r.driver
            if r.n_cells < 200:
                raise ConfigInvalid(f"region {r.name!r}: n_cells must be >= 200")
            if d.noise_sd < 0:
                raise ConfigInvalid(f"region {r.name!r}: noise_sd must be >= 0")
            if d.dominant_feature not in FEATURE_SUPPORT:
                raise ConfigInvalid(f"unknown dominant feature {d.dominant_feature!r}")
            if d.effect_shape not in ("linear", "threshold"):
                raise ConfigInvalid(f"unknown effect shape {d.effect_shape!r}")
            if d.sign not in (1, -1):
                raise ConfigInvalid("sign must be +1 or -1")

    def to_dict(self):
        return {"seed": self.seed, "regions": [r.to_dict() for r in self.regions]}

    @classmethod
    def from_dict(cls, d):
        try:
            regions = tuple(
                RegionSpec(r["name"], int(r.get("n_cells", 5000)), DriverSpec(**r.get("driver", {})))
                for r in d["regions"]
            )
            return cls(regions, int(d.get("seed", 0)))
        except (KeyError, TypeError) as exc:
            raise ConfigInvalid(f"bad synthetic config: {exc}") from exc


def _region_rng(seed, name):
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(name.encode())]))


def _features(rng, n):
    cols = {}
    for name in CLIMATE_FEATURES + TOPOGRAPHIC_FEATURES:
        lo, hi = FEATURE_SUPPORT[name]
        cols[name] = rng.uniform(lo, hi, n)
    veg = rng.dirichlet([VEGETATION_ALPHA[name] for name in VEGETATION_FEATURES], n)
    for j, name in enumerate(VEGETATION_FEATURES):
        cols[name] = veg[:, j]
    return cols


def _indicators(s, name):
    a, b = _INDICATOR_MAPS[name]
    lin = a + b * s
    if name in ("BP", "FLEP4", "FLEP8"):
        return expit(lin)
    if name == "Exposure":
        return np.sin(np.clip(lin, 0.0, np.pi / 2)) ** 2
    return np.expm1(np.maximum(lin, 0.0))


def generate_region(spec, seed, indicator_schema=None, feature_schema=None):
    indicator_schema = indicator_schema or IndicatorSchema()
    feature_schema = feature_schema or FeatureSchema()
    rng = _region_rng(seed, spec.name)
    n = spec.n_cells
    cols = _features(rng, n)
    r = spec.driver.latent(cols[spec.driver.dominant_feature])
    indicators = np.empty((n, len(indicator_schema.names)))
    for k, name in enumerate(indicator_schema.names):
        if name not in _INDICATOR_MAPS:
            raise ConfigInvalid(f"synthetic generator has no map for indicator {name!r}")
        s = r + spec.driver.noise_sd * rng.standard_normal(n)
        indicators[:, k] = _indicators(s, name)
    features = np.column_stack([
        cols[name] * (100.0 if name in feature_schema.percent else 1.0) for name in feature_schema.names
    ])
    region_tag = zlib.crc32(spec.name.encode()) & 0xFFFFFF
    low = rng.choice(2**28, size=n, replace=False).astype(np.uint64)
    cell_ids = (np.uint64(0x88) << np.uint64(52)) | (np.uint64(region_tag) << np.uint64(28)) | low
    return CellTable(cell_ids, np.full(n, spec.name, dtype=object), indicators, features,
                     indicator_schema, feature_schema)


def generate(config):
    """All regions of ``config`` stacked into one table (region order as configured)."""
    if isinstance(config, dict):
        config = SynthConfig.from_dict(config)
    parts = [generate_region(spec, config.seed) for spec in config.regions]
    first = parts[0]
    return CellTable(
        np.concatenate([p.cell_ids for p in parts]),
        np.concatenate([p.region_ids for p in parts]),
        np.concatenate([p.indicators for p in parts]),
        np.concatenate([p.features for p in parts]),
        first.indicator_schema, first.feature_schema,
    )
