"""Indicator and feature schemas."""

from dataclasses import dataclass, field
from enum import Enum

from .exceptions import ConfigInvalid


class IndicatorKind(str, Enum):
    PROBABILITY = "probability"
    PROPORTION = "proportion"
    NONNEG_SKEWED = "nonneg_skewed"


@dataclass(frozen=True)
class IndicatorSpec:
    name: str
    kind: IndicatorKind
    is_reference: bool = False


DEFAULT_INDICATORS = (
    IndicatorSpec("BP", IndicatorKind.PROBABILITY),
    IndicatorSpec("FLEP4", IndicatorKind.PROBABILITY),
    IndicatorSpec("FLEP8", IndicatorKind.PROBABILITY),
    IndicatorSpec("CFL", IndicatorKind.NONNEG_SKEWED),
    IndicatorSpec("WHP", IndicatorKind.NONNEG_SKEWED),
    IndicatorSpec("RPS", IndicatorKind.NONNEG_SKEWED, is_reference=True),
    IndicatorSpec("Exposure", IndicatorKind.PROPORTION),
)

# reference indicator lookup order when no indicator is flagged
REFERENCE_PREFERENCE = ("RPS", "WHP")


@dataclass(frozen=True)
class IndicatorSchema:
    indicators: tuple = DEFAULT_INDICATORS

    def __post_init__(self):
        object.__setattr__(self, "indicators", tuple(self.indicators))
        names = self.names
        if len(set(names)) != len(names):
            raise ConfigInvalid(f"duplicate indicator names in {names}")
        if sum(spec.is_reference for spec in self.indicators) > 1:
            raise ConfigInvalid("at most one indicator may be flagged as reference")

    @property
    def names(self):
        return [spec.name for spec in self.indicators]

    @property
    def kinds(self):
        return [spec.kind for spec in self.indicators]

    def reference_index(self):
        """Column index of the sign-alignment reference indicator.

        The flagged indicator wins; otherwise RPS, then WHP.
        """
        for i, spec in enumerate(self.indicators):
            if spec.is_reference:
                return i
        names = self.names
        for name in REFERENCE_PREFERENCE:
            if name in names:
                return names.index(name)
        raise ConfigInvalid("schema has neither a flagged reference indicator nor RPS/WHP")

    def to_dict(self):
        return {
            "indicators": [
                {"name": s.name, "kind": s.kind.value, "is_reference": s.is_reference}
                for s in self.indicators
            ]
        }

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(tuple(
                IndicatorSpec(item["name"], IndicatorKind(item["kind"]),
                              bool(item.get("is_reference", False)))
                for item in d["indicators"]
            ))
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigInvalid(f"bad indicator schema: {exc}") from exc


CLIMATE_FEATURES = ("precipitation", "temperature", "vapor_pressure", "wind_speed", "drought_index")
TOPOGRAPHIC_FEATURES = ("elevation", "slope", "latitude")
VEGETATION_FEATURES = (
    "tsp_nf_pct", "ts_ble_pct", "ts_bld_pct", "tsp_bld_pct", "mixed_forest_pct",
    "ts_shrub_pct", "tsp_shrub_pct", "ts_grass_pct", "tsp_grass_pct",
    "wetland_pct", "cropland_pct", "barrenland_pct",
)


@dataclass(frozen=True)
class FeatureSchema:
    """Model input columns.

    Columns listed in ``percent`` are stored in percent ([0, 100]) and exposed
    to models as fractions in [0, 1].
    """

    names: tuple = CLIMATE_FEATURES + TOPOGRAPHIC_FEATURES + VEGETATION_FEATURES
    percent: frozenset = field(default_factory=lambda: frozenset(VEGETATION_FEATURES))

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "percent", frozenset(self.percent))
        if len(set(self.names)) != len(self.names):
            raise ConfigInvalid("duplicate feature names")
        unknown = self.percent - set(self.names)
        if unknown:
            raise ConfigInvalid(f"percent columns not in feature list: {sorted(unknown)}")

    def percent_mask(self):
        return [name in self.percent for name in self.names]

    def to_dict(self):
        return {"names": list(self.names), "percent": sorted(self.percent)}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["names"]), frozenset(d.get("percent", ())))
