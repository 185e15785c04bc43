"""Loading, validating and partitioning per-cell tables."""

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DuplicateCellId, MissingColumn, OutOfRange, UnparseableValue
from .schema import FeatureSchema, IndicatorKind, IndicatorSchema

ID_COLUMNS = ("cell_id", "region_id")


@dataclass(frozen=True)
class CellRecord:
    cell_id: int
    region_id: str
    indicators: tuple
    features: tuple


@dataclass
class ValidationReport:
    rejected: list = field(default_factory=list)
    accepted_count: int = 0

    def to_dict(self):
        return {"rejected": list(self.rejected), "accepted_count": self.accepted_count}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


@dataclass
class CellTable:
    """Column-oriented per-cell table.

    ``features`` holds values in file units (vegetation classes in percent);
    use :meth:`feature_matrix` for model-ready values.
    """

    cell_ids: np.ndarray
    region_ids: np.ndarray
    indicators: np.ndarray
    features: np.ndarray
    indicator_schema: IndicatorSchema = field(default_factory=IndicatorSchema)
    feature_schema: FeatureSchema = field(default_factory=FeatureSchema)
    report: ValidationReport = field(default_factory=ValidationReport)

    def __post_init__(self):
        self.cell_ids = np.asarray(self.cell_ids, dtype=np.uint64).reshape(-1)
        self.region_ids = np.asarray(self.region_ids, dtype=object).reshape(-1)
        n = len(self.cell_ids)
        self.indicators = np.asarray(self.indicators, dtype=np.float64).reshape(n, len(self.indicator_names))
        self.features = np.asarray(self.features, dtype=np.float64).reshape(n, len(self.feature_names))
        if len(self.region_ids) != n:
            raise ValueError("region_ids and cell_ids differ in length")

    def __len__(self):
        return len(self.cell_ids)

    @property
    def indicator_names(self):
        return self.indicator_schema.names

    @property
    def feature_names(self):
        return list(self.feature_schema.names)

    @property
    def rows(self):
        return [
            CellRecord(int(c), str(r), tuple(i), tuple(f))
            for c, r, i, f in zip(self.cell_ids, self.region_ids, self.indicators, self.features)
        ]

    def feature_matrix(self):
        X = self.features.copy()
        mask = np.asarray(self.feature_schema.percent_mask(), dtype=bool)
        X[:, mask] /= 100.0
        return X

    def take(self, index):
        index = np.asarray(index, dtype=np.intp)
        return CellTable(
            self.cell_ids[index], self.region_ids[index], self.indicators[index],
            self.features[index], self.indicator_schema, self.feature_schema,
        )

    def canonical(self):
        """Rows sorted by cell_id (stable), the order all seeded draws refer to."""
        return self.take(np.argsort(self.cell_ids, kind="stable"))

    def equals(self, other):
        return (
            self.indicator_names == other.indicator_names
            and self.feature_names == other.feature_names
            and np.array_equal(self.cell_ids, other.cell_ids)
            and list(self.region_ids) == list(other.region_ids)
            and np.array_equal(self.indicators, other.indicators)
            and np.array_equal(self.features, other.features)
        )


def format_cell_id(cell_id):
    return format(int(cell_id), "x")


def parse_cell_id(text):
    """Cell IDs are hexadecimal (the H3 string convention)."""
    text = text.strip().lower()
    if text.startswith("0x"):
        text = text[2:]
    value = int(text, 16)
    if not 0 <= value < 2**64:
        raise ValueError("cell_id does not fit in 64 bits")
    return value


def _range_ok(value, kind):
    if kind in (IndicatorKind.PROBABILITY, IndicatorKind.PROPORTION):
        return 0.0 <= value <= 1.0
    return value >= 0.0


def load_cell_table(path, schema=None, feature_schema=None):
    """Read and validate a canonical cell CSV.

    Rows with missing, unparseable, non-finite or out-of-range values are
    rejected and listed in ``table.report``; structural problems (missing
    columns, duplicate cell IDs) raise.
    """
    schema = schema or IndicatorSchema()
    feature_schema = feature_schema or FeatureSchema()
    ind_names = schema.names
    feat_names = list(feature_schema.names)
    kinds = schema.kinds
    percent = feature_schema.percent

    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise MissingColumn(f"{path}: empty file, no header") from None
        missing = [c for c in (*ID_COLUMNS, *ind_names, *feat_names) if c not in header]
        if missing:
            raise MissingColumn(f"{path}: missing columns {missing}")
        pos = {name: header.index(name) for name in header}

        report = ValidationReport()
        cell_ids, regions, inds, feats = [], [], [], []
        seen = set()
        for rownum, raw in enumerate(reader, start=1):
            if not raw or all(not v.strip() for v in raw):
                continue
            problem = None

            def cell(name):
                i = pos[name]
                return raw[i].strip() if i < len(raw) else ""

            try:
                cid = parse_cell_id(cell("cell_id"))
            except ValueError:
                problem = UnparseableValue(rownum, "cell_id", cell("cell_id"))
            region = cell("region_id")
            if problem is None and not region:
                problem = UnparseableValue(rownum, "region_id", region)

            values = []
            if problem is None:
                for j, name in enumerate(ind_names + feat_names):
                    text = cell(name)
                    try:
                        v = float(text)
                    except ValueError:
                        problem = UnparseableValue(rownum, name, text)
                        break
                    if not math.isfinite(v):
                        problem = UnparseableValue(rownum, name, text)
                        break
                    if j < len(ind_names):
                        ok = _range_ok(v, kinds[j])
                    else:
                        ok = 0.0 <= v <= 100.0 if name in percent else True
                    if not ok:
                        problem = OutOfRange(rownum, name, v)
                        break
                    values.append(v)

            if problem is not None:
                reason = type(problem).__name__
                if not cell(getattr(problem, "column", "")):
                    reason = "MissingValue" if isinstance(problem, UnparseableValue) else reason
                report.rejected.append({"row": rownum, "column": problem.column, "reason": reason})
                continue

            key = (region, cid)
            if key in seen:
                raise DuplicateCellId(format_cell_id(cid), region)
            seen.add(key)
            cell_ids.append(cid)
            regions.append(region)
            inds.append(values[: len(ind_names)])
            feats.append(values[len(ind_names):])

    report.accepted_count = len(cell_ids)
    return CellTable(
        np.array(cell_ids, dtype=np.uint64),
        np.array(regions, dtype=object),
        np.array(inds, dtype=np.float64).reshape(-1, len(ind_names)),
        np.array(feats, dtype=np.float64).reshape(-1, len(feat_names)),
        schema, feature_schema, report,
    )


def write_cell_table(table, path):
    """Write the canonical CSV form (shortest round-trip float repr)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([*ID_COLUMNS, *table.indicator_names, *table.feature_names])
        for cid, region, ind, feat in zip(table.cell_ids, table.region_ids, table.indicators, table.features):
            writer.writerow([format_cell_id(cid), region, *map(repr, ind.tolist()), *map(repr, feat.tolist())])


def partition_by_region(table):
    """Split a table into one table per region, keyed in sorted region order."""
    out = {}
    for region in sorted(set(table.region_ids.tolist())):
        out[region] = table.take(np.flatnonzero(table.region_ids == region))
    return out
