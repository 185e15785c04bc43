"""Train-on-source / test-on-target evaluation across all region pairs."""

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from sklearn.pipeline import Pipeline

from .exceptions import ConfigInvalid, MissingRegionModel
from .metrics import MetricsReport

METRICS = ("balanced_accuracy", "macro_f1", "qwk")


@dataclass
class RegionModel:
    """Everything the transfer audit needs from one region.

    ``model`` maps raw (model-unit) features to class probabilities and is
    normally ``Pipeline([("scale", MedianIQRScaler), ("forest", RiskForestClassifier)])``.
    ``y_test`` are the region's own quartile labels on its held-out split.
    """

    name: str
    model: object
    X_test: np.ndarray
    y_test: np.ndarray
    seed: int = None
    model_hash: str = None


@dataclass
class TransferReport:
    regions: list
    matrices: dict
    confusions: dict
    provenance: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "regions": list(self.regions),
            # a degenerate QWK cell is NaN in memory and null on disk
            "matrices": {m: [[None if v != v else v for v in row] for row in self.matrices[m].tolist()]
                         for m in METRICS},
            "confusions": {
                f"{s}->{t}": self.confusions[(s, t)].tolist()
                for s in self.regions for t in self.regions
            },
            "provenance": self.provenance,
        }

    def write_heatmaps(self, directory):
        paths = []
        for metric in METRICS:
            path = directory / f"{metric}.csv"
            with open(path, "w", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(["source\\target", *self.regions])
                for name, row in zip(self.regions, self.matrices[metric]):
                    writer.writerow([name, *[repr(float(v)) for v in row]])
            paths.append(path)
        return paths


def _with_scaler(model, scaler):
    if not isinstance(model, Pipeline):
        raise ConfigInvalid("target-fitted scaling needs a Pipeline(scaler, forest) model")
    return Pipeline([(model.steps[0][0], scaler), *model.steps[1:]])


def run_transfer_matrix(regions, scaling="source", order=None):
    """Evaluate every source model on every target's held-out split.

    Entry (s, t) scores region s's model on region t's test features against
    region t's labels. With ``scaling="target"`` the source forest sees
    features scaled by the target's own scaler instead of the source's.
    """
    if scaling not in ("source", "target"):
        raise ConfigInvalid(f"scaling must be 'source' or 'target', got {scaling!r}")
    names = list(order) if order is not None else sorted(regions)
    for name in names:
        if name not in regions or regions[name] is None or regions[name].model is None:
            raise MissingRegionModel(name)
    N = len(names)
    matrices = {m: np.zeros((N, N)) for m in METRICS}
    confusions = {}
    for a, s in enumerate(names):
        source = regions[s]
        for b, t in enumerate(names):
            target = regions[t]
            model = source.model
            if scaling == "target" and s != t:
                model = _with_scaler(model, target.model.steps[0][1])
            pred = np.asarray(model.predict(target.X_test))
            report = MetricsReport.from_labels(target.y_test, pred)
            for m in METRICS:
                matrices[m][a, b] = getattr(report, m)
            confusions[(s, t)] = report.confusion
    provenance = {
        "scaling": scaling,
        "seeds": {n: regions[n].seed for n in names},
        "model_hashes": {n: regions[n].model_hash for n in names},
    }
    return TransferReport(names, matrices, confusions, provenance)


def write_report(report, path, extra=None):
    payload = dict(extra or {})
    payload.update(report.to_dict())
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, allow_nan=False)
