"""Config-driven pipeline stages writing self-describing artifacts to a directory.

Stage order: synth -> label -> train -> evaluate -> explain -> ice -> transfer.
Each stage reads what earlier stages wrote, so stages can be rerun
individually; a missing upstream artifact raises :class:`MissingArtifact`.
"""

import copy
import csv
import hashlib
import json
import logging
import zlib
from pathlib import Path

import numpy as np
from sklearn.pipeline import Pipeline

from .exceptions import ConfigInvalid, MissingArtifact
from .forest import RiskForestClassifier
from .ice import ice_pdp, make_grid, max_slope_location, threshold_onset, top_k_features
from .ingest import format_cell_id, load_cell_table, partition_by_region, parse_cell_id, write_cell_table
from .labeler import CLASS_NAMES, CompositeRiskLabeler
from .metrics import MetricsReport, write_confusion_csv
from .model_selection import SplitSpec, cross_validate, stratified_split
from .schema import FeatureSchema, IndicatorSchema
from .synth import SynthConfig, generate
from .transfer import RegionModel, run_transfer_matrix
from .transforms import MedianIQRScaler
from .tree_shap import TreeExplainer, dump_tensor, export_beeswarm

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
STAGES = ("synth", "label", "train", "evaluate", "explain", "ice", "transfer")

DEFAULT_CONFIG = {
    "seed": 0,
    "n_jobs": 1,
    "input": None,
    "synth": {"regions": SynthConfig().to_dict()["regions"]},
    "labels": {"clamp_epsilon": 1e-6},
    "split": {"train_fraction": 0.7},
    "forest": {"n_estimators": 500, "max_features": "sqrt", "max_depth": None, "min_samples_leaf": 1},
    "cv": {
        "enabled": True,
        "k": 5,
        "n_estimators": 50,
        "grid": [
            {"max_depth": None, "min_samples_leaf": 1},
            {"max_depth": None, "min_samples_leaf": 5},
            {"max_depth": 12, "min_samples_leaf": 1},
            {"max_depth": 12, "min_samples_leaf": 5},
        ],
    },
    "shap": {"top_k": 10, "chunk_size": 256, "dump_tensor": False},
    "ice": {"top_k": 3, "points": 50, "lo_pct": 1.0, "hi_pct": 99.0, "target_class": 3},
    "transfer": {"scaling": "source"},
}


def _merge(base, override):
    out = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(out.get(key), dict) and key != "synth":
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(source=None, seed=None):
    """Defaults overlaid with a JSON file (path) or dict, plus an optional seed override."""
    if source is None:
        user = {}
    elif isinstance(source, dict):
        user = source
    else:
        try:
            with open(source) as fh:
                user = json.load(fh)
        except FileNotFoundError:
            raise ConfigInvalid(f"config file {source} not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigInvalid(f"config file {source} is not valid JSON: {exc}") from exc
    unknown = set(user) - set(DEFAULT_CONFIG)
    if unknown:
        raise ConfigInvalid(f"unknown config sections {sorted(unknown)}")
    config = _merge(DEFAULT_CONFIG, user)
    if seed is not None:
        config["seed"] = int(seed)
    return config


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(config):
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()


def derive_seed(seed, region, purpose):
    """Stable per-(region, purpose) 63-bit seed; independent of region order."""
    ss = np.random.SeedSequence([int(seed), zlib.crc32(region.encode()), zlib.crc32(purpose.encode())])
    hi, lo = ss.generate_state(2, dtype=np.uint32)
    return int((int(hi) << 32 | int(lo)) & ((1 << 63) - 1))


def _nan_to_none(obj):
    if isinstance(obj, float) and obj != obj:
        return None
    if isinstance(obj, dict):
        return {k: _nan_to_none(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_nan_to_none(v) for v in obj]
    return obj


class Workspace:
    """Output directory plus in-process caches of parsed artifacts."""

    def __init__(self, out_dir, config):
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.config = config
        self.hash = config_hash(config)
        self.seed = int(config["seed"])
        self._cache = {}

    # artifact I/O -----------------------------------------------------------
    def path(self, *parts):
        p = self.out.joinpath(*parts)
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def header(self, kind):
        return {"schema_version": SCHEMA_VERSION, "artifact": kind,
                "config_hash": self.hash, "seed": self.seed}

    def write_json(self, rel, kind, payload, compact=False):
        doc = self.header(kind)
        doc.update(_nan_to_none(payload))
        text = canonical_json(doc) if compact else json.dumps(doc, indent=2, sort_keys=True, allow_nan=False)
        path = self.path(rel)
        path.write_text(text + "\n")
        return path

    def read_json(self, rel, stage):
        path = self.out / rel
        if not path.exists():
            raise MissingArtifact(stage, str(path))
        return json.loads(path.read_text())

    def write_manifest(self):
        files = []
        for p in sorted(self.out.rglob("*")):
            if p.is_file() and p != self.out / "manifest.json":
                data = p.read_bytes()
                files.append({"path": p.relative_to(self.out).as_posix(), "bytes": len(data),
                              "sha256": hashlib.sha256(data).hexdigest()})
        doc = self.header("manifest")
        doc["files"] = files
        (self.out / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")

    # shared inputs ------------------------------------------------------------
    @property
    def indicator_schema(self):
        return IndicatorSchema()

    @property
    def feature_schema(self):
        return FeatureSchema()

    def input_path(self):
        if self.config.get("input"):
            path = Path(self.config["input"])
            if not path.exists():
                raise ConfigInvalid(f"input table {path} does not exist")
            return path
        path = self.out / "cells.csv"
        if not path.exists():
            raise MissingArtifact("synth", str(path))
        return path

    def table(self):
        if "table" not in self._cache:
            self._cache["table"] = load_cell_table(self.input_path(), self.indicator_schema, self.feature_schema)
        return self._cache["table"]

    def regions(self):
        if "regions" not in self._cache:
            self._cache["regions"] = {r: t.canonical() for r, t in partition_by_region(self.table()).items()}
        return self._cache["regions"]

    def labels(self):
        if "labels" not in self._cache:
            path = self.out / "labels.csv"
            if not path.exists():
                raise MissingArtifact("label", str(path))
            labels = {}
            with open(path, newline="") as fh:
                for row in csv.DictReader(fh):
                    labels[(row["region_id"], parse_cell_id(row["cell_id"]))] = int(row["risk_class"])
            self._cache["labels"] = labels
        return self._cache["labels"]

    def region_labels(self, region):
        table = self.regions()[region]
        lab = self.labels()
        try:
            return np.array([lab[(region, int(c))] for c in table.cell_ids], dtype=np.int64)
        except KeyError:
            raise MissingArtifact("label", f"labels.csv does not cover region {region!r}") from None

    def split(self, region):
        doc = self.read_json(f"splits/{region}.json", "train")
        table = self.regions()[region]
        pos = {int(c): i for i, c in enumerate(table.cell_ids)}
        train = np.array([pos[parse_cell_id(c)] for c in doc["train_cell_ids"]], dtype=np.intp)
        test = np.array([pos[parse_cell_id(c)] for c in doc["test_cell_ids"]], dtype=np.intp)
        return train, test

    def region_model(self, region):
        key = ("model", region)
        if key not in self._cache:
            path = self.out / "models" / f"{region}.json"
            if not path.exists():
                raise MissingArtifact("train", str(path))
            raw = path.read_bytes()
            doc = json.loads(raw)
            scaler = MedianIQRScaler.from_dict(doc["scaler"], doc["feature_names"])
            forest = RiskForestClassifier.from_dict(doc["forest"])
            forest.set_params(n_jobs=self.config["n_jobs"])
            model = Pipeline([("scale", scaler), ("forest", forest)])
            self._cache[key] = (model, hashlib.sha256(raw).hexdigest(), doc["forest"]["params"]["random_state"])
        return self._cache[key]

    def test_data(self, region):
        table = self.regions()[region]
        _, test = self.split(region)
        return table.feature_matrix()[test], self.region_labels(region)[test], table.cell_ids[test]


# stages ---------------------------------------------------------------------
def stage_synth(ws):
    synth = dict(ws.config["synth"])
    synth.setdefault("seed", ws.seed)
    table = generate(SynthConfig.from_dict(synth))
    write_cell_table(table, ws.path("cells.csv"))
    ws._cache.clear()
    return {"cells": len(table)}


def stage_label(ws):
    table = ws.table()
    ws.write_json("validation_report.json", "validation_report", table.report.to_dict())
    eps = ws.config["labels"]["clamp_epsilon"]
    rows, evr_rows = [], []
    for region, part in ws.regions().items():
        labeler = CompositeRiskLabeler(ws.indicator_schema, eps).fit(part.indicators)
        doc = labeler.to_dict()
        doc.update({"region": region, "n_cells": len(part)})
        ws.write_json(f"label_models/{region}.json", "label_model", doc)
        for cid, score, cls in zip(part.cell_ids, labeler.training_scores_, labeler.training_classes_):
            rows.append([format_cell_id(cid), region, repr(float(score)), int(cls)])
        e1, e2 = map(float, labeler.explained_variance_ratio_)
        evr_rows.append([region, repr(e1), repr(e2), repr(e1 + e2)])
    with open(ws.path("labels.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cell_id", "region_id", "composite_score", "risk_class"])
        w.writerows(rows)
    with open(ws.path("evr_table.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["region", "evr_pc1", "evr_pc2", "cumulative_evr"])
        w.writerows(evr_rows)
    ws._cache.pop("labels", None)
    return {"regions": len(evr_rows), "cells": len(rows)}


def stage_train(ws):
    cfg = ws.config
    forest_cfg = dict(cfg["forest"])
    summary = {}
    for region, part in ws.regions().items():
        y = ws.region_labels(region)
        X = part.feature_matrix()
        train, test = stratified_split(
            y, SplitSpec(cfg["split"]["train_fraction"], True, derive_seed(ws.seed, region, "split")))
        ws.write_json(f"splits/{region}.json", "split", {
            "region": region,
            "train_cell_ids": [format_cell_id(c) for c in part.cell_ids[train]],
            "test_cell_ids": [format_cell_id(c) for c in part.cell_ids[test]],
        })
        scaler = MedianIQRScaler().fit(X[train])
        Xs = scaler.transform(X[train])
        params = {}
        if cfg["cv"]["enabled"]:
            proto = RiskForestClassifier(**{**forest_cfg, "n_estimators": cfg["cv"]["n_estimators"]},
                                         random_state=derive_seed(ws.seed, region, "cv-forest"),
                                         n_jobs=cfg["n_jobs"])
            cv = cross_validate(proto, Xs, y[train], cfg["cv"]["grid"], cfg["cv"]["k"],
                                derive_seed(ws.seed, region, "cv-folds"))
            ws.write_json(f"cv/{region}.json", "cv_result", cv.to_dict())
            params = cv.best_params
        forest = RiskForestClassifier(**{**forest_cfg, **params},
                                      random_state=derive_seed(ws.seed, region, "forest"),
                                      n_jobs=cfg["n_jobs"]).fit(Xs, y[train])
        names = ws.feature_schema.names
        ws.write_json(f"models/{region}.json", "region_model", {
            "region": region,
            "feature_names": list(names),
            "class_names": list(CLASS_NAMES),
            "scaler": scaler.to_dict(list(names)),
            "selected_params": params,
            "forest": forest.to_dict(list(names), list(CLASS_NAMES)),
        }, compact=True)
        ws._cache.pop(("model", region), None)
        summary[region] = {"train": int(len(train)), "test": int(len(test)), **params}
    return summary


def stage_evaluate(ws):
    rows = []
    for region in ws.regions():
        model, digest, _ = ws.region_model(region)
        X_test, y_test, _ = ws.test_data(region)
        report = MetricsReport.from_labels(y_test, model.predict(X_test))
        ws.write_json(f"metrics/{region}.json", "metrics_report",
                      {"region": region, "model_sha256": digest, "n_test": int(len(y_test)), **report.to_dict()})
        write_confusion_csv(report.confusion, ws.path("metrics", f"{region}_confusion.csv"), list(CLASS_NAMES))
        rows.append([region, *(repr(float(v)) for v in
                               (report.accuracy, report.macro_f1, report.qwk, report.balanced_accuracy))])
    with open(ws.path("metrics", "summary.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["region", "accuracy", "macro_f1", "qwk", "balanced_accuracy"])
        w.writerows(rows)
    return {r[0]: float(r[1]) for r in rows}


def stage_explain(ws):
    cfg = ws.config["shap"]
    names = list(ws.feature_schema.names)
    out = {}
    for region in ws.regions():
        model, digest, _ = ws.region_model(region)
        scaler, forest = model.steps[0][1], model.steps[-1][1]
        X_test, _, _ = ws.test_data(region)
        Xs = scaler.transform(X_test)
        result = TreeExplainer(forest, chunk_size=cfg["chunk_size"], n_jobs=ws.config["n_jobs"]).explain(Xs)
        additivity = float(np.max(np.abs(result.per_class.sum(axis=1) + result.base_values - result.probabilities)))
        ws.write_json(f"shap/{region}/importance.json", "shap_importance", {
            "region": region,
            "model_sha256": digest,
            "n_instances": int(Xs.shape[0]),
            "base_values": result.base_values.tolist(),
            "additivity_max_abs_error": additivity,
            "ranking": result.importance_records(names),
        })
        export_beeswarm(result.expected_level, X_test, ws.path("shap", region, "beeswarm.csv"),
                        names, top_k=cfg["top_k"], ranking=result.global_importance)
        if cfg.get("dump_tensor"):
            dump_tensor(result.per_class, ws.path("shap", region, "per_class.f64"), names, list(CLASS_NAMES))
        out[region] = names[result.global_importance[0][0]]
    return out


def stage_ice(ws):
    cfg = ws.config["ice"]
    names = list(ws.feature_schema.names)
    out = {}
    for region in ws.regions():
        ranking_doc = ws.read_json(f"shap/{region}/importance.json", "explain")
        ranking = [(names.index(r["feature"]), r["importance"]) for r in ranking_doc["ranking"]]
        model, _, _ = ws.region_model(region)
        X_test, _, _ = ws.test_data(region)
        entries = []
        for j in top_k_features(ranking, cfg["top_k"]):
            grid = make_grid(X_test[:, j], cfg["points"], cfg["lo_pct"], cfg["hi_pct"])
            res = ice_pdp(model, X_test, j, grid, cfg["target_class"], feature_name=names[j])
            res.to_csv(ws.path("ice", region, f"{names[j]}.csv"))
            entries.append({"feature": names[j], "feature_index": j, "target_class": res.target_class,
                            "grid": res.grid.tolist(), "threshold_onset": threshold_onset(res),
                            "max_slope_at": max_slope_location(res)})
        ws.write_json(f"ice/{region}/manifest.json", "ice_manifest", {"region": region, "features": entries})
        out[region] = [e["feature"] for e in entries]
    return out


def stage_transfer(ws):
    regions = {}
    for region in ws.regions():
        model, digest, seed = ws.region_model(region)
        X_test, y_test, _ = ws.test_data(region)
        regions[region] = RegionModel(region, model, X_test, y_test, seed, digest)
    report = run_transfer_matrix(regions, ws.config["transfer"]["scaling"])
    (ws.out / "transfer").mkdir(exist_ok=True)
    report.write_heatmaps(ws.out / "transfer")
    ws.write_json("transfer/report.json", "transfer_report", report.to_dict())
    return {m: report.matrices[m].tolist() for m in ("qwk",)}


STAGE_FUNCS = {
    "synth": stage_synth, "label": stage_label, "train": stage_train, "evaluate": stage_evaluate,
    "explain": stage_explain, "ice": stage_ice, "transfer": stage_transfer,
}


def run_stage(name, ws):
    log.info("stage %s", name)
    result = STAGE_FUNCS[name](ws)
    ws.write_manifest()
    return result


def run_pipeline(ws):
    results = {}
    stages = STAGES if not ws.config.get("input") else STAGES[1:]
    for name in stages:
        results[name] = run_stage(name, ws)
    return results
