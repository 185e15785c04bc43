"""End-to-end acceptance checks on synthetic data, one test per criterion.

Each test records a PASS/FAIL line (shown in the terminal summary) before asserting.
The full-scale pipeline (2 regions x 5000 cells x 20 features, 500 trees) runs once
per session and is shared by the additivity, PDP/ICE, transfer and runtime checks.
"""

import csv
import os
import time
from pathlib import Path

import numpy as np
import pytest

from wildfire_genome.forest import RiskForestClassifier
from wildfire_genome.ingest import partition_by_region
from wildfire_genome.labeler import CompositeRiskLabeler, quartile_bin
from wildfire_genome.metrics import MetricsReport, balanced_accuracy, confusion_matrix, macro_f1, qwk
from wildfire_genome.model_selection import SplitSpec, stratified_split
from wildfire_genome.pipeline import Workspace, load_config, run_pipeline, run_stage
from wildfire_genome.synth import DriverSpec, RegionSpec, SynthConfig, generate
from wildfire_genome.transforms import MedianIQRScaler
from wildfire_genome.tree_shap import TreeExplainer, shapley_oracle

from conftest import record_criterion
from treegen import random_tree

N_JOBS = os.cpu_count() or 1
FULL_CONFIG = {"seed": 0, "n_jobs": N_JOBS}


@pytest.fixture(scope="module")
def full_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("full_run")
    ws = Workspace(out, load_config(FULL_CONFIG))
    t0 = time.perf_counter()
    results = run_pipeline(ws)
    elapsed = time.perf_counter() - t0
    return ws, results, elapsed


def test_criterion_01_shap_exactness():
    t0 = time.perf_counter()
    worst, n_values = 0.0, 0
    for seed in range(150):
        rng = np.random.default_rng(seed)
        M = int(rng.integers(1, 7))
        tree = random_tree(rng, M, int(rng.integers(1, 5)))
        X = rng.uniform(-1.2, 1.2, size=(4, M))
        fast = TreeExplainer(tree).shap_values(X)
        for i in range(len(X)):
            diff = np.abs(fast[i] - shapley_oracle(tree, X[i], M))
            worst = max(worst, float(diff.max()))
            n_values += diff.size
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-9 and elapsed < 10.0
    record_criterion(1, "tree SHAP equals subset-enumeration oracle", ok,
                     f"150 trees, {n_values} values, max |diff|={worst:.2e} (tol 1e-9), {elapsed:.2f}s (< 10s)")
    assert ok


def test_criterion_02_shap_additivity(full_run):
    ws, _, _ = full_run
    worst, count = 0.0, 0
    for region in ws.regions():
        model, _, _ = ws.region_model(region)
        scaler, forest = model.steps[0][1], model.steps[-1][1]
        X_test, _, _ = ws.test_data(region)
        Xs = scaler.transform(X_test)
        explainer = TreeExplainer(forest, n_jobs=N_JOBS)
        phi = explainer.shap_values(Xs)
        recon = phi.sum(axis=1) + explainer.expected_value
        worst = max(worst, float(np.abs(recon - forest.predict_proba(Xs)).max()))
        count += phi.shape[0]
        assert forest.n_estimators == 500 and Xs.shape[1] == 20
    ok = worst <= 1e-6
    record_criterion(2, "SHAP additivity on full pipeline", ok,
                     f"{count} test instances x 4 classes, max |sum(phi)+base-p|={worst:.2e} (tol 1e-6)")
    assert ok


def _planted_run(seed, n_cells=1000, n_trees=100):
    cfg = SynthConfig((RegionSpec("P", n_cells, DriverSpec("elevation", "linear", noise_sd=0.1)),), seed)
    table = generate(cfg).canonical()
    y = CompositeRiskLabeler().fit_predict(table.indicators)
    X = table.feature_matrix()
    train, test = stratified_split(y, SplitSpec(0.7, True, seed))
    scaler = MedianIQRScaler().fit(X[train])
    forest = RiskForestClassifier(n_trees, random_state=seed).fit(scaler.transform(X[train]), y[train])
    Xs = scaler.transform(X[test])
    report = MetricsReport.from_labels(y[test], forest.predict(Xs))
    top = TreeExplainer(forest).explain(Xs).global_importance[0][0]
    return table.feature_names[top], report.accuracy, report.qwk


def test_criterion_03_planted_driver_recovery(full_run):
    runs = [_planted_run(seed) for seed in range(100)]
    hits = sum(name == "elevation" for name, _, _ in runs)
    acc = np.array([a for _, a, _ in runs])
    kappa = np.array([q for _, _, q in runs])
    ws, results, _ = full_run
    full = []
    for region in ws.regions():
        model, _, _ = ws.region_model(region)
        X_test, y_test, _ = ws.test_data(region)
        rep = MetricsReport.from_labels(y_test, model.predict(X_test))
        full.append((region, results["explain"][region], rep.accuracy, rep.qwk))
    full_ok = all(top == "elevation" and a >= 0.80 and q >= 0.85 for _, top, a, q in full)
    ok = hits >= 95 and acc.min() >= 0.80 and kappa.min() >= 0.85 and full_ok
    detail = (f"driver ranked #1 in {hits}/100 seeded runs (need >= 95); per-run accuracy min {acc.min():.3f} "
              f"(>= 0.80), QWK min {kappa.min():.3f} (>= 0.85); full scale "
              + ", ".join(f"{r}: top={t}, acc={a:.3f}, qwk={q:.3f}" for r, t, a, q in full))
    record_criterion(3, "planted driver recovery", ok, detail)
    assert ok


def test_criterion_04_threshold_shape(tmp_path):
    regions = [{"name": "T", "n_cells": 5000,
                "driver": {"dominant_feature": "tsp_nf_pct", "effect_shape": "threshold", "threshold_at": 0.35}}]
    ws = Workspace(tmp_path, load_config({"synth": {"regions": regions}, "n_jobs": N_JOBS,
                                          "ice": {"top_k": 1}}))
    run_pipeline(ws)
    entry = ws.read_json("ice/T/manifest.json", "ice")["features"][0]
    where = entry["max_slope_at"]
    ok = entry["feature"] == "tsp_nf_pct" and abs(where - 0.35) <= 0.05
    record_criterion(4, "threshold-shape recovery in PDP", ok,
                     f"feature={entry['feature']}, max slope at {where:.4f} (target 0.35 +/- 0.05)")
    assert ok


def test_criterion_05_transfer_polarity(full_run, tmp_path):
    ws, _, _ = full_run
    same = np.array(ws.read_json("transfer/report.json", "transfer")["matrices"]["qwk"])
    regions = [{"name": "A", "n_cells": 5000}, {"name": "B", "n_cells": 5000, "driver": {"sign": -1}}]
    inv_ws = Workspace(tmp_path, load_config({"synth": {"regions": regions}, "n_jobs": N_JOBS,
                                              "cv": {"enabled": False}}))
    for stage in ("synth", "label", "train", "transfer"):
        run_stage(stage, inv_ws)
    inv = np.array(inv_ws.read_json("transfer/report.json", "transfer")["matrices"]["qwk"])
    off_same = [same[0, 1], same[1, 0]]
    off_inv = [inv[0, 1], inv[1, 0]]
    ok = min(off_same) >= 0.6 and max(off_inv) <= 0.0
    record_criterion(5, "transfer polarity", ok,
                     f"same-sign off-diagonal QWK {np.round(off_same, 3).tolist()} (>= 0.6); "
                     f"inverted-sign {np.round(off_inv, 3).tolist()} (<= 0)")
    assert ok


def test_criterion_06_metric_oracles():
    rng = np.random.default_rng(2024)
    reversal = qwk([0, 0, 3, 3], [3, 3, 0, 0])
    y = rng.integers(0, 4, 10000)
    identity = qwk(y, y)
    f1 = macro_f1(confusion_matrix([0, 0, 1, 1], [0, 1, 0, 1], n_classes=2))
    bal = balanced_accuracy(confusion_matrix(y, rng.integers(0, 4, 10000)))
    ok = reversal == -1.0 and identity == 1.0 and f1 == 0.5 and 0.22 <= bal <= 0.28
    record_criterion(6, "metric oracles", ok,
                     f"qwk reversal={reversal!r}, qwk(y,y)={identity!r}, macro-F1={f1!r}, "
                     f"random balanced accuracy={bal:.4f} in [0.22, 0.28]")
    assert ok


def _read_ice_csv(path):
    curves, pdp = {}, []
    with open(path) as fh:
        for row in csv.DictReader(fh):
            if row["instance_id"] == "__pdp__":
                pdp.append(float(row["probability"]))
            else:
                curves.setdefault(int(row["instance_id"]), []).append(float(row["probability"]))
    return np.array([curves[i] for i in sorted(curves)]), np.array(pdp)


def test_criterion_07_pdp_ice_identity(full_run):
    ws, _, _ = full_run
    worst, checked = 0.0, 0
    for path in sorted(Path(ws.out, "ice").rglob("*.csv")):
        curves, pdp = _read_ice_csv(path)
        worst = max(worst, float(np.max(np.abs(pdp - curves.mean(axis=0)))))
        checked += 1
    ok = checked == 6 and worst == 0.0
    record_criterion(7, "PDP equals mean of ICE curves", ok,
                     f"{checked} ICE results, max |pdp - mean(ice)| = {worst!r} (must be 0)")
    assert ok


def test_criterion_08_label_invariances(full_run):
    ws, _, _ = full_run
    worst = 0.0
    rng = np.random.default_rng(8)
    for region, part in ws.regions().items():
        base = CompositeRiskLabeler().fit(part.indicators)
        for _ in range(8):
            signs = tuple(int(s) for s in rng.choice([-1, 1], size=2))
            other = CompositeRiskLabeler().fit(part.indicators, sign_convention=signs)
            worst = max(worst, float(np.abs(other.training_scores_ - base.training_scores_).max()))
    balanced = True
    for n in (4, 5, 6, 7, 97, 1000, 5000, 5003):
        _, classes = quartile_bin(rng.permutation(n).astype(float) + rng.uniform(0, 0.5))
        counts = np.bincount(classes, minlength=4)
        balanced &= bool(counts.min() >= n // 4 and counts.max() <= -(-n // 4))
    ok = worst <= 1e-10 and balanced
    record_criterion(8, "label sign invariance and quartile balance", ok,
                     f"max composite change under random eigenvector signs {worst:.2e} (tol 1e-10); "
                     f"class counts within floor/ceil(n/4) for all n: {balanced}")
    assert ok


def test_criterion_09_determinism(full_run, tmp_path):
    ws, _, _ = full_run
    again = Workspace(tmp_path, load_config(FULL_CONFIG))
    run_pipeline(again)
    first = {p.relative_to(ws.out): p.read_bytes() for p in ws.out.rglob("*") if p.is_file()}
    second = {p.relative_to(again.out): p.read_bytes() for p in again.out.rglob("*") if p.is_file()}
    differing = sorted(str(k) for k in first.keys() | second.keys() if first.get(k) != second.get(k))
    ok = not differing
    record_criterion(9, "byte-identical artifacts across runs", ok,
                     f"{len(first)} files compared, differing: {differing[:5] or 'none'}")
    assert ok


def test_criterion_10_runtime_budget(full_run):
    _, _, elapsed = full_run
    ok = elapsed < 60.0
    record_criterion(10, "full synthetic pipeline runtime", ok,
                     f"{elapsed:.1f}s wall clock with {N_JOBS} core(s) (budget 60s on an 8-core desktop)")
    assert ok
