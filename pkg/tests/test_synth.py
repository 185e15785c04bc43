import numpy as np
import pytest
from scipy.stats import spearmanr

from wildfire_genome.exceptions import ConfigInvalid
from wildfire_genome.ingest import partition_by_region
from wildfire_genome.labeler import CompositeRiskLabeler
from wildfire_genome.synth import DriverSpec, RegionSpec, SynthConfig, generate, generate_region


def _region(driver, n=1000, seed=0):
    return generate_region(RegionSpec("R", n, driver), seed)


def test_noise_free_linear_driver_is_rank_perfect():
    table = _region(DriverSpec("elevation", noise_sd=0.0))
    x = table.features[:, table.feature_names.index("elevation")]
    for k in range(table.indicators.shape[1]):
        rho = spearmanr(x, table.indicators[:, k]).statistic
        assert abs(rho) == pytest.approx(1.0, abs=1e-12)


def test_negative_sign_reverses_rank_order():
    table = _region(DriverSpec("slope", noise_sd=0.0, sign=-1))
    x = table.features[:, table.feature_names.index("slope")]
    assert spearmanr(x, table.indicators[:, 5]).statistic == pytest.approx(-1.0)


def test_noise_free_indicators_give_unit_evr():
    table = _region(DriverSpec(noise_sd=0.0))
    lab = CompositeRiskLabeler().fit(table.indicators)
    assert lab.explained_variance_ratio_[0] == pytest.approx(1.0, abs=1e-9)


def test_threshold_latent_is_a_step():
    d = DriverSpec("tsp_nf_pct", "threshold", 0.35)
    np.testing.assert_array_equal(d.latent(np.array([0.1, 0.3499, 0.35, 0.9])), [0, 0, 1, 1])
    table = _region(DriverSpec("tsp_nf_pct", "threshold", 0.35, noise_sd=0.0))
    x = table.feature_matrix()[:, table.feature_names.index("tsp_nf_pct")]
    bp = table.indicators[:, 0]
    assert len(np.unique(bp[x < 0.35])) == 1 and len(np.unique(bp[x >= 0.35])) == 1
    assert bp[x >= 0.35][0] > bp[x < 0.35][0]


def test_linear_latent_spans_unit_range():
    d = DriverSpec("elevation")
    np.testing.assert_allclose(d.latent(np.array([0.0, 1750.0, 3500.0])), [0.0, 0.5, 1.0])


def test_same_seed_identical_tables():
    cfg = SynthConfig((RegionSpec("A", 300), RegionSpec("B", 300)), seed=4)
    assert generate(cfg).equals(generate(cfg))
    assert not generate(cfg).equals(generate(SynthConfig(cfg.regions, seed=5)))


def test_region_streams_do_not_depend_on_order():
    a = SynthConfig((RegionSpec("A", 300), RegionSpec("B", 300)), seed=1)
    b = SynthConfig((RegionSpec("B", 300), RegionSpec("A", 300)), seed=1)
    pa, pb = partition_by_region(generate(a)), partition_by_region(generate(b))
    assert pa["A"].equals(pb["A"]) and pa["B"].equals(pb["B"])


def test_feature_ranges_and_composition(small_table):
    X = small_table.feature_matrix()
    veg = [small_table.feature_names.index(n) for n in small_table.feature_schema.percent]
    np.testing.assert_allclose(X[:, veg].sum(axis=1), 1.0, atol=1e-9)
    assert X[:, veg].min() >= 0
    ind = small_table.indicators
    assert ind[:, [0, 1, 2, 6]].min() >= 0 and ind[:, [0, 1, 2, 6]].max() <= 1
    assert ind[:, [3, 4, 5]].min() >= 0


def test_cell_ids_unique_and_64_bit(small_table):
    ids = small_table.cell_ids
    assert len(np.unique(ids)) == len(ids)
    assert ids.dtype == np.uint64


@pytest.mark.parametrize("bad", [
    {"regions": [{"name": "A", "n_cells": 10}]},
    {"regions": [{"name": "A"}, {"name": "A"}]},
    {"regions": [{"name": "A", "driver": {"dominant_feature": "nope"}}]},
    {"regions": [{"name": "A", "driver": {"effect_shape": "cubic"}}]},
    {"regions": [{"name": "A", "driver": {"noise_sd": -1}}]},
    {"regions": [{"name": "A", "driver": {"sign": 2}}]},
    {"regions": []},
    {"nothing": 1},
])
def test_invalid_configs(bad):
    with pytest.raises(ConfigInvalid):
        SynthConfig.from_dict(bad)


def test_config_round_trip():
    cfg = SynthConfig((RegionSpec("X", 250, DriverSpec("slope", "threshold", 0.2, 0.3, -1)),), seed=9)
    assert SynthConfig.from_dict(cfg.to_dict()) == cfg


def test_opposite_signs_give_opposite_score_correlations():
    cfg = SynthConfig((RegionSpec("U", 800), RegionSpec("D", 800, DriverSpec(sign=-1))), seed=2)
    corr = {}
    for name, part in partition_by_region(generate(cfg)).items():
        score = CompositeRiskLabeler().fit(part.indicators).training_scores_
        corr[name] = np.corrcoef(part.features[:, part.feature_names.index("elevation")], score)[0, 1]
    assert corr["U"] > 0.8 and corr["D"] < -0.8


def test_vegetation_percentages_sum_to_100(small_table):
    veg = [small_table.feature_names.index(n) for n in small_table.feature_schema.percent]
    np.testing.assert_allclose(small_table.features[:, veg].sum(axis=1), 100.0, atol=1e-9)
