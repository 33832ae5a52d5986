"""Smoke tests for the python bindings: one representative call per area."""

import math

import numpy as np
import pytest

import floodcast as fc


def test_metrics():
    assert fc.nse([1, 2, 3], [1, 2, 3]) == 1.0
    assert fc.nse([1, 2, 3], [1, 2, 4]) == pytest.approx(0.5)
    assert fc.persistent_nse([2, 4], [2, 3], [1, 2]) == pytest.approx(0.8)
    assert fc.rmse([0, 0], [3, 4]) == pytest.approx(math.sqrt(12.5))


def test_qc_roundtrip():
    fixed, n = fc.correct_decimal_errors([5.1, 5.2, 52.0, 5.3], window_h=8.0)
    assert n == 1
    assert fixed[2] == pytest.approx(5.2)

    filled = fc.fill_gaps_linear([1.0, float("nan"), 3.0], max_gap_h=2.0)
    assert filled[1] == pytest.approx(2.0)

    assert fc.ndwi(0.6, 0.2) == pytest.approx(0.5)
    assert fc.ndwi_wet(0.6, 0.2)
    assert not fc.ndwi_wet(0.3, 0.3)


def test_wilcoxon():
    a = [float(i + 1) for i in range(8)]
    b = [float(i) for i in range(8)]
    stat, p = fc.wilcoxon_signed_rank(a, b)
    assert stat == 0.0
    assert p == pytest.approx(2.0 / 256.0)
    with pytest.raises(fc.DataError):
        fc.wilcoxon_signed_rank(a, a)


def test_cmal():
    comps = [(1.0, 2.5, 1.0, 0.5)]
    assert fc.cmal_nll(comps, 2.5) == pytest.approx(math.log(4.0))
    assert fc.cmal_quantile(comps, 0.5) == pytest.approx(2.5, abs=1e-6)


def test_ridge():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(200, 2))
    y = 0.5 * x[:, 0] + 0.2 * x[:, 1]
    weights, intercept = fc.train_ridge(x, list(y), 1e-10)
    assert weights[0] == pytest.approx(0.5, abs=1e-6)
    assert weights[1] == pytest.approx(0.2, abs=1e-6)
    assert intercept == pytest.approx(0.0, abs=1e-6)


def test_inundation_pipeline():
    dem = fc.make_valley_dem(48, 48, channel_depth=1.0, bank_slope=0.004, noise_amp=0.0, seed=3)
    seed_px = np.unravel_index(np.argmin(dem), dem.shape)
    seed_px = (int(seed_px[0]), int(seed_px[1]))

    events = []
    for stage in (-0.4, 0.0, 0.4):
        events.append((stage, fc.flat_fill_extent(dem, stage, seed_px)))
    model = fc.train_thresholding(events, minimal_ratio=1.0)
    assert model.max_train_stage_m == pytest.approx(0.4)

    pred = fc.predict_extent(model, 0.4)
    truth = fc.flat_fill_extent(dem, 0.4, seed_px)
    precision, recall, f1 = fc.extent_scores(pred, truth)
    assert f1 == pytest.approx(1.0)

    grown = fc.dilate_extent(truth, 2)
    assert grown.sum() >= truth.sum()

    heights = fc.extent_to_height(dem, truth, factor=8)
    valid = heights[~np.isnan(heights)]
    assert valid.size > 0
    assert np.allclose(valid, 0.4, atol=0.1)


def test_pixel_threshold_and_routing():
    assert fc.learn_pixel_threshold([(1.0, False), (2.0, True), (3.0, True)], 1.0) == 2.0
    assert math.isinf(fc.learn_pixel_threshold([(1.0, False)], 1.0))

    stages = fc.route_linear_reservoir([0.0] * 24, k_h=12.0, gain=0.05, base_stage_m=2.0)
    assert all(s == 2.0 for s in stages)
