import numpy as np
import pytest

from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from msctrack.crm import (
    TargetRegion, ChannelScore, channel_ratio,
    activation_indicator, reliability_scores,
    select_top_k, refine_channels
)
from msctrack.errors import DimensionMismatch, LimitExceeded
from msctrack.tensor import FeatureMap


def test_ratio_of_target_only_and_background_only():
    values = np.zeros((6, 6, 2))
    values[2:4, 2:4, 0] = 1.0
    values[0, 0, 1] = 5.0
    region = TargetRegion(2, 2, 2, 2)

    ratios = channel_ratio(FeatureMap(values), region, zeta=1e-5)
    assert ratios[0] == pytest.approx(4 / (4 + 1e-5))
    assert ratios[1] == 0.0

def test_zero_channel_scores_zero():
    scores = reliability_scores(FeatureMap(np.zeros((5, 5, 3))), TargetRegion(1, 1, 3, 3))
    assert [s.score for s in scores] == [0.0, 0.0, 0.0]
    assert [s.indicator for s in scores] == [0, 0, 0]

@pytest.mark.parametrize('nonzero, indicator', [(3, 0), (4, 1)])
def test_indicator_is_strict(nonzero, indicator):
    values = np.zeros((5, 5, 1))
    values[1:4, 1:4, 0].flat[:nonzero] = 0.5
    region = TargetRegion(1, 1, 3, 3)

    assert activation_indicator(FeatureMap(values), region, eta=3).tolist() == [indicator]

def test_indicator_ignores_float_noise():
    values = np.full((4, 4, 1), 1e-13)
    assert activation_indicator(FeatureMap(values), TargetRegion(0, 0, 4, 4)).tolist() == [0]

def _scores_by_loops(values, region, eta, zeta):
    scores = []
    for l in range(values.shape[2]):
        target, total, nonzero = 0.0, 0.0, 0
        for i in range(values.shape[0]):
            for j in range(values.shape[1]):
                v = abs(values[i, j, l])
                total += v
                if region.row <= i < region.row + region.height and \
                        region.col <= j < region.col + region.width:
                    target += v
                    nonzero += v > 1e-12
        ratio = target / (total + zeta)
        scores.append(ratio * (nonzero > region.area / eta))
    return scores

@pytest.mark.parametrize('seed', range(5))
def test_scores_match_loops(seed):
    rng = np.random.default_rng(seed)
    values = rng.normal(size=(8, 8, 6)) * (rng.uniform(size=(8, 8, 6)) < 0.4)
    region = TargetRegion(2, 1, 4, 5)

    scores = reliability_scores(FeatureMap(values), region, eta=3, zeta=1e-5)
    assert_allclose([s.score for s in scores], _scores_by_loops(values, region, 3, 1e-5), rtol=1e-12)
    assert all(0.0 <= s.ratio < 1.0 for s in scores)

@settings(max_examples=30, deadline=None)
@given(scale=st.floats(min_value=1e-3, max_value=1e3))
def test_ratio_is_scale_invariant(scale):
    rng = np.random.default_rng(1)
    values = rng.normal(size=(6, 6, 3)) + 3.0
    region = TargetRegion(1, 1, 3, 3)

    base = channel_ratio(FeatureMap(values), region, zeta=1e-12)
    scaled = channel_ratio(FeatureMap(scale * values), region, zeta=1e-12)
    assert_allclose(scaled, base, rtol=1e-6)

def test_top_k_example():
    scores = [ChannelScore(i, s, 1, s) for i, s in enumerate([0.1, 0.9, 0.5, 0.9])]
    assert select_top_k(scores, 2) == [1, 3]
    assert select_top_k(scores, 4) == [1, 3, 2, 0]

@pytest.mark.parametrize('seed', range(10))
def test_top_k_matches_exhaustive_sort(seed):
    rng = np.random.default_rng(seed)
    values = rng.choice([0.0, 0.25, 0.5, 1.0], size=12)
    scores = [ChannelScore(i, v, 1, v) for i, v in enumerate(values)]

    expected = sorted(range(12), key=lambda i: (-values[i], i))
    for k in (1, 5, 12):
        assert select_top_k(scores, k) == expected[:k]

@pytest.mark.parametrize('k', [0, 4])
def test_top_k_range(k):
    with pytest.raises(LimitExceeded):
        select_top_k([ChannelScore(i, 0, 0, 0) for i in range(3)], k)

def test_refine_keeps_channels_outside_block():
    values = np.zeros((6, 6, 6))
    values[2:4, 2:4, 3] = 1.0  # best block channel
    values[2:4, 2:4, 4] = 0.5
    values[:, :, 4] += 0.5     # diluted by background
    values[:, :, 0] = 1.0

    keep = refine_channels(FeatureMap(values), (2, 6), TargetRegion(2, 2, 2, 2), k=1)
    assert keep == [0, 1, 3]

def test_refine_rejects_bad_block():
    with pytest.raises(DimensionMismatch):
        refine_channels(FeatureMap(np.zeros((4, 4, 3))), (1, 5), TargetRegion(0, 0, 2, 2), k=1)

def test_region_must_fit_map():
    with pytest.raises(DimensionMismatch):
        channel_ratio(FeatureMap(np.zeros((4, 4, 1))), TargetRegion(3, 0, 2, 2))

def test_region_around_is_clipped():
    region = TargetRegion.around((1.0, 50.0), (4, 6), (52, 52))
    assert region == TargetRegion(0, 46, 4, 6)
    assert region.area == 24

@pytest.mark.parametrize('eta, zeta', [(0, 1e-5), (3, 0)])
def test_scores_reject_bad_constants(eta, zeta):
    with pytest.raises(LimitExceeded):
        reliability_scores(FeatureMap(np.ones((3, 3, 1))), TargetRegion(0, 0, 2, 2), eta, zeta)
