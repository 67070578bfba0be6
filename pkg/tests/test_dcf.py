import json

import numpy as np
import pytest

from scipy import linalg

from numpy.testing import assert_allclose, assert_array_equal

from msctrack.errors import (
    DimensionMismatch, LimitExceeded, InvalidConfig,
    DegenerateBox, NotInitializedError
)
from msctrack.features import CompressionHead
from msctrack.tensor import FeatureMap, fft2, ifft2, gaussian_label, circular_correlate_spatial
from msctrack.tools import make_rng
from msctrack.trackers import (
    TrackerConfig, CrmConfig, load_configs, refine_peak,
    train_filter, detect, update_model, init_tracker, track
)
from msctrack.trackers import dcf

from conftest import textured_frame


def _spatial_objective(h, x, g, lam):
    """sum_m (sum_l corr(h^l, x^l)[m] - g[m])^2 + lam * |h|^2"""
    response = circular_correlate_spatial(FeatureMap(h), FeatureMap(x)).values[:, :, 0]
    return np.sum((response - g) ** 2) + lam * np.sum(h ** 2)

def _circulant_design(x):
    """Row m holds every channel of x shifted by m, channels side by side"""
    rows, cols, _ = x.shape
    return np.stack([
        np.roll(x, (-m1, -m2), axis=(0, 1)).transpose(2, 0, 1).ravel()
        for m1 in range(rows) for m2 in range(cols)
    ])

def _dense_ridge(x, g, lam):
    """Spatial filter (H, W, D) from the dense normal equations"""
    design = _circulant_design(x)
    h = linalg.solve(design.T @ design + lam * np.eye(design.shape[1]), design.T @ g.ravel(), assume_a='pos')
    return h.reshape(x.shape[2], *x.shape[:2]).transpose(1, 2, 0)

class TestTrainFilter:
    def test_zero_features_give_zero_filter(self):
        model = train_filter(FeatureMap(np.zeros((8, 8, 3))), gaussian_label(8, 8, (4, 4), 1.0))
        assert not model.filter.values.any()

    @pytest.mark.parametrize('seed', range(100))
    def test_matches_dense_ridge(self, seed):
        rng = np.random.default_rng(seed)
        rows, cols, depth = rng.integers(1, 7), rng.integers(1, 7), rng.integers(1, 4)
        x = rng.normal(size=(rows, cols, depth))
        g = rng.normal(size=(rows, cols))
        lam = 10 ** rng.uniform(-2, 0)

        h = _dense_ridge(x, g, lam)
        model = train_filter(FeatureMap(x), g, lam)
        assert_allclose(model.filter.values, fft2(FeatureMap(h)).values, rtol=1e-7, atol=1e-8)

    def test_is_optimal(self, rng):
        x = rng.normal(size=(6, 6, 2))
        g = gaussian_label(6, 6, (3, 3), 1.0).values
        lam = 1e-2

        h = ifft2(train_filter(FeatureMap(x), g, lam).filter).values
        best = _spatial_objective(h, x, g, lam)
        for _ in range(20):
            assert _spatial_objective(h + 1e-3 * rng.normal(size=h.shape), x, g, lam) >= best

    def test_residual_shrinks_with_lambda(self, rng):
        x = FeatureMap(rng.normal(size=(16, 16, 2)))
        g = gaussian_label(16, 16, (8, 8), 1.5)

        residuals = [
            np.linalg.norm(detect(train_filter(x, g, lam), x).response.values[:, :, 0] - g.values)
            for lam in (1e-1, 1e-2, 1e-3)
        ]
        assert residuals[0] > residuals[1] > residuals[2]

    def test_rejects_bad_lambda(self):
        with pytest.raises(LimitExceeded):
            train_filter(FeatureMap(np.ones((4, 4))), np.ones((4, 4)), 0.0)

class TestDetect:
    def test_self_detection_peaks_at_label(self, rng):
        x = FeatureMap(rng.normal(size=(16, 16, 3)))
        detection = detect(train_filter(x, gaussian_label(16, 16, (8, 8), 1.5), 1e-6), x)

        assert detection.peak == pytest.approx((8, 8), abs=1e-3)
        assert detection.peak_value == pytest.approx(1.0, abs=1e-3)

    def test_shift_moves_peak(self, rng):
        values = rng.normal(size=(16, 16, 3))
        model = train_filter(FeatureMap(values), gaussian_label(16, 16, (8, 8), 1.5), 1e-6)
        detection = detect(model, FeatureMap(np.roll(values, (2, 3), axis=(0, 1))))

        assert detection.peak == pytest.approx((10, 11), abs=1e-3)

    @pytest.mark.parametrize('seed', range(100))
    def test_matches_spatial_correlation(self, seed):
        rng = np.random.default_rng(seed)
        height, width, depth = rng.integers(2, 11), rng.integers(2, 11), rng.integers(1, 5)
        x = FeatureMap(rng.normal(size=(height, width, depth)))
        z = FeatureMap(rng.normal(size=(height, width, depth)))
        g = gaussian_label(height, width, (height // 2, width // 2), 1.0)

        model = train_filter(x, g, 1e-3)
        h = ifft2(model.filter)
        assert_allclose(
            detect(model, z).response.values,
            circular_correlate_spatial(h, z).values, atol=1e-10)

    def test_rejects_shape_mismatch(self):
        model = train_filter(FeatureMap(np.ones((4, 4, 2))), np.ones((4, 4)))
        with pytest.raises(DimensionMismatch):
            detect(model, FeatureMap(np.ones((4, 4, 3))))

class TestUpdate:
    @pytest.fixture
    def models(self, rng):
        g = gaussian_label(8, 8, (4, 4), 1.0)
        x, y = FeatureMap(rng.normal(size=(8, 8, 2))), FeatureMap(rng.normal(size=(8, 8, 2)))
        return train_filter(x, g), y, g

    def test_full_rate_replaces(self, models):
        model, y, g = models
        updated = update_model(model, y, g, 1.0)
        fresh = train_filter(y, g)
        assert_allclose(updated.numerator.values, fresh.numerator.values)
        assert_allclose(updated.denominator, fresh.denominator)

    def test_zero_rate_keeps(self, models):
        model, y, g = models
        updated = update_model(model, y, g, 0.0)
        assert_allclose(updated.numerator.values, model.numerator.values)

    def test_partial_rate_is_convex(self, models):
        model, y, g = models
        fresh = train_filter(y, g)
        updated = update_model(model, y, g, 0.25)
        assert_allclose(updated.denominator, 0.75 * model.denominator + 0.25 * fresh.denominator)
        assert updated.denominator.dtype == np.float64

    @pytest.mark.parametrize('mu', [-0.1, 1.5])
    def test_rejects_bad_rate(self, models, mu):
        model, y, g = models
        with pytest.raises(LimitExceeded):
            update_model(model, y, g, mu)

def test_refine_peak_prefers_first_of_equal_maxima():
    response = np.zeros((5, 5))
    response[1, 3] = response[3, 1] = 1.0
    (row, col), value = refine_peak(response)
    assert (round(row), round(col), value) == (1, 3, 1.0)

class TestConfig:
    def test_presets(self):
        dcf_, cco_ = TrackerConfig.dcf(), TrackerConfig.cco()
        assert (dcf_.mu, dcf_.padding, dcf_.crm.k) == (0.012, 1.65, 50)
        assert (cco_.mu, cco_.padding, cco_.crm.k, cco_.pca_dim) == (9.4e-3, 3.62, 58, 38)
        assert cco_.crm.eta == 3 and cco_.crm.zeta == 1e-5

    def test_from_dict_overrides_preset(self):
        config = TrackerConfig.from_dict({'kind': 'cco', 'crm': {'k': 40}})
        assert config.crm == CrmConfig(k=40)
        assert config.padding == 3.62 and config.label == 'MSC-CCO'

    def test_other_features_drop_preset_name(self):
        assert TrackerConfig.from_dict({'features': 'hog'}).label == 'HOG-DCF'

    @pytest.mark.parametrize('data', [
        {'kind': 'kcf'}, {'mu': 2}, {'features': 'sift'},
        {'kernel': 'gauss'}, {'crm': {'kk': 1}}, {'spam': 1},
    ])
    def test_rejects_bad_config(self, data):
        with pytest.raises(InvalidConfig):
            TrackerConfig.from_dict(data)

    def test_load_list(self, tmp_path):
        path = tmp_path / 'trackers.json'
        path.write_text(json.dumps({'trackers': [{'kind': 'dcf'}, {'kind': 'cco', 'name': 'mine'}]}))
        assert [c.label for c in load_configs(path)] == ['MSC-DCF', 'mine']

    def test_load_single(self, tmp_path):
        path = tmp_path / 'tracker.json'
        path.write_text('{"features": "hog", "scales": 5}')
        assert load_configs(path)[0].scales == 5

    def test_seed_picks_untrained_head(self):
        heads = [TrackerConfig.dcf(seed=s).make_extractor().head for s in (0, 0, 3)]
        assert_array_equal(heads[0].deep_weights, heads[1].deep_weights)
        assert not np.array_equal(heads[0].deep_weights, heads[2].deep_weights)

        expected = CompressionHead.initialize(
            heads[2].shallow_in, heads[2].deep_in, make_rng(3))
        assert_array_equal(heads[2].shallow_weights, expected.shallow_weights)

class TestTracker:
    box = (60, 40, 32, 32)

    def test_static_target_does_not_drift(self, frame):
        state = dcf.init(frame, self.box)
        for _ in range(5):
            state, bbox = dcf.track_frame(state, frame)

        assert bbox[0] == pytest.approx(60, abs=0.5)
        assert bbox[1] == pytest.approx(40, abs=0.5)
        assert bbox[2] == pytest.approx(32, rel=1e-9)
        assert state.frame_index == 5

    def test_follows_translation(self, frame):
        state = dcf.init(frame, self.box)
        moved = textured_frame(box=(63, 42, 32, 32))
        _, bbox = dcf.track_frame(state, moved)

        assert bbox[0] == pytest.approx(63, abs=1.0)
        assert bbox[1] == pytest.approx(42, abs=1.0)

    def test_picks_larger_scale(self, frame):
        config = TrackerConfig.dcf(scale_step=1.125)
        state = dcf.init(frame, self.box, config)

        assert dcf.estimate_scale(state, frame).index == 0
        assert dcf.estimate_scale(state, textured_frame(box=(58, 38, 36, 36))).index == 1

    def test_generic_entry_points(self, frame):
        config = TrackerConfig.dcf(features='hog', crm=CrmConfig(enabled=False))
        state = init_tracker(frame, self.box, config)
        state, bbox = track(state, frame)
        assert np.isfinite(bbox).all()

    def test_rejects_tiny_box(self, frame):
        with pytest.raises(DegenerateBox):
            dcf.init(frame, (10, 10, 1, 5))

    def test_needs_state(self, frame):
        with pytest.raises(NotInitializedError):
            dcf.estimate_scale(None, frame)
