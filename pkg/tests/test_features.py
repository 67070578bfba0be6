import numpy as np
import pytest

from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from msctrack.errors import (
    DimensionMismatch, PatchImpossible,
    RankDeficient, LimitExceeded
)
from msctrack.features import (
    CompressionHead, LrnParams, extract_patch,
    orientation_histograms, hog, max_pool, upsample,
    conv1x1, lrn, lrn_backward, concat_channels,
    msc_features, resample_layers,
    pca_fit, pca_project, pca_reconstruct
)
from msctrack.tensor import FeatureMap
from msctrack.train import grad_check


@pytest.fixture
def image(rng):
    return rng.integers(0, 256, (50, 60, 3)).astype(np.uint8)

class TestExtractPatch:
    def test_region_side(self):
        patch = extract_patch(np.zeros((200, 200)), (100, 100), (40, 40), 1.65)
        assert patch.region[2] == 106
        assert patch.values.shape == (106, 106, 1)

    def test_interior_crop_is_exact(self, image):
        patch = extract_patch(image, (30, 25), (10, 10), 1.0)
        assert patch.region == (20, 15, 20)
        assert not patch.replicated
        assert_allclose(patch.values, image[15:35, 20:40] / 255.0)

    def test_corner_replicates_edges(self, image):
        patch = extract_patch(image, (0, 0), (10, 10), 1.0)
        rows = np.clip(np.arange(-10, 10), 0, 49)
        cols = np.clip(np.arange(-10, 10), 0, 59)

        assert patch.replicated
        assert_allclose(patch.values, image[rows][:, cols] / 255.0)

    def test_fully_outside_is_edge_pixel(self, image):
        patch = extract_patch(image, (-100, -100), (10, 10), 1.0)
        assert_allclose(patch.values, np.broadcast_to(image[0, 0] / 255.0, (20, 20, 3)))

    def test_resized_output(self, image):
        patch = extract_patch(image, (30, 25), (12, 8), 1.65, output_size=52)
        assert patch.values.shape == (52, 52, 3)
        assert 0.0 <= patch.values.min() and patch.values.max() <= 1.0

    @pytest.mark.parametrize('size, padding', [((0, 5), 1.0), ((5, 5), 0.0), ((-1, 5), 1.0)])
    def test_rejects_bad_geometry(self, image, size, padding):
        with pytest.raises(PatchImpossible):
            extract_patch(image, (30, 25), size, padding)

def _brute_histograms(gray, cell):
    """Per-pixel loops over 18 signed directions."""
    height, width = gray.shape
    angles = np.pi * np.arange(18) / 9
    hist = np.zeros((height // cell, width // cell, 18))

    for r in range(height // cell * cell):
        for c in range(width // cell * cell):
            dx = gray[r, min(c + 1, width - 1)] - gray[r, max(c - 1, 0)]
            dy = gray[min(r + 1, height - 1), c] - gray[max(r - 1, 0), c]
            best = int(np.argmax(dx * np.cos(angles) + dy * np.sin(angles)))
            hist[r // cell, c // cell, best] += np.hypot(dx, dy)
    return hist

class TestHog:
    def test_histograms_match_brute_force(self, rng):
        gray = rng.uniform(size=(12, 8))
        assert_allclose(orientation_histograms(gray, 4), _brute_histograms(gray, 4), atol=1e-12)

    def test_strongest_colour_channel_wins(self, rng):
        colour = np.zeros((8, 8, 3))
        colour[:, :, 1] = rng.uniform(size=(8, 8))
        colour[:, :, 0] = 0.5 * colour[:, :, 1]

        assert_allclose(
            orientation_histograms(colour, 4),
            _brute_histograms(colour[:, :, 1], 4), atol=1e-12)

    def test_constant_patch_is_zero(self):
        assert not hog(np.full((16, 16), 0.5)).values.any()

    def test_vertical_edge_votes_one_direction(self):
        patch = np.zeros((8, 8))
        patch[:, 4:] = 1.0
        features = hog(patch, 4).values

        assert features.shape == (2, 2, 32)
        assert (features[:, :, 0] > 0).all()
        assert (features[:, :, 18] > 0).all()
        assert not features[:, :, 1:18].any()
        assert not features[:, :, 19:27].any()
        assert not features[:, :, 31].any()

    def test_shape_floors(self, rng):
        assert hog(rng.uniform(size=(10, 13)), 4).shape == (2, 3, 32)

    def test_rejects_patch_below_one_cell(self):
        with pytest.raises(PatchImpossible):
            hog(np.zeros((3, 9)), 4)

class TestResampling:
    def test_pool_geometry(self):
        assert max_pool(FeatureMap(np.zeros((109, 109, 2)))).shape == (52, 52, 2)

    def test_pool_matches_loops(self, rng):
        values = rng.normal(size=(11, 11, 2))
        pooled = max_pool(FeatureMap(values), 7, 2).values

        assert pooled.shape == (3, 3, 2)
        for i in range(3):
            for j in range(3):
                window = values[2 * i:2 * i + 7, 2 * j:2 * j + 7]
                assert_allclose(pooled[i, j], window.max(axis=(0, 1)))

    def test_pool_rejects_small_map(self):
        with pytest.raises(DimensionMismatch):
            max_pool(FeatureMap(np.zeros((6, 20))))

    def test_upsample_reproduces_ramps(self):
        r, c = np.mgrid[0:13, 0:13]
        ramp = FeatureMap(2.0 * r + 3.0 * c)
        up = upsample(ramp, 4).values[:, :, 0]

        src = np.clip((np.arange(52) + 0.5) / 4 - 0.5, 0, 12)
        assert up.shape == (52, 52)
        assert_allclose(up, 2.0 * src[:, np.newaxis] + 3.0 * src[np.newaxis, :], atol=1e-12)

    def test_upsample_keeps_constants(self):
        assert_allclose(upsample(FeatureMap(np.full((3, 4, 2), 7.0))).values, 7.0)

class TestHeadLayers:
    def test_conv1x1_identity(self, rng):
        fmap = FeatureMap(rng.normal(size=(4, 4, 3)))
        assert_allclose(conv1x1(fmap, np.eye(3), np.zeros(3)).values, fmap.values)

    def test_conv1x1_rejects_shapes(self):
        fmap = FeatureMap(np.zeros((2, 2, 3)))
        with pytest.raises(DimensionMismatch):
            conv1x1(fmap, np.zeros((2, 4)), np.zeros(4))
        with pytest.raises(DimensionMismatch):
            conv1x1(fmap, np.zeros((3, 4)), np.zeros(3))

    @settings(max_examples=25, deadline=None)
    @given(a=st.floats(-10, 10), b=st.floats(-10, 10))
    def test_conv1x1_is_linear(self, a, b):
        rng = np.random.default_rng(0)
        x, y = rng.normal(size=(2, 3, 3, 4))
        w, zero = rng.normal(size=(4, 5)), np.zeros(5)

        combined = conv1x1(FeatureMap(a * x + b * y), w, zero).values
        separate = a * conv1x1(FeatureMap(x), w, zero).values + b * conv1x1(FeatureMap(y), w, zero).values
        assert_allclose(combined, separate, atol=1e-9)

    def test_lrn_single_active_channel(self):
        values = np.zeros((1, 1, 5))
        values[0, 0, 2] = 3.0
        out = lrn(FeatureMap(values), n=5, kappa=2.0, alpha=1e-4, beta=0.75).values[0, 0]

        expected = 3.0 / (2.0 + 1e-4 / 5 * 9.0) ** 0.75
        assert out[2] == pytest.approx(expected, rel=1e-12)
        assert not np.delete(out, 2).any()

    @pytest.mark.parametrize('n', [3, 4, 5])
    def test_lrn_backward_matches_differences(self, rng, n):
        params = LrnParams(n=n, kappa=1.5, alpha=0.8, beta=0.75)
        weights = rng.normal(size=(3, 3, 6))

        def fn(inputs):
            values = inputs['values']
            out = lrn(FeatureMap(values), params.n, params.kappa, params.alpha, params.beta)
            return float(np.sum(out.values * weights)), {'values': lrn_backward(values, weights, params)}

        assert grad_check(fn, {'values': rng.normal(size=(3, 3, 6))}, eps=1e-4) < 1e-5

    def test_concat_order(self):
        a, b = FeatureMap(np.zeros((2, 2, 1))), FeatureMap(np.ones((2, 2, 2)))
        assert concat_channels(a, b).values[0, 0].tolist() == [0, 1, 1]

        with pytest.raises(DimensionMismatch):
            concat_channels(a, FeatureMap(np.ones((3, 2))))

class TestCompressionHead:
    def test_msc_geometry(self, rng):
        head = CompressionHead.initialize(3, 32, rng)
        out = msc_features(
            FeatureMap(rng.normal(size=(109, 109, 3))),
            FeatureMap(rng.normal(size=(13, 13, 32))), head)
        assert out.shape == (52, 52, 96)

    def test_zero_layers_give_zero_features(self, rng):
        head = CompressionHead.initialize(3, 32, rng)
        out = msc_features(FeatureMap(np.zeros((109, 109, 3))), FeatureMap(np.zeros((13, 13, 32))), head)
        assert not out.values.any()

    def test_msc_is_composition(self, rng):
        head = CompressionHead.initialize(3, 5, rng)
        shallow = FeatureMap(rng.normal(size=(21, 21, 3)))
        deep = FeatureMap(rng.normal(size=(2, 2, 5)))

        expected = concat_channels(
            lrn(conv1x1(max_pool(shallow), head.shallow_weights, head.shallow_bias)),
            lrn(conv1x1(upsample(deep), head.deep_weights, head.deep_bias)))
        assert_allclose(msc_features(shallow, deep, head).values, expected.values)

    def test_backward_matches_differences(self, rng):
        head = CompressionHead.initialize(3, 2, rng, LrnParams(kappa=1.0, alpha=0.5))
        shallow = FeatureMap(rng.normal(size=(3, 3, 3)))
        deep = FeatureMap(rng.normal(size=(3, 3, 2)))
        weights = rng.normal(size=(3, 3, 96))

        def fn(params):
            trial = head.with_params(params)
            out, tape = trial.compress(shallow, deep)
            return float(np.sum(out.values * weights)), trial.backward(tape, weights)

        assert grad_check(fn, head.params(), eps=1e-4) < 1e-5

    def test_backward_through_resampling(self, rng):
        head = CompressionHead.initialize(3, 2, rng)
        # Pooling 7/2 takes 45 to 20, upsampling x4 takes 5 to 20
        shallow, deep = resample_layers(
            FeatureMap(rng.normal(size=(45, 45, 3))),
            FeatureMap(rng.normal(size=(5, 5, 2))))
        weights = rng.normal(size=(20, 20, 96))

        def fn(params):
            trial = head.with_params(params)
            out, tape = trial.compress(shallow, deep)
            return float(np.sum(out.values * weights)), trial.backward(tape, weights)

        assert shallow.shape[:2] == deep.shape[:2] == (20, 20)
        assert grad_check(fn, head.params(), eps=1e-4) < 1e-5

    def test_rejects_wrong_block_width(self):
        with pytest.raises(DimensionMismatch):
            CompressionHead(np.zeros((3, 16)), np.zeros(16), np.zeros((2, 64)), np.zeros(64))

    def test_save_and_load(self, tmp_path, rng):
        head = CompressionHead.initialize(3, 7, rng, LrnParams(n=3))
        head = head.with_params({**head.params(), 'deep_bias': rng.normal(size=64)})

        weights, biases, sidecar = head.save(tmp_path / 'head')
        assert weights.name == 'head.weights.msct'
        assert sidecar.exists()

        loaded = CompressionHead.load(tmp_path / 'head')
        assert loaded.lrn == head.lrn
        for name, value in head.params().items():
            assert_allclose(loaded.params()[name], value, rtol=1e-6, atol=1e-7)

class TestPca:
    def test_recovers_low_rank_subspace(self, rng):
        data = rng.normal(size=(500, 38)) @ rng.normal(size=(38, 60)) + 5.0
        projector = pca_fit(data, 38)

        fmap = FeatureMap(data.reshape(500, 1, 60))
        projected = pca_project(projector, fmap)
        assert projected.shape == (500, 1, 38)
        assert_allclose(pca_reconstruct(projector, projected).values, fmap.values, atol=1e-6)

    def test_basis_is_orthonormal(self, rng):
        projector = pca_fit(rng.normal(size=(300, 20)), 8)
        assert_allclose(projector.basis.T @ projector.basis, np.eye(8), atol=1e-10)

    def test_line_data_gives_its_direction(self):
        data = np.stack((np.linspace(-1, 1, 11), np.zeros(11)), axis=1)
        projector = pca_fit(data, 1)
        assert_allclose(np.abs(projector.basis[:, 0]), [1.0, 0.0], atol=1e-12)

    def test_error_is_discarded_variance(self, rng):
        data = rng.normal(size=(200, 12)) * np.linspace(3, 0.5, 12)
        projector = pca_fit(data, 4)

        fmap = FeatureMap(data.reshape(200, 1, 12))
        error = np.sum((pca_reconstruct(projector, pca_project(projector, fmap)).values - fmap.values) ** 2)
        eigen = np.sort(np.linalg.eigvalsh(np.cov(data, rowvar=False)))[::-1]

        assert error == pytest.approx(199 * eigen[4:].sum(), rel=1e-8)

    def test_rank_deficiency(self, rng):
        data = rng.normal(size=(400, 10)) @ rng.normal(size=(10, 60))
        with pytest.raises(RankDeficient):
            pca_fit(data, 38)
        assert pca_fit(data, 38, strict=False).output_dim == 10

    def test_needs_enough_samples(self, rng):
        with pytest.raises(LimitExceeded):
            pca_fit(rng.normal(size=(10, 60)), 38)

    def test_projector_checks_channels(self, rng):
        projector = pca_fit(rng.normal(size=(100, 6)), 3)
        with pytest.raises(DimensionMismatch):
            pca_project(projector, FeatureMap(np.zeros((2, 2, 5))))
