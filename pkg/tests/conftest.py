import cv2
import numpy as np
import pytest

from msctrack.harness import synth_sequence


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: long acceptance runs')

@pytest.fixture
def rng():
    return np.random.default_rng(1234)

def textured_frame(size=(160, 120), box=(60, 40, 32, 32), seed=7, side_cells=8):
    """Gray square of random blocks on a smooth background, RGB uint8."""
    rng = np.random.default_rng(seed)
    width, height = size

    background = cv2.resize(
        rng.uniform(70, 150, (height // 16 + 1, width // 16 + 1)),
        (width, height), interpolation=cv2.INTER_CUBIC)

    x, y, w, h = box
    pattern = rng.integers(0, 256, (side_cells, side_cells)).astype(np.float64)
    background[y:y + h, x:x + w] = cv2.resize(pattern, (w, h), interpolation=cv2.INTER_NEAREST)

    gray = np.clip(background, 0, 255).astype(np.uint8)
    return np.repeat(gray[:, :, np.newaxis], 3, axis=2)

@pytest.fixture
def frame():
    return textured_frame()

@pytest.fixture(scope='session')
def short_sequence(tmp_path_factory):
    root = tmp_path_factory.mktemp('sequences')
    return synth_sequence(root / 'short', 'translate', frames=8, seed=3)

@pytest.fixture(scope='session')
def short_suite(tmp_path_factory):
    root = tmp_path_factory.mktemp('suite')
    return [
        synth_sequence(root / 'a', 'translate', frames=6, seed=1),
        synth_sequence(root / 'b', 'zoom', frames=6, seed=2),
    ]
