import cv2
import numpy as np
import pytest

from numpy.testing import assert_allclose

from msctrack.defaults import TENSOR_MAGIC
from msctrack.errors import InvalidTensorFile
from msctrack.tensor import FeatureMap
from msctrack.tools import (
    int_to_bytes, bytes_to_int,
    pack_tensor, unpack_tensor,
    read_tensor, write_tensor,
    list_frames, make_rng, sync
)


def test_int_bytes():
    assert int_to_bytes(1) == b'\x01\x00\x00\x00'
    assert bytes_to_int(int_to_bytes(513, 2)) == 513

def test_packed_layout():
    fmap = FeatureMap(np.arange(6, dtype=np.float64).reshape(1, 2, 3))
    data = pack_tensor(fmap)

    assert data[:4] == TENSOR_MAGIC
    assert [bytes_to_int(data[i:i+4]) for i in (4, 8, 12, 16)] == [1, 1, 2, 3]
    assert len(data) == 20 + 6 * 4
    assert np.frombuffer(data[20:], dtype='<f4').tolist() == [0, 1, 2, 3, 4, 5]

def test_unpack_keeps_float32_precision(rng):
    fmap = FeatureMap(rng.normal(size=(4, 3, 2)))
    assert_allclose(unpack_tensor(pack_tensor(fmap)).values, fmap.values, rtol=1e-6)

@pytest.mark.parametrize('mangle', [
    lambda d: b'NOPE' + d[4:],
    lambda d: d[:4] + int_to_bytes(2) + d[8:],
    lambda d: d[:-4],
    lambda d: d[:10],
])
def test_unpack_rejects_bad_data(mangle):
    data = pack_tensor(FeatureMap(np.ones((2, 2, 2))))
    with pytest.raises(InvalidTensorFile):
        unpack_tensor(mangle(data))

def test_write_then_read(tmp_path, rng):
    fmap = FeatureMap(rng.normal(size=(5, 5, 4)).astype(np.float32))
    path = write_tensor(tmp_path / 'nested' / 'map.msct', fmap)

    assert path.exists()
    assert_allclose(read_tensor(path).values, fmap.values)

def test_read_missing_file(tmp_path):
    with pytest.raises(InvalidTensorFile):
        read_tensor(tmp_path / 'missing.msct')

def test_list_frames_sniffs_images(tmp_path):
    image = np.zeros((4, 4, 3), dtype=np.uint8)
    cv2.imwrite(str(tmp_path / '0002.png'), image)
    cv2.imwrite(str(tmp_path / '0001.jpg'), image)
    (tmp_path / 'groundtruth_rect.txt').write_text('1,1,2,2\n')
    (tmp_path / 'fake.jpg').write_text('not an image')

    assert [p.name for p in list_frames(tmp_path)] == ['0001.jpg', '0002.png']

def test_make_rng_is_reproducible():
    assert make_rng(5).integers(0, 1000, 4).tolist() == make_rng(5).integers(0, 1000, 4).tolist()

def test_sync_runs_coroutine():
    async def answer():
        return 42
    assert sync(answer()) == 42
