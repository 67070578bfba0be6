"""Tensor file I/O, frame listing, seeded RNG and the sync helper."""

import logging

from os import PathLike
from pathlib import Path
from asyncio import new_event_loop
from typing import Coroutine, List, Optional, Union

import numpy as np
import filetype

from .errors import InvalidTensorFile, OutputUnwritable
from .defaults import TENSOR_MAGIC, TENSOR_VERSION
from .tensor import FeatureMap

__all__ = [
    'int_to_bytes',
    'bytes_to_int',
    'pack_tensor',
    'unpack_tensor',
    'read_tensor',
    'write_tensor',
    'list_frames',
    'make_rng',
    'sync',
]
logger = logging.getLogger(__name__)

# magic + version + H + W + D
_HEADER_SIZE = len(TENSOR_MAGIC) + 4 * 4


def int_to_bytes(int_: int, length: int=4) -> bytes:
    """Converts unsigned int to bytes with Little byteorder."""
    return int.to_bytes(int_, length, 'little', signed=False)

def bytes_to_int(bytes_: bytes) -> int:
    """Converts bytes to unsigned int with Little byteorder."""
    return int.from_bytes(bytes_, 'little', signed=False)

def pack_tensor(fmap: FeatureMap) -> bytes:
    """
    Will make MSCT bytestring from ``FeatureMap``.

    <MSCT><version><H><W><D><H*W*D float32>

    All integers are u32 and every value is
    little-endian. Values are stored row-major,
    channel-last, i.e. exactly ``values.ravel()``.
    """
    header = TENSOR_MAGIC + int_to_bytes(TENSOR_VERSION)
    for dim in fmap.shape:
        header += int_to_bytes(dim)

    payload = np.ascontiguousarray(fmap.values, dtype='<f4')
    return header + payload.tobytes()

def unpack_tensor(data: bytes) -> FeatureMap:
    """
    Will parse ``pack_tensor`` bytestring
    and convert it back to ``FeatureMap``.

    Raises ``InvalidTensorFile`` on a wrong magic,
    unknown version or a truncated payload.
    """
    if len(data) < _HEADER_SIZE:
        raise InvalidTensorFile('Tensor header is truncated')

    if data[:4] != TENSOR_MAGIC:
        raise InvalidTensorFile(f'Bad magic {data[:4]!r}, expected {TENSOR_MAGIC!r}')

    version = bytes_to_int(data[4:8])
    if version != TENSOR_VERSION:
        raise InvalidTensorFile(f'Unsupported tensor version {version}')

    height, width, channels = (
        bytes_to_int(data[i:i+4]) for i in (8, 12, 16)
    )
    expected = height * width * channels * 4
    payload = data[_HEADER_SIZE:]

    if not height or not width or not channels:
        raise InvalidTensorFile(f'Zero dimension in {height}x{width}x{channels}')

    if len(payload) != expected:
        raise InvalidTensorFile(
            f'Payload is {len(payload)} bytes, header promises {expected}'
        )
    values = np.frombuffer(payload, dtype='<f4').astype(np.float64)
    return FeatureMap(values.reshape(height, width, channels))

def read_tensor(path: Union[PathLike, str]) -> FeatureMap:
    """Reads MSCT file from ``path``."""
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise InvalidTensorFile(f'Can\'t read tensor {path}: {e}') from None
    return unpack_tensor(data)

def write_tensor(path: Union[PathLike, str], fmap: FeatureMap) -> Path:
    """Writes ``fmap`` to ``path`` in MSCT format."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(pack_tensor(fmap))
    except OSError as e:
        raise OutputUnwritable(f'Can\'t write tensor {path}: {e}') from None

    logger.debug('Tensor %s written to %s', fmap.shape, path)
    return path

def list_frames(directory: Union[PathLike, str]) -> List[Path]:
    """
    Returns sorted image files from ``directory``.

    Files are sniffed with ``filetype`` rather than
    trusted by extension, so stray text files or
    thumbnails DB in a frame folder are skipped.
    """
    frames = []
    for file in sorted(Path(directory).iterdir()):
        if file.is_file() and filetype.is_image(str(file)):
            frames.append(file)
        elif file.is_file():
            logger.debug('Skipping non-image file %s', file)
    return frames

def make_rng(seed: Optional[int] = None) -> np.random.Generator:
    """
    Returns ``numpy`` Generator. Every random
    choice in the package goes through it, so a
    fixed ``seed`` makes whole runs reproducible.
    """
    return np.random.default_rng(seed)

def sync(coroutine: Coroutine):
    """
    Will run asynchronous function in a fresh
    asyncio loop and return result.
    """
    loop = new_event_loop()
    try:
        return loop.run_until_complete(coroutine)
    finally:
        loop.close()
