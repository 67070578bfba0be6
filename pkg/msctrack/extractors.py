"""
This module stores layer sources and the feature
extractors trackers use to build their 52x52 grid.
"""

import json
import logging

from dataclasses import dataclass, field
from os import PathLike
from pathlib import Path
from typing import Optional, Tuple, Union, List

import numpy as np

from .defaults import Grid
from .errors import InvalidConfig, InvalidTensorFile
from .features import (
    CompressionHead, PcaProjector, ImagePatch,
    extract_patch, hog, concat_channels,
    bilinear_resample, msc_features,
    pca_fit, pca_project
)
from .tensor import FeatureMap
from .tools import read_tensor, make_rng
from .crm import TargetRegion, refine_channels

__all__ = [
    'Features',
    'LayerSource',
    'HandcraftedLayers',
    'TensorLayers',
    'FeatureExtractor',
    'RawExtractor',
    'HogExtractor',
    'HogRawExtractor',
    'MscExtractor',
    'MscHogExtractor',
    'ChannelTransform',
    'EXTRACTORS',
    'make_extractor',
]
logger = logging.getLogger(__name__)

Point = Tuple[float, float]


@dataclass(frozen=True)
class Features:
    """Tracker feature grid and its size of one cell in frame pixels"""
    fmap: FeatureMap
    cell_px: float

def _gray_patch(patch: ImagePatch) -> np.ndarray:
    return patch.gray() - 0.5

class LayerSource:
    """
    Produces the shallow (109x109) and deep (13x13)
    layer maps of one search region.
    """
    shallow_channels: int
    deep_channels: int

    def layers(
            self, frame: np.ndarray, center: Point,
            target_size: Point, padding: float,
            index: int=0) -> Tuple[FeatureMap, FeatureMap]:
        raise NotImplementedError

class HandcraftedLayers(LayerSource):
    """
    Layer source that needs no network.

    The shallow layer is the centred intensity of a
    109x109 patch and its two centred-difference
    gradients. The deep layer is HOG with 8px cells on
    a 104x104 patch of the same region, i.e. 13x13x32.
    """
    shallow_channels = 3
    deep_channels = int(Grid.HOG_CHANNELS)

    def layers(self, frame, center, target_size, padding, index=0):
        patch = extract_patch(
            frame, center, target_size, padding,
            output_size=int(Grid.SHALLOW_INPUT))

        gray = _gray_patch(patch)
        padded = np.pad(gray, 1, mode='edge')
        dx = (padded[1:-1, 2:] - padded[1:-1, :-2]) / 2
        dy = (padded[2:, 1:-1] - padded[:-2, 1:-1]) / 2
        shallow = FeatureMap(np.stack((gray, dx, dy), axis=2))

        deep_side = int(Grid.DEEP_INPUT) * int(Grid.DEEP_CELL)
        deep_patch = extract_patch(frame, center, target_size, padding, output_size=deep_side)
        deep = hog(deep_patch, int(Grid.DEEP_CELL))

        return shallow, deep

class TensorLayers(LayerSource):
    """
    Layer source backed by precomputed full-frame maps.

    ``directory`` holds a ``layers.json`` sidecar and one
    MSCT file per frame and layer::

        {
          "shallow_stride": 2, "deep_stride": 16,
          "shallow": "shallow_{:05d}.msct",
          "deep": "deep_{:05d}.msct"
        }

    File names are formatted with the 1-based frame
    number. Stride is frame pixels per map cell.
    """
    def __init__(self, directory: Union[PathLike, str]):
        self._directory = Path(directory)
        try:
            meta = json.loads((self._directory / 'layers.json').read_text())
            self._shallow_stride = float(meta['shallow_stride'])
            self._deep_stride = float(meta['deep_stride'])
            self._shallow_name = meta.get('shallow', 'shallow_{:05d}.msct')
            self._deep_name = meta.get('deep', 'deep_{:05d}.msct')
        except (OSError, ValueError, KeyError, TypeError) as e:
            raise InvalidConfig(f'Bad layers.json in {directory}: {e}') from None

        if self._shallow_stride <= 0 or self._deep_stride <= 0:
            raise InvalidConfig('Layer strides must be positive')

        first_shallow, first_deep = self._read(0)
        self.shallow_channels = first_shallow.channels
        self.deep_channels = first_deep.channels

    def __repr__(self) -> str:
        return f'{self.__class__.__name__}({str(self._directory)!r})'

    def _read(self, index: int) -> Tuple[FeatureMap, FeatureMap]:
        shallow = read_tensor(self._directory / self._shallow_name.format(index + 1))
        deep = read_tensor(self._directory / self._deep_name.format(index + 1))
        return shallow, deep

    @staticmethod
    def _crop(fmap, stride, center, side, size) -> FeatureMap:
        # Pixel centres of the sampled grid, then to map cells
        step = side / size
        cols = center[0] - side / 2 + (np.arange(size) + 0.5) * step
        rows = center[1] - side / 2 + (np.arange(size) + 0.5) * step
        return FeatureMap(bilinear_resample(
            fmap.values, (rows + 0.5) / stride - 0.5, (cols + 0.5) / stride - 0.5))

    def layers(self, frame, center, target_size, padding, index=0):
        try:
            shallow, deep = self._read(index)
        except InvalidTensorFile:
            logger.error('No precomputed layers for frame %d in %s', index + 1, self._directory)
            raise

        w, h = target_size
        side = np.sqrt(w * h) * (1 + padding)
        return (
            self._crop(shallow, self._shallow_stride, center, side, int(Grid.SHALLOW_INPUT)),
            self._crop(deep, self._deep_stride, center, side, int(Grid.DEEP_INPUT))
        )

class FeatureExtractor:
    """
    Base feature extractor.

    ``crm_block`` is the (start, stop) channel range
    CRM may refine, ``compress_block`` the range
    projected by PCA. ``None`` disables the stage.
    """
    name: str = ''
    crm_block: Optional[Tuple[int, int]] = None
    compress_block: Optional[Tuple[int, int]] = None

    def __repr__(self) -> str:
        return f'{self.__class__.__name__}()'

    def extract(
            self, frame: np.ndarray, center: Point,
            target_size: Point, padding: float,
            index: int=0) -> Features:
        raise NotImplementedError

def _cell_px(target_size: Point, padding: float, cells: float) -> float:
    w, h = target_size
    return float(np.sqrt(w * h) * (1 + padding) / cells)

class RawExtractor(FeatureExtractor):
    """Centred grayscale intensity, one channel"""
    name = 'raw'

    def extract(self, frame, center, target_size, padding, index=0):
        patch = extract_patch(frame, center, target_size, padding, output_size=int(Grid.CELLS))
        return Features(FeatureMap(_gray_patch(patch)), _cell_px(target_size, padding, Grid.CELLS))

class HogExtractor(FeatureExtractor):
    """32-channel HOG with 4px cells on a 208x208 patch"""
    name = 'hog'

    def extract(self, frame, center, target_size, padding, index=0):
        side = int(Grid.CELLS) * int(Grid.HOG_CELL)
        patch = extract_patch(frame, center, target_size, padding, output_size=side)
        return Features(hog(patch, int(Grid.HOG_CELL)), _cell_px(target_size, padding, Grid.CELLS))

class HogRawExtractor(FeatureExtractor):
    name = 'hog+raw'

    def __init__(self):
        self._hog, self._raw = HogExtractor(), RawExtractor()

    def extract(self, frame, center, target_size, padding, index=0):
        hog_ = self._hog.extract(frame, center, target_size, padding, index)
        raw = self._raw.extract(frame, center, target_size, padding, index)
        return Features(concat_channels(hog_.fmap, raw.fmap), hog_.cell_px)

class MscExtractor(FeatureExtractor):
    """
    Multi-level same-resolution compressed features:
    32 shallow channels then 64 deep ones.

    Arguments:
        head (``CompressionHead``, optional):
            Trained head. A random head seeded
            with ``seed`` is made if not specified.

        layers (``LayerSource``, optional):
            Where shallow/deep maps come from,
            ``HandcraftedLayers`` by default.

        seed (``int``, optional):
            Seed of the random head, 0 by default.
    """
    name = 'msc'
    crm_block = (int(Grid.SHALLOW_CHANNELS), int(Grid.SHALLOW_CHANNELS + Grid.DEEP_CHANNELS))

    def __init__(
            self, head: Optional[CompressionHead] = None,
            layers: Optional[LayerSource] = None, seed: int = 0):
        self.layers = layers or HandcraftedLayers()
        self.head = head or CompressionHead.initialize(
            self.layers.shallow_channels, self.layers.deep_channels,
            make_rng(seed))

        if (self.head.shallow_in, self.head.deep_in) != (
                self.layers.shallow_channels, self.layers.deep_channels):
            raise InvalidConfig(
                f'Head expects {self.head.shallow_in}+{self.head.deep_in} input '
                f'channels, layers give {self.layers.shallow_channels}'
                f'+{self.layers.deep_channels}')

    def __repr__(self) -> str:
        return f'{self.__class__.__name__}({self.layers!r})'

    def extract(self, frame, center, target_size, padding, index=0):
        shallow, deep = self.layers.layers(frame, center, target_size, padding, index)
        fmap = msc_features(shallow, deep, self.head)
        # A pooled cell spans two shallow pixels
        cell_px = _cell_px(target_size, padding, Grid.SHALLOW_INPUT) * int(Grid.POOL_STRIDE)
        return Features(fmap, cell_px)

class MscHogExtractor(MscExtractor):
    """MSC channels (PCA-compressed by the tracker) followed by HOG"""
    name = 'msc+hog'
    compress_block = (0, int(Grid.SHALLOW_CHANNELS + Grid.DEEP_CHANNELS))

    def __init__(self, head=None, layers=None, seed=0):
        super().__init__(head, layers, seed)
        self._hog = HogExtractor()

    def extract(self, frame, center, target_size, padding, index=0):
        msc = super().extract(frame, center, target_size, padding, index)
        hog_ = self._hog.extract(frame, center, target_size, padding, index)
        return Features(concat_channels(msc.fmap, hog_.fmap), msc.cell_px)

EXTRACTORS = {
    cls.name: cls for cls in (
        RawExtractor, HogExtractor, HogRawExtractor,
        MscExtractor, MscHogExtractor
    )
}
def make_extractor(
        name: str, head: Optional[CompressionHead] = None,
        layers: Optional[LayerSource] = None, seed: int = 0) -> FeatureExtractor:
    """Returns extractor by its config name. ``seed`` only seeds an untrained MSC head."""
    if name not in EXTRACTORS:
        raise InvalidConfig(f'Unknown features {name!r}, expected one of {sorted(EXTRACTORS)}')

    if issubclass(EXTRACTORS[name], MscExtractor):
        return EXTRACTORS[name](head, layers, seed)
    return EXTRACTORS[name]()

@dataclass(frozen=True)
class ChannelTransform:
    """
    First-frame channel refinement frozen for a sequence:
    channels ``keep`` are selected, then the kept part of
    the compress block is PCA-projected (if ``projector``).
    """
    keep: Tuple[int, ...]
    compress: Tuple[int, ...] = ()
    projector: Optional[PcaProjector] = field(default=None, repr=False)

    @classmethod
    def fit(
            cls, fmap: FeatureMap, extractor: FeatureExtractor,
            region: TargetRegion, crm_enabled: bool, k: int,
            eta: float, zeta: float, pca_dim: Optional[int] = None) -> 'ChannelTransform':
        """
        Runs CRM on the extractor's deep block and fits
        PCA on the kept compress-block channels.
        """
        if crm_enabled and extractor.crm_block is not None:
            keep = refine_channels(fmap, extractor.crm_block, region, k, eta, zeta)
        else:
            keep = list(range(fmap.channels))

        if pca_dim is None or extractor.compress_block is None:
            return cls(tuple(keep))

        start, stop = extractor.compress_block
        compress = [i for i, c in enumerate(keep) if start <= c < stop]
        projector = pca_fit(fmap.select(keep).select(compress), pca_dim, strict=False)
        return cls(tuple(keep), tuple(compress), projector)

    def apply(self, fmap: FeatureMap) -> FeatureMap:
        kept = fmap.select(self.keep)
        if self.projector is None:
            return kept

        rest: List[int] = [i for i in range(kept.channels) if i not in set(self.compress)]
        projected = pca_project(self.projector, kept.select(self.compress))
        if not rest:
            return projected
        return concat_channels(projected, kept.select(rest))
