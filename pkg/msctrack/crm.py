"""
This module stores Channel Reliability Measurement:
per-channel target-vs-background scores and the
top-K channel selection built on them.
"""

import logging

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .defaults import Crm, ZETA, NONZERO_EPS
from .errors import DimensionMismatch, LimitExceeded
from .tensor import FeatureMap

__all__ = [
    'TargetRegion',
    'ChannelScore',
    'channel_ratio',
    'activation_indicator',
    'reliability_scores',
    'select_top_k',
    'refine_channels',
]
logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TargetRegion:
    """Target box in feature cells: top-left (row, col) and size"""
    row: int
    col: int
    height: int
    width: int

    @classmethod
    def around(
            cls, center: Tuple[float, float],
            size: Tuple[float, float],
            map_shape: Tuple[int, int]) -> 'TargetRegion':
        """
        Makes region of ``size`` (h, w) cells centred on
        ``center`` (row, col), shrunk and shifted to fit
        inside a ``map_shape`` map.
        """
        height = int(np.clip(round(size[0]), 1, map_shape[0]))
        width = int(np.clip(round(size[1]), 1, map_shape[1]))

        row = int(np.clip(round(center[0] - height / 2), 0, map_shape[0] - height))
        col = int(np.clip(round(center[1] - width / 2), 0, map_shape[1] - width))
        return cls(row, col, height, width)

    @property
    def area(self) -> int:
        return self.height * self.width

    def check(self, fmap: FeatureMap) -> None:
        """Raises ``DimensionMismatch`` if region leaves ``fmap``."""
        if (self.row < 0 or self.col < 0 or self.height < 1 or self.width < 1
                or self.row + self.height > fmap.height
                or self.col + self.width > fmap.width):
            raise DimensionMismatch(f'{self} is not inside {fmap.shape[:2]} map')

    def crop(self, fmap: FeatureMap) -> np.ndarray:
        self.check(fmap)
        return fmap.values[self.row:self.row + self.height, self.col:self.col + self.width]

@dataclass(frozen=True)
class ChannelScore:
    index: int
    ratio: float
    indicator: int
    score: float

def channel_ratio(fmap: FeatureMap, region: TargetRegion, zeta: float=ZETA) -> np.ndarray:
    """
    Target share of every channel's L1 energy,

        R = |S_t|_1 / (|S_e|_1 + zeta)

    Always in [0, 1) for positive ``zeta``.
    """
    if zeta <= 0:
        raise LimitExceeded(f'zeta must be positive, got {zeta}')

    target = np.abs(region.crop(fmap)).sum(axis=(0, 1))
    total = np.abs(fmap.values).sum(axis=(0, 1))
    return target / (total + zeta)

def activation_indicator(fmap: FeatureMap, region: TargetRegion, eta: float=Crm.ETA) -> np.ndarray:
    """
    1 for channels with more than ``area / eta``
    nonzero cells inside the target region, else 0.
    """
    if eta <= 0:
        raise LimitExceeded(f'eta must be positive, got {eta}')

    nonzero = (np.abs(region.crop(fmap)) > NONZERO_EPS).sum(axis=(0, 1))
    return (nonzero > region.area / eta).astype(int)

def reliability_scores(
        fmap: FeatureMap, region: TargetRegion,
        eta: float=Crm.ETA, zeta: float=ZETA) -> List[ChannelScore]:
    """Returns ``C = R * A`` of every channel, in channel order."""
    ratios = channel_ratio(fmap, region, zeta)
    indicators = activation_indicator(fmap, region, eta)

    return [
        ChannelScore(l, float(r), int(a), float(r * a))
        for l, (r, a) in enumerate(zip(ratios, indicators))
    ]

def select_top_k(scores: Sequence[ChannelScore], k: int) -> List[int]:
    """
    Returns indices of the ``k`` best channels, best
    first. Equal scores rank the lower index first.
    """
    if not 1 <= k <= len(scores):
        raise LimitExceeded(f'K must be in [1, {len(scores)}], got {k}')

    ranked = sorted(scores, key=lambda s: (-s.score, s.index))
    return [s.index for s in ranked[:k]]

def refine_channels(
        fmap: FeatureMap, block: Tuple[int, int],
        region: TargetRegion, k: int,
        eta: float=Crm.ETA, zeta: float=ZETA) -> List[int]:
    """
    Keeps every channel outside ``block`` (start, stop)
    and the top ``k`` of the block. Returns ascending
    indices into ``fmap``.
    """
    start, stop = block
    if not 0 <= start < stop <= fmap.channels:
        raise DimensionMismatch(f'Block {block} is not inside {fmap.channels} channels')

    scores = reliability_scores(fmap.select(range(start, stop)), region, eta, zeta)
    chosen = {start + i for i in select_top_k(scores, k)}

    keep = [c for c in range(fmap.channels) if not start <= c < stop or c in chosen]
    logger.debug('CRM keeps %d of %d block channels: %s', k, stop - start, sorted(chosen))
    return keep
