"""This module stores tracker config, state and geometry."""

import json
import logging

from dataclasses import dataclass, field, fields, replace, asdict
from os import PathLike
from pathlib import Path
from typing import Any, List, Optional, Tuple, Union

import numpy as np

from ..defaults import (
    Crm, Grid, Search, LAMBDA, MU_DCF, MU_CCO,
    PADDING_DCF, PADDING_CCO, SCALE_STEP,
    SCALE_PENALTY, ZETA, SIGMA_FACTOR
)
from ..errors import (
    InvalidConfig, DegenerateBox,
    NotInitializedError, LimitExceeded
)
from ..extractors import (
    EXTRACTORS, FeatureExtractor, ChannelTransform,
    TensorLayers, make_extractor
)
from ..features import CompressionHead
from ..tensor import (
    FeatureMap, GaussianLabel, gaussian_label,
    hann_window, apply_window, wrapped_offset
)
from ..crm import TargetRegion

__all__ = [
    'CrmConfig',
    'TrackerConfig',
    'TrackerState',
    'Detection',
    'ScaleSearch',
    'CorrelationTracker',
    'KERNEL_NAMES',
    'load_configs',
    'as_box',
    'refine_peak',
    'label_center',
]
logger = logging.getLogger(__name__)

Box = Tuple[float, float, float, float]
KERNEL_NAMES = ('bspline', 'keys', 'linear')


def _reject_unknown(cls, data: dict, what: str) -> None:
    unknown = set(data) - {f.name for f in fields(cls)}
    if unknown:
        raise InvalidConfig(f'Unknown {what} config keys: {sorted(unknown)}')

@dataclass(frozen=True)
class CrmConfig:
    enabled: bool = True
    k: int = int(Crm.K_DCF)
    eta: float = float(Crm.ETA)
    zeta: float = ZETA

    def __post_init__(self):
        if self.k < 1:
            raise InvalidConfig(f'crm.k must be >= 1, got {self.k}')
        if self.eta <= 0 or self.zeta <= 0:
            raise InvalidConfig('crm.eta and crm.zeta must be positive')

    @classmethod
    def from_dict(cls, data: dict, base: Optional['CrmConfig'] = None) -> 'CrmConfig':
        _reject_unknown(cls, data, 'crm')
        return replace(base or cls(), **data)

@dataclass(frozen=True)
class TrackerConfig:
    """
    Tracker settings. ``dcf()`` and ``cco()`` make
    the MSC-DCF and MSC-CCO presets; JSON configs
    override preset values key by key.
    """
    kind: str = 'dcf'
    name: Optional[str] = None
    features: str = 'msc'
    lambda_d: float = LAMBDA
    mu: float = MU_DCF
    padding: float = PADDING_DCF
    scales: int = int(Search.SCALES)
    scale_step: float = SCALE_STEP
    scale_penalty: float = SCALE_PENALTY
    crm: CrmConfig = CrmConfig()
    # CCO only
    grid_factor: int = int(Search.CCO_GRID_FACTOR)
    bandwidth: Optional[int] = None
    lambda_c: float = LAMBDA
    kernel: str = 'bspline'
    pca_dim: Optional[int] = None
    # Trained head checkpoint prefix and precomputed layer dir
    head: Optional[str] = None
    layers: Optional[str] = None
    # Seeds the MSC head when no checkpoint is given
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ('dcf', 'cco'):
            raise InvalidConfig(f'kind must be "dcf" or "cco", got {self.kind!r}')

        if self.features not in EXTRACTORS:
            raise InvalidConfig(f'Unknown features {self.features!r}')

        if self.kernel not in KERNEL_NAMES:
            raise InvalidConfig(f'Unknown kernel {self.kernel!r}')

        if self.lambda_d <= 0 or self.lambda_c <= 0:
            raise InvalidConfig('lambda_d and lambda_c must be positive')

        if not 0 <= self.mu <= 1:
            raise InvalidConfig(f'mu must be in [0, 1], got {self.mu}')

        if self.padding <= 0 or self.scale_step <= 0 or self.scale_penalty <= 0:
            raise InvalidConfig('padding, scale_step and scale_penalty must be positive')

        if self.scales < 1 or self.grid_factor < 1:
            raise InvalidConfig('scales and grid_factor must be >= 1')

        if self.bandwidth is not None and self.bandwidth < 0:
            raise InvalidConfig(f'bandwidth must be >= 0, got {self.bandwidth}')

        if self.pca_dim is not None and self.pca_dim < 1:
            raise InvalidConfig(f'pca_dim must be >= 1, got {self.pca_dim}')

    @classmethod
    def dcf(cls, **kwargs) -> 'TrackerConfig':
        """MSC-DCF: MSC features, K=50, mu 0.012, padding 1.65"""
        return cls(**{'name': 'MSC-DCF', **kwargs})

    @classmethod
    def cco(cls, **kwargs) -> 'TrackerConfig':
        """MSC-CCO: PCA-38 MSC + HOG, K=58, mu 9.4e-3, padding 3.62"""
        preset = dict(
            kind='cco', name='MSC-CCO', features='msc+hog',
            mu=MU_CCO, padding=PADDING_CCO,
            crm=CrmConfig(k=int(Crm.K_CCO)), pca_dim=int(Grid.PCA_DIM)
        )
        preset.update(kwargs)
        return cls(**preset)

    @property
    def label(self) -> str:
        """Name shown in reports"""
        return self.name or f'{self.features}-{self.kind}'.upper()

    @classmethod
    def from_dict(cls, data: dict) -> 'TrackerConfig':
        if not isinstance(data, dict):
            raise InvalidConfig(f'Tracker config must be an object, got {type(data).__name__}')

        data = dict(data)
        _reject_unknown(cls, data, 'tracker')

        base = cls.cco() if data.get('kind') == 'cco' else cls.dcf()
        if 'crm' in data:
            if not isinstance(data['crm'], dict):
                raise InvalidConfig('crm must be an object')
            data['crm'] = CrmConfig.from_dict(data['crm'], base.crm)

        if 'name' not in data:
            data['name'] = None if data.get('features', base.features) != base.features else base.name
        try:
            return replace(base, **data)
        except TypeError as e:
            raise InvalidConfig(str(e)) from None

    def to_dict(self) -> dict:
        return asdict(self)

    def make_extractor(self) -> FeatureExtractor:
        """Builds the feature extractor, loading head/layers if set."""
        head = CompressionHead.load(self.head) if self.head else None
        layers = TensorLayers(self.layers) if self.layers else None
        return make_extractor(self.features, head, layers, self.seed)

def load_configs(path: Union[PathLike, str]) -> List[TrackerConfig]:
    """
    Reads one tracker object or ``{"trackers": [...]}``.
    """
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, ValueError) as e:
        raise InvalidConfig(f'Can\'t read tracker config {path}: {e}') from None

    if isinstance(data, dict) and set(data) == {'trackers'}:
        if not isinstance(data['trackers'], list) or not data['trackers']:
            raise InvalidConfig('"trackers" must be a nonempty list')
        return [TrackerConfig.from_dict(item) for item in data['trackers']]

    return [TrackerConfig.from_dict(data)]

def as_box(bbox: Any) -> Box:
    """Accepts (x, y, w, h) or anything with x/y/w/h attributes."""
    if all(hasattr(bbox, a) for a in 'xywh'):
        return (float(bbox.x), float(bbox.y), float(bbox.w), float(bbox.h))
    x, y, w, h = (float(i) for i in bbox)
    return (x, y, w, h)

def label_center(height: int, width: int) -> Tuple[int, int]:
    """(row, col) the target sits at in every feature grid"""
    return height // 2, width // 2

def refine_peak(response: np.ndarray) -> Tuple[Tuple[float, float], float]:
    """
    Argmax with 1-D circular quadratic refinement
    per axis. Equal maxima resolve to the smallest
    row, then col. Returns ((row, col), peak value).
    """
    row, col = np.unravel_index(np.argmax(response), response.shape)
    peak = response[row, col]

    def offset(left, right):
        curvature = left - 2 * peak + right
        if curvature >= 0:
            return 0.0
        return float(np.clip(0.5 * (left - right) / curvature, -0.5, 0.5))

    rows, cols = response.shape
    d_row = offset(response[(row - 1) % rows, col], response[(row + 1) % rows, col])
    d_col = offset(response[row, (col - 1) % cols], response[row, (col + 1) % cols])
    return (row + d_row, col + d_col), float(peak)

@dataclass(frozen=True)
class Detection:
    """Response map, peak position in coarse cells and peak value"""
    response: FeatureMap
    peak: Tuple[float, float]
    peak_value: float

@dataclass(frozen=True)
class ScaleSearch:
    """Winning scale: signed index, factor and its detection"""
    index: int
    factor: float
    detection: Detection
    cell_px: float

@dataclass(frozen=True)
class TrackerState:
    """
    Everything a tracker carries between frames.
    States are replaced, never mutated.
    """
    config: TrackerConfig
    extractor: FeatureExtractor = field(repr=False)
    transform: ChannelTransform = field(repr=False)
    model: Any = field(repr=False)
    window: FeatureMap = field(repr=False)
    label: GaussianLabel = field(repr=False)
    center: Tuple[float, float]
    base_size: Tuple[float, float]
    scale: float
    frame_size: Tuple[int, int]
    frame_index: int = 0

    @property
    def size(self) -> Tuple[float, float]:
        return (self.base_size[0] * self.scale, self.base_size[1] * self.scale)

    @property
    def bbox(self) -> Box:
        w, h = self.size
        return (self.center[0] - w / 2, self.center[1] - h / 2, w, h)

class CorrelationTracker:
    """
    Frame loop shared by the DCF and CCO trackers:
    extract, window, locate, update. Subclasses
    supply ``train``, ``locate`` and ``update``.
    """
    kind: str = ''

    def train(self, phi: FeatureMap, label: GaussianLabel, config: TrackerConfig) -> Any:
        raise NotImplementedError

    def locate(self, model: Any, phi: FeatureMap, config: TrackerConfig) -> Detection:
        raise NotImplementedError

    def update(self, model: Any, phi: FeatureMap, label: GaussianLabel, config: TrackerConfig) -> Any:
        raise NotImplementedError

    @staticmethod
    def _features(state, frame, center, size, index) -> Tuple[FeatureMap, float]:
        feats = state.extractor.extract(frame, center, size, state.config.padding, index)
        return apply_window(state.transform.apply(feats.fmap), state.window), feats.cell_px

    def init(self, frame: np.ndarray, bbox: Any, config: TrackerConfig,
             extractor: Optional[FeatureExtractor] = None) -> TrackerState:
        """
        Learns the first model from ``bbox`` (x, y, w, h)
        on ``frame``. CRM selection and PCA are fitted
        here and frozen for the sequence.
        """
        x, y, w, h = as_box(bbox)
        if w < 2 or h < 2:
            raise DegenerateBox(f'Target must be at least 2x2 px, got {w}x{h}')

        frame_h, frame_w = frame.shape[:2]
        center = (x + w / 2, y + h / 2)
        if not (0 <= center[0] <= frame_w and 0 <= center[1] <= frame_h):
            raise DegenerateBox(f'Box {bbox} centre is outside {frame_w}x{frame_h} frame')

        extractor = extractor or config.make_extractor()
        feats = extractor.extract(frame, center, (w, h), config.padding, 0)

        cells_h, cells_w = feats.fmap.shape[:2]
        target_cells = (h / feats.cell_px, w / feats.cell_px)
        sigma = np.sqrt(target_cells[0] * target_cells[1]) / SIGMA_FACTOR
        label = gaussian_label(cells_h, cells_w, label_center(cells_h, cells_w), sigma)

        region = TargetRegion.around(label_center(cells_h, cells_w), target_cells, (cells_h, cells_w))
        transform = ChannelTransform.fit(
            feats.fmap, extractor, region, config.crm.enabled,
            config.crm.k, config.crm.eta, config.crm.zeta, config.pca_dim)

        window = hann_window(cells_h, cells_w)
        phi = apply_window(transform.apply(feats.fmap), window)
        model = self.train(phi, label, config)

        logger.info(
            '%s initialized: box %s, %d feature channels, cell %.3g px',
            config.label, (x, y, w, h), phi.channels, feats.cell_px)

        return TrackerState(
            config, extractor, transform, model, window, label,
            center, (w, h), 1.0, (frame_w, frame_h))

    def estimate_scale(self, state: TrackerState, frame: np.ndarray) -> ScaleSearch:
        """
        Locates the target at ``scales`` search sizes
        ``step**i`` around the current one and keeps the
        best ``peak * penalty**|i|``. Ties keep the
        smaller ``|i|``.
        """
        if state is None or state.model is None:
            raise NotInitializedError('Tracker must be initialized first')

        config = state.config
        half = config.scales // 2
        best, best_score = None, -np.inf

        for i in sorted(range(-half, config.scales - half), key=lambda i: (abs(i), i)):
            factor = config.scale_step ** i
            size = (state.size[0] * factor, state.size[1] * factor)

            phi, cell_px = self._features(
                state, frame, state.center, size, state.frame_index + 1)

            detection = self.locate(state.model, phi, config)
            score = detection.peak_value * config.scale_penalty ** abs(i)

            if score > best_score:
                best, best_score = ScaleSearch(i, factor, detection, cell_px), score

        logger.debug(
            'Frame %d: scale index %+d, peak %.4g',
            state.frame_index + 1, best.index, best.detection.peak_value)
        return best

    def track_frame(self, state: TrackerState, frame: np.ndarray) -> Tuple[TrackerState, Box]:
        """Tracks one frame. Returns the new state and (x, y, w, h) box."""
        search = self.estimate_scale(state, frame)
        config = state.config

        rows, cols = state.window.shape[:2]
        center_row, center_col = label_center(rows, cols)
        d_row = float(wrapped_offset(search.detection.peak[0], center_row, rows))
        d_col = float(wrapped_offset(search.detection.peak[1], center_col, cols))

        frame_w, frame_h = state.frame_size
        center = (
            float(np.clip(state.center[0] + d_col * search.cell_px, 0, frame_w)),
            float(np.clip(state.center[1] + d_row * search.cell_px, 0, frame_h))
        )
        scale = state.scale * search.factor
        if not np.isfinite(scale) or scale <= 0:
            raise LimitExceeded(f'Scale factor left (0, inf): {scale}')

        moved = replace(state, center=center, scale=scale, frame_index=state.frame_index + 1)
        phi, _ = self._features(
            moved, frame, moved.center, moved.size, moved.frame_index)

        moved = replace(moved, model=self.update(moved.model, phi, moved.label, config))
        return moved, moved.bbox
