"""
This module stores the feature pipeline: image patches,
HOG, and the DSNet compression head that turns a
shallow and a deep layer into one same-resolution map.
"""

import json
import logging

from dataclasses import dataclass, field, replace
from os import PathLike
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple, Union

import cv2
import numpy as np

from numpy.lib.stride_tricks import sliding_window_view
from sklearn.decomposition import PCA

from .defaults import (
    Grid, LRN_KAPPA,
    LRN_ALPHA, LRN_BETA
)
from .errors import (
    DimensionMismatch, PatchImpossible,
    LimitExceeded, RankDeficient,
    InvalidTensorFile, OutputUnwritable
)
from .tensor import FeatureMap

__all__ = [
    'ImagePatch',
    'LrnParams',
    'HeadTape',
    'CompressionHead',
    'PcaProjector',
    'to_float_image',
    'extract_patch',
    'orientation_histograms',
    'hog',
    'max_pool',
    'upsample',
    'bilinear_resample',
    'conv1x1',
    'lrn',
    'lrn_backward',
    'concat_channels',
    'resample_layers',
    'msc_features',
    'pca_fit',
    'pca_project',
    'pca_reconstruct',
]
logger = logging.getLogger(__name__)

# Felzenszwalb HOG constants
_HOG_EPS = 1e-4
_HOG_CLIP = 0.2
_HOG_TEXTURE = 0.2357

_GRAY_WEIGHTS = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class ImagePatch:
    """
    Square image patch with values in [0, 1].

    ``region`` is the (x0, y0, side) crop in frame
    pixels before resizing, ``replicated`` tells if
    any pixel came from edge replication.
    """
    values: np.ndarray = field(repr=False)
    region: Tuple[int, int, int]
    replicated: bool

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def channels(self) -> int:
        return self.values.shape[2]

    @property
    def scale(self) -> float:
        """Frame pixels per patch pixel"""
        return self.region[2] / self.height

    def gray(self) -> np.ndarray:
        """Returns ``HxW`` luminance"""
        if self.channels == 1:
            return self.values[:, :, 0]
        return self.values @ _GRAY_WEIGHTS

def to_float_image(image: np.ndarray) -> np.ndarray:
    """
    Converts 8-bit (or already float) gray/RGB
    frame to ``HxWxC`` float64 in [0, 1].
    """
    image = np.asarray(image)
    if image.size == 0:
        raise PatchImpossible('Image is empty')

    if image.ndim == 2:
        image = image[:, :, np.newaxis]

    if image.ndim != 3 or image.shape[2] not in (1, 3):
        raise PatchImpossible(f'Only gray or RGB images supported, got {image.shape}')

    if image.dtype == np.uint8:
        return image.astype(np.float64) / 255.0
    return np.clip(image.astype(np.float64), 0.0, 1.0)

def _region_side(target_size: Union[float, Tuple[float, float]], padding_factor: float) -> int:
    if np.isscalar(target_size):
        target_size = (target_size, target_size)

    w, h = (float(i) for i in target_size)
    if w <= 0 or h <= 0:
        raise PatchImpossible(f'Target size must be positive, got {target_size}')

    if padding_factor <= 0:
        raise PatchImpossible(f'Padding factor must be positive, got {padding_factor}')

    return max(1, int(round(np.sqrt(w * h) * (1 + padding_factor))))

def extract_patch(
        image: np.ndarray,
        center: Tuple[float, float],
        target_size: Union[float, Tuple[float, float]],
        padding_factor: float,
        output_size: Optional[int] = None) -> ImagePatch:
    """
    Crops a square of side ``sqrt(w*h) * (1 + padding_factor)``
    around ``center`` and bilinearly resizes it.

    Arguments:
        image (``np.ndarray``):
            Gray ``HxW`` / ``HxWx1`` or RGB ``HxWx3`` frame,
            ``uint8`` or float in [0, 1].

        center (``tuple``):
            (x, y) crop centre in frame pixels.

        target_size (``float``, ``tuple``):
            (w, h) of the target in frame pixels.

        padding_factor (``float``):
            Context around the target, 1.65 for MSC-DCF.

        output_size (``int``, optional):
            Side of the returned patch. By default
            the crop is returned unresized.

    Pixels outside the frame replicate the nearest edge.
    """
    image = to_float_image(image)
    side = _region_side(target_size, padding_factor)

    x0 = int(np.floor(center[0] - side / 2))
    y0 = int(np.floor(center[1] - side / 2))
    x1, y1 = x0 + side, y0 + side
    height, width = image.shape[:2]

    top, bottom = max(0, -y0), max(0, y1 - height)
    left, right = max(0, -x0), max(0, x1 - width)
    replicated = bool(top or bottom or left or right)

    crop = image[max(y0, 0):min(y1, height), max(x0, 0):min(x1, width)]
    if crop.size:
        patch = cv2.copyMakeBorder(
            crop, top, bottom, left, right,
            borderType=cv2.BORDER_REPLICATE)
    else:
        # Region is fully outside, every pixel is an edge copy
        rows = np.clip(np.arange(y0, y1), 0, height - 1)
        cols = np.clip(np.arange(x0, x1), 0, width - 1)
        patch = image[rows][:, cols]

    if output_size is not None and output_size != side:
        if output_size <= 0:
            raise PatchImpossible(f'Output size must be positive, got {output_size}')
        patch = cv2.resize(
            patch, (output_size, output_size),
            interpolation=cv2.INTER_LINEAR)

    patch = np.clip(patch.reshape(patch.shape[0], patch.shape[1], -1), 0.0, 1.0)
    return ImagePatch(patch, (x0, y0, side), replicated)

def _patch_values(patch: Union[ImagePatch, np.ndarray]) -> np.ndarray:
    if isinstance(patch, ImagePatch):
        return patch.values
    values = np.asarray(patch, dtype=np.float64)
    return values[:, :, np.newaxis] if values.ndim == 2 else values

def orientation_histograms(
        patch: Union[ImagePatch, np.ndarray],
        cell_size: int=Grid.HOG_CELL) -> np.ndarray:
    """
    Returns ``(H//cell) x (W//cell) x 18`` contrast-sensitive
    gradient histograms.

    Gradients are centred differences with replicated
    borders, taken from the colour channel of largest
    magnitude. Each pixel votes its magnitude into the
    one of 18 directions (20 degrees apart) closest to
    its gradient, in the cell that contains it.
    """
    values = _patch_values(patch)
    rows, cols = values.shape[0] // cell_size, values.shape[1] // cell_size
    if rows == 0 or cols == 0:
        raise PatchImpossible(
            f'Patch {values.shape[:2]} is smaller than one {cell_size}px cell')

    padded = np.pad(values, ((1, 1), (1, 1), (0, 0)), mode='edge')
    dx = padded[1:-1, 2:] - padded[1:-1, :-2]
    dy = padded[2:, 1:-1] - padded[:-2, 1:-1]

    magnitude2 = dx ** 2 + dy ** 2
    best = np.argmax(magnitude2, axis=2)[:, :, np.newaxis]
    dx = np.take_along_axis(dx, best, axis=2)[:, :, 0]
    dy = np.take_along_axis(dy, best, axis=2)[:, :, 0]
    magnitude = np.sqrt(np.take_along_axis(magnitude2, best, axis=2)[:, :, 0])

    angles = np.pi * np.arange(Grid.HOG_BINS // 2) / (Grid.HOG_BINS // 2)
    dots = dx[:, :, np.newaxis] * np.cos(angles) + dy[:, :, np.newaxis] * np.sin(angles)
    orientation = np.argmax(np.abs(dots), axis=2)
    negative = np.take_along_axis(dots, orientation[:, :, np.newaxis], axis=2)[:, :, 0] < 0
    orientation = orientation + negative * (Grid.HOG_BINS // 2)

    height, width = rows * cell_size, cols * cell_size
    cell_r = (np.arange(height) // cell_size)[:, np.newaxis]
    cell_c = (np.arange(width) // cell_size)[np.newaxis, :]

    hist = np.zeros((rows, cols, Grid.HOG_BINS))
    np.add.at(
        hist,
        (np.broadcast_to(cell_r, (height, width)),
         np.broadcast_to(cell_c, (height, width)),
         orientation[:height, :width]),
        magnitude[:height, :width]
    )
    return hist

def hog(patch: Union[ImagePatch, np.ndarray], cell_size: int=Grid.HOG_CELL) -> FeatureMap:
    """
    Felzenszwalb-style HOG: 18 contrast-sensitive, 9
    contrast-insensitive and 4 texture channels, plus
    one all-zero channel (32 in total).

    Output is ``floor(H/cell) x floor(W/cell) x 32``;
    border cells reuse the nearest block energy.
    """
    hist = orientation_histograms(patch, cell_size)
    half = Grid.HOG_BINS // 2

    energy = np.sum((hist[:, :, :half] + hist[:, :, half:]) ** 2, axis=2)
    energy = np.pad(energy, 1, mode='edge')
    blocks = energy[:-1, :-1] + energy[1:, :-1] + energy[:-1, 1:] + energy[1:, 1:]

    # Four 2x2 blocks touching every cell
    rows, cols = hist.shape[:2]
    norms = [
        1.0 / np.sqrt(blocks[r:r + rows, c:c + cols] + _HOG_EPS)
        for r, c in ((1, 1), (0, 1), (1, 0), (0, 0))
    ]
    contrast = hist[:, :, :half] + hist[:, :, half:]

    sensitive = np.zeros_like(hist)
    insensitive = np.zeros((rows, cols, half))
    texture = np.zeros((rows, cols, 4))

    for i, norm in enumerate(norms):
        clipped = np.minimum(hist * norm[:, :, np.newaxis], _HOG_CLIP)
        sensitive += 0.5 * clipped
        texture[:, :, i] = _HOG_TEXTURE * clipped.sum(axis=2)
        insensitive += 0.5 * np.minimum(contrast * norm[:, :, np.newaxis], _HOG_CLIP)

    occupancy = np.zeros((rows, cols, 1))
    return FeatureMap(np.concatenate((sensitive, insensitive, texture, occupancy), axis=2))

def max_pool(
        fmap: FeatureMap,
        kernel: int=Grid.POOL_KERNEL,
        stride: int=Grid.POOL_STRIDE) -> FeatureMap:
    """
    Channelwise max over ``kernel x kernel`` windows,
    output ``floor((H - kernel) / stride) + 1`` per axis.
    """
    if fmap.height < kernel or fmap.width < kernel:
        raise DimensionMismatch(
            f'Map {fmap.shape[:2]} is smaller than {kernel}x{kernel} kernel')

    windows = sliding_window_view(fmap.values, (kernel, kernel), axis=(0, 1))
    return FeatureMap(windows[::stride, ::stride].max(axis=(3, 4)))

def _bilinear_taps(n_in: int, coords: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    coords = np.clip(coords, 0, n_in - 1)
    i0 = np.floor(coords).astype(int)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, coords - i0

def bilinear_resample(
        values: np.ndarray,
        row_coords: np.ndarray,
        col_coords: np.ndarray) -> np.ndarray:
    """
    Separable bilinear sampling of ``HxWxD`` ``values`` at
    ``row_coords x col_coords`` (source pixel units).
    Coordinates outside the map clamp to the edge.
    """
    r0, r1, wr = _bilinear_taps(values.shape[0], np.asarray(row_coords, dtype=np.float64))
    c0, c1, wc = _bilinear_taps(values.shape[1], np.asarray(col_coords, dtype=np.float64))

    wr = wr[:, np.newaxis, np.newaxis]
    rows = (1 - wr) * values[r0] + wr * values[r1]

    wc = wc[np.newaxis, :, np.newaxis]
    return (1 - wc) * rows[:, c0] + wc * rows[:, c1]

def upsample(fmap: FeatureMap, factor: int=Grid.UPSAMPLE) -> FeatureMap:
    """
    Frozen bilinear deconvolution: spatial dims are
    multiplied by ``factor``. Output pixel ``i`` samples
    the input at ``(i + 0.5) / factor - 0.5``.
    """
    if factor < 1:
        raise LimitExceeded(f'Upsample factor must be >= 1, got {factor}')

    rows = (np.arange(fmap.height * factor) + 0.5) / factor - 0.5
    cols = (np.arange(fmap.width * factor) + 0.5) / factor - 0.5
    return FeatureMap(bilinear_resample(fmap.values, rows, cols))

def conv1x1(fmap: FeatureMap, weights: np.ndarray, biases: np.ndarray) -> FeatureMap:
    """Per-pixel ``values @ weights + biases``; weights are ``C_in x C_out``."""
    weights, biases = np.asarray(weights), np.asarray(biases)
    if weights.ndim != 2 or weights.shape[0] != fmap.channels:
        raise DimensionMismatch(
            f'Weights {weights.shape} don\'t fit {fmap.channels} input channels')

    if biases.shape != (weights.shape[1],):
        raise DimensionMismatch(
            f'Biases {biases.shape} don\'t fit {weights.shape[1]} output channels')

    return FeatureMap(np.einsum('hwc,co->hwo', fmap.values, weights) + biases)

@dataclass(frozen=True)
class LrnParams:
    """Cross-channel local response normalization"""
    n: int = Grid.LRN_SIZE
    kappa: float = LRN_KAPPA
    alpha: float = LRN_ALPHA
    beta: float = LRN_BETA

    @property
    def window(self) -> Tuple[int, int]:
        """(lo, hi) channel offsets of the neighbourhood"""
        lo = -((self.n - 1) // 2)
        return lo, lo + self.n - 1

def _window_sum(values: np.ndarray, lo: int, hi: int) -> np.ndarray:
    """sum_{k=c+lo}^{c+hi} values[..., k], clipped to the channel range."""
    channels = values.shape[-1]
    csum = np.concatenate(
        (np.zeros(values.shape[:-1] + (1,)), np.cumsum(values, axis=-1)), axis=-1)

    idx = np.arange(channels)
    start = np.clip(idx + lo, 0, channels)
    stop = np.clip(idx + hi + 1, 0, channels)
    return csum[..., stop] - csum[..., start]

def _lrn_denominator(values: np.ndarray, params: LrnParams) -> np.ndarray:
    lo, hi = params.window
    return params.kappa + (params.alpha / params.n) * _window_sum(values ** 2, lo, hi)

def lrn(
        fmap: FeatureMap, n: int=Grid.LRN_SIZE,
        kappa: float=LRN_KAPPA, alpha: float=LRN_ALPHA,
        beta: float=LRN_BETA) -> FeatureMap:
    """
    ``v / (kappa + alpha/n * sum(v^2 over n neighbouring channels))^beta``
    """
    params = LrnParams(n, kappa, alpha, beta)
    return FeatureMap(fmap.values / _lrn_denominator(fmap.values, params) ** params.beta)

def lrn_backward(values: np.ndarray, grad: np.ndarray, params: LrnParams) -> np.ndarray:
    """Gradient of ``lrn`` wrt its input ``values`` given output gradient ``grad``."""
    lo, hi = params.window
    denom = _lrn_denominator(values, params)

    direct = grad * denom ** -params.beta
    coupled = grad * values * denom ** (-params.beta - 1)
    # Transposed neighbourhood: j is in N(c) iff c is in [j-hi, j-lo]
    spread = _window_sum(coupled, -hi, -lo)

    return direct - (2 * params.alpha * params.beta / params.n) * values * spread

def concat_channels(a: FeatureMap, b: FeatureMap) -> FeatureMap:
    """Stacks ``b`` channels after ``a`` channels."""
    if a.shape[:2] != b.shape[:2]:
        raise DimensionMismatch(f'Can\'t concat {a.shape} and {b.shape}')
    return FeatureMap(np.concatenate((a.values, b.values), axis=2))

def resample_layers(shallow: FeatureMap, deep: FeatureMap) -> Tuple[FeatureMap, FeatureMap]:
    """
    Brings both layers to one resolution: max-pools
    the shallow one and upsamples the deep one.
    """
    pooled, upsampled = max_pool(shallow), upsample(deep)
    if pooled.shape[:2] != upsampled.shape[:2]:
        raise DimensionMismatch(
            f'Resampled layers disagree: {pooled.shape[:2]} vs {upsampled.shape[:2]}')
    return pooled, upsampled

@dataclass(frozen=True)
class HeadTape:
    """Forward cache of ``CompressionHead.compress``"""
    shallow: np.ndarray
    deep: np.ndarray
    shallow_act: np.ndarray
    deep_act: np.ndarray

@dataclass(frozen=True)
class CompressionHead:
    """
    Trainable 1x1 compression of the resampled shallow
    (to 32 channels) and deep (to 64 channels) layers,
    each followed by LRN; shallow block comes first.

    The head is immutable, the trainer makes a new
    one with ``with_params`` after every step.
    """
    shallow_weights: np.ndarray = field(repr=False)
    shallow_bias: np.ndarray = field(repr=False)
    deep_weights: np.ndarray = field(repr=False)
    deep_bias: np.ndarray = field(repr=False)
    lrn: LrnParams = LrnParams()

    def __post_init__(self):
        if self.shallow_weights.shape[1] != Grid.SHALLOW_CHANNELS:
            raise DimensionMismatch(
                f'Shallow block must output {int(Grid.SHALLOW_CHANNELS)} channels')

        if self.deep_weights.shape[1] != Grid.DEEP_CHANNELS:
            raise DimensionMismatch(
                f'Deep block must output {int(Grid.DEEP_CHANNELS)} channels')

        for name, value in self.params().items():
            if not np.isfinite(value).all():
                raise LimitExceeded(f'{name} holds non-finite values')

    @classmethod
    def initialize(
            cls, shallow_in: int, deep_in: int,
            rng: Optional[np.random.Generator] = None,
            lrn: Optional[LrnParams] = None) -> 'CompressionHead':
        """
        Makes head with ``N(0, 1/C_in)`` weights and zero biases.

        Arguments:
            shallow_in (``int``), deep_in (``int``):
                Channel counts of the shallow and deep layers.

            rng (``np.random.Generator``, optional):
                Source of the initial weights.
        """
        rng = rng if rng is not None else np.random.default_rng(0)
        return cls(
            shallow_weights = rng.normal(
                0, 1 / np.sqrt(shallow_in), (shallow_in, int(Grid.SHALLOW_CHANNELS))),
            shallow_bias = np.zeros(int(Grid.SHALLOW_CHANNELS)),
            deep_weights = rng.normal(
                0, 1 / np.sqrt(deep_in), (deep_in, int(Grid.DEEP_CHANNELS))),
            deep_bias = np.zeros(int(Grid.DEEP_CHANNELS)),
            lrn = lrn or LrnParams()
        )

    @property
    def shallow_in(self) -> int:
        return self.shallow_weights.shape[0]

    @property
    def deep_in(self) -> int:
        return self.deep_weights.shape[0]

    @property
    def channels(self) -> int:
        return self.shallow_weights.shape[1] + self.deep_weights.shape[1]

    def params(self) -> Dict[str, np.ndarray]:
        """Returns trainable parameters by name"""
        return {
            'shallow_weights': self.shallow_weights,
            'shallow_bias': self.shallow_bias,
            'deep_weights': self.deep_weights,
            'deep_bias': self.deep_bias,
        }

    def with_params(self, params: Dict[str, np.ndarray]) -> 'CompressionHead':
        """Returns copy of this head with ``params`` replaced"""
        return replace(self, **{k: np.asarray(v, dtype=np.float64) for k, v in params.items()})

    def compress(self, shallow: FeatureMap, deep: FeatureMap) -> Tuple[FeatureMap, HeadTape]:
        """
        Compresses already resampled layers. Returns the
        96-channel map and the tape ``backward`` needs.
        """
        if shallow.shape[:2] != deep.shape[:2]:
            raise DimensionMismatch(f'Layers disagree: {shallow.shape} vs {deep.shape}')

        shallow_act = conv1x1(shallow, self.shallow_weights, self.shallow_bias)
        deep_act = conv1x1(deep, self.deep_weights, self.deep_bias)

        lrn_args = (self.lrn.n, self.lrn.kappa, self.lrn.alpha, self.lrn.beta)
        out = concat_channels(lrn(shallow_act, *lrn_args), lrn(deep_act, *lrn_args))

        tape = HeadTape(shallow.values, deep.values, shallow_act.values, deep_act.values)
        return out, tape

    def backward(self, tape: HeadTape, grad: np.ndarray) -> Dict[str, np.ndarray]:
        """Parameter gradients given ``dL/d(output)`` of shape ``HxWx96``."""
        grad = np.asarray(grad)
        split = self.shallow_weights.shape[1]

        if grad.shape != tape.shallow_act.shape[:2] + (self.channels,):
            raise DimensionMismatch(f'Gradient {grad.shape} doesn\'t fit head output')

        d_shallow = lrn_backward(tape.shallow_act, grad[:, :, :split], self.lrn)
        d_deep = lrn_backward(tape.deep_act, grad[:, :, split:], self.lrn)

        return {
            'shallow_weights': np.einsum('hwc,hwo->co', tape.shallow, d_shallow),
            'shallow_bias': d_shallow.sum(axis=(0, 1)),
            'deep_weights': np.einsum('hwc,hwo->co', tape.deep, d_deep),
            'deep_bias': d_deep.sum(axis=(0, 1)),
        }

    def save(self, prefix: Union[PathLike, str]) -> Tuple[Path, Path, Path]:
        """
        Writes checkpoint as ``<prefix>.weights.msct``
        (block-diagonal ``(C_s+C_d) x 96``), ``<prefix>.biases.msct``
        (``1 x 96``) and a ``<prefix>.json`` sidecar.
        """
        from .tools import write_tensor

        prefix = Path(prefix)
        split = self.shallow_weights.shape[1]

        weights = np.zeros((self.shallow_in + self.deep_in, self.channels))
        weights[:self.shallow_in, :split] = self.shallow_weights
        weights[self.shallow_in:, split:] = self.deep_weights
        biases = np.concatenate((self.shallow_bias, self.deep_bias))[np.newaxis, :]

        weights_path = write_tensor(prefix.with_name(prefix.name + '.weights.msct'), FeatureMap(weights))
        biases_path = write_tensor(prefix.with_name(prefix.name + '.biases.msct'), FeatureMap(biases))

        sidecar = prefix.with_name(prefix.name + '.json')
        meta = {
            'shallow_in': self.shallow_in,
            'deep_in': self.deep_in,
            'shallow_out': split,
            'deep_out': self.channels - split,
            'lrn': {
                'n': self.lrn.n, 'kappa': self.lrn.kappa,
                'alpha': self.lrn.alpha, 'beta': self.lrn.beta
            },
        }
        try:
            sidecar.write_text(json.dumps(meta, indent=2, sort_keys=True))
        except OSError as e:
            raise OutputUnwritable(f'Can\'t write {sidecar}: {e}') from None

        logger.info('Compression head saved to %s.*', prefix)
        return weights_path, biases_path, sidecar

    @classmethod
    def load(cls, prefix: Union[PathLike, str]) -> 'CompressionHead':
        """Reads checkpoint written by ``save``."""
        from .tools import read_tensor

        prefix = Path(prefix)
        try:
            meta = json.loads(prefix.with_name(prefix.name + '.json').read_text())
            s_in, d_in, split = meta['shallow_in'], meta['deep_in'], meta['shallow_out']
            params = LrnParams(**meta['lrn'])
        except (OSError, ValueError, KeyError, TypeError) as e:
            raise InvalidTensorFile(f'Bad head sidecar for {prefix}: {e}') from None

        weights = read_tensor(prefix.with_name(prefix.name + '.weights.msct')).values[:, :, 0]
        biases = read_tensor(prefix.with_name(prefix.name + '.biases.msct')).values[0, :, 0]

        if weights.shape != (s_in + d_in, biases.shape[0]):
            raise InvalidTensorFile(f'Head weights {weights.shape} disagree with sidecar')

        return cls(
            shallow_weights = weights[:s_in, :split].copy(),
            shallow_bias = biases[:split].copy(),
            deep_weights = weights[s_in:, split:].copy(),
            deep_bias = biases[split:].copy(),
            lrn = params
        )

def msc_features(shallow: FeatureMap, deep: FeatureMap, head: CompressionHead) -> FeatureMap:
    """
    Multi-level same-resolution compressed features,

        concat(lrn(conv1x1(max_pool(shallow))), lrn(conv1x1(upsample(deep))))

    e.g. 109x109 shallow and 13x13 deep layers give 52x52x96.
    """
    return head.compress(*resample_layers(shallow, deep))[0]

@dataclass(frozen=True)
class PcaProjector:
    """Mean vector and ``D x k`` orthonormal basis"""
    mean: np.ndarray = field(repr=False)
    basis: np.ndarray = field(repr=False)

    @property
    def input_dim(self) -> int:
        return self.basis.shape[0]

    @property
    def output_dim(self) -> int:
        return self.basis.shape[1]

def _sample_matrix(samples) -> np.ndarray:
    if isinstance(samples, FeatureMap):
        return samples.values.reshape(-1, samples.channels)

    if isinstance(samples, np.ndarray) and samples.ndim == 2:
        return samples.astype(np.float64)

    maps = list(samples)
    if not maps or not all(isinstance(m, FeatureMap) for m in maps):
        raise DimensionMismatch('Samples must be a FeatureMap, maps or an NxD array')

    return np.concatenate([m.values.reshape(-1, m.channels) for m in maps], axis=0)

def pca_fit(
        samples: Union[FeatureMap, Sequence[FeatureMap], np.ndarray],
        n_components: int=Grid.PCA_DIM,
        strict: bool=True) -> PcaProjector:
    """
    Fits top ``n_components`` principal directions of
    the channel vectors in ``samples``.

    Arguments:
        samples (``FeatureMap``, ``list``, ``np.ndarray``):
            Every pixel of every map (or every row of an
            ``N x D`` array) is one sample.

        n_components (``int``, optional):
            Output dimension, 38 by default.

        strict (``bool``, optional):
            If ``True`` (default), fewer than ``n_components``
            directions carrying variance raise ``RankDeficient``.
            Otherwise the available directions are kept.
    """
    matrix = _sample_matrix(samples)
    n_samples, dim = matrix.shape

    if n_samples < n_components or dim < n_components:
        raise LimitExceeded(
            f'Need >= {n_components} samples and channels, got {n_samples}x{dim}')

    pca = PCA(n_components=int(n_components), svd_solver='full').fit(matrix)

    variance = pca.explained_variance_
    floor = 1e-10 * max(variance[0], np.finfo(np.float64).tiny)
    rank = int(np.sum(variance > floor))

    if rank < n_components:
        if strict:
            raise RankDeficient(
                f'Only {rank} of {n_components} principal directions carry variance')
        logger.warning('PCA keeps %d of %d requested directions', rank, n_components)

    return PcaProjector(pca.mean_.copy(), pca.components_[:rank].T.copy())

def pca_project(projector: PcaProjector, fmap: FeatureMap) -> FeatureMap:
    """Projects every pixel of ``fmap``; spatial dims are kept."""
    if fmap.channels != projector.input_dim:
        raise DimensionMismatch(
            f'Projector expects {projector.input_dim} channels, got {fmap.channels}')
    return FeatureMap((fmap.values - projector.mean) @ projector.basis)

def pca_reconstruct(projector: PcaProjector, fmap: FeatureMap) -> FeatureMap:
    """Maps projected ``fmap`` back to the input channel space."""
    if fmap.channels != projector.output_dim:
        raise DimensionMismatch(
            f'Projector outputs {projector.output_dim} channels, got {fmap.channels}')
    return FeatureMap(fmap.values @ projector.basis.T + projector.mean)
