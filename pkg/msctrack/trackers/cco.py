"""
This module stores the MSC-CCO tracker.

Every channel is interpolated into a periodic
continuous function with a separable kernel ``b``,

    J{y}(p) = sum_n y[n] * b(p / s - n),    s = P / N

whose Fourier coefficients are ``c_k * Y[k] / N``
(``c_k`` is the kernel's frequency response). The
filter is a per-frequency ridge solution over these
coefficients with one ridge weight for all of them,
so a small ``c_k`` damps its frequency. The confidence
map is evaluated on a ``grid_factor`` times denser grid.
"""

import logging

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Callable, Optional, Tuple, Union

import numpy as np

from scipy import fft as sp_fft
from scipy import integrate

from ..defaults import LAMBDA, Search
from ..errors import DimensionMismatch, LimitExceeded, InvalidConfig
from ..tensor import FeatureMap, Spectrum, GaussianLabel, wrapped_offset
from .utils import (
    CorrelationTracker, Detection, ScaleSearch,
    TrackerConfig, TrackerState, KERNEL_NAMES
)
__all__ = [
    'InterpKernel',
    'CcoFilter',
    'CcoModel',
    'CcoTracker',
    'make_kernel',
    'interpolate_channel',
    'interpolated_coefficients',
    'label_coefficients',
    'train_cco_filter',
    'update_cco_model',
    'confidence_map',
    'localize_subpixel',
    'cco_objective',
    'init',
    'track_frame',
    'estimate_scale',
]
logger = logging.getLogger(__name__)


def _bspline(t: np.ndarray) -> np.ndarray:
    t = np.abs(t)
    return np.where(
        t < 1, 2 / 3 - t ** 2 + t ** 3 / 2,
        np.where(t < 2, (2 - t) ** 3 / 6, 0.0))

def _keys(t: np.ndarray, a: float=-0.5) -> np.ndarray:
    t = np.abs(t)
    return np.where(
        t <= 1, (a + 2) * t ** 3 - (a + 3) * t ** 2 + 1,
        np.where(t < 2, a * t ** 3 - 5 * a * t ** 2 + 8 * a * t - 4 * a, 0.0))

def _linear(t: np.ndarray) -> np.ndarray:
    return np.maximum(1 - np.abs(t), 0.0)

_KERNELS = {
    'bspline': (_bspline, 2.0),
    'keys': (_keys, 2.0),
    'linear': (_linear, 1.0),
}
@lru_cache(maxsize=None)
def _quad_response(name: str, nu: float) -> float:
    function, support = _KERNELS[name]
    total = 0.0
    for lo in range(int(support)):
        value, _ = integrate.quad(
            lambda t: float(function(np.array(t))), lo, lo + 1,
            weight='cos', wvar=2 * np.pi * nu)
        total += value
    return 2 * total

@dataclass(frozen=True)
class InterpKernel:
    """
    Interpolation kernel in grid-spacing units.

    ``period`` is the length P of the continuous
    domain per axis; an ``N``-sample channel is
    placed at spacing ``P / N``.
    """
    name: str = 'bspline'
    period: float = 1.0

    def __post_init__(self):
        if self.name not in KERNEL_NAMES:
            raise InvalidConfig(f'Unknown kernel {self.name!r}')
        if self.period <= 0:
            raise LimitExceeded(f'Kernel period must be positive, got {self.period}')

    @property
    def support(self) -> float:
        """Radius in grid spacings"""
        return _KERNELS[self.name][1]

    def __call__(self, t: Union[float, np.ndarray]) -> np.ndarray:
        return _KERNELS[self.name][0](np.asarray(t, dtype=np.float64))

    def sampled(self, per_spacing: int=64) -> Tuple[np.ndarray, np.ndarray]:
        """Returns (t, b(t)) on a dense grid covering the support."""
        t = np.linspace(-self.support, self.support, int(2 * self.support * per_spacing) + 1)
        return t, self(t)

    def response(self, n: int) -> np.ndarray:
        """Frequency response ``c_k`` for the DFT bins of an ``n``-grid."""
        nu = sp_fft.fftfreq(n)
        if self.name == 'bspline':
            return np.sinc(nu) ** 4
        if self.name == 'linear':
            return np.sinc(nu) ** 2
        return np.array([_quad_response(self.name, float(abs(v))) for v in nu])

def make_kernel(name: str='bspline', period: float=1.0) -> InterpKernel:
    return InterpKernel(name, period)

def _as_samples(y: Union[FeatureMap, np.ndarray]) -> np.ndarray:
    if isinstance(y, FeatureMap):
        if y.channels != 1:
            raise DimensionMismatch(f'Expected one channel, got {y.channels}')
        return y.values[:, :, 0]
    return np.asarray(y, dtype=np.float64)

def interpolate_channel(
        y: Union[FeatureMap, np.ndarray],
        kernel: InterpKernel,
        p: Union[float, Tuple[float, ...]]) -> float:
    """
    Evaluates the continuous interpolation of samples
    ``y`` (1-D or 2-D) at ``p``. Positions outside
    ``[0, P)`` wrap around, since the function is
    periodic.
    """
    y = _as_samples(y)
    p = np.atleast_1d(np.asarray(p, dtype=np.float64))

    if p.shape != (y.ndim,):
        raise DimensionMismatch(f'Position {p} doesn\'t fit {y.ndim}-D samples')

    result = y
    for axis in range(y.ndim):
        n = y.shape[axis]
        t = np.mod(p[axis], kernel.period) * n / kernel.period
        weights = kernel(wrapped_offset(t, np.arange(n), n))
        result = np.tensordot(weights, result, axes=([0], [0]))

    return float(result)

def interpolated_coefficients(fmap: FeatureMap, kernel: InterpKernel) -> Spectrum:
    """Fourier coefficients ``c_k * Y[k] / N`` of every interpolated channel."""
    rows, cols = fmap.shape[:2]
    response = np.outer(kernel.response(rows), kernel.response(cols))
    y_hat = sp_fft.fft2(fmap.values, axes=(0, 1))
    return Spectrum(response[:, :, np.newaxis] * y_hat / (rows * cols))

def label_coefficients(g: Union[GaussianLabel, np.ndarray]) -> np.ndarray:
    values = g.values if isinstance(g, GaussianLabel) else np.asarray(g, dtype=np.float64)
    return sp_fft.fft2(values) / values.size

def _band_mask(shape: Tuple[int, int], bandwidth: Optional[int]) -> np.ndarray:
    rows, cols = shape
    if bandwidth is None:
        bandwidth = max(rows, cols) // 2

    k_rows = np.abs(sp_fft.fftfreq(rows, 1 / rows))
    k_cols = np.abs(sp_fft.fftfreq(cols, 1 / cols))
    return (k_rows[:, np.newaxis] <= bandwidth) & (k_cols[np.newaxis, :] <= bandwidth)

def _ridge_weight(lam: float, rows: int, cols: int) -> np.ndarray:
    # Coefficients carry 1/N, so lam / N^2 keeps lambda_c on the DCF scale
    return np.full((rows, cols), lam / (rows * cols) ** 2)

@dataclass(frozen=True)
class CcoFilter:
    """
    Truncated Fourier coefficients of the continuous
    filter, one array per channel. ``regularizer`` is
    the ridge weight of every coefficient.
    """
    coefficients: Spectrum = field(repr=False)
    bandwidth: int
    regularizer: np.ndarray = field(repr=False)

    @property
    def channels(self) -> int:
        return self.coefficients.channels

@dataclass(frozen=True)
class CcoModel:
    """Moving-average statistics the filter is solved from"""
    numerator: np.ndarray = field(repr=False)
    denominator: np.ndarray = field(repr=False)
    kernel: InterpKernel
    bandwidth: Optional[int] = None
    lam: float = LAMBDA

    @property
    def filter(self) -> CcoFilter:
        rows, cols = self.denominator.shape
        regularizer = _ridge_weight(self.lam, rows, cols)
        mask = _band_mask((rows, cols), self.bandwidth)

        coefficients = np.where(
            mask[:, :, np.newaxis],
            self.numerator / (self.denominator + regularizer)[:, :, np.newaxis],
            0.0)

        bandwidth = max(rows, cols) // 2 if self.bandwidth is None else self.bandwidth
        return CcoFilter(Spectrum(coefficients), bandwidth, regularizer)

def _cco_statistics(coefficients: Spectrum, g) -> Tuple[np.ndarray, np.ndarray]:
    g_hat = label_coefficients(g)
    if g_hat.shape != coefficients.shape[:2]:
        raise DimensionMismatch(f'Label {g_hat.shape} doesn\'t fit {coefficients.shape}')

    x = coefficients.values
    return x * np.conj(g_hat)[:, :, np.newaxis], np.sum(np.abs(x) ** 2, axis=2)

def _cco_model(fmap: FeatureMap, g, lam_c, kernel, bandwidth) -> CcoModel:
    if lam_c <= 0:
        raise LimitExceeded(f'lambda_c must be positive, got {lam_c}')
    numerator, denominator = _cco_statistics(interpolated_coefficients(fmap, kernel), g)
    return CcoModel(numerator, denominator, kernel, bandwidth, lam_c)

def train_cco_filter(
        fmap: FeatureMap, g: Union[GaussianLabel, np.ndarray],
        lam_c: float=LAMBDA,
        kernel: Optional[InterpKernel] = None,
        bandwidth: Optional[int] = None) -> CcoFilter:
    """
    Per-frequency ridge filter on the interpolated
    coefficients of ``fmap``'s channels, minimizing

        sum_k |sum_d conj(F_d) X_d - G|^2 + lambda_c / N^2 sum_d |F_d|^2

    with N samples per channel, inside the band
    ``|k| <= bandwidth`` (full band by default);
    coefficients outside are zero.
    """
    kernel = kernel or InterpKernel(period=float(fmap.height))
    return _cco_model(fmap, g, lam_c, kernel, bandwidth).filter

def update_cco_model(model: CcoModel, fmap: FeatureMap, g, mu: float) -> CcoModel:
    if not 0 <= mu <= 1:
        raise LimitExceeded(f'mu must be in [0, 1], got {mu}')

    numerator, denominator = _cco_statistics(interpolated_coefficients(fmap, model.kernel), g)
    if numerator.shape != model.numerator.shape:
        raise DimensionMismatch(f'Features {numerator.shape} don\'t fit {model.numerator.shape}')

    return CcoModel(
        (1 - mu) * model.numerator + mu * numerator,
        (1 - mu) * model.denominator + mu * denominator,
        model.kernel, model.bandwidth, model.lam
    )

def _zero_pad_axis(values: np.ndarray, size: int, axis: int) -> np.ndarray:
    n = values.shape[axis]
    if size == n:
        return values

    values = np.moveaxis(values, axis, 0)
    padded = np.zeros((size,) + values.shape[1:], dtype=np.complex128)

    positive = (n + 1) // 2
    padded[:positive] = values[:positive]
    if n % 2:
        negative = n // 2
        padded[size - negative:] = values[n - negative:]
    else:
        # Nyquist bin is shared by +n/2 and -n/2
        negative = n // 2 - 1
        if negative:
            padded[size - negative:] = values[n - negative:]
        padded[n // 2] = values[n // 2] / 2
        padded[size - n // 2] = values[n // 2] / 2

    return np.moveaxis(padded, 0, axis)

def confidence_map(
        cfilter: CcoFilter, y: FeatureMap,
        grid_factor: int=Search.CCO_GRID_FACTOR,
        kernel: Optional[InterpKernel] = None) -> FeatureMap:
    """
    Samples ``sum_d f^d (*) J{y^d}`` on a grid
    ``grid_factor`` times denser than ``y``'s.
    """
    if grid_factor < 1 or int(grid_factor) != grid_factor:
        raise LimitExceeded(f'grid_factor must be a positive integer, got {grid_factor}')

    if y.shape != cfilter.coefficients.shape:
        raise DimensionMismatch(
            f'Features {y.shape} don\'t fit filter {cfilter.coefficients.shape}')

    kernel = kernel or InterpKernel(period=float(y.height))
    x = interpolated_coefficients(y, kernel).values
    q_hat = np.sum(np.conj(cfilter.coefficients.values) * x, axis=2)

    rows, cols = y.height * int(grid_factor), y.width * int(grid_factor)
    padded = _zero_pad_axis(_zero_pad_axis(q_hat, rows, 0), cols, 1)

    values = sp_fft.ifft2(padded) * (rows * cols)
    residue = np.abs(values.imag).max()
    if residue > 1e-9 * max(1.0, np.abs(values.real).max()):
        logger.warning('Confidence map has imaginary residue %.3g', residue)

    return FeatureMap(values.real)

def localize_subpixel(cmap: Union[FeatureMap, np.ndarray], grid_factor: int=1) -> Tuple[float, float]:
    """
    Continuous ``(x, y)`` peak of a dense confidence map
    in coarse cells (fine cells divided by ``grid_factor``).

    Takes the argmax (smallest row, then col on ties)
    and one circular quadratic step per axis.
    """
    values = cmap.values[:, :, 0] if isinstance(cmap, FeatureMap) else np.asarray(cmap)
    if values.size == 0:
        raise DimensionMismatch('Confidence map is empty')

    row, col = np.unravel_index(np.argmax(values), values.shape)
    rows, cols = values.shape
    peak = values[row, col]

    def step(left, right):
        curvature = left - 2 * peak + right
        return 0.0 if curvature >= 0 else float(np.clip(0.5 * (left - right) / curvature, -0.5, 0.5))

    fine_row = row + step(values[(row - 1) % rows, col], values[(row + 1) % rows, col])
    fine_col = col + step(values[row, (col - 1) % cols], values[row, (col + 1) % cols])
    return fine_col / grid_factor, fine_row / grid_factor

def cco_objective(
        cfilter: CcoFilter, coefficients: Spectrum,
        g: Union[GaussianLabel, np.ndarray], lam_c: float=LAMBDA) -> float:
    """
    Training objective of ``cfilter`` on interpolated
    ``coefficients`` over every frequency.
    """
    g_hat = label_coefficients(g)
    f = cfilter.coefficients.values

    if f.shape != coefficients.shape:
        raise DimensionMismatch(f'Filter {f.shape} vs coefficients {coefficients.shape}')

    regularizer = _ridge_weight(lam_c, *g_hat.shape)

    residual = np.sum(np.conj(f) * coefficients.values, axis=2) - g_hat
    penalty = regularizer * np.sum(np.abs(f) ** 2, axis=2)
    return float(np.sum(np.abs(residual) ** 2 + penalty))

class CcoTracker(CorrelationTracker):
    kind = 'cco'

    def train(self, phi, label, config):
        kernel = InterpKernel(config.kernel, float(phi.height))
        model = _cco_model(phi, label, config.lambda_c, kernel, config.bandwidth)
        logger.debug('CCO model: %d channels, band %s', phi.channels, config.bandwidth)
        return model

    def locate(self, model, phi, config):
        cmap = confidence_map(model.filter, phi, config.grid_factor, model.kernel)
        x, y = localize_subpixel(cmap, config.grid_factor)
        return Detection(cmap, (y, x), float(cmap.values.max()))

    def update(self, model, phi, label, config):
        return update_cco_model(model, phi, label, config.mu)

CCO = CcoTracker()

def init(frame: np.ndarray, bbox: Any, config: TrackerConfig = None, extractor=None) -> TrackerState:
    """Initializes MSC-CCO on ``frame`` from ``bbox`` (x, y, w, h)."""
    return CCO.init(frame, bbox, config or TrackerConfig.cco(), extractor)

def estimate_scale(state: TrackerState, frame: np.ndarray) -> ScaleSearch:
    return CCO.estimate_scale(state, frame)

def track_frame(state: TrackerState, frame: np.ndarray):
    return CCO.track_frame(state, frame)
