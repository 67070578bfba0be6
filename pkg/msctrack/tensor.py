"""
This module stores dense feature tensors and
the Fourier algebra everything else builds on.

FFT convention: the forward transform is unnormalized
and the inverse is scaled by ``1/(H*W)``, both per
channel over the two spatial axes. With this reading
the ridge and detection formulas apply literally.
"""

from dataclasses import dataclass, field
from typing import Sequence, Tuple, Union

import numpy as np
from scipy import fft as sp_fft

from .errors import (
    DimensionMismatch,
    NonFiniteValues,
    LimitExceeded
)
__all__ = [
    'FeatureMap',
    'Spectrum',
    'GaussianLabel',
    'fft2',
    'ifft2',
    'hadamard',
    'conj',
    'gaussian_label',
    'hann_window',
    'apply_window',
    'circular_correlate_spatial',
    'wrapped_offset',
]
ArrayLike = Union[np.ndarray, Sequence]


def _as_hwd(values: np.ndarray, name: str) -> np.ndarray:
    if values.ndim == 2:
        values = values[:, :, np.newaxis]

    if values.ndim != 3:
        raise DimensionMismatch(
            f'{name} must be HxW or HxWxD, got {values.ndim} axes')

    if 0 in values.shape:
        raise DimensionMismatch(f'{name} has zero dimension {values.shape}')

    values = values.view()
    values.flags.writeable = False
    return values

class FeatureMap:
    """
    Real-valued ``H x W x D`` tensor, row-major
    and channel-last. A 2-D array becomes a
    single-channel map.

    Values are stored as ``float64`` and exposed as
    a read-only array, so a ``FeatureMap`` can be
    handed between threads without copying.
    """
    __slots__ = ('_values',)

    def __init__(self, values: ArrayLike):
        values = np.asarray(values, dtype=np.float64)
        if not np.isfinite(values).all():
            raise NonFiniteValues('FeatureMap values must be finite')
        self._values = _as_hwd(values, 'FeatureMap')

    def __repr__(self) -> str:
        return f'FeatureMap({self.height}x{self.width}x{self.channels}) # at {hex(id(self))}'

    @property
    def values(self) -> np.ndarray:
        """Returns read-only ``HxWxD`` array"""
        return self._values

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self._values.shape

    @property
    def height(self) -> int:
        return self._values.shape[0]

    @property
    def width(self) -> int:
        return self._values.shape[1]

    @property
    def channels(self) -> int:
        return self._values.shape[2]

    def channel(self, l: int) -> np.ndarray:
        """Returns ``l``-th channel as ``HxW`` array"""
        return self._values[:, :, l]

    def select(self, indices: Sequence[int]) -> 'FeatureMap':
        """Returns a map made of ``indices`` channels, in that order."""
        indices = list(indices)
        if not indices:
            raise DimensionMismatch('At least one channel must be selected')

        if min(indices) < 0 or max(indices) >= self.channels:
            raise DimensionMismatch(
                f'Channel indices must be in [0, {self.channels})')

        return FeatureMap(self._values[:, :, indices])

class Spectrum:
    """
    Complex ``H x W x D`` tensor paired to a
    ``FeatureMap`` by the per-channel 2-D DFT.
    """
    __slots__ = ('_values',)

    def __init__(self, values: ArrayLike):
        values = np.asarray(values, dtype=np.complex128)
        if not np.isfinite(values).all():
            raise NonFiniteValues('Spectrum values must be finite')
        self._values = _as_hwd(values, 'Spectrum')

    def __repr__(self) -> str:
        return f'Spectrum({self.height}x{self.width}x{self.channels}) # at {hex(id(self))}'

    @property
    def values(self) -> np.ndarray:
        """Returns read-only ``HxWxD`` complex array"""
        return self._values

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self._values.shape

    @property
    def height(self) -> int:
        return self._values.shape[0]

    @property
    def width(self) -> int:
        return self._values.shape[1]

    @property
    def channels(self) -> int:
        return self._values.shape[2]

    def is_hermitian(self, rtol: float=1e-9) -> bool:
        """
        Checks ``S[u,v] == conj(S[-u mod H, -v mod W])``
        per channel, i.e. that the inverse is real.
        """
        mirrored = np.roll(self._values[::-1, ::-1, :], (1, 1), axis=(0, 1))
        scale = max(np.abs(self._values).max(), 1.0)
        return bool(np.abs(self._values - np.conj(mirrored)).max() <= rtol * scale)

@dataclass(frozen=True)
class GaussianLabel:
    """
    Periodic Gaussian regression target.

    ``center`` is a (row, col) position that may
    fall between cells; distances wrap around the
    map so the label is consistent with the
    circulant sample model.
    """
    height: int
    width: int
    center: Tuple[float, float]
    sigma: float
    values: np.ndarray = field(repr=False, compare=False)

    def as_map(self) -> FeatureMap:
        """Returns label as a single-channel ``FeatureMap``"""
        return FeatureMap(self.values)

def _check_same(a, b, what: str) -> None:
    if a.shape != b.shape:
        raise DimensionMismatch(f'{what}: {a.shape} vs {b.shape}')

def fft2(fmap: FeatureMap) -> Spectrum:
    """Unnormalized forward DFT of every channel."""
    return Spectrum(sp_fft.fft2(fmap.values, axes=(0, 1)))

def ifft2(spec: Spectrum) -> FeatureMap:
    """
    Inverse DFT scaled by ``1/(H*W)``. The real
    part is returned; for a Hermitian spectrum the
    discarded imaginary part is round-off only.
    """
    return FeatureMap(sp_fft.ifft2(spec.values, axes=(0, 1)).real)

def hadamard(a: Spectrum, b: Spectrum) -> Spectrum:
    """Elementwise complex product."""
    _check_same(a, b, 'hadamard')
    return Spectrum(a.values * b.values)

def conj(a: Spectrum) -> Spectrum:
    """Elementwise complex conjugate."""
    return Spectrum(np.conj(a.values))

def wrapped_offset(index: ArrayLike, center: float, size: int) -> np.ndarray:
    """
    Signed circular distance from ``center`` to
    ``index`` on a ring of ``size`` cells, in
    ``[-size/2, size/2)``.
    """
    index = np.asarray(index, dtype=np.float64)
    return np.mod(index - center + size / 2, size) - size / 2

def gaussian_label(
        height: int, width: int,
        center: Tuple[float, float],
        sigma: float) -> GaussianLabel:
    """
    Makes periodic Gaussian with peak 1 at ``center``.

    Arguments:
        height (``int``), width (``int``):
            Label size in feature cells.

        center (``tuple``):
            (row, col) peak position, may be fractional.

        sigma (``float``):
            Bandwidth in feature cells, must be positive.
    """
    if sigma <= 0:
        raise LimitExceeded(f'sigma must be positive, got {sigma}')

    if height <= 0 or width <= 0:
        raise DimensionMismatch(f'Label size must be positive, got {height}x{width}')

    rows = wrapped_offset(np.arange(height), center[0], height)
    cols = wrapped_offset(np.arange(width), center[1], width)

    dist2 = rows[:, np.newaxis] ** 2 + cols[np.newaxis, :] ** 2
    values = np.exp(-0.5 * dist2 / sigma ** 2)
    # Far tails underflow to 0.0, keep them strictly positive
    values = np.maximum(values, np.finfo(np.float64).tiny)

    values.flags.writeable = False
    return GaussianLabel(height, width, (float(center[0]), float(center[1])), float(sigma), values)

def hann_window(height: int, width: int) -> FeatureMap:
    """
    Separable Hann taper, zero on the border
    and 1 at the centre of odd-sized windows.
    """
    if height <= 0 or width <= 0:
        raise DimensionMismatch(f'Window size must be positive, got {height}x{width}')
    return FeatureMap(np.outer(np.hanning(height), np.hanning(width)))

def apply_window(fmap: FeatureMap, window: FeatureMap) -> FeatureMap:
    """Multiplies every channel of ``fmap`` by single-channel ``window``."""
    if window.channels != 1 or window.shape[:2] != fmap.shape[:2]:
        raise DimensionMismatch(
            f'Window {window.shape} doesn\'t fit map {fmap.shape}')
    return FeatureMap(fmap.values * window.values)

def circular_correlate_spatial(h: FeatureMap, z: FeatureMap) -> FeatureMap:
    """
    Direct O(H^2 W^2 D) circular correlation,

        r[m,n] = sum_l sum_{p,q} h[p,q,l] * z[(p+m) % H, (q+n) % W, l]

    This is the reference the Fourier-domain detection
    is checked against; trackers never call it.
    """
    _check_same(h, z, 'circular_correlate_spatial')

    response = np.empty(h.shape[:2])
    for m in range(h.height):
        for n in range(h.width):
            shifted = np.roll(z.values, (-m, -n), axis=(0, 1))
            response[m, n] = np.sum(h.values * shifted)

    return FeatureMap(response)
