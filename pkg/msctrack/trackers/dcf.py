"""
This module stores the MSC-DCF tracker: closed-form
multi-channel correlation filter, Fourier detection
and the moving-average model update.
"""

import logging

from dataclasses import dataclass, field
from typing import Any, Tuple, Union

import numpy as np

from ..defaults import LAMBDA, MU_DCF
from ..errors import DimensionMismatch, LimitExceeded
from ..tensor import (
    FeatureMap, Spectrum, GaussianLabel,
    fft2, ifft2
)
from .utils import (
    CorrelationTracker, Detection, ScaleSearch,
    TrackerConfig, TrackerState, refine_peak
)
__all__ = [
    'DcfModel',
    'DcfTracker',
    'train_filter',
    'detect',
    'update_model',
    'estimate_scale',
    'init',
    'track_frame',
]
logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DcfModel:
    """
    Filter statistics: per-channel numerator ``A``
    and the shared real denominator ``B``.
    """
    numerator: Spectrum = field(repr=False)
    denominator: np.ndarray = field(repr=False)
    lam: float = LAMBDA
    mu: float = MU_DCF

    @property
    def filter(self) -> Spectrum:
        """``H^l = A^l / (B + lambda)``"""
        return Spectrum(
            self.numerator.values / (self.denominator[:, :, np.newaxis] + self.lam))

def _label_spectrum(g: Union[GaussianLabel, np.ndarray]) -> np.ndarray:
    values = g.values if isinstance(g, GaussianLabel) else np.asarray(g, dtype=np.float64)
    return fft2(FeatureMap(values)).values[:, :, 0]

def _statistics(phi: FeatureMap, g) -> Tuple[np.ndarray, np.ndarray]:
    g_hat = _label_spectrum(g)
    if g_hat.shape != phi.shape[:2]:
        raise DimensionMismatch(f'Label {g_hat.shape} doesn\'t fit features {phi.shape}')

    x_hat = fft2(phi).values
    numerator = x_hat * np.conj(g_hat)[:, :, np.newaxis]
    # |X|^2 is real by construction, drop the zero imaginary part
    denominator = np.sum(np.abs(x_hat) ** 2, axis=2)
    return numerator, denominator

def train_filter(phi_x: FeatureMap, g: Union[GaussianLabel, np.ndarray], lam: float=LAMBDA) -> DcfModel:
    """
    Ridge regression over every circular shift of
    ``phi_x`` solved per frequency,

        A^l = X^l * conj(G),   B = sum_k X^k * conj(X^k)
    """
    if lam <= 0:
        raise LimitExceeded(f'lambda_d must be positive, got {lam}')

    numerator, denominator = _statistics(phi_x, g)
    return DcfModel(Spectrum(numerator), denominator, lam)

def detect(model: DcfModel, phi_z: FeatureMap) -> Detection:
    """
    ``f = ifft2(sum_l conj(H^l) * Z^l)``, peak refined
    to sub-cell precision by quadratic fits.
    """
    if phi_z.shape != model.numerator.shape:
        raise DimensionMismatch(
            f'Features {phi_z.shape} don\'t fit model {model.numerator.shape}')

    z_hat = fft2(phi_z).values
    response_hat = np.sum(np.conj(model.filter.values) * z_hat, axis=2)
    response = ifft2(Spectrum(response_hat))

    peak, value = refine_peak(response.values[:, :, 0])
    return Detection(response, peak, value)

def update_model(model: DcfModel, phi_x: FeatureMap, g, mu: float) -> DcfModel:
    """``A <- (1-mu) A + mu A_new`` and the same for ``B``."""
    if not 0 <= mu <= 1:
        raise LimitExceeded(f'mu must be in [0, 1], got {mu}')

    numerator, denominator = _statistics(phi_x, g)
    if numerator.shape != model.numerator.shape:
        raise DimensionMismatch(
            f'Features {numerator.shape} don\'t fit model {model.numerator.shape}')

    return DcfModel(
        Spectrum((1 - mu) * model.numerator.values + mu * numerator),
        (1 - mu) * model.denominator + mu * denominator,
        model.lam, model.mu
    )

class DcfTracker(CorrelationTracker):
    kind = 'dcf'

    def train(self, phi, label, config):
        model = train_filter(phi, label, config.lambda_d)
        return DcfModel(model.numerator, model.denominator, config.lambda_d, config.mu)

    def locate(self, model, phi, config):
        return detect(model, phi)

    def update(self, model, phi, label, config):
        return update_model(model, phi, label, config.mu)

DCF = DcfTracker()

def init(frame: np.ndarray, bbox: Any, config: TrackerConfig = None, extractor=None) -> TrackerState:
    """Initializes MSC-DCF on ``frame`` from ``bbox`` (x, y, w, h)."""
    return DCF.init(frame, bbox, config or TrackerConfig.dcf(), extractor)

def estimate_scale(state: TrackerState, frame: np.ndarray) -> ScaleSearch:
    return DCF.estimate_scale(state, frame)

def track_frame(state: TrackerState, frame: np.ndarray):
    """Returns ``(state, (x, y, w, h))`` for the next frame."""
    return DCF.track_frame(state, frame)
