"""
This module stores the differentiable correlation
filter layer and the SGD trainer of the compression
head it sits on top of.

With ``X``, ``Z``, ``G`` the spectra of the target
branch, test branch and filter label, the layer is

    H^l = X^l * conj(G) / D,    D = sum_l |X^l|^2 + lambda
    r   = ifft2(sum_l conj(H^l) * Z^l)
    L   = ||r - g||^2

and both branch gradients are computed with FFTs only.
"""

import csv
import json
import logging

from dataclasses import dataclass, field, fields
from os import PathLike
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np
from scipy import fft as sp_fft

from .defaults import (
    Grid, Training, LAMBDA,
    LEARNING_RATE, MOMENTUM, WEIGHT_DECAY,
    PADDING_DCF, SIGMA_FACTOR
)
from .errors import (
    DimensionMismatch, LimitExceeded,
    InsufficientFrames, InvalidConfig,
    OutputUnwritable
)
from .features import CompressionHead, resample_layers
from .tensor import (
    FeatureMap, GaussianLabel, gaussian_label,
    hann_window, apply_window
)
__all__ = [
    'BranchInput',
    'Triplet',
    'CfLayerTape',
    'SgdState',
    'TrainingConfig',
    'cf_forward',
    'cf_backward',
    'grad_check',
    'sgd_step',
    'triplet_loss',
    'batch_loss',
    'make_triplets',
    'train_head',
    'write_loss_csv',
]
logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BranchInput:
    """Resampled (shallow, deep) layers feeding one head branch"""
    shallow: FeatureMap
    deep: FeatureMap

    def __post_init__(self):
        if self.shallow.shape[:2] != self.deep.shape[:2]:
            raise DimensionMismatch(
                f'Branch layers disagree: {self.shallow.shape} vs {self.deep.shape}')

@dataclass(frozen=True)
class Triplet:
    """
    Training sample: centred target branch ``x``,
    test branch ``z`` with the target shifted, the
    response label ``g`` at the shifted position and
    the centred filter label ``g_x``.
    """
    x: BranchInput
    z: BranchInput
    g: GaussianLabel
    g_x: GaussianLabel

@dataclass(frozen=True)
class CfLayerTape:
    x_hat: np.ndarray = field(repr=False)
    z_hat: np.ndarray = field(repr=False)
    g_hat: np.ndarray = field(repr=False)
    h_hat: np.ndarray = field(repr=False)
    cross: np.ndarray = field(repr=False)
    denominator: np.ndarray = field(repr=False)
    response: FeatureMap
    lam: float

def _label_values(label: Union[GaussianLabel, FeatureMap, np.ndarray]) -> np.ndarray:
    if isinstance(label, GaussianLabel):
        return label.values
    if isinstance(label, FeatureMap):
        return label.values[:, :, 0]
    return np.asarray(label, dtype=np.float64)

def cf_forward(
        phi_x: FeatureMap, phi_z: FeatureMap,
        g: Union[GaussianLabel, np.ndarray],
        lam: float=LAMBDA,
        g_x: Optional[Union[GaussianLabel, np.ndarray]] = None
        ) -> Tuple[float, FeatureMap, CfLayerTape]:
    """
    Solves the filter on ``phi_x`` and correlates it
    with ``phi_z``.

    Arguments:
        phi_x (``FeatureMap``), phi_z (``FeatureMap``):
            Target and test branch features.

        g (``GaussianLabel``):
            Desired response on ``phi_z``.

        lam (``float``, optional):
            Ridge regulariser, must be positive.

        g_x (``GaussianLabel``, optional):
            Label the filter is solved for. ``g``
            is used if not specified.

    Returns (loss, response, tape).
    """
    if lam <= 0:
        raise LimitExceeded(f'lambda must be positive, got {lam}')

    g = _label_values(g)
    g_x = g if g_x is None else _label_values(g_x)

    if phi_x.shape != phi_z.shape or g.shape != phi_x.shape[:2] or g_x.shape != g.shape:
        raise DimensionMismatch(
            f'cf_forward: {phi_x.shape}, {phi_z.shape}, labels {g.shape}/{g_x.shape}')

    x_hat = sp_fft.fft2(phi_x.values, axes=(0, 1))
    z_hat = sp_fft.fft2(phi_z.values, axes=(0, 1))
    g_hat = sp_fft.fft2(g_x)

    denominator = np.sum(np.abs(x_hat) ** 2, axis=2) + lam
    h_hat = x_hat * np.conj(g_hat)[:, :, np.newaxis] / denominator[:, :, np.newaxis]
    cross = np.sum(np.conj(x_hat) * z_hat, axis=2)

    response = sp_fft.ifft2(g_hat * cross / denominator)
    residue = np.abs(response.imag).max()
    if residue > 1e-9 * max(1.0, np.abs(response.real).max()):
        logger.warning('CF response has imaginary residue %.3g', residue)

    response = FeatureMap(response.real)
    loss = float(np.sum((response.values[:, :, 0] - g) ** 2))

    tape = CfLayerTape(x_hat, z_hat, g_hat, h_hat, cross, denominator, response, lam)
    return loss, response, tape

def cf_backward(tape: CfLayerTape, upstream: Union[FeatureMap, np.ndarray]) -> Tuple[FeatureMap, FeatureMap]:
    """
    Returns ``(dL/d phi_x, dL/d phi_z)`` given
    ``upstream = dL/d response``; for the squared
    loss that is ``2 * (response - g)``.
    """
    if isinstance(upstream, FeatureMap):
        upstream = upstream.values[:, :, 0]
    upstream = np.asarray(upstream, dtype=np.float64)

    if upstream.shape != tape.response.shape[:2]:
        raise DimensionMismatch(
            f'Upstream {upstream.shape} doesn\'t fit response {tape.response.shape[:2]}')

    u_hat = sp_fft.fft2(upstream)[:, :, np.newaxis]
    g_hat = tape.g_hat[:, :, np.newaxis]
    denom = tape.denominator[:, :, np.newaxis]
    cross = tape.cross[:, :, np.newaxis]

    d_z = sp_fft.ifft2(u_hat * tape.h_hat, axes=(0, 1)).real

    # Numerator term, then the shared denominator taken
    # through both X and conj(X)
    through_num = np.conj(u_hat) * g_hat * tape.z_hat / denom
    through_den = 2 * np.real(np.conj(u_hat) * g_hat * cross / denom ** 2) * tape.x_hat
    d_x = sp_fft.ifft2(through_num - through_den, axes=(0, 1)).real

    return FeatureMap(d_x), FeatureMap(d_z)

def grad_check(
        fn: Callable[[Dict[str, np.ndarray]], Tuple[float, Dict[str, np.ndarray]]],
        inputs: Dict[str, np.ndarray],
        eps: float=1e-3) -> float:
    """
    Compares analytic gradients with central differences.

    Arguments:
        fn (``Callable``):
            Takes dict of arrays, returns ``(value, grads)``
            where ``grads`` has the same keys and shapes.

        inputs (``dict``):
            Point to check at.

        eps (``float``, optional):
            Finite-difference step.

    Returns the maximal relative error over every
    coordinate, ``|a - n| / max(|a|, |n|, 1e-8)``.
    """
    inputs = {k: np.array(v, dtype=np.float64) for k, v in inputs.items()}
    _, analytic = fn(inputs)

    worst = 0.0
    for name, value in inputs.items():
        grad = np.asarray(analytic[name], dtype=np.float64)
        if grad.shape != value.shape:
            raise DimensionMismatch(f'Gradient of {name} is {grad.shape}, input is {value.shape}')

        for idx in np.ndindex(value.shape):
            original = value[idx]

            value[idx] = original + eps
            plus = fn(inputs)[0]
            value[idx] = original - eps
            minus = fn(inputs)[0]
            value[idx] = original

            numeric = (plus - minus) / (2 * eps)
            error = abs(grad[idx] - numeric) / max(abs(grad[idx]), abs(numeric), 1e-8)
            worst = max(worst, error)

    return worst

@dataclass
class SgdState:
    """Momentum SGD hyper-parameters and velocity buffers"""
    lr: float = LEARNING_RATE
    momentum: float = MOMENTUM
    weight_decay: float = WEIGHT_DECAY
    velocities: Dict[str, np.ndarray] = field(default_factory=dict, repr=False)

def sgd_step(
        params: Dict[str, np.ndarray],
        grads: Dict[str, np.ndarray],
        state: SgdState) -> Dict[str, np.ndarray]:
    """
    One momentum step,

        v <- m * v - lr * (grad + wd * param)
        param <- param + v

    Returns new parameters; ``state`` velocities
    are updated in place.
    """
    if params.keys() != grads.keys():
        raise DimensionMismatch(f'Params {sorted(params)} vs grads {sorted(grads)}')

    updated = {}
    for name, param in params.items():
        grad = np.asarray(grads[name])
        if grad.shape != np.shape(param):
            raise DimensionMismatch(f'{name}: param {np.shape(param)} vs grad {grad.shape}')

        velocity = state.velocities.get(name, np.zeros_like(grad, dtype=np.float64))
        velocity = state.momentum * velocity - state.lr * (grad + state.weight_decay * param)

        state.velocities[name] = velocity
        updated[name] = param + velocity

    return updated

@dataclass(frozen=True)
class TrainingConfig:
    """
    Head training settings, JSON keys ``lambda``,
    ``lr``, ``momentum``, ``weight_decay``, ``epochs``,
    ``batch``, ``window``, ``triplets``, ``max_gap``.
    """
    lam: float = LAMBDA
    lr: float = LEARNING_RATE
    momentum: float = MOMENTUM
    weight_decay: float = WEIGHT_DECAY
    epochs: int = int(Training.EPOCHS)
    batch: int = int(Training.BATCH)
    window: bool = True
    triplets: int = 64
    max_gap: int = int(Training.MAX_GAP)

    def __post_init__(self):
        if self.lam <= 0:
            raise InvalidConfig(f'lambda must be positive, got {self.lam}')
        if self.lr <= 0 or not 0 <= self.momentum < 1 or self.weight_decay < 0:
            raise InvalidConfig('Need lr > 0, momentum in [0, 1) and weight_decay >= 0')
        if self.epochs < 1 or self.batch < 1 or self.triplets < 1 or self.max_gap < 1:
            raise InvalidConfig('epochs, batch, triplets and max_gap must be >= 1')

    @classmethod
    def from_dict(cls, data: dict) -> 'TrainingConfig':
        data = dict(data)
        if 'lambda' in data:
            data['lam'] = data.pop('lambda')

        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InvalidConfig(f'Unknown training config keys: {sorted(unknown)}')

        return cls(**data)

    @classmethod
    def from_json(cls, path: Union[PathLike, str]) -> 'TrainingConfig':
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, ValueError) as e:
            raise InvalidConfig(f'Can\'t read training config {path}: {e}') from None
        return cls.from_dict(data)

def _add_grads(total: Optional[Dict[str, np.ndarray]], grads: Dict[str, np.ndarray]):
    if total is None:
        return dict(grads)
    return {k: total[k] + grads[k] for k in total}

def triplet_loss(
        head: CompressionHead, triplet: Triplet,
        lam: float=LAMBDA, window: bool=True
        ) -> Tuple[float, Dict[str, np.ndarray]]:
    """Loss of one triplet through ``head`` and its parameter gradients."""
    phi_x, tape_x = head.compress(triplet.x.shallow, triplet.x.deep)
    phi_z, tape_z = head.compress(triplet.z.shallow, triplet.z.deep)

    if window:
        taper = hann_window(phi_x.height, phi_x.width)
        phi_x, phi_z = apply_window(phi_x, taper), apply_window(phi_z, taper)
        taper = taper.values
    else:
        taper = 1.0

    loss, response, tape = cf_forward(phi_x, phi_z, triplet.g, lam, triplet.g_x)
    d_x, d_z = cf_backward(tape, 2 * (response.values[:, :, 0] - triplet.g.values))

    grads = _add_grads(
        head.backward(tape_x, d_x.values * taper),
        head.backward(tape_z, d_z.values * taper)
    )
    return loss, grads

def batch_loss(
        head: CompressionHead, triplets: List[Triplet],
        lam: float=LAMBDA, window: bool=True
        ) -> Tuple[float, Dict[str, np.ndarray]]:
    """Summed loss and gradients over ``triplets``."""
    if not triplets:
        raise InsufficientFrames('Batch is empty')

    total_loss, total_grads = 0.0, None
    for triplet in triplets:
        loss, grads = triplet_loss(head, triplet, lam, window)
        total_loss += loss
        total_grads = _add_grads(total_grads, grads)

    return total_loss, total_grads

def _branch(layers, frame, center, size, padding, index) -> BranchInput:
    shallow, deep = layers.layers(frame, center, size, padding, index)
    return BranchInput(*resample_layers(shallow, deep))

def make_triplets(
        sequence, count: int,
        layers=None,
        rng: Optional[np.random.Generator] = None,
        padding: float=PADDING_DCF,
        max_gap: int=int(Training.MAX_GAP)) -> List[Triplet]:
    """
    Samples ``count`` triplets from an annotated sequence.

    Arguments:
        sequence (``SequenceSpec``):
            Frames with ground truth boxes.

        count (``int``):
            Number of triplets.

        layers (``LayerSource``, optional):
            Shallow/deep layer source. ``HandcraftedLayers``
            if not specified.

        rng (``np.random.Generator``, optional):
            Frame pairs and target offsets are drawn from it.

    ``x`` is cut around the target of frame ``i``; ``z``
    from frame ``j`` (``0 < |i - j| <= max_gap``) with
    the target moved by up to a quarter of the patch.
    """
    from .extractors import HandcraftedLayers

    layers = layers or HandcraftedLayers()
    rng = rng if rng is not None else np.random.default_rng(0)

    valid = [i for i, box in enumerate(sequence.boxes) if box is not None]
    if len(valid) < 2:
        raise InsufficientFrames(
            f'{sequence.name}: need >= 2 annotated frames, got {len(valid)}')

    cells = int(Grid.CELLS)
    frames: Dict[int, np.ndarray] = {}
    triplets = []

    for _ in range(count):
        i = int(rng.choice(valid))
        near = [j for j in valid if j != i and abs(j - i) <= max_gap] or [j for j in valid if j != i]
        j = int(rng.choice(near))

        for k in (i, j):
            if k not in frames:
                frames[k] = sequence.frame(k)

        box_x, box_z = sequence.boxes[i], sequence.boxes[j]
        size = (box_x.w, box_x.h)

        side = np.sqrt(box_x.w * box_x.h) * (1 + padding)
        cell_px = 2 * side / int(Grid.SHALLOW_INPUT)
        offset = rng.uniform(-side / 4, side / 4, size=2)

        x = _branch(layers, frames[i], box_x.center, size, padding, i)
        z_center = (box_z.center[0] - offset[0], box_z.center[1] - offset[1])
        z = _branch(layers, frames[j], z_center, size, padding, j)

        sigma = np.sqrt(box_x.w * box_x.h) / cell_px / SIGMA_FACTOR
        g_x = gaussian_label(cells, cells, (cells // 2, cells // 2), sigma)
        g = gaussian_label(
            cells, cells,
            (cells // 2 + offset[1] / cell_px, cells // 2 + offset[0] / cell_px),
            sigma)

        triplets.append(Triplet(x, z, g, g_x))

    logger.info('Made %d triplets from %s', count, sequence.name)
    return triplets

def write_loss_csv(path: Union[PathLike, str], history: List[float]) -> Path:
    """Writes ``epoch,mean_loss`` rows, epochs are 1-based."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', newline='') as f:
            writer = csv.writer(f)
            writer.writerow(('epoch', 'mean_loss'))
            for epoch, loss in enumerate(history, 1):
                writer.writerow((epoch, repr(float(loss))))
    except OSError as e:
        raise OutputUnwritable(f'Can\'t write {path}: {e}') from None
    return path

def train_head(
        head: CompressionHead,
        triplets: List[Triplet],
        config: Optional[TrainingConfig] = None,
        rng: Optional[np.random.Generator] = None,
        loss_path: Optional[Union[PathLike, str]] = None
        ) -> Tuple[CompressionHead, List[float]]:
    """
    Minibatch momentum SGD over ``triplets``.

    The batch loss is the sum over its triplets;
    every epoch visits all triplets once in a
    shuffled order. Returns the trained head and
    the mean triplet loss of each epoch.
    """
    config = config or TrainingConfig()
    rng = rng if rng is not None else np.random.default_rng(0)

    if not triplets:
        raise InsufficientFrames('No triplets to train on')

    state = SgdState(config.lr, config.momentum, config.weight_decay)
    history = []

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(triplets))
        epoch_loss = 0.0

        for start in range(0, len(order), config.batch):
            batch = [triplets[k] for k in order[start:start + config.batch]]
            loss, grads = batch_loss(head, batch, config.lam, config.window)
            head = head.with_params(sgd_step(head.params(), grads, state))
            epoch_loss += loss

        history.append(epoch_loss / len(triplets))
        logger.info('Epoch %d/%d: mean loss %.6g', epoch, config.epochs, history[-1])

    if loss_path is not None:
        write_loss_csv(loss_path, history)

    return head, history
