"""This module stores OTB one-pass evaluation metrics."""

from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from ..defaults import Metrics, OSR_THRESHOLD
from ..errors import InsufficientFrames, DimensionMismatch
from .sequence import BoundingBox

__all__ = [
    'EvalCurve',
    'iou',
    'center_error',
    'precision_thresholds',
    'success_thresholds',
    'precision_curve',
    'success_curve',
    'mean_curve',
    'auc',
    'dpr',
    'osr',
]
Pair = Tuple[BoundingBox, Optional[BoundingBox]]


@dataclass(frozen=True)
class EvalCurve:
    """Fraction of frames passing every threshold"""
    kind: str
    thresholds: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)

    def at(self, threshold: float) -> float:
        idx = np.flatnonzero(np.isclose(self.thresholds, threshold))
        if not idx.size:
            raise DimensionMismatch(f'{threshold} is not on the {self.kind} threshold grid')
        return float(self.values[idx[0]])

def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes"""
    w = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    h = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if w <= 0 or h <= 0:
        return 0.0

    inter = w * h
    return float(inter / (a.area + b.area - inter))

def center_error(a: BoundingBox, b: BoundingBox) -> float:
    """Euclidean distance of box centres, pixels"""
    (ax, ay), (bx, by) = a.center, b.center
    return float(np.hypot(ax - bx, ay - by))

def precision_thresholds() -> np.ndarray:
    return np.arange(int(Metrics.PRECISION_MAX) + 1, dtype=np.float64)

def success_thresholds() -> np.ndarray:
    return np.linspace(0, 1, int(Metrics.SUCCESS_STEPS) + 1)

def _scored(records: Iterable[Pair]) -> List[Tuple[BoundingBox, BoundingBox]]:
    scored = [(p, t) for p, t in records if t is not None]
    if not scored:
        raise InsufficientFrames('No frames with valid ground truth to score')
    return scored

def precision_curve(records: Iterable[Pair], thresholds: Optional[Sequence[float]] = None) -> EvalCurve:
    """
    Fraction of frames with centre error <= threshold
    (0..50 px). ``records`` are (predicted, truth)
    pairs; pairs without truth are skipped.
    """
    thresholds = precision_thresholds() if thresholds is None else np.asarray(thresholds, float)
    errors = np.array([center_error(p, t) for p, t in _scored(records)])
    values = (errors[:, np.newaxis] <= thresholds[np.newaxis, :]).mean(axis=0)
    return EvalCurve('precision', thresholds, values)

def success_curve(records: Iterable[Pair], thresholds: Optional[Sequence[float]] = None) -> EvalCurve:
    """Fraction of frames with IoU >= threshold (0..1 step 0.05)."""
    thresholds = success_thresholds() if thresholds is None else np.asarray(thresholds, float)
    overlaps = np.array([iou(p, t) for p, t in _scored(records)])
    values = (overlaps[:, np.newaxis] >= thresholds[np.newaxis, :]).mean(axis=0)
    return EvalCurve('success', thresholds, values)

def mean_curve(curves: Sequence[EvalCurve]) -> EvalCurve:
    """Averages same-grid curves, e.g. over sequences."""
    if not curves:
        raise InsufficientFrames('No curves to average')

    first = curves[0]
    for curve in curves[1:]:
        if curve.kind != first.kind or not np.array_equal(curve.thresholds, first.thresholds):
            raise DimensionMismatch('Curves have different grids')

    return EvalCurve(first.kind, first.thresholds, np.mean([c.values for c in curves], axis=0))

def auc(curve: EvalCurve) -> float:
    """Mean of the curve over its threshold grid"""
    return float(np.mean(curve.values))

def dpr(curve: EvalCurve, threshold: float=Metrics.DPR_THRESHOLD) -> float:
    return curve.at(threshold)

def osr(curve: EvalCurve, threshold: float=OSR_THRESHOLD) -> float:
    return curve.at(threshold)
