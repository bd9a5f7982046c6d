"""Evaluation measures over hard segmentations and training-trace statistics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .field import LabelField, _require_binary, check_compatible
from .losses import GdlWeights


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class TraceStats:
    median: float
    iqr: float
    window: int


@dataclass(frozen=True)
class SensSpec:
    sensitivity: float
    specificity: float
    degenerate: bool = False

    def __iter__(self):
        yield self.sensitivity
        yield self.specificity


def confusion(seg: LabelField, ref: LabelField, foreground_class: int = 1) -> ConfusionCounts:
    check_compatible(seg, ref)
    s = seg.values[:, foreground_class] > 0.5
    r = ref.values[:, foreground_class] > 0.5
    return ConfusionCounts(
        tp=int(np.sum(s & r)), fp=int(np.sum(s & ~r)),
        tn=int(np.sum(~s & ~r)), fn=int(np.sum(~s & r)))


def dsc(seg: LabelField, ref: LabelField, foreground_class: int = 1) -> float:
    """Dice score of the foreground sets; two empty sets score 1.0."""
    c = confusion(seg, ref, foreground_class)
    denom = 2 * c.tp + c.fp + c.fn
    if denom == 0:
        return 1.0
    return 2.0 * c.tp / denom


def dsc_from_arrays(seg_fg, ref_fg) -> float:
    """Dice score of two boolean foreground masks (fast path for training loops)."""
    seg_fg = np.asarray(seg_fg, dtype=bool)
    ref_fg = np.asarray(ref_fg, dtype=bool)
    if seg_fg.shape != ref_fg.shape:
        raise ValidationError(f"mask shape mismatch: {seg_fg.shape} vs {ref_fg.shape}")
    denom = int(seg_fg.sum()) + int(ref_fg.sum())
    if denom == 0:
        return 1.0
    return 2.0 * int(np.sum(seg_fg & ref_fg)) / denom


def gds(seg: LabelField, ref: LabelField, weights: GdlWeights) -> float:
    """Generalized Dice score: weighted overlap of all classes in one number."""
    check_compatible(seg, ref)
    if weights.w.size != ref.classes:
        raise ValidationError(f"{weights.w.size} weights for {ref.classes} classes")
    inter = weights.w @ np.sum(ref.values * seg.values, axis=0)
    total = weights.w @ np.sum(ref.values + seg.values, axis=0)
    return float(2.0 * inter / total)


def sensitivity_specificity(seg: LabelField, ref: LabelField) -> SensSpec:
    """True positive and true negative rates.

    An empty denominator yields 1.0 for that rate and sets ``degenerate``.
    """
    _require_binary(ref.classes)
    c = confusion(seg, ref)
    degenerate = False
    if c.tp + c.fn:
        sens = c.tp / (c.tp + c.fn)
    else:
        sens, degenerate = 1.0, True
    if c.tn + c.fp:
        spec = c.tn / (c.tn + c.fp)
    else:
        spec, degenerate = 1.0, True
    return SensSpec(sens, spec, degenerate)


def trace_stats(values, window: int = 200) -> TraceStats:
    """Median and interquartile range of the last ``window`` values.

    Quantiles use linear interpolation between order statistics.
    """
    if window < 1:
        raise ValidationError(f"window must be positive, got {window}")
    vals = np.asarray(values, dtype=np.float64).ravel()
    if vals.size < window:
        raise ValidationError(f"need at least {window} values, got {vals.size}")
    tail = vals[-window:]
    q1, med, q3 = np.quantile(tail, [0.25, 0.5, 0.75], method="linear")
    return TraceStats(float(med), float(q3 - q1), window)
