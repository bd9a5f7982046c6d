"""Label and probability fields over 2D/3D grids.

Both field types store a flat ``(N, L)`` array in C (row-major) element
order, so every loss can index elements with a single flat ``n`` no matter
whether the grid is 2D or 3D. For two-class fields column 0 is background
and column 1 is foreground.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import prod

import numpy as np

from .errors import ValidationError

SIMPLEX_TOL = 1e-6


@dataclass(frozen=True)
class GridShape:
    dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) not in (2, 3):
            raise ValidationError(f"grid must be 2D or 3D, got dims {dims}")
        if any(d < 1 for d in dims):
            raise ValidationError(f"grid extents must be >= 1, got {dims}")
        object.__setattr__(self, "dims", dims)

    @property
    def element_count(self) -> int:
        return prod(self.dims)

    @classmethod
    def coerce(cls, shape) -> "GridShape":
        if isinstance(shape, GridShape):
            return shape
        if isinstance(shape, (int, np.integer)):
            # A bare element count is treated as an N x 1 grid.
            return cls((int(shape), 1))
        return cls(tuple(shape))


def _frozen(values, dtype):
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class LabelField:
    """One-hot reference segmentation ``r[n, l]``."""

    shape: GridShape
    values: np.ndarray

    def __post_init__(self):
        shape = GridShape.coerce(self.shape)
        object.__setattr__(self, "shape", shape)
        vals = np.asarray(self.values)
        if vals.ndim != 2 or vals.shape[0] != shape.element_count:
            raise ValidationError(
                f"label values must be ({shape.element_count}, L), got {vals.shape}")
        if vals.shape[1] < 2:
            raise ValidationError(f"need at least 2 classes, got {vals.shape[1]}")
        if not np.all((vals == 0) | (vals == 1)):
            raise ValidationError("label values must be exactly 0 or 1")
        bad = np.flatnonzero(vals.sum(axis=1) != 1)
        if bad.size:
            raise ValidationError(
                f"element {bad[0]} has {int(vals[bad[0]].sum())} active classes, expected 1")
        object.__setattr__(self, "values", _frozen(vals, np.float64))

    @property
    def classes(self) -> int:
        return self.values.shape[1]

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def indices(self) -> np.ndarray:
        """Decode back to integer class indices (flat order)."""
        return np.argmax(self.values, axis=1)

    def volumes(self) -> np.ndarray:
        """Per-class element counts."""
        return self.values.sum(axis=0)

    def as_probs(self) -> "ProbField":
        """Embed the hard labels as a (degenerate) probability field."""
        return ProbField(self.shape, self.values)

    def permuted(self, order) -> "LabelField":
        return LabelField(self.shape, self.values[np.asarray(order)])

    def __repr__(self):
        return f"LabelField(dims={self.shape.dims}, classes={self.classes})"


@dataclass(frozen=True, eq=False)
class ProbField:
    """Class-probability map ``p[n, l]`` on the simplex.

    Fields off the simplex (beyond ``SIMPLEX_TOL``) are rejected, never
    renormalized.
    """

    shape: GridShape
    values: np.ndarray

    def __post_init__(self):
        shape = GridShape.coerce(self.shape)
        object.__setattr__(self, "shape", shape)
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 2 or vals.shape[0] != shape.element_count:
            raise ValidationError(
                f"probability values must be ({shape.element_count}, L), got {vals.shape}")
        if vals.shape[1] < 2:
            raise ValidationError(f"need at least 2 classes, got {vals.shape[1]}")
        if not np.all(np.isfinite(vals)):
            raise ValidationError("probabilities must be finite")
        if vals.min() < 0.0 or vals.max() > 1.0:
            raise ValidationError("probabilities must lie in [0, 1]")
        dev = np.abs(vals.sum(axis=1) - 1.0)
        if dev.max() > SIMPLEX_TOL:
            n = int(np.argmax(dev))
            raise ValidationError(
                f"element {n} sums to {vals[n].sum():.9g}, off the simplex by more than {SIMPLEX_TOL}")
        object.__setattr__(self, "values", _frozen(vals, np.float64))

    @property
    def classes(self) -> int:
        return self.values.shape[1]

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def foreground(self) -> np.ndarray:
        """Foreground column of a two-class field."""
        _require_binary(self.classes)
        return self.values[:, 1]

    @classmethod
    def from_foreground(cls, shape, p_fg) -> "ProbField":
        """Build a two-class field from foreground probabilities (background = 1 - p)."""
        p_fg = np.asarray(p_fg, dtype=np.float64).ravel()
        return cls(shape, np.stack([1.0 - p_fg, p_fg], axis=1))

    def permuted(self, order) -> "ProbField":
        return ProbField(self.shape, self.values[np.asarray(order)])

    def __repr__(self):
        return f"ProbField(dims={self.shape.dims}, classes={self.classes})"


def _require_binary(classes):
    if classes != 2:
        raise ValidationError(f"operation supports 2 classes only, got {classes}")


def onehot_encode(labels, classes: int, shape=None) -> LabelField:
    """One-hot encode integer class indices.

    ``labels`` may be flat or shaped like the grid; ``shape`` defaults to the
    array's own shape (or ``(N, 1)`` for a flat sequence).
    """
    arr = np.asarray(labels)
    if shape is None:
        shape = arr.shape if arr.ndim in (2, 3) else arr.size
    flat = arr.ravel()
    if flat.size and not np.issubdtype(flat.dtype, np.integer):
        if not np.all(np.equal(np.mod(flat, 1), 0)):
            raise ValidationError("labels must be integer class indices")
    flat = flat.astype(np.int64)
    bad = np.flatnonzero((flat < 0) | (flat >= classes))
    if bad.size:
        raise ValidationError(
            f"label {flat[bad[0]]} at element {bad[0]} is outside [0, {classes})")
    values = np.zeros((flat.size, classes))
    values[np.arange(flat.size), flat] = 1.0
    return LabelField(GridShape.coerce(shape), values)


def foreground_fraction(field: LabelField, foreground_class: int = 1) -> float:
    if not 0 <= foreground_class < field.classes:
        raise ValidationError(
            f"foreground class {foreground_class} outside [0, {field.classes})")
    return float(field.values[:, foreground_class].sum() / field.n)


def binarize(probs: ProbField, threshold: float = 0.5) -> LabelField:
    """Hard two-class labels; an element is foreground iff ``p_fg >= threshold``."""
    _require_binary(probs.classes)
    if not 0.0 < threshold < 1.0:
        raise ValidationError(f"threshold must be in (0, 1), got {threshold}")
    fg = (probs.values[:, 1] >= threshold).astype(np.int64)
    return onehot_encode(fg, 2, probs.shape)


def check_compatible(a, b):
    """Raise unless two fields share grid and class count."""
    if a.shape != b.shape or a.classes != b.classes:
        raise ValidationError(
            f"field mismatch: {a.shape.dims}x{a.classes} vs {b.shape.dims}x{b.classes}")
