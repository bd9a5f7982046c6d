"""Deterministic synthetic volumes with sparse blob-shaped foreground.

Randomness comes from NumPy's PCG64 bit generator (``numpy.random.Generator``),
seeded explicitly everywhere; nothing reads global random state. Given the
same NumPy version, identical seed and config give bit-identical output.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from math import prod

import numpy as np

from .errors import NumericError, ValidationError
from .field import GridShape, LabelField, onehot_encode

REJECTION_CAP = 10_000
FRACTION_TOLERANCE = 0.25
PLACEMENT_CAP = 100_000


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(int(seed)))


@dataclass(frozen=True)
class SynthConfig:
    dims: tuple[int, ...] = (64, 64)
    target_fg_fraction: float = 0.05
    lesion_radius_range: tuple[float, float] = (2.0, 5.0)
    intensity_fg: float = 1.0
    intensity_bg: float = 0.0
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "dims", GridShape(tuple(self.dims)).dims)
        lo, hi = (float(x) for x in self.lesion_radius_range)
        object.__setattr__(self, "lesion_radius_range", (lo, hi))
        if not 0.0 < self.target_fg_fraction <= 0.5:
            raise ValidationError(
                f"target_fg_fraction must be in (0, 0.5], got {self.target_fg_fraction}")
        if lo < 1 or hi < lo:
            raise ValidationError(f"bad lesion radius range {self.lesion_radius_range}")
        if self.noise_sigma < 0:
            raise ValidationError(f"noise_sigma must be >= 0, got {self.noise_sigma}")


@dataclass(frozen=True, eq=False)
class Volume:
    features: np.ndarray
    labels: LabelField
    meta: SynthConfig | None = None

    def __post_init__(self):
        if tuple(self.features.shape) != self.labels.shape.dims:
            raise ValidationError(
                f"features {self.features.shape} and labels {self.labels.shape.dims} differ in shape")

    @property
    def dims(self):
        return self.labels.shape.dims

    def label_grid(self) -> np.ndarray:
        """Foreground indicator reshaped to the grid."""
        return self.labels.values[:, 1].reshape(self.dims)


@dataclass(frozen=True, eq=False)
class Patch:
    features: np.ndarray
    labels: LabelField
    corner: tuple[int, ...] = dc_field(default=())


def _blob_slices(center, radius, dims):
    slices, axes = [], []
    for c, d in zip(center, dims):
        lo = max(0, int(np.floor(c - radius)))
        hi = min(d, int(np.ceil(c + radius)) + 1)
        slices.append(slice(lo, hi))
        axes.append(np.arange(lo, hi) - c)
    grids = np.meshgrid(*axes, indexing="ij")
    inside = sum(g**2 for g in grids) <= radius**2
    return tuple(slices), inside


def _place_lesions(cfg: SynthConfig, rng) -> np.ndarray:
    dims = cfg.dims
    n = prod(dims)
    target = cfg.target_fg_fraction * n
    lo_ok = (1.0 - FRACTION_TOLERANCE) * target
    hi_ok = (1.0 + FRACTION_TOLERANCE) * target
    mask = np.zeros(dims, dtype=bool)
    count = 0
    r_lo, r_hi = cfg.lesion_radius_range
    for _ in range(PLACEMENT_CAP):
        if count >= lo_ok:
            break
        center = rng.uniform(0, dims)
        radius = rng.uniform(r_lo, r_hi)
        sl, inside = _blob_slices(center, radius, dims)
        added = int(np.sum(inside & ~mask[sl]))
        if added == 0 or count + added > hi_ok:
            continue
        mask[sl] |= inside
        count += added
    if not lo_ok <= count <= hi_ok:
        raise ValidationError(
            f"could not reach foreground fraction {cfg.target_fg_fraction:g}: "
            f"achieved {count / n:.6g} with radii {cfg.lesion_radius_range}")
    return mask


def generate_volume(cfg: SynthConfig) -> Volume:
    """Place spherical (3D) or circular (2D) lesions and draw noisy intensities.

    Lesions are added at random until the foreground fraction is within 25%
    of the target; a lesion that would overshoot the band is discarded.
    """
    rng = make_rng(cfg.seed)
    mask = _place_lesions(cfg, rng)
    noise = rng.standard_normal(cfg.dims)
    means = np.where(mask, cfg.intensity_fg, cfg.intensity_bg)
    features = means + cfg.noise_sigma * noise
    labels = onehot_encode(mask.astype(np.int64), 2, cfg.dims)
    return Volume(features, labels, cfg)


def zscore_normalize(features, mask=None) -> np.ndarray:
    """Affine map giving zero mean and unit standard deviation over ``mask``."""
    x = np.asarray(features, dtype=np.float64)
    sel = x[np.asarray(mask, dtype=bool)] if mask is not None else x.ravel()
    if sel.size == 0:
        raise ValidationError("normalization mask is empty")
    mu = sel.mean()
    sd = sel.std()
    if not sd > 0:
        raise NumericError("zero variance over the normalization mask")
    return (x - mu) / sd


def _integral(grid):
    out = np.asarray(grid, dtype=np.int64)
    for ax in range(out.ndim):
        out = out.cumsum(axis=ax)
    return np.pad(out, [(1, 0)] * out.ndim)


def _box_sum(integral, corner, size):
    # inclusion-exclusion over the 2^d box corners
    total = 0
    d = len(corner)
    for bits in range(1 << d):
        idx, sign = [], 1
        for ax in range(d):
            if bits >> ax & 1:
                idx.append(corner[ax] + size[ax])
            else:
                idx.append(corner[ax])
                sign = -sign
        total += sign * integral[tuple(idx)]
    return total


def sample_patches(vol: Volume, patch_dims, batch: int, seed) -> list[Patch]:
    """Draw ``batch`` patches, each holding at least one foreground element.

    Corners are drawn uniformly and rejected until the patch holds
    foreground, up to 10,000 attempts per patch.
    """
    dims = vol.dims
    patch_dims = tuple(int(p) for p in patch_dims)
    if len(patch_dims) != len(dims) or any(p < 1 or p > d for p, d in zip(patch_dims, dims)):
        raise ValidationError(f"patch {patch_dims} does not fit volume {dims}")
    if batch < 1:
        raise ValidationError(f"batch must be >= 1, got {batch}")
    fg = vol.label_grid()
    if not fg.any():
        raise ValidationError("volume has no foreground to sample around")
    integral = _integral(fg)
    rng = make_rng(seed)
    high = np.array(dims) - np.array(patch_dims) + 1
    patches = []
    for _ in range(batch):
        for attempt in range(REJECTION_CAP):
            corner = tuple(int(c) for c in rng.integers(0, high))
            if _box_sum(integral, corner, patch_dims) > 0:
                break
        else:
            raise NumericError(
                f"no foreground patch found after {REJECTION_CAP} attempts")
        sl = tuple(slice(c, c + p) for c, p in zip(corner, patch_dims))
        labels = onehot_encode(fg[sl].astype(np.int64), 2, patch_dims)
        patches.append(Patch(np.array(vol.features[sl]), labels, corner))
    return patches
