"""Segmentation losses for unbalanced problems, each returning value and gradient.

Conventions
-----------
``LossOutput.grad`` holds the partial derivatives of the loss with respect
to the probability coordinates its formula reads. The two-class losses
(WCE, DL2, SS) are written in the foreground probability ``p_n`` with the
background as ``1 - p_n``, so they read column 1 only and column 0 of their
gradient is zero. GDL reads every class column.

Because a field must stay on the simplex, gradients are compared and
applied in a simplex-preserving parametrization: move one class coordinate
and rescale the others proportionally (for two classes, the background is
the complement of the foreground). :func:`tangent_grad` maps a partial
gradient into that parametrization and :func:`finite_diff_grad` estimates
the same quantity numerically.

Two-class DL2 is implemented exactly as

    1 - (sum p r + eps) / (sum p + r + eps)
      - (sum (1-p)(1-r) + eps) / (sum 2-p-r + eps)

i.e. without the factor 2 of the usual Dice numerator. A perfect prediction
therefore scores 0 through two terms of 1/2 each.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NumericError, ValidationError
from .field import LabelField, ProbField, _require_binary, check_compatible

WCE_CLAMP = 1e-7

PREDICTION_SUM = "prediction_sum"
REFERENCE_SUM = "reference_sum"


@dataclass(frozen=True)
class LossConfig:
    epsilon: float = 1e-5
    lam: float = 0.05
    wce_weight_source: str = PREDICTION_SUM
    volume_floor: float = 1.0

    def __post_init__(self):
        # epsilon = 0 is accepted so the unstabilized formulas can be evaluated.
        if not (np.isfinite(self.epsilon) and self.epsilon >= 0):
            raise ValidationError(f"epsilon must be >= 0, got {self.epsilon}")
        if not 0.0 <= self.lam <= 1.0:
            raise ValidationError(f"lambda must be in [0, 1], got {self.lam}")
        if self.wce_weight_source not in (PREDICTION_SUM, REFERENCE_SUM):
            raise ValidationError(f"unknown WCE weight source {self.wce_weight_source!r}")
        if not self.volume_floor > 0:
            raise ValidationError(f"volume_floor must be > 0, got {self.volume_floor}")


@dataclass(frozen=True, eq=False)
class LossOutput:
    value: float
    grad: np.ndarray

    def __post_init__(self):
        if not np.isfinite(self.value) or not np.all(np.isfinite(self.grad)):
            raise NumericError("loss produced a non-finite value or gradient")


@dataclass(frozen=True, eq=False)
class GdlWeights:
    w: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64).ravel()
        if w.size < 2 or not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise ValidationError(f"GDL weights must be >= 2 positive finite values, got {w}")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    @classmethod
    def uniform(cls, classes: int) -> "GdlWeights":
        return cls(np.ones(classes))


def _two_class(p: ProbField, r: LabelField):
    check_compatible(p, r)
    _require_binary(p.classes)
    return p.values[:, 1], r.values[:, 1]


def _fg_output(value, dfg, n):
    grad = np.zeros((n, 2))
    grad[:, 1] = dfg
    return LossOutput(float(value), grad)


def wce(p: ProbField, r: LabelField, cfg: LossConfig = LossConfig()) -> LossOutput:
    """Two-class weighted cross-entropy.

    With the default ``prediction_sum`` source the foreground weight is
    ``w = (N - sum p) / sum p``, a function of the prediction, and the
    gradient differentiates through it. ``reference_sum`` uses the reference
    volume instead, which is constant in ``p``.

    Probabilities are clamped to ``[1e-7, 1 - 1e-7]`` before any log; the
    gradient is zero for clamped entries.
    """
    pf, rf = _two_class(p, r)
    n = pf.size
    inside = (pf > WCE_CLAMP) & (pf < 1.0 - WCE_CLAMP)
    pc = np.clip(pf, WCE_CLAMP, 1.0 - WCE_CLAMP)
    log_p = np.log(pc)
    fg_log = np.sum(rf * log_p)

    if cfg.wce_weight_source == PREDICTION_SUM:
        if pf.sum() <= 0.0:
            raise NumericError("degenerate WCE weight: foreground probabilities sum to 0")
        s = pc.sum()
        w = (n - s) / s
        dw = -n / s**2
    else:
        s = rf.sum()
        # With an empty reference the weighted term vanishes, so w is moot.
        w = (n - s) / s if s > 0 else 1.0
        dw = 0.0

    value = -(w * fg_log + np.sum((1.0 - rf) * np.log1p(-pc))) / n
    dfg = -(w * rf / pc - (1.0 - rf) / (1.0 - pc) + dw * fg_log) / n
    return _fg_output(value, dfg * inside, n)


def dice_loss2(p: ProbField, r: LabelField, cfg: LossConfig = LossConfig()) -> LossOutput:
    """Two-class Dice loss summing foreground and background overlap ratios.

    Each ratio lacks the usual factor 2, so it peaks at 1/2 and a perfect
    prediction scores 0. The numerators take ``epsilon / 2`` to keep that
    ceiling when a class is empty in both fields; otherwise an exact empty
    prediction would score -1/2.
    """
    pf, rf = _two_class(p, r)
    eps = cfg.epsilon
    num_fg = np.sum(pf * rf) + 0.5 * eps
    den_fg = np.sum(pf + rf) + eps
    num_bg = np.sum((1.0 - pf) * (1.0 - rf)) + 0.5 * eps
    den_bg = np.sum(2.0 - pf - rf) + eps
    if den_fg == 0.0 or den_bg == 0.0:
        raise NumericError("DL2 denominator is zero; use epsilon > 0")
    value = 1.0 - num_fg / den_fg - num_bg / den_bg
    d_fg = (rf * den_fg - num_fg) / den_fg**2
    d_bg = (-(1.0 - rf) * den_bg + num_bg) / den_bg**2
    return _fg_output(value, -d_fg - d_bg, pf.size)


def ss_loss(p: ProbField, r: LabelField, cfg: LossConfig = LossConfig()) -> LossOutput:
    """Sensitivity-specificity loss; ``cfg.lam`` weights the sensitivity side."""
    pf, rf = _two_class(p, r)
    eps, lam = cfg.epsilon, cfg.lam
    sens_den = rf.sum() + eps
    spec_den = (1.0 - rf).sum() + eps
    if sens_den == 0.0 or spec_den == 0.0:
        raise NumericError("SS denominator is zero; use epsilon > 0")
    sq = (rf - pf) ** 2
    value = lam * np.sum(sq * rf) / sens_den + (1.0 - lam) * np.sum(sq * (1.0 - rf)) / spec_den
    dfg = 2.0 * (pf - rf) * (lam * rf / sens_den + (1.0 - lam) * (1.0 - rf) / spec_den)
    return _fg_output(value, dfg, pf.size)


def gdl_weights(r: LabelField, cfg: LossConfig = LossConfig()) -> GdlWeights:
    """Inverse squared class volumes, with empty classes floored to ``volume_floor``."""
    vol = np.maximum(r.volumes(), cfg.volume_floor)
    return GdlWeights(1.0 / vol**2)


def _gdl_terms(p, r, w):
    if w.w.size != p.classes:
        raise ValidationError(f"{w.w.size} weights for {p.classes} classes")
    inter = w.w @ np.sum(r.values * p.values, axis=0)
    total = w.w @ np.sum(r.values + p.values, axis=0)
    if not total > 0:
        raise NumericError(f"GDL denominator is {total}, must be positive")
    return inter, total


def gdl(p: ProbField, r: LabelField, w: GdlWeights | None = None,
        cfg: LossConfig = LossConfig()) -> LossOutput:
    """Generalized Dice loss over any number of classes.

    ``w`` defaults to the volume-inverse weights of ``r``. Weights are held
    constant when differentiating.
    """
    check_compatible(p, r)
    if w is None:
        w = gdl_weights(r, cfg)
    inter, total = _gdl_terms(p, r, w)
    value = 1.0 - 2.0 * inter / total
    grad = -2.0 * w.w[None, :] * (r.values * total - inter) / total**2
    return LossOutput(float(value), grad)


def gdl_uniform(p, r, cfg=LossConfig()):
    return gdl(p, r, GdlWeights.uniform(p.classes), cfg)


def gdl_v(p, r, cfg=LossConfig()):
    return gdl(p, r, gdl_weights(r, cfg), cfg)


def gdl_grad_closed_form(p: ProbField, r: LabelField, w1: float, w2: float) -> np.ndarray:
    """Two-class GDL gradient in the foreground probabilities, in closed form.

    ``w1`` weights the foreground class and ``w2`` the background. Each
    element's background probability is the complement of its foreground
    one. The leading factor is ``+2``; with ``-2`` the same expression is
    the gradient of the overlap score ``1 - GDL`` instead.
    """
    pf, rf = _two_class(p, r)
    n = pf.size
    overlap = np.sum(pf * rf)
    total = np.sum(pf + rf)
    den = ((w1 - w2) * total + 2.0 * n * w2) ** 2
    if den == 0.0:
        raise NumericError("closed-form GDL gradient has a zero denominator")
    num = (w1**2 - w2**2) * (overlap - rf * total) + n * w2 * (w1 + w2) * (1.0 - 2.0 * rf)
    return 2.0 * num / den


LOSSES: dict[str, Callable[..., LossOutput]] = {
    "wce": wce,
    "dl2": dice_loss2,
    "ss": ss_loss,
    "gdl_v": gdl_v,
    "gdl_uniform": gdl_uniform,
}

_ALIASES = {"gdl": "gdl_v", "gdlv": "gdl_v", "dl": "dl2", "dice": "dl2"}


def get_loss(name: str) -> Callable[..., LossOutput]:
    key = name.lower().replace("-", "_")
    key = _ALIASES.get(key, key)
    try:
        return LOSSES[key]
    except KeyError:
        raise ValidationError(
            f"unknown loss {name!r}; choose from {', '.join(sorted(LOSSES))}") from None


def canonical_loss_name(name: str) -> str:
    key = name.lower().replace("-", "_")
    key = _ALIASES.get(key, key)
    get_loss(key)
    return key


def tangent_grad(grad: np.ndarray, p: ProbField) -> np.ndarray:
    """Directional derivatives along the simplex-preserving coordinate moves.

    Entry ``(n, k)`` is the derivative of the loss when ``p[n, k]`` moves and
    the other classes of element ``n`` are rescaled to keep the sum at 1.
    For two classes this is ``grad[:, k] - grad[:, 1 - k]``.
    """
    vals = p.values
    grad = np.asarray(grad, dtype=np.float64)
    out = np.empty_like(grad)
    weighted = (grad * vals).sum(axis=1)
    for k in range(vals.shape[1]):
        rest = 1.0 - vals[:, k]
        mix = weighted - grad[:, k] * vals[:, k]
        with np.errstate(divide="ignore", invalid="ignore"):
            out[:, k] = grad[:, k] - np.where(rest > 0, mix / rest, 0.0)
    return out


class FiniteDiffSkipWarning(UserWarning):
    pass


def _loss_value(loss, p, r, cfg):
    out = loss(p, r, cfg)
    return float(out.value if isinstance(out, LossOutput) else out)


def _move(vals, n, k, t):
    row = vals[n].copy()
    rest = 1.0 - row[k]
    row[k] += t
    scale = (rest - t) / rest
    mask = np.arange(row.size) != k
    row[mask] *= scale
    return row


def finite_diff_grad(loss, p: ProbField, r: LabelField, cfg: LossConfig = LossConfig(),
                     h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient in the simplex-preserving parametrization.

    ``loss(p, r, cfg)`` may return a :class:`LossOutput` or a plain number.
    Coordinates whose perturbation would leave ``[0, 1]`` are skipped: their
    entries are NaN and a :class:`FiniteDiffSkipWarning` lists them.
    """
    if not h > 0:
        raise ValidationError(f"step h must be > 0, got {h}")
    vals = np.array(p.values)
    n_el, n_cls = vals.shape
    out = np.full((n_el, n_cls), np.nan)
    skipped = []
    for n in range(n_el):
        for k in range(n_cls):
            pk = vals[n, k]
            if pk - h < 0.0 or pk + h > 1.0 or 1.0 - pk <= 0.0:
                skipped.append((n, k))
                continue
            orig = vals[n].copy()
            vals[n] = _move(vals, n, k, h)
            f_plus = _loss_value(loss, ProbField(p.shape, vals), r, cfg)
            vals[n] = orig
            vals[n] = _move(vals, n, k, -h)
            f_minus = _loss_value(loss, ProbField(p.shape, vals), r, cfg)
            vals[n] = orig
            out[n, k] = (f_plus - f_minus) / (2.0 * h)
    if skipped:
        warnings.warn(
            f"skipped {len(skipped)} coordinate(s) at the domain boundary: {skipped[:10]}",
            FiniteDiffSkipWarning, stacklevel=2)
    return out


def relative_error(a, b) -> float:
    """Max-norm relative error ``max|a-b| / max(max|a|, max|b|)``, NaNs ignored."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    ok = np.isfinite(a) & np.isfinite(b)
    a, b = a[ok], b[ok]
    if a.size == 0:
        return 0.0
    scale = max(np.abs(a).max(), np.abs(b).max())
    if scale == 0.0:
        return 0.0
    return float(np.abs(a - b).max() / scale)
