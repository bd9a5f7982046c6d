"""A per-voxel classifier trained by gradient descent under any of the losses.

The model looks at a small mirror-padded window around each element,
applies one tanh hidden layer and a sigmoid output giving the foreground
probability. Backpropagation is written out by hand; the loss gradient is
taken from :mod:`segloss.losses` and mapped into the two-class
parametrization (background is the complement of the foreground).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from math import prod

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import losses as L
from .errors import DivergenceError, NumericError, ValidationError
from .field import LabelField, ProbField
from .metrics import dsc_from_arrays
from .synth import Volume, make_rng, sample_patches, zscore_normalize

PROTOCOL_LEARNING_RATES = (1e-3, 1e-4, 1e-5)
PARAM_NAMES = ("weights_in", "bias_in", "weights_out", "bias_out")
OPTIMIZERS = ("adam", "sgd")
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


@dataclass
class PixelModel:
    window: int
    channels: int
    hidden_units: int
    weights_in: np.ndarray
    bias_in: np.ndarray
    weights_out: np.ndarray
    bias_out: float
    ndim: int = 2

    @classmethod
    def init(cls, seed, window=1, channels=1, hidden_units=8, ndim=2, scale=0.1):
        if window < 1 or window % 2 == 0:
            raise ValidationError(f"window must be odd and positive, got {window}")
        rng = make_rng(seed)
        n_in = window**ndim * channels
        return cls(
            window=window, channels=channels, hidden_units=hidden_units,
            weights_in=rng.uniform(-scale, scale, (n_in, hidden_units)),
            bias_in=rng.uniform(-scale, scale, hidden_units),
            weights_out=rng.uniform(-scale, scale, hidden_units),
            bias_out=float(rng.uniform(-scale, scale)),
            ndim=ndim)

    def params(self) -> dict:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def copy(self) -> "PixelModel":
        return replace(self, weights_in=self.weights_in.copy(), bias_in=self.bias_in.copy(),
                       weights_out=self.weights_out.copy())


@dataclass
class Gradients:
    weights_in: np.ndarray
    bias_in: np.ndarray
    weights_out: np.ndarray
    bias_out: float


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    iterations: int = 1000
    batch: int = 4
    patch_dims: tuple[int, ...] = (32, 32)
    loss: str = "gdl_v"
    seed: int = 0
    loss_config: L.LossConfig = field(default_factory=L.LossConfig)
    optimizer: str = "adam"
    strict_rates: bool = False

    def __post_init__(self):
        object.__setattr__(self, "loss", L.canonical_loss_name(self.loss))
        object.__setattr__(self, "patch_dims", tuple(int(p) for p in self.patch_dims))
        if not self.learning_rate >= 0:
            raise ValidationError(f"learning rate must be >= 0, got {self.learning_rate}")
        if self.strict_rates and not any(
                np.isclose(self.learning_rate, lr, rtol=1e-12, atol=0) for lr in PROTOCOL_LEARNING_RATES):
            raise ValidationError(
                f"learning rate {self.learning_rate} not in {PROTOCOL_LEARNING_RATES}")
        if self.optimizer not in OPTIMIZERS:
            raise ValidationError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if self.iterations < 1 or self.batch < 1:
            raise ValidationError("iterations and batch must be positive")


@dataclass
class TrainTrace:
    iterations: list = field(default_factory=list)
    loss_values: list = field(default_factory=list)
    batch_dsc: list = field(default_factory=list)
    model: PixelModel | None = None
    diverged_at: int | None = None
    message: str = ""

    @property
    def diverged(self) -> bool:
        return self.diverged_at is not None

    def append(self, it, loss, dsc):
        self.iterations.append(it)
        self.loss_values.append(loss)
        self.batch_dsc.append(dsc)

    def to_csv(self) -> str:
        lines = ["iteration,loss,dsc"]
        for it, lv, d in zip(self.iterations, self.loss_values, self.batch_dsc):
            lines.append(f"{it},{lv:.9g},{d:.6f}")
        return "\n".join(lines) + "\n"


class _Optimizer:
    """Plain SGD or Adam over the four parameter blocks."""

    def __init__(self, kind, lr):
        self.kind = kind
        self.lr = lr
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, model, grads):
        self.t += 1
        b1, b2 = ADAM_BETAS
        for name in PARAM_NAMES:
            g = np.asarray(getattr(grads, name), dtype=np.float64)
            if not np.all(np.isfinite(g)):
                raise DivergenceError(f"non-finite gradient in {name}")
            if self.kind == "sgd":
                delta = g
            else:
                m = b1 * self.m.get(name, 0.0) + (1 - b1) * g
                v = b2 * self.v.get(name, 0.0) + (1 - b2) * g * g
                self.m[name], self.v[name] = m, v
                m_hat = m / (1 - b1**self.t)
                v_hat = v / (1 - b2**self.t)
                delta = m_hat / (np.sqrt(v_hat) + ADAM_EPS)
            new = getattr(model, name) - self.lr * delta
            setattr(model, name, float(new) if name == "bias_out" else new)


def _features_matrix(model: PixelModel, features) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    if model.channels == 1 and x.ndim == model.ndim:
        x = x[..., None]
    if x.ndim != model.ndim + 1 or x.shape[-1] != model.channels:
        raise ValidationError(
            f"features of shape {x.shape} do not match a {model.ndim}D model with "
            f"{model.channels} channel(s)")
    pad = model.window // 2
    padded = np.pad(x, [(pad, pad)] * model.ndim + [(0, 0)], mode="symmetric")
    view = sliding_window_view(padded, (model.window,) * model.ndim,
                               axis=tuple(range(model.ndim)))
    rows = view.reshape(prod(x.shape[:model.ndim]), -1)
    if rows.shape[1] != model.weights_in.shape[0]:
        raise ValidationError(
            f"window rows have {rows.shape[1]} inputs, model expects {model.weights_in.shape[0]}")
    return rows


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _forward_rows(model: PixelModel, rows):
    hidden = np.tanh(rows @ model.weights_in + model.bias_in)
    z = hidden @ model.weights_out + model.bias_out
    p = _sigmoid(z)
    if not np.all(np.isfinite(p)):
        block = "weights_in" if not np.all(np.isfinite(hidden)) else "weights_out"
        raise NumericError(f"non-finite activation in {block}")
    return hidden, p


def forward(model: PixelModel, features) -> ProbField:
    """Foreground probability at every element of a patch."""
    rows = _features_matrix(model, features)
    _, p = _forward_rows(model, rows)
    dims = np.shape(features)[:model.ndim]
    return ProbField.from_foreground(dims if len(dims) in (2, 3) else p.size, p)


def _backward_rows(model, rows, hidden, p, dp_fg) -> Gradients:
    dz = dp_fg * p * (1.0 - p)
    dhidden = np.outer(dz, model.weights_out) * (1.0 - hidden**2)
    return Gradients(
        weights_in=rows.T @ dhidden,
        bias_in=dhidden.sum(axis=0),
        weights_out=hidden.T @ dz,
        bias_out=float(dz.sum()))


def backward(model: PixelModel, features, loss_grad) -> Gradients:
    """Parameter gradients given ``d loss / d p`` on the forward output.

    ``loss_grad`` is an ``(N, 2)`` partial-derivative array as returned by
    the losses, or an ``(N,)`` array already expressed in the foreground
    probability with the background as its complement.
    """
    rows = _features_matrix(model, features)
    hidden, p = _forward_rows(model, rows)
    g = np.asarray(loss_grad, dtype=np.float64)
    if g.ndim == 2 and g.shape == (p.size, 2):
        g = g[:, 1] - g[:, 0]
    elif g.shape != (p.size,):
        raise ValidationError(f"loss gradient shape {g.shape} does not match {p.size} elements")
    return _backward_rows(model, rows, hidden, p, g)


def _batch_arrays(model, patches):
    rows = np.concatenate([_features_matrix(model, pt.features) for pt in patches])
    ref = np.concatenate([pt.labels.values for pt in patches])
    return rows, ref


def _iteration_seed(seed, it):
    return int(np.random.SeedSequence([int(seed), int(it)]).generate_state(1, np.uint64)[0])


def _normalized(data: Volume) -> Volume:
    return Volume(zscore_normalize(data.features), data.labels, data.meta)


def train(model: PixelModel, data: Volume, cfg: TrainConfig, normalize: bool = True) -> TrainTrace:
    """Run ``cfg.iterations`` update steps and record loss and batch DSC each step.

    Updates use Adam by default (``cfg.optimizer="sgd"`` gives plain
    ``theta -= lr * grad``). Features are z-scored over the whole volume first (unless
    ``normalize=False``). A non-finite loss, gradient or parameter ends the
    run early; the trace then has ``diverged_at`` set rather than raising.
    """
    if not data.labels.values[:, 1].any():
        raise ValidationError("training volume has no foreground")
    if len(cfg.patch_dims) != model.ndim:
        raise ValidationError(f"{len(cfg.patch_dims)}D patches for a {model.ndim}D model")
    if normalize:
        data = _normalized(data)
    model = model.copy()
    loss_fn = L.get_loss(cfg.loss)
    opt = _Optimizer(cfg.optimizer, cfg.learning_rate)
    trace = TrainTrace()
    for it in range(1, cfg.iterations + 1):
        patches = sample_patches(data, cfg.patch_dims, cfg.batch, _iteration_seed(cfg.seed, it))
        rows, ref_vals = _batch_arrays(model, patches)
        ref = LabelField(ref_vals.shape[0], ref_vals)
        try:
            with np.errstate(over="raise", invalid="raise", divide="raise"):
                hidden, p = _forward_rows(model, rows)
                probs = ProbField.from_foreground(p.size, p)
                out = loss_fn(probs, ref, cfg.loss_config)
                dp = out.grad[:, 1] - out.grad[:, 0]
                grads = _backward_rows(model, rows, hidden, p, dp)
                opt.step(model, grads)
        except (NumericError, FloatingPointError) as exc:
            trace.diverged_at = it
            trace.message = str(exc)
            break
        trace.append(it, out.value, dsc_from_arrays(p >= 0.5, ref_vals[:, 1] > 0.5))
    trace.model = model
    return trace
