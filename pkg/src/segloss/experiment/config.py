"""Flat ``key = value`` configuration files.

One setting per line; ``#`` starts a comment; blank lines are ignored.
Lists are comma-separated and grid extents use ``x`` (``64x64``). Patch
size entries are ``LABEL:DIMS:BATCH`` (``S:16x16:16``). Unknown keys are
rejected so typos fail loudly.

Recognized keys
---------------
data:      dims, fg_fraction, radius_min, radius_max, intensity_fg,
           intensity_bg, noise_sigma, data_seed
loss:      epsilon, lambda, wce_weight_source, volume_floor
model:     window, hidden_units
training:  loss, learning_rate, iterations, batch, patch, seed, optimizer,
           strict_rates
sweep:     losses, learning_rates, patch_sizes, repeats, workers, stats_window
"""

from __future__ import annotations

from ..errors import ValidationError
from ..losses import LossConfig
from ..synth import SynthConfig

DATA_KEYS = {"dims", "fg_fraction", "radius_min", "radius_max", "intensity_fg",
             "intensity_bg", "noise_sigma", "data_seed"}
LOSS_KEYS = {"epsilon", "lambda", "wce_weight_source", "volume_floor"}
MODEL_KEYS = {"window", "hidden_units"}
TRAIN_KEYS = {"loss", "learning_rate", "iterations", "batch", "patch", "seed",
              "optimizer", "strict_rates"}
SWEEP_KEYS = {"losses", "learning_rates", "patch_sizes", "iterations", "repeats",
              "workers", "stats_window", "optimizer"}


def parse_text(text: str) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"line {lineno}: expected key = value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ValidationError(f"line {lineno}: empty key")
        if key in out:
            raise ValidationError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def read_config(path) -> dict[str, str]:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_text(fh.read())
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc.strerror}") from exc


def check_keys(cfg: dict, allowed: set) -> None:
    unknown = sorted(set(cfg) - allowed)
    if unknown:
        raise ValidationError(f"unknown config key(s): {', '.join(unknown)}")


def _num(cfg, key, kind, default):
    if key not in cfg:
        return default
    try:
        return kind(cfg[key])
    except ValueError:
        raise ValidationError(f"{key}: cannot parse {cfg[key]!r} as {kind.__name__}") from None


def _bool(cfg, key, default):
    if key not in cfg:
        return default
    val = cfg[key].lower()
    if val in ("1", "true", "yes", "on"):
        return True
    if val in ("0", "false", "no", "off"):
        return False
    raise ValidationError(f"{key}: expected a boolean, got {cfg[key]!r}")


def parse_dims(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(p) for p in text.replace(",", "x").split("x"))
    except ValueError:
        raise ValidationError(f"cannot parse grid extents {text!r}") from None


def format_dims(dims) -> str:
    return "x".join(str(d) for d in dims)


def parse_list(text: str) -> list[str]:
    return [p.strip() for p in text.split(",") if p.strip()]


def synth_config(cfg: dict, default: SynthConfig = SynthConfig()) -> SynthConfig:
    return SynthConfig(
        dims=parse_dims(cfg["dims"]) if "dims" in cfg else default.dims,
        target_fg_fraction=_num(cfg, "fg_fraction", float, default.target_fg_fraction),
        lesion_radius_range=(
            _num(cfg, "radius_min", float, default.lesion_radius_range[0]),
            _num(cfg, "radius_max", float, default.lesion_radius_range[1])),
        intensity_fg=_num(cfg, "intensity_fg", float, default.intensity_fg),
        intensity_bg=_num(cfg, "intensity_bg", float, default.intensity_bg),
        noise_sigma=_num(cfg, "noise_sigma", float, default.noise_sigma),
        seed=_num(cfg, "data_seed", int, default.seed),
    )


def loss_config(cfg: dict, default: LossConfig = LossConfig()) -> LossConfig:
    return LossConfig(
        epsilon=_num(cfg, "epsilon", float, default.epsilon),
        lam=_num(cfg, "lambda", float, default.lam),
        wce_weight_source=cfg.get("wce_weight_source", default.wce_weight_source),
        volume_floor=_num(cfg, "volume_floor", float, default.volume_floor),
    )


def model_options(cfg: dict) -> dict:
    return {"window": _num(cfg, "window", int, 1),
            "hidden_units": _num(cfg, "hidden_units", int, 8)}


def train_setup(cfg: dict):
    """Build ``(SynthConfig, TrainConfig, model options)`` from a train config."""
    from ..trainer import TrainConfig

    check_keys(cfg, DATA_KEYS | LOSS_KEYS | MODEL_KEYS | TRAIN_KEYS)
    data = synth_config(cfg)
    default_iters = 1000 if len(data.dims) == 2 else 3000
    patch = parse_dims(cfg["patch"]) if "patch" in cfg else tuple(min(32, d) for d in data.dims)
    train = TrainConfig(
        learning_rate=_num(cfg, "learning_rate", float, 1e-4),
        iterations=_num(cfg, "iterations", int, default_iters),
        batch=_num(cfg, "batch", int, 4),
        patch_dims=patch,
        loss=cfg.get("loss", "gdl_v"),
        seed=_num(cfg, "seed", int, 0),
        loss_config=loss_config(cfg),
        optimizer=cfg.get("optimizer", "adam"),
        strict_rates=_bool(cfg, "strict_rates", False),
    )
    return data, train, model_options(cfg)


def synth_setup(cfg: dict) -> SynthConfig:
    check_keys(cfg, DATA_KEYS)
    return synth_config(cfg)
