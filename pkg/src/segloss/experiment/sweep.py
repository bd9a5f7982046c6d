"""Learning-rate x patch-size x loss sweeps and their exported result grids."""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

from ..errors import ValidationError
from ..losses import LossConfig, canonical_loss_name
from ..metrics import trace_stats
from ..synth import SynthConfig, generate_volume
from ..trainer import PixelModel, TrainConfig, train
from . import config as C

CSV_COLUMNS = ("loss", "lr", "patch", "seed", "median_dsc", "iqr_dsc", "diverged")
DEFAULT_WINDOW = 200


@dataclass(frozen=True)
class PatchSpec:
    label: str
    dims: tuple[int, ...]
    batch: int

    def __str__(self):
        return f"{self.label}:{C.format_dims(self.dims)}:{self.batch}"


PATCHES_2D = (PatchSpec("S", (16, 16), 16), PatchSpec("M", (32, 32), 8),
              PatchSpec("L", (64, 64), 2))
PATCHES_3D = (PatchSpec("S", (16, 16, 16), 16), PatchSpec("M", (24, 24, 24), 8),
              PatchSpec("L", (32, 32, 32), 2))

DEFAULT_DATA = SynthConfig(dims=(96, 96), target_fg_fraction=0.01,
                           lesion_radius_range=(2.0, 5.0), noise_sigma=0.25, seed=0)


@dataclass(frozen=True)
class SweepConfig:
    learning_rates: tuple[float, ...] = (1e-3, 1e-4, 1e-5)
    patch_sizes: tuple[PatchSpec, ...] = PATCHES_2D
    losses: tuple[str, ...] = ("wce", "dl2", "ss", "gdl_v")
    iterations: int = 1000
    repeats: int = 3
    data: SynthConfig = DEFAULT_DATA
    loss_config: LossConfig = field(default_factory=LossConfig)
    window: int = 1
    hidden_units: int = 8
    optimizer: str = "adam"
    stats_window: int = DEFAULT_WINDOW
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "losses", tuple(canonical_loss_name(x) for x in self.losses))
        if not (self.learning_rates and self.patch_sizes and self.losses):
            raise ValidationError("learning_rates, patch_sizes and losses must be non-empty")
        if self.iterations <= self.stats_window:
            raise ValidationError(
                f"iterations ({self.iterations}) must exceed the stats window ({self.stats_window})")
        if self.repeats < 1 or self.workers < 1:
            raise ValidationError("repeats and workers must be positive")
        labels = [p.label for p in self.patch_sizes]
        if len(set(labels)) != len(labels):
            raise ValidationError(f"duplicate patch labels {labels}")
        for p in self.patch_sizes:
            if len(p.dims) != len(self.data.dims) or any(a > b for a, b in zip(p.dims, self.data.dims)):
                raise ValidationError(f"patch {p} does not fit data dims {self.data.dims}")

    @classmethod
    def for_3d(cls, **kw):
        data = kw.pop("data", SynthConfig(dims=(48, 48, 48), target_fg_fraction=0.002,
                                          lesion_radius_range=(1.0, 3.0), noise_sigma=0.25))
        kw.setdefault("patch_sizes", PATCHES_3D)
        kw.setdefault("iterations", 3000)
        return cls(data=data, **kw)


@dataclass(frozen=True)
class CellRecord:
    loss: str
    lr: float
    patch: str
    seed: int
    median_dsc: float | None
    iqr_dsc: float | None
    diverged: bool

    def sort_key(self):
        return (self.loss, self.lr, self.patch, self.seed)


@dataclass(frozen=True)
class SweepGrid:
    records: tuple[CellRecord, ...]

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(sorted(self.records, key=CellRecord.sort_key)))

    def __len__(self):
        return len(self.records)

    def cell(self, loss, lr, patch):
        return [r for r in self.records if r.loss == loss and r.lr == lr and r.patch == patch]


@dataclass(frozen=True)
class Cell:
    loss: str
    lr: float
    patch: PatchSpec
    seed: int


def cells(cfg: SweepConfig) -> list[Cell]:
    return [Cell(loss, lr, patch, seed)
            for loss in cfg.losses
            for lr in cfg.learning_rates
            for patch in cfg.patch_sizes
            for seed in range(cfg.repeats)]


def run_cell(cfg: SweepConfig, cell: Cell) -> CellRecord:
    """Train one cell; the result depends only on ``cfg`` and ``cell``.

    The volume is seeded by ``data.seed + cell.seed`` and the model and
    patch draws by ``cell.seed``, so every loss and learning rate of a given
    repeat sees the same data and the same initial model.
    """
    data_cfg = SynthConfig(**{**asdict(cfg.data), "seed": cfg.data.seed + cell.seed})
    vol = generate_volume(data_cfg)
    model = PixelModel.init(cell.seed, window=cfg.window, hidden_units=cfg.hidden_units,
                            ndim=len(data_cfg.dims))
    tcfg = TrainConfig(learning_rate=cell.lr, iterations=cfg.iterations, batch=cell.patch.batch,
                       patch_dims=cell.patch.dims, loss=cell.loss, seed=cell.seed,
                       loss_config=cfg.loss_config, optimizer=cfg.optimizer)
    trace = train(model, vol, tcfg)
    if trace.diverged or len(trace.batch_dsc) < cfg.stats_window:
        return CellRecord(cell.loss, cell.lr, cell.patch.label, cell.seed, None, None, True)
    stats = trace_stats(trace.batch_dsc, cfg.stats_window)
    return CellRecord(cell.loss, cell.lr, cell.patch.label, cell.seed,
                      stats.median, stats.iqr, False)


def _run_cell_args(args):
    return run_cell(*args)


def run_sweep(cfg: SweepConfig) -> SweepGrid:
    """Run every (loss, lr, patch, seed) cell, optionally across processes."""
    todo = [(cfg, c) for c in cells(cfg)]
    if cfg.workers == 1:
        records = [_run_cell_args(a) for a in todo]
    else:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            records = list(pool.map(_run_cell_args, todo))
    return SweepGrid(tuple(records))


def _fmt(x):
    return "" if x is None else f"{x:.6f}"


def grid_to_csv(grid: SweepGrid) -> str:
    if not len(grid):
        raise ValidationError("cannot export an empty grid")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in grid.records:
        writer.writerow([r.loss, _fmt(r.lr), r.patch, r.seed, _fmt(r.median_dsc),
                         _fmt(r.iqr_dsc), "true" if r.diverged else "false"])
    return buf.getvalue()


def _opt_float(text):
    return None if text == "" else float(text)


def grid_from_csv(text: str) -> SweepGrid:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != CSV_COLUMNS:
        raise ValidationError(f"grid CSV header must be {','.join(CSV_COLUMNS)}")
    records = []
    for line, row in enumerate(rows[1:], 2):
        if len(row) != len(CSV_COLUMNS):
            raise ValidationError(f"line {line}: expected {len(CSV_COLUMNS)} fields, got {len(row)}")
        loss, lr, patch, seed, med, iqr, div = row
        if div not in ("true", "false"):
            raise ValidationError(f"line {line}: diverged must be true/false, got {div!r}")
        records.append(CellRecord(loss, float(lr), patch, int(seed), _opt_float(med),
                                  _opt_float(iqr), div == "true"))
    return SweepGrid(tuple(records))


def _round(x):
    return None if x is None else float(f"{x:.6f}")


def grid_to_json(grid: SweepGrid) -> str:
    if not len(grid):
        raise ValidationError("cannot export an empty grid")
    rows = [{"loss": r.loss, "lr": _round(r.lr), "patch": r.patch, "seed": r.seed,
             "median_dsc": _round(r.median_dsc), "iqr_dsc": _round(r.iqr_dsc),
             "diverged": r.diverged} for r in grid.records]
    return json.dumps({"columns": list(CSV_COLUMNS), "records": rows}, indent=2) + "\n"


def grid_from_json(text: str) -> SweepGrid:
    try:
        doc = json.loads(text)
        rows = doc["records"]
        records = [CellRecord(r["loss"], float(r["lr"]), r["patch"], int(r["seed"]),
                              r["median_dsc"], r["iqr_dsc"], bool(r["diverged"]))
                   for r in rows]
    except (ValueError, KeyError, TypeError) as exc:
        raise ValidationError(f"malformed grid JSON: {exc}") from None
    return SweepGrid(tuple(records))


def export_grid(grid: SweepGrid, path, fmt: str | None = None) -> None:
    """Write ``grid`` as CSV or JSON (chosen from the extension when ``fmt`` is None)."""
    fmt = fmt or ("json" if str(path).endswith(".json") else "csv")
    if fmt not in ("csv", "json"):
        raise ValidationError(f"unknown export format {fmt!r}")
    text = grid_to_json(grid) if fmt == "json" else grid_to_csv(grid)
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write grid to {path}: {exc.strerror}") from exc


def load_grid(path) -> SweepGrid:
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            text = fh.read()
    except OSError as exc:
        raise OSError(f"cannot read grid from {path}: {exc.strerror}") from exc
    return grid_from_json(text) if str(path).endswith(".json") else grid_from_csv(text)


def parse_patch_sizes(text: str) -> tuple[PatchSpec, ...]:
    specs = []
    for item in C.parse_list(text):
        parts = item.split(":")
        if len(parts) != 3:
            raise ValidationError(f"patch size {item!r} must look like LABEL:DIMS:BATCH")
        try:
            batch = int(parts[2])
        except ValueError:
            raise ValidationError(f"bad batch in patch size {item!r}") from None
        specs.append(PatchSpec(parts[0], C.parse_dims(parts[1]), batch))
    return tuple(specs)


def sweep_config(cfg: dict) -> SweepConfig:
    """Build a :class:`SweepConfig` from parsed key/value settings.

    Missing keys take the 2D defaults; a 3D ``dims`` switches the patch
    sizes and iteration count to their 3D defaults.
    """
    C.check_keys(cfg, C.DATA_KEYS | C.LOSS_KEYS | C.MODEL_KEYS | C.SWEEP_KEYS)
    base = SweepConfig.for_3d() if "dims" in cfg and len(C.parse_dims(cfg["dims"])) == 3 \
        else SweepConfig()
    kw = {"data": C.synth_config(cfg, base.data), "loss_config": C.loss_config(cfg)}
    kw.update(C.model_options(cfg))
    if "learning_rates" in cfg:
        kw["learning_rates"] = tuple(
            C._num({"learning_rates": x}, "learning_rates", float, None)
            for x in C.parse_list(cfg["learning_rates"]))
    if "losses" in cfg:
        kw["losses"] = tuple(C.parse_list(cfg["losses"]))
    if "patch_sizes" in cfg:
        kw["patch_sizes"] = parse_patch_sizes(cfg["patch_sizes"])
    else:
        kw["patch_sizes"] = base.patch_sizes
    for key in ("iterations", "repeats", "workers", "stats_window"):
        kw[key] = C._num(cfg, key, int, getattr(base, key))
    kw["optimizer"] = cfg.get("optimizer", base.optimizer)
    fields = {k: kw.get(k, getattr(base, k)) for k in SweepConfig.__dataclass_fields__}
    return SweepConfig(**fields)
