"""Sweeps, result export, tensor files and the command line."""

from .sweep import (
    CellRecord,
    PatchSpec,
    SweepConfig,
    SweepGrid,
    export_grid,
    grid_from_csv,
    grid_from_json,
    grid_to_csv,
    grid_to_json,
    load_grid,
    run_sweep,
)
from .tensorio import read_tensor, write_tensor
