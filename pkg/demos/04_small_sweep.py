"""A reduced learning-rate x patch-size sweep, exported as CSV.

The full default grid is available as `segloss sweep --out grid.csv`; this
one keeps to two losses and two patch sizes so it finishes in seconds.
"""

import sys

from segloss.experiment.sweep import PatchSpec, SweepConfig, grid_to_csv, run_sweep
from segloss.synth import SynthConfig

cfg = SweepConfig(
    learning_rates=(1e-3, 1e-4),
    patch_sizes=(PatchSpec("S", (16, 16), 8), PatchSpec("L", (48, 48), 1)),
    losses=("wce", "gdl_v"),
    iterations=400,
    repeats=2,
    data=SynthConfig(dims=(64, 64), target_fg_fraction=0.01, lesion_radius_range=(2.0, 4.0),
                     noise_sigma=0.25),
)
grid = run_sweep(cfg)
sys.stdout.write(grid_to_csv(grid))
