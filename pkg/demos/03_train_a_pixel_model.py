"""Train the per-pixel model on synthetic lesions and watch the batch DSC.

Two runs on the same noisy, sparse data: the volume-weighted GDL and
weighted cross-entropy, both at a learning rate of 1e-3.
"""

import numpy as np

from segloss.metrics import trace_stats
from segloss.synth import SynthConfig, generate_volume
from segloss.trainer import PixelModel, TrainConfig, train

vol = generate_volume(SynthConfig(dims=(96, 96), target_fg_fraction=0.01,
                                  lesion_radius_range=(2.0, 5.0), noise_sigma=0.25, seed=3))
print("foreground fraction", vol.labels.values[:, 1].mean())

for loss in ("gdl_v", "wce"):
    cfg = TrainConfig(learning_rate=1e-3, iterations=600, batch=8, patch_dims=(32, 32), loss=loss)
    trace = train(PixelModel.init(0), vol, cfg)
    stats = trace_stats(trace.batch_dsc, 200)
    every = np.array(trace.batch_dsc)[::100]
    print(f"{loss:6s} DSC every 100 its: {np.round(every, 3)}")
    print(f"{loss:6s} median DSC over the last 200: {stats.median:.3f} (IQR {stats.iqr:.3f})")
