"""Evaluate the four losses on a small imbalanced field and compare them.

Run from the repository root:  python demos/01_losses_on_a_toy_field.py
"""

import numpy as np

from segloss import losses as L
from segloss.field import ProbField, onehot_encode

# A 16x16 reference with a single 2x2 foreground square (1.6% foreground).
labels = np.zeros((16, 16), dtype=int)
labels[5:7, 9:11] = 1
ref = onehot_encode(labels, 2)

rng = np.random.default_rng(0)
background_guess = rng.uniform(0.0, 0.1, labels.shape)
good = np.where(labels == 1, 0.9, background_guess)
lazy = np.full(labels.shape, 0.02)  # predicts "almost everything is background"

print(f"{'loss':12s} {'good':>10s} {'lazy':>10s}")
for name in sorted(L.LOSSES):
    fn = L.get_loss(name)
    values = [fn(ProbField.from_foreground(ref.shape, g.ravel()), ref).value for g in (good, lazy)]
    print(f"{name:12s} {values[0]:10.4f} {values[1]:10.4f}")

# The volume-weighted GDL gives each class a weight 1/V^2, so the 4-pixel
# foreground counts as much as the 252-pixel background.
w = L.gdl_weights(ref)
print("class volumes", ref.volumes(), "weights", w.w)

# Gradients come back per class; the simplex-preserving view is what a
# foreground-probability update actually sees.
out = L.gdl_v(ProbField.from_foreground(ref.shape, lazy.ravel()), ref)
g = L.tangent_grad(out.grad, ProbField.from_foreground(ref.shape, lazy.ravel()))[:, 1]
print("mean dGDL/dp on foreground pixels", g[labels.ravel() == 1].mean())
print("mean dGDL/dp on background pixels", g[labels.ravel() == 0].mean())
