"""Seeded comparisons of analytic loss gradients against finite differences."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import losses as L
from ..field import ProbField, onehot_encode
from ..synth import make_rng

IMBALANCED_N = 512


@dataclass(frozen=True)
class CheckResult:
    loss: str
    cases: int
    max_rel_error: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tol


def random_pair(rng, n, fg_count=None, margin=0.02):
    """A random two-class (p, r) pair with probabilities kept off the boundary.

    ``fg_count`` fixes the number of foreground reference elements;
    otherwise each element is foreground with a random rate.
    """
    if fg_count is None:
        labels = (rng.random(n) < rng.uniform(0.1, 0.9)).astype(np.int64)
    else:
        labels = np.zeros(n, dtype=np.int64)
        labels[rng.choice(n, size=fg_count, replace=False)] = 1
    r = onehot_encode(labels, 2)
    p = ProbField.from_foreground(r.shape, rng.uniform(margin, 1.0 - margin, n))
    return p, r


def check_pairs(seeds: int, seed: int = 0):
    """``seeds`` random pairs; the first has 1 foreground element in 512."""
    rng = make_rng(seed)
    pairs = [random_pair(rng, IMBALANCED_N, fg_count=1)]
    for _ in range(max(seeds - 1, 0)):
        pairs.append(random_pair(rng, int(rng.integers(4, 65))))
    return pairs


def check_loss(name: str, seeds: int = 20, tol: float = 1e-5, h: float = 1e-6,
               cfg: L.LossConfig = L.LossConfig(), seed: int = 0) -> CheckResult:
    loss = L.get_loss(name)
    worst = 0.0
    pairs = check_pairs(seeds, seed)
    for p, r in pairs:
        analytic = L.tangent_grad(loss(p, r, cfg).grad, p)
        numeric = L.finite_diff_grad(loss, p, r, cfg, h)
        worst = max(worst, L.relative_error(analytic, numeric))
    return CheckResult(L.canonical_loss_name(name), len(pairs), worst, tol)


def check_closed_form(seeds: int = 20, seed: int = 0, h: float = 1e-6,
                      cfg: L.LossConfig = L.LossConfig()):
    """Worst relative errors of the closed-form two-class GDL gradient.

    Returns ``(vs_general_analytic, vs_finite_differences)``.
    """
    worst_exact = worst_fd = 0.0
    for p, r in check_pairs(seeds, seed):
        w = L.gdl_weights(r, cfg)
        closed = L.gdl_grad_closed_form(p, r, w.w[1], w.w[0])
        general = L.tangent_grad(L.gdl(p, r, w, cfg).grad, p)[:, 1]
        fd = L.finite_diff_grad(lambda q, rr, c: L.gdl(q, rr, w, c), p, r, cfg, h)[:, 1]
        worst_exact = max(worst_exact, L.relative_error(closed, general))
        worst_fd = max(worst_fd, L.relative_error(closed, fd))
    return worst_exact, worst_fd
