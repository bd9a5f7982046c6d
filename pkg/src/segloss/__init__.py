"""Loss functions for class-imbalanced segmentation, with exact gradients.

Weighted cross-entropy, two-class Dice, sensitivity-specificity and the
Generalized Dice loss, plus a small training harness for comparing them on
synthetic unbalanced data.
"""

from .errors import DivergenceError, FormatError, NumericError, SeglossError, ValidationError
from .field import GridShape, LabelField, ProbField, binarize, foreground_fraction, onehot_encode
from .losses import (
    GdlWeights,
    LossConfig,
    LossOutput,
    dice_loss2,
    finite_diff_grad,
    gdl,
    gdl_grad_closed_form,
    gdl_weights,
    ss_loss,
    tangent_grad,
    wce,
)
from .metrics import dsc, gds, sensitivity_specificity, trace_stats

__version__ = "0.1.0"
