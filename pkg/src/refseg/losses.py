"""Training losses: binary focal loss and dice loss on per-pixel probabilities.

Both reduce with a mean over pixels so magnitudes are resolution
independent. Probabilities are clamped to [1e-7, 1 - 1e-7] before the
focal log; dice uses a 1e-6 smoothing epsilon on numerator and
denominator (an empty target with all-zero probabilities scores ~0).
"""

import numpy as np

from . import tensor as T
from .errors import DimensionError

CLAMP_EPS = 1e-7
DICE_EPS = 1e-6


def _as_flat_pair(probs, targets):
    t = np.asarray(targets, dtype=np.float64).reshape(-1)
    if probs.data.size != t.size:
        raise DimensionError(
            f"probs size {probs.data.size} vs targets size {t.size}")
    p = probs if probs.data.ndim == 1 else T.reshape(probs, (probs.data.size,))
    return p, t


def focal_loss(probs, targets, gamma=2.0):
    """mean over pixels of -(1 - p_t)^gamma * log(p_t), p_t = p if target else 1-p."""
    p, t = _as_flat_pair(probs, targets)
    p = T.clamp(p, CLAMP_EPS, 1.0 - CLAMP_EPS)
    # p_t = (2t - 1) * p + (1 - t), an affine map with constant coefficients
    p_t = T.add(T.mul(p, T.constant(2.0 * t - 1.0)), T.constant(1.0 - t))
    modulator = T.powc(T.add(T.scale(p_t, -1.0), T.constant(np.ones_like(t))), gamma)
    return T.scale(T.mean_all(T.mul(modulator, T.log(p_t))), -1.0)


def dice_loss(probs, targets):
    """1 - (2 * sum(p*t) + eps) / (sum(p) + sum(t) + eps)."""
    p, t = _as_flat_pair(probs, targets)
    intersection = T.sum_all(T.mul(p, T.constant(t)))
    denom = T.shift(T.sum_all(p), float(t.sum()) + DICE_EPS)
    num = T.shift(T.scale(intersection, 2.0), DICE_EPS)
    return T.shift(T.scale(T.div(num, denom), -1.0), 1.0)


def total_loss(probs, targets, focal_weight=0.5, dice_weight=0.5, gamma=2.0):
    """Weighted sum; returns (total, focal, dice) so both parts can be logged."""
    lf = focal_loss(probs, targets, gamma=gamma)
    ld = dice_loss(probs, targets)
    return T.add(T.scale(lf, focal_weight), T.scale(ld, dice_weight)), lf, ld
