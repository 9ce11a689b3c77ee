"""Masked L2 loss shared by model training and hologram optimization.

Written against the array operators common to numpy and torch so the same
function serves both.
"""
from __future__ import annotations

ALPHA_FOCUS = 1.0
ALPHA_DEFOCUS = 0.5


def _is_binary(m) -> bool:
    return bool(((m == 0) | (m == 1)).all())


def masked_l2_loss(r, r_target, m, alpha0: float = ALPHA_FOCUS,
                   alpha1: float = ALPHA_DEFOCUS):
    """``alpha0 * mean(m (r - r')^2) + alpha1 * mean((1 - m) (r - r')^2)``.

    The mask broadcasts over channels; both means run over every element
    of ``r``.
    """
    if tuple(r.shape) != tuple(r_target.shape):
        raise ValueError(f"shape mismatch: {tuple(r.shape)} vs {tuple(r_target.shape)}")
    if tuple(m.shape[-2:]) != tuple(r.shape[-2:]):
        raise ValueError(f"mask shape {tuple(m.shape)} does not match image {tuple(r.shape)}")
    if not _is_binary(m):
        raise ValueError("mask must contain only 0 and 1")
    sq = (r - r_target) ** 2
    return alpha0 * (m * sq).mean() + alpha1 * ((1 - m) * sq).mean()
