"""Soft Dice, binary cross-entropy and the per-region hybrid objective."""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .errors import ShapeMismatch


@dataclass(frozen=True)
class LossConfig:
    epsilon: float = 1e-5
    ce_clamp: float = 1e-7
    ce_reduction: str = "mean"  # or "sum"
    region_weights: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if not 0 < self.ce_clamp < 0.5:
            raise ValueError("ce_clamp must lie in (0, 0.5)")
        if self.ce_reduction not in ("mean", "sum"):
            raise ValueError("ce_reduction must be 'mean' or 'sum'")


def _check(pred, target):
    if pred.shape != target.shape:
        raise ShapeMismatch(f"prediction {tuple(pred.shape)} vs target {tuple(target.shape)}")


def soft_dice_loss(pred, target, epsilon: float = 1e-5):
    """``-2 sum(p t) / (sum(p) + sum(t) + epsilon)``; lies in [-1, 0]."""
    _check(pred, target)
    target = target.to(pred.dtype)
    return -2 * (pred * target).sum() / (pred.sum() + target.sum() + epsilon)


def cross_entropy_loss(pred, target, clamp: float = 1e-7, reduction: str = "mean"):
    """Two-term binary cross-entropy with the prediction clamped away from 0 and 1."""
    _check(pred, target)
    target = target.to(pred.dtype)
    p = pred.clamp(clamp, 1 - clamp)
    ce = -(target * torch.log(p) + (1 - target) * torch.log1p(-p))
    return ce.mean() if reduction == "mean" else ce.sum()


def hybrid_loss(pred, target, config: LossConfig | None = None):
    config = config or LossConfig()
    return (soft_dice_loss(pred, target, config.epsilon)
            + cross_entropy_loss(pred, target, config.ce_clamp, config.ce_reduction))


def total_loss(preds, targets, config: LossConfig | None = None):
    """Weighted sum of hybrid losses over the (whole, core, enhancing) pairs."""
    config = config or LossConfig()
    preds, targets = tuple(preds), tuple(targets)
    if len(preds) != 3 or len(targets) != 3:
        raise ValueError("expected three prediction/target pairs")
    return sum(w * hybrid_loss(p, t, config)
               for w, p, t in zip(config.region_weights, preds, targets))
