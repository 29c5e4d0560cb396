"""Inverse-frequency class weights and class-weighted cross-entropy.

Weights follow w[c] = N / (K * n_c), which pins the frequency-weighted mean of
the weights to 1 so the loss scale stays comparable to unweighted training.
The probability-domain loss works in float64; the trainer uses the separate
differentiable logits-domain form below.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import torch

from .dataset import ClassHistogram

LOG_CLAMP = 1e-12
_PROB_ROW_TOL = 1e-6


class Reduction(enum.Enum):
    WeightedMean = "weighted_mean"
    Sum = "sum"


@dataclass(frozen=True)
class ClassWeights:
    """Per-class loss multipliers with the histogram they came from."""

    w: np.ndarray
    source_counts: np.ndarray

    def __post_init__(self) -> None:
        w = np.array(self.w, dtype=np.float64)  # private copies, frozen below
        counts = np.array(self.source_counts, dtype=np.int64)
        for arr in (w, counts):
            arr.setflags(write=False)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "source_counts", counts)
        if (w <= 0).any():
            raise ValueError("all class weights must be positive")

    def as_tensor(self) -> torch.Tensor:
        return torch.from_numpy(np.asarray(self.w, dtype=np.float32).copy())


def compute_class_weights(hist: ClassHistogram | np.ndarray) -> ClassWeights:
    """w[c] = N / (K * n_c). Errors on any zero-count class."""
    counts = np.asarray(hist.counts if isinstance(hist, ClassHistogram) else hist, dtype=np.int64)
    if (counts <= 0).any():
        bad = int(np.flatnonzero(counts <= 0)[0])
        raise ValueError(f"class {bad} has count {int(counts[bad])}; weighting undefined")
    total = counts.sum()
    w = total / (len(counts) * counts.astype(np.float64))
    return ClassWeights(w=w, source_counts=counts)


def unit_weights(num_classes: int) -> ClassWeights:
    return ClassWeights(
        w=np.ones(num_classes), source_counts=np.ones(num_classes, dtype=np.int64)
    )


def _validate_probs(probs: np.ndarray, targets: np.ndarray, num_classes: int) -> None:
    if probs.ndim != 2 or probs.shape[1] != num_classes:
        raise ValueError(f"probs must be (B, {num_classes}), got {probs.shape}")
    if targets.shape != (probs.shape[0],):
        raise ValueError(f"targets must be (B,) = ({probs.shape[0]},), got {targets.shape}")
    rows = probs.sum(axis=1)
    if np.abs(rows - 1.0).max() > _PROB_ROW_TOL:
        bad = int(np.argmax(np.abs(rows - 1.0)))
        raise ValueError(f"probs row {bad} sums to {rows[bad]!r}, not 1")
    if targets.min() < 0 or targets.max() >= num_classes:
        raise ValueError(f"target index out of range [0,{num_classes - 1}]")


def weighted_cross_entropy(
    probs: np.ndarray,
    targets: np.ndarray,
    weights: ClassWeights,
    reduction: Reduction = Reduction.WeightedMean,
) -> float:
    """Per-sample loss w[y]*(-log p[y]); WeightedMean divides by sum of applied weights."""
    probs = np.asarray(probs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.int64)
    _validate_probs(probs, targets, num_classes=len(weights.w))

    picked = np.clip(probs[np.arange(len(targets)), targets], LOG_CLAMP, None)
    applied = weights.w[targets]
    losses = applied * -np.log(picked)
    if reduction is Reduction.Sum:
        return float(losses.sum())
    return float(losses.sum() / applied.sum())


def weighted_ce_from_logits(
    logits: torch.Tensor,
    targets: torch.Tensor,
    weights: torch.Tensor,
    reduction: Reduction = Reduction.WeightedMean,
) -> torch.Tensor:
    """Differentiable logits-domain equivalent, used by the trainer."""
    log_probs = torch.log_softmax(logits, dim=1)
    picked = log_probs.gather(1, targets.view(-1, 1)).squeeze(1)
    applied = weights[targets]
    loss_sum = (applied * -picked).sum()
    if reduction is Reduction.Sum:
        return loss_sum
    return loss_sum / applied.sum()


def weighted_ce_logits_gradient(
    logits: np.ndarray,
    targets: np.ndarray,
    weights: ClassWeights,
    reduction: Reduction = Reduction.WeightedMean,
) -> np.ndarray:
    """Analytic dL/dlogits: w[y] * (softmax(z) - onehot(y)), scaled by the reduction."""
    logits = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.int64)
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    softmax = exp / exp.sum(axis=1, keepdims=True)

    onehot = np.zeros_like(softmax)
    onehot[np.arange(len(targets)), targets] = 1.0
    applied = weights.w[targets][:, None]
    grad = applied * (softmax - onehot)
    if reduction is Reduction.Sum:
        return grad
    return grad / weights.w[targets].sum()
