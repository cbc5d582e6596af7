"""Contrastive (InfoNCE) loss numerics with a bilinear critic.

The critic scores a (target, context) pair as target @ W @ context. For a
context c, a positive target p and negatives n_1..n_m, the loss is

    L = -log( exp(s_p) / sum_{t in C} exp(s_t) )

where C contains the positive and the negatives (include_positive=True, the
default) or just the negatives. Evaluation runs through log-sum-exp, so
equal scores over a K-element denominator give exactly ln K and large score
gaps cannot overflow.

Gradients are closed-form; frozen_targets treats the positive and negative
vectors as constants and returns exact zeros for them, leaving the context
and W gradients unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DimensionMismatch


def _as_vector(value, name: str) -> np.ndarray:
    array = np.asarray(value, dtype=np.float64)
    if array.ndim != 1 or array.size == 0:
        raise DimensionMismatch(f"{name} must be a non-empty 1-d vector")
    if not np.all(np.isfinite(array)):
        raise DimensionMismatch(f"{name} must have finite entries")
    return array


@dataclass(frozen=True)
class EmbeddingBatch:
    """One context vector, its positive target, and m >= 1 negatives."""

    context: np.ndarray
    positive: np.ndarray
    negatives: np.ndarray

    def __post_init__(self) -> None:
        context = _as_vector(self.context, "context")
        positive = _as_vector(self.positive, "positive")
        negatives = np.asarray(self.negatives, dtype=np.float64)
        if negatives.ndim != 2 or negatives.shape[0] < 1:
            raise DimensionMismatch("negatives must be a (m, d) array with m >= 1")
        if not np.all(np.isfinite(negatives)):
            raise DimensionMismatch("negatives must have finite entries")
        d = context.shape[0]
        if positive.shape[0] != d or negatives.shape[1] != d:
            raise DimensionMismatch(
                f"dimension mismatch: context {d}, positive {positive.shape[0]}, "
                f"negatives {negatives.shape[1]}"
            )
        object.__setattr__(self, "context", context)
        object.__setattr__(self, "positive", positive)
        object.__setattr__(self, "negatives", negatives)

    @property
    def dim(self) -> int:
        return self.context.shape[0]


@dataclass(frozen=True)
class BilinearParams:
    """The critic's weight matrix, optionally freezing target-side gradients."""

    w: np.ndarray
    frozen_targets: bool = False

    def __post_init__(self) -> None:
        w = np.asarray(self.w, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise DimensionMismatch("w must be a square (d, d) matrix")
        if not np.all(np.isfinite(w)):
            raise DimensionMismatch("w must have finite entries")
        object.__setattr__(self, "w", w)

    @property
    def dim(self) -> int:
        return self.w.shape[0]


def critic_score(target, context, params: BilinearParams) -> float:
    """Bilinear compatibility: target @ W @ context."""
    t = _as_vector(target, "target")
    c = _as_vector(context, "context")
    if t.shape[0] != params.dim or c.shape[0] != params.dim:
        raise DimensionMismatch(
            f"critic expects dim {params.dim}, got target {t.shape[0]} "
            f"and context {c.shape[0]}"
        )
    return float(t @ params.w @ c)


def loss_from_scores(
    positive_score: float, negative_scores: Sequence[float], include_positive: bool = True
) -> float:
    """The contrastive loss given raw critic scores.

    Invariant under adding a constant to every score. With the positive
    included in the denominator the loss is strictly positive.
    """
    scores = [float(s) for s in negative_scores]
    if not scores:
        raise DimensionMismatch("at least one negative score is required")
    if include_positive:
        scores = [float(positive_score)] + scores
    peak = max(scores)
    log_z = peak + math.log(math.fsum(math.exp(s - peak) for s in scores))
    return log_z - float(positive_score)


def _scores(batch: EmbeddingBatch, params: BilinearParams) -> tuple[float, np.ndarray]:
    if batch.dim != params.dim:
        raise DimensionMismatch(
            f"batch dim {batch.dim} does not match params dim {params.dim}"
        )
    wc = params.w @ batch.context
    positive_score = float(batch.positive @ wc)
    negative_scores = batch.negatives @ wc
    return positive_score, negative_scores


def infonce_loss(
    batch: EmbeddingBatch, params: BilinearParams, include_positive: bool = True
) -> float:
    positive_score, negative_scores = _scores(batch, params)
    return loss_from_scores(positive_score, negative_scores.tolist(), include_positive)


def mean_infonce_loss(
    batches: Sequence[EmbeddingBatch], params: BilinearParams, include_positive: bool = True
) -> float:
    """Average single-batch losses; the single batch is the primitive."""
    if not batches:
        raise DimensionMismatch("at least one batch is required")
    return math.fsum(
        infonce_loss(b, params, include_positive) for b in batches
    ) / len(batches)


class InfoNceGradients(NamedTuple):
    w: np.ndarray
    context: np.ndarray
    positive: np.ndarray
    negatives: np.ndarray


def infonce_grad(
    batch: EmbeddingBatch, params: BilinearParams, include_positive: bool = True
) -> InfoNceGradients:
    """Closed-form gradients of infonce_loss for one batch.

    With frozen targets the positive/negative gradients are exact zeros; the
    W and context gradients are identical either way.
    """
    positive_score, negative_scores = _scores(batch, params)
    if include_positive:
        all_scores = np.concatenate(([positive_score], negative_scores))
        peak = float(np.max(all_scores))
        weights = np.exp(all_scores - peak)
        weights /= weights.sum()
        alpha_pos = float(weights[0]) - 1.0  # dL/ds_pos
        alpha_neg = weights[1:]  # dL/ds_j
    else:
        peak = float(np.max(negative_scores))
        weights = np.exp(negative_scores - peak)
        weights /= weights.sum()
        alpha_pos = -1.0
        alpha_neg = weights

    context = batch.context
    positive = batch.positive
    negatives = batch.negatives
    w = params.w

    # s_t = t @ W @ c, so ds/dW = outer(t, c), ds/dc = W.T @ t, ds/dt = W @ c.
    combined_target = alpha_pos * positive + alpha_neg @ negatives
    grad_w = np.outer(combined_target, context)
    grad_context = w.T @ combined_target
    if params.frozen_targets:
        grad_positive = np.zeros_like(positive)
        grad_negatives = np.zeros_like(negatives)
    else:
        wc = w @ context
        grad_positive = alpha_pos * wc
        grad_negatives = alpha_neg[:, None] * wc[None, :]
    return InfoNceGradients(
        w=grad_w,
        context=grad_context,
        positive=grad_positive,
        negatives=grad_negatives,
    )


def gradient_check(
    batch: EmbeddingBatch,
    params: BilinearParams,
    step: float = 1e-5,
    include_positive: bool = True,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Frozen target blocks are skipped (their analytic gradients are zeros by
    contract, not by calculus). The relative error of a block is
    ||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-12).
    """
    analytic = infonce_grad(batch, params, include_positive)

    def loss_with(w, context, positive, negatives) -> float:
        return infonce_loss(
            EmbeddingBatch(context=context, positive=positive, negatives=negatives),
            BilinearParams(w=w, frozen_targets=params.frozen_targets),
            include_positive,
        )

    def numeric_block(base: np.ndarray, rebuild) -> np.ndarray:
        grad = np.zeros_like(base)
        flat = base.reshape(-1)
        out = grad.reshape(-1)
        for i in range(flat.size):
            bumped = flat.copy()
            bumped[i] = flat[i] + step
            high = loss_with(*rebuild(bumped.reshape(base.shape)))
            bumped[i] = flat[i] - step
            low = loss_with(*rebuild(bumped.reshape(base.shape)))
            out[i] = (high - low) / (2.0 * step)
        return grad

    w, context = params.w, batch.context
    positive, negatives = batch.positive, batch.negatives
    blocks = [
        (analytic.w, numeric_block(w, lambda v: (v, context, positive, negatives))),
        (
            analytic.context,
            numeric_block(context, lambda v: (w, v, positive, negatives)),
        ),
    ]
    if not params.frozen_targets:
        blocks.append(
            (
                analytic.positive,
                numeric_block(positive, lambda v: (w, context, v, negatives)),
            )
        )
        blocks.append(
            (
                analytic.negatives,
                numeric_block(negatives, lambda v: (w, context, positive, v)),
            )
        )
    worst = 0.0
    for got, expected in blocks:
        scale = max(np.linalg.norm(got), np.linalg.norm(expected), 1e-12)
        worst = max(worst, float(np.linalg.norm(got - expected) / scale))
    return worst
