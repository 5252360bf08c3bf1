"""
Loss heads and their weighted composition.

  L = L_cla + beta * L_mask                    (classification + masking)
  L = L_cla + alpha * L_reg + beta * L_mask    (with ordinal regression)

L_cla is softmax cross entropy, L_reg the halved squared error against the
level index, L_mask the sigmoid cross entropy over the s*s grid bits
(mean over bits). Every loss is averaged over the batch.
"""

from __future__ import annotations

import numpy as np

from core.errors import LabelRangeError, ShapeError
from core.models import LossBreakdown, LossWeights
from ml.autodiff import Node, Op, Tensor, add, scale, stable_sigmoid


class SoftmaxCrossEntropy(Op):
    name = "softmax_cross_entropy"

    def __init__(self, labels: Tensor | int) -> None:
        super().__init__()
        self.labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))

    def forward(self, logits: Tensor) -> Tensor:
        z = np.atleast_2d(logits)
        n, c = z.shape
        if self.labels.shape != (n,):
            raise ShapeError(f"{self.labels.size} labels for a batch of {n}")
        if np.any(self.labels < 0) or np.any(self.labels >= c):
            raise LabelRangeError(f"labels {self.labels.tolist()} outside [0, {c})")
        shifted = z - z.max(axis=1, keepdims=True)
        log_norm = np.log(np.exp(shifted).sum(axis=1))
        rows = np.arange(n)
        self._probs = np.exp(shifted - log_norm[:, None])
        self._logits_shape = logits.shape
        return np.asarray(np.mean(log_norm - shifted[rows, self.labels]))

    def backward(self, grad: Tensor) -> tuple[Tensor]:
        probs = self._probs
        n = probs.shape[0]
        g = probs.copy()
        g[np.arange(n), self.labels] -= 1.0
        return ((grad * g / n).reshape(self._logits_shape),)


class EuclideanLoss(Op):
    name = "euclidean_loss"

    def __init__(self, targets: Tensor | float) -> None:
        super().__init__()
        self.targets = np.asarray(targets, dtype=np.float64)

    def forward(self, prediction: Tensor) -> Tensor:
        if prediction.size != self.targets.size:
            raise ShapeError(f"{prediction.size} predictions for {self.targets.size} targets")
        self._diff = prediction - self.targets.reshape(prediction.shape)
        return np.asarray(np.mean(0.5 * self._diff**2))

    def backward(self, grad: Tensor) -> tuple[Tensor]:
        return (grad * self._diff / self._diff.size,)


class SigmoidCrossEntropy(Op):
    name = "sigmoid_cross_entropy"

    def __init__(self, targets: Tensor) -> None:
        super().__init__()
        self.targets = np.asarray(targets, dtype=np.float64)

    def forward(self, logits: Tensor) -> Tensor:
        if logits.shape != self.targets.shape:
            raise ShapeError(f"mask logits {logits.shape} do not match targets {self.targets.shape}")
        self._logits = logits
        return np.asarray(np.mean(np.logaddexp(0.0, logits) - self.targets * logits))

    def backward(self, grad: Tensor) -> tuple[Tensor]:
        return (grad * (stable_sigmoid(self._logits) - self.targets) / self.targets.size,)


def softmax_cross_entropy(logits: Node, labels: Tensor | int) -> Node:
    """Mean -log softmax(logits)[label]; logits (C,) or (N, C)."""
    return SoftmaxCrossEntropy(labels).apply(logits)


def euclidean_loss(prediction: Node, targets: Tensor | float) -> Node:
    """Mean of 0.5 * (prediction - target)^2."""
    return EuclideanLoss(targets).apply(prediction)


def sigmoid_cross_entropy(logits: Node, targets: Tensor) -> Node:
    """Mean over bits (and batch) of softplus(x) - t*x."""
    return SigmoidCrossEntropy(targets).apply(logits)


def total_loss(
    l_cla: Node,
    l_reg: Node | None,
    l_mask: Node | None,
    weights: LossWeights,
) -> LossBreakdown:
    """Weighted sum of the present terms, carrying the differentiable graph."""
    total = l_cla
    if l_reg is not None:
        total = add(total, scale(l_reg, weights.alpha))
    if l_mask is not None:
        total = add(total, scale(l_mask, weights.beta))
    return LossBreakdown(
        l_cla=l_cla.item(),
        l_reg=None if l_reg is None else l_reg.item(),
        l_mask=None if l_mask is None else l_mask.item(),
        total=total.item(),
        graph=total,
    )
