"""
Gradient-weighted class activation maps.

Channel weight of feature map k for class c is the spatial SUM of
d y^c / d F_k(m, n), with no 1/Z averaging and no ReLU on the weights.
The class map is S_c = sum_k w_kc F_k (l x l, signed); ReLU is only an
option when rendering.

For a GAP + linear head in eval mode the weights equal the classifier
weights W[c, k] exactly, since every cell contributes W[c, k] / l^2.
Train-mode neuron dropout breaks that identity: dropped features get
weight 0 and kept ones are scaled by 1 / (1 - r).
"""

from __future__ import annotations

import numpy as np

from core.enums import ForwardMode, HeadKind
from core.errors import GraphReleasedError, LabelRangeError, ShapeError
from core.models import CamResult
from ml.autodiff import index
from ml.model import ForwardRecord, OrdinalNet


def channel_weights(record: ForwardRecord, class_index: int, sample: int = 0) -> np.ndarray:
    """w_kc for one sample of the record; leaves the graph retained."""
    logits = record.class_logits
    n, c = logits.shape
    if not 0 <= class_index < c:
        raise LabelRangeError(f"class {class_index} outside [0, {c})")
    if not 0 <= sample < n:
        raise ShapeError(f"sample {sample} outside batch of {n}")
    if logits.op is None or logits.op.released:
        raise GraphReleasedError("forward record graph was released; run forward again")
    y_c = index(logits, (sample, class_index))
    y_c.backward(retain_graph=True)
    fmaps = record.last_feature_maps
    if not fmaps.has_grad:
        return np.zeros(fmaps.shape[1])
    return fmaps.grad[sample].sum(axis=(-2, -1))


def activation_map(weights: np.ndarray, feature_maps: np.ndarray) -> np.ndarray:
    """S_c = sum_k w_k F_k over a (K, l, l) stack."""
    weights = np.asarray(weights, dtype=np.float64)
    if feature_maps.ndim != 3 or weights.shape != (feature_maps.shape[0],):
        raise ShapeError(f"{weights.shape} weights for feature maps {feature_maps.shape}")
    return np.tensordot(weights, feature_maps, axes=1)


def _resample_axis(n_src: int, n_dst: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    src = (np.arange(n_dst) + 0.5) * n_src / n_dst - 0.5
    src = np.clip(src, 0.0, n_src - 1)
    lo = np.floor(src).astype(int)
    hi = np.minimum(lo + 1, n_src - 1)
    return lo, hi, src - lo


def render(raw_map: np.ndarray, target: tuple[int, int], apply_relu: bool = False) -> np.ndarray:
    """
    Optional ReLU, bilinear upsample with pixel-center mapping
    src = (dst + 0.5) * l / H - 0.5 clamped to [0, l - 1], then min-max
    scale into [0, 1]. Constant maps render as all zeros.
    """
    m = np.maximum(raw_map, 0.0) if apply_relu else np.asarray(raw_map, dtype=np.float64)
    h, w = target
    r_lo, r_hi, r_t = _resample_axis(m.shape[0], h)
    c_lo, c_hi, c_t = _resample_axis(m.shape[1], w)
    rows = m[r_lo] * (1.0 - r_t)[:, None] + m[r_hi] * r_t[:, None]
    up = rows[:, c_lo] * (1.0 - c_t)[None, :] + rows[:, c_hi] * c_t[None, :]
    lo, hi = up.min(), up.max()
    if hi == lo:
        return np.zeros_like(up)
    return (up - lo) / (hi - lo)


def compute_cam(
    model: OrdinalNet,
    image: np.ndarray,
    class_index: int | None = None,
    apply_relu: bool = False,
) -> CamResult:
    """Eval-mode CAM for one (C, H, W) image; class defaults to the predicted level."""
    record = model.forward(image, ForwardMode.EVAL)
    if class_index is None:
        class_index = int(record.class_logits.value[0].argmax())
    weights = channel_weights(record, class_index)
    raw = activation_map(weights, record.last_feature_maps.value[0])
    _, h, w = model.config.input_shape
    return CamResult(
        class_index=class_index,
        channel_weights=weights,
        raw_map=raw,
        display_map=render(raw, (h, w), apply_relu=apply_relu),
    )


def dropout_zeroing_demo(
    model: OrdinalNet,
    image: np.ndarray,
    class_index: int,
    fixed_dropout_mask: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Channel weights in eval mode and in train mode under a fixed neuron-dropout mask."""
    if model.config.head_kind is not HeadKind.GAP_LINEAR:
        raise ShapeError("dropout zeroing demo needs a gap-linear head")
    eval_record = model.forward(image, ForwardMode.EVAL)
    weights_eval = channel_weights(eval_record, class_index)
    train_record = model.forward(image, ForwardMode.TRAIN, dropout_mask=fixed_dropout_mask)
    weights_train = channel_weights(train_record, class_index)
    return weights_eval, weights_train
