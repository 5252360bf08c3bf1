"""
Cross-object invariant validation.

Checks that individually valid objects fit together: samples against the
class count, model topology against the input size, masked images against
their masking labels. Raises AssertionError on violation.
"""

from __future__ import annotations

import numpy as np

from core.models import GridSpec, ModelConfig, Sample
from data.augment import partition


def validate_samples(samples: list[Sample], num_classes: int) -> None:
    """Labels in range, pixel values in [0, 1], unique ids, one image shape."""
    if not samples:
        raise AssertionError("dataset is empty")
    seen: set[str] = set()
    shape = samples[0].image.shape
    for s in samples:
        if s.id in seen:
            raise AssertionError(f"duplicate sample id {s.id!r}")
        seen.add(s.id)
        if s.label >= num_classes:
            raise AssertionError(f"sample {s.id}: label {s.label} >= num_classes {num_classes}")
        if s.image.shape != shape:
            raise AssertionError(f"sample {s.id}: image shape {s.image.shape} differs from {shape}")
        if s.image.min() < 0.0 or s.image.max() > 1.0:
            raise AssertionError(f"sample {s.id}: pixel values outside [0, 1]")


def feature_map_shape(config: ModelConfig) -> tuple[int, int, int]:
    """
    (K, h, w) of the last conv block's pooled output.

    Every 2x2 pool needs even input dims; the offending block is named.
    """
    _, h, w = config.input_shape
    for i, (out_ch, _) in enumerate(config.conv_blocks, start=1):
        if h % 2 or w % 2:
            raise AssertionError(
                f"conv block {i}: pooling needs even spatial dims, got {h}x{w} "
                f"(input {config.input_shape[1]}x{config.input_shape[2]})"
            )
        h, w = h // 2, w // 2
        if h < 1 or w < 1:
            raise AssertionError(f"conv block {i}: spatial size shrinks below 1x1")
    return config.feature_channels, h, w


def check_masked_sample(sample: Sample, spec: GridSpec) -> None:
    """Every dropped cell of a grid-augmented sample holds spec.fill_value."""
    if sample.mask_label is None:
        raise AssertionError(f"sample {sample.id}: no masking label attached")
    if sample.mask_label.zeros != spec.k:
        raise AssertionError(f"sample {sample.id}: {sample.mask_label.zeros} dropped cells, expected {spec.k}")
    _, h, w = sample.image.shape
    geom = partition(h, w, spec.s)
    for idx in sample.mask_label.dropped:
        r0, r1, c0, c1 = geom.cell(idx)
        if not np.all(sample.image[:, r0:r1, c0:c1] == spec.fill_value):
            raise AssertionError(f"sample {sample.id}: dropped cell {idx} not filled with {spec.fill_value}")
