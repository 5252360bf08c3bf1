"""
Synthetic ordinal image generator.

Level l is a filled disk of radius base_radius + radius_step * l at a
jittered center: foreground 1, background 0, plus Gaussian noise clamped
to [0, 1]. The label is ordinal and spatially distributed, so grid dropout
removes genuine evidence the way it does on face crops.
"""

from __future__ import annotations

import numpy as np

from core.models import Sample, SynthSpec


def render_disk(size: int, radius: float, center: tuple[float, float]) -> np.ndarray:
    """Binary (size, size) disk; a pixel is inside when its center is within radius."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) + 0.5
    cy, cx = center
    return ((yy - cy) ** 2 + (xx - cx) ** 2 <= radius**2).astype(np.float64)


def generate(spec: SynthSpec, count_per_class: int) -> list[Sample]:
    """count_per_class samples per level, deterministic given spec.seed."""
    assert count_per_class >= 1, f"count_per_class must be >= 1, got {count_per_class}"
    rng = np.random.default_rng(spec.seed)
    mid = spec.image_size / 2
    samples: list[Sample] = []
    for level in range(spec.num_classes):
        for i in range(count_per_class):
            cy, cx = mid + rng.uniform(-spec.center_jitter, spec.center_jitter, size=2)
            disk = render_disk(spec.image_size, spec.radius(level), (cy, cx))
            if spec.noise_sigma > 0:
                disk = disk + rng.normal(0.0, spec.noise_sigma, size=disk.shape)
            image = np.clip(disk, 0.0, 1.0)[None]
            samples.append(Sample(image=image, label=level, id=f"L{level}-{i:04d}"))
    return samples
