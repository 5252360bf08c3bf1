"""
Grid dropout: partition an image into s x s cells, black out k of them,
and record which cells survived as the masking label.

Masks are resampled every time an image is drawn. Each draw uses its own
random stream derived from (seed, epoch, sample index), so augmenting a
batch is deterministic and independent of iteration order.
"""

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np

from core.errors import MultiplicityOverflowError, ShapeError
from core.models import GridGeometry, GridSpec, MaskLabel, Sample, drop_count

_INT64_MAX = 2**63 - 1


def partition(height: int, width: int, s: int) -> GridGeometry:
    """Cell bounds floor(i * dim / s); cell sizes differ by at most one pixel."""
    assert s >= 1, f"s must be >= 1, got {s}"
    if height < s or width < s:
        raise ShapeError(f"cannot split {height}x{width} into {s}x{s} non-empty cells")
    rows = tuple(i * height // s for i in range(s + 1))
    cols = tuple(i * width // s for i in range(s + 1))
    return GridGeometry(row_bounds=rows, col_bounds=cols)


def sample_stream(seed: int, epoch: int, index: int) -> np.random.Generator:
    """Independent generator for one (seed, epoch, sample) draw."""
    return np.random.default_rng(np.random.SeedSequence([seed, epoch, index]))


def sample_mask(spec: GridSpec, rng: np.random.Generator) -> MaskLabel:
    """Exactly k zeros, uniform over all C(s*s, k) subsets."""
    dropped = rng.choice(spec.cells, size=spec.k, replace=False)
    return MaskLabel.from_dropped(spec.s, [int(i) for i in dropped])


def apply_mask(image: np.ndarray, mask: MaskLabel, geom: GridGeometry, fill: float) -> np.ndarray:
    """Copy of image with every dropped cell set to fill across all channels."""
    if image.ndim != 3 or image.shape[1:] != (geom.height, geom.width):
        raise ShapeError(f"image {image.shape} does not match grid {geom.height}x{geom.width}")
    if mask.s != geom.s:
        raise ShapeError(f"mask for s={mask.s} applied to grid with s={geom.s}")
    out = image.copy()
    for idx in mask.dropped:
        r0, r1, c0, c1 = geom.cell(idx)
        out[:, r0:r1, c0:c1] = fill
    return out


def multiplicity(s: int, p: float) -> int:
    """Number of distinct masks C(s*s, k), k = round-half-up(s*s*p)."""
    assert s >= 1, f"s must be >= 1, got {s}"
    assert 0.0 <= p <= 1.0, f"p must be in [0, 1], got {p}"
    count = math.comb(s * s, drop_count(s, p))
    if count > _INT64_MAX:
        raise MultiplicityOverflowError(f"C({s * s}, {drop_count(s, p)}) = {count} exceeds 64-bit range")
    return count


def augment_sample(sample: Sample, spec: GridSpec, rng: np.random.Generator) -> Sample:
    """Masked copy of sample with its masking label attached; label unchanged."""
    assert sample.mask_label is None, f"sample {sample.id} already carries a mask label"
    _, h, w = sample.image.shape
    geom = partition(h, w, spec.s)
    mask = sample_mask(spec, rng)
    image = apply_mask(sample.image, mask, geom, spec.fill_value)
    return replace(sample, image=image, mask_label=mask)
