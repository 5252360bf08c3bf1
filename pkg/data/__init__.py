"""Synthetic ordinal images, grid dropout, dataset directories and folds."""

from data.augment import augment_sample, multiplicity, partition
from data.synth import generate

__all__ = ["augment_sample", "generate", "multiplicity", "partition"]
