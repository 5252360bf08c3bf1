"""
Domain entities for the grid-dropout ordinal toolkit.

Each entity enforces invariants in __post_init__ via assertions.

Entities:
  - GridSpec / MaskLabel / GridGeometry: grid dropout geometry and labels
  - Sample: image + ordinal level + optional masking label
  - SynthSpec: synthetic disk-radius dataset parameters
  - ModelConfig / TrainConfig / LossWeights: network and run settings
  - LossBreakdown / CamResult / EvalRecord / FoldReport / RunReport: results
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import TYPE_CHECKING, Any

import numpy as np

from core.constants import (
    BASE_LR,
    BATCH_SIZE,
    DECAY_EVERY,
    DECAY_FACTOR,
    DEFAULT_FOLDS,
    DROP_RATIO,
    FILL_VALUE,
    GRID_SIZE,
    IMAGE_SIZE,
    LOSS_ALPHA,
    LOSS_BETA,
    NEURON_DROPOUT_RATE,
    NUM_CLASSES,
)
from core.enums import HeadKind, TrainMode

if TYPE_CHECKING:
    from ml.autodiff import Node


def drop_count(s: int, p: float) -> int:
    """Number of dropped cells: s*s*p rounded half up."""
    return int(math.floor(s * s * p + 0.5))


# ===================================================================
# Grid dropout
# ===================================================================
@dataclass(frozen=True)
class GridSpec:
    """
    Grid geometry for grid dropout.

    Invariants:
      - s >= 1
      - 0 <= p <= 1 (p is the DROP ratio)
      - 0 <= k <= s*s
    """

    s: int = GRID_SIZE
    p: float = DROP_RATIO
    fill_value: float = FILL_VALUE

    def __post_init__(self) -> None:
        assert isinstance(self.s, int) and self.s >= 1, f"s must be a positive int, got {self.s!r}"
        assert 0.0 <= self.p <= 1.0, f"p must be in [0, 1], got {self.p}"
        assert math.isfinite(self.fill_value), f"fill_value must be finite, got {self.fill_value}"
        assert 0 <= self.k <= self.cells

    @property
    def cells(self) -> int:
        return self.s * self.s

    @property
    def k(self) -> int:
        return drop_count(self.s, self.p)


@dataclass(frozen=True)
class MaskLabel:
    """
    Keep/drop bit per grid cell, row-major; 1 = kept, 0 = dropped.

    Invariants:
      - len(bits) is a perfect square s*s
      - every bit is 0 or 1
    """

    bits: tuple[int, ...]

    def __post_init__(self) -> None:
        n = len(self.bits)
        s = math.isqrt(n)
        assert n >= 1 and s * s == n, f"mask length must be a perfect square, got {n}"
        assert all(b in (0, 1) for b in self.bits), f"mask bits must be 0/1, got {self.bits}"

    @classmethod
    def from_dropped(cls, s: int, dropped: list[int] | tuple[int, ...]) -> MaskLabel:
        """Build a mask from 0-based row-major indices of dropped cells."""
        bits = [1] * (s * s)
        for idx in dropped:
            assert 0 <= idx < s * s, f"cell index {idx} outside grid of {s * s} cells"
            bits[idx] = 0
        return cls(tuple(bits))

    @classmethod
    def all_kept(cls, s: int) -> MaskLabel:
        return cls((1,) * (s * s))

    @property
    def s(self) -> int:
        return math.isqrt(len(self.bits))

    @property
    def dropped(self) -> tuple[int, ...]:
        return tuple(i for i, b in enumerate(self.bits) if b == 0)

    @property
    def zeros(self) -> int:
        return len(self.bits) - sum(self.bits)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.bits, dtype=np.float64)


@dataclass(frozen=True)
class GridGeometry:
    """
    Pixel bounds of an s x s partition.

    Invariants:
      - both bound sequences start at 0 and are strictly increasing
      - len(row_bounds) == len(col_bounds) == s + 1
    """

    row_bounds: tuple[int, ...]
    col_bounds: tuple[int, ...]

    def __post_init__(self) -> None:
        for name, bounds in (("row_bounds", self.row_bounds), ("col_bounds", self.col_bounds)):
            assert len(bounds) >= 2, f"{name} needs at least two entries"
            assert bounds[0] == 0, f"{name} must start at 0, got {bounds[0]}"
            assert all(a < b for a, b in zip(bounds, bounds[1:])), (
                f"{name} must be strictly increasing, got {bounds}"
            )
        assert len(self.row_bounds) == len(self.col_bounds), "row and column grids differ in s"

    @property
    def s(self) -> int:
        return len(self.row_bounds) - 1

    @property
    def height(self) -> int:
        return self.row_bounds[-1]

    @property
    def width(self) -> int:
        return self.col_bounds[-1]

    def cell(self, index: int) -> tuple[int, int, int, int]:
        """(r0, r1, c0, c1) for a row-major cell index."""
        r, c = divmod(index, self.s)
        return self.row_bounds[r], self.row_bounds[r + 1], self.col_bounds[c], self.col_bounds[c + 1]


# ===================================================================
# Data
# ===================================================================
@dataclass(frozen=True, eq=False)
class Sample:
    """
    One training/testing example.

    Invariants:
      - image is a float64 array of shape (C, H, W) with values in [0, 1]
      - label >= 0 (upper bound checked against num_classes by validate_samples)
      - id is a non-empty string
    """

    image: np.ndarray
    label: int
    id: str
    mask_label: MaskLabel | None = None

    def __post_init__(self) -> None:
        assert isinstance(self.image, np.ndarray) and self.image.ndim == 3, (
            f"image must be a (C, H, W) array, got {getattr(self.image, 'shape', None)}"
        )
        assert isinstance(self.label, int) and self.label >= 0, f"label must be a non-negative int, got {self.label!r}"
        assert isinstance(self.id, str) and self.id, f"id must be a non-empty string, got {self.id!r}"


@dataclass(frozen=True)
class SynthSpec:
    """
    Disk-radius ordinal task: level l is a filled disk of radius base + step*l.

    Invariants:
      - the largest disk plus jitter fits inside the image
      - noise_sigma >= 0
    """

    num_classes: int = NUM_CLASSES
    image_size: int = IMAGE_SIZE
    base_radius: float = 4.0
    radius_step: float = 2.0
    noise_sigma: float = 0.05
    center_jitter: float = 3.0
    seed: int = 0

    def __post_init__(self) -> None:
        assert self.num_classes >= 2, f"num_classes must be >= 2, got {self.num_classes}"
        assert self.base_radius > 0 and self.radius_step >= 0
        assert self.noise_sigma >= 0, f"noise_sigma must be >= 0, got {self.noise_sigma}"
        assert self.center_jitter >= 0, f"center_jitter must be >= 0, got {self.center_jitter}"
        assert self.max_radius < self.image_size / 2, (
            f"max radius {self.max_radius} does not fit image of size {self.image_size}"
        )
        assert self.max_radius + self.center_jitter <= (self.image_size - 1) / 2, (
            f"disk of radius {self.max_radius} with jitter {self.center_jitter} can leave the image"
        )

    @property
    def max_radius(self) -> float:
        return self.base_radius + self.radius_step * (self.num_classes - 1)

    def radius(self, level: int) -> float:
        return self.base_radius + self.radius_step * level


# ===================================================================
# Model / training configuration
# ===================================================================
@dataclass(frozen=True)
class ModelConfig:
    """
    Reduced VGG-style topology with class, mask and optional regression heads.

    Each conv block is (out_channels, convs_per_block) followed by a 2x2 max
    pool. Pool compatibility with the input size is checked by
    core.validate.feature_map_shape.
    """

    input_shape: tuple[int, int, int] = (1, IMAGE_SIZE, IMAGE_SIZE)
    conv_blocks: tuple[tuple[int, int], ...] = ((8, 1), (16, 1), (32, 1))
    head_kind: HeadKind = HeadKind.GAP_LINEAR
    hidden_dim: int = 64
    num_classes: int = NUM_CLASSES
    grid_cells: int = GRID_SIZE * GRID_SIZE
    regression_head: bool = False
    neuron_dropout_rate: float = NEURON_DROPOUT_RATE

    def __post_init__(self) -> None:
        assert len(self.input_shape) == 3 and all(d >= 1 for d in self.input_shape), (
            f"input_shape must be (C, H, W) with positive extents, got {self.input_shape}"
        )
        assert len(self.conv_blocks) >= 1, "at least one conv block is required"
        for out_ch, n_convs in self.conv_blocks:
            assert out_ch >= 1 and n_convs >= 1, f"invalid conv block ({out_ch}, {n_convs})"
        assert isinstance(self.head_kind, HeadKind), f"head_kind must be a HeadKind, got {self.head_kind!r}"
        assert self.hidden_dim >= 1
        assert self.num_classes >= 2, f"num_classes must be >= 2, got {self.num_classes}"
        assert self.grid_cells >= 1
        assert 0.0 <= self.neuron_dropout_rate < 1.0, (
            f"neuron_dropout_rate must be in [0, 1), got {self.neuron_dropout_rate}"
        )

    @property
    def num_conv_layers(self) -> int:
        return sum(n for _, n in self.conv_blocks)

    @property
    def feature_channels(self) -> int:
        return self.conv_blocks[-1][0]

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["head_kind"] = self.head_kind.value
        d["input_shape"] = list(self.input_shape)
        d["conv_blocks"] = [list(b) for b in self.conv_blocks]
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> ModelConfig:
        return cls(
            input_shape=tuple(d["input_shape"]),
            conv_blocks=tuple(tuple(b) for b in d["conv_blocks"]),
            head_kind=HeadKind(d["head_kind"]),
            hidden_dim=d["hidden_dim"],
            num_classes=d["num_classes"],
            grid_cells=d["grid_cells"],
            regression_head=d["regression_head"],
            neuron_dropout_rate=d["neuron_dropout_rate"],
        )


@dataclass(frozen=True)
class LossWeights:
    """alpha weighs the regression loss, beta the mask loss."""

    alpha: float = LOSS_ALPHA
    beta: float = LOSS_BETA

    def __post_init__(self) -> None:
        assert math.isfinite(self.alpha) and self.alpha >= 0, f"alpha must be finite and >= 0, got {self.alpha}"
        assert math.isfinite(self.beta) and self.beta >= 0, f"beta must be finite and >= 0, got {self.beta}"


@dataclass(frozen=True)
class TrainConfig:
    """
    SGD run settings. lr(step) = base_lr * decay_factor ** (step // decay_every).

    max_steps, when set, stops training early regardless of epochs.
    """

    base_lr: float = BASE_LR
    decay_factor: float = DECAY_FACTOR
    decay_every: int = DECAY_EVERY
    batch_size: int = BATCH_SIZE
    epochs: int = 150
    max_steps: int | None = None
    weights: LossWeights = field(default_factory=LossWeights)
    mode: TrainMode = TrainMode.NEURON_GRID_MASKING
    use_regression: bool = False
    grid: GridSpec = field(default_factory=GridSpec)
    seed: int = 0
    eval_every: int = 100
    folds: int = DEFAULT_FOLDS
    freeze_layers: int = 0

    def __post_init__(self) -> None:
        assert self.base_lr > 0, f"base_lr must be > 0, got {self.base_lr}"
        assert 0 < self.decay_factor <= 1, f"decay_factor must be in (0, 1], got {self.decay_factor}"
        assert self.decay_every >= 1
        assert self.batch_size >= 1
        assert self.epochs >= 0
        assert self.max_steps is None or self.max_steps >= 0
        assert isinstance(self.mode, TrainMode), f"mode must be a TrainMode, got {self.mode!r}"
        assert self.eval_every >= 1
        assert self.folds >= 2, f"folds must be >= 2, got {self.folds}"
        assert self.freeze_layers >= 0


# ===================================================================
# Results
# ===================================================================
@dataclass(frozen=True)
class LossBreakdown:
    """
    Loss components of one step. total = l_cla + alpha*l_reg + beta*l_mask,
    absent terms contributing 0. `graph` is the differentiable total.
    """

    l_cla: float
    l_reg: float | None
    l_mask: float | None
    total: float
    graph: Node | None = field(default=None, compare=False, repr=False)

    def to_record(self, step: int, lr: float) -> dict[str, Any]:
        return {
            "step": step,
            "l_cla": self.l_cla,
            "l_reg": self.l_reg,
            "l_mask": self.l_mask,
            "total": self.total,
            "lr": lr,
        }


@dataclass(frozen=True, eq=False)
class CamResult:
    """
    Gradient-weighted activation map for one class.

    raw_map is the signed l x l sum of channel-weighted feature maps;
    display_map, when present, is the upsampled map scaled into [0, 1].
    """

    class_index: int
    channel_weights: np.ndarray
    raw_map: np.ndarray
    display_map: np.ndarray | None = None

    def __post_init__(self) -> None:
        assert self.channel_weights.ndim == 1
        assert self.raw_map.ndim == 2 and self.raw_map.shape[0] == self.raw_map.shape[1]
        if self.display_map is not None:
            assert self.display_map.min() >= 0.0 and self.display_map.max() <= 1.0


@dataclass(frozen=True)
class EvalRecord:
    step: int
    train_loss: float
    test_loss: float
    test_accuracy: float

    def __post_init__(self) -> None:
        assert 0.0 <= self.test_accuracy <= 1.0, f"accuracy must be in [0, 1], got {self.test_accuracy}"

    @property
    def gap(self) -> float:
        return self.test_loss - self.train_loss


@dataclass(frozen=True)
class FoldReport:
    """Curves and final metrics of one fold."""

    fold: int
    records: tuple[EvalRecord, ...]
    accuracy: float
    mae: float
    train_loss: float
    test_loss: float
    steps: int

    def __post_init__(self) -> None:
        assert 0.0 <= self.accuracy <= 1.0
        steps = [r.step for r in self.records]
        assert steps == sorted(steps), "eval records must be monotone in step"

    @property
    def gap(self) -> float:
        return self.test_loss - self.train_loss


@dataclass(frozen=True)
class RunReport:
    mode: TrainMode
    seed: int
    folds: tuple[FoldReport, ...]

    @property
    def fold_accuracies(self) -> list[float]:
        return [f.accuracy for f in self.folds]

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean(self.fold_accuracies)) if self.folds else 0.0

    @property
    def mean_gap(self) -> float:
        return float(np.mean([f.gap for f in self.folds])) if self.folds else 0.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "mode": self.mode.value,
            "seed": self.seed,
            "mean_accuracy": self.mean_accuracy,
            "mean_gap": self.mean_gap,
            "folds": [
                {
                    "fold": f.fold,
                    "accuracy": f.accuracy,
                    "mae": f.mae,
                    "train_loss": f.train_loss,
                    "test_loss": f.test_loss,
                    "steps": f.steps,
                    "records": [
                        {
                            "step": r.step,
                            "train_loss": r.train_loss,
                            "test_loss": r.test_loss,
                            "test_accuracy": r.test_accuracy,
                            "gap": r.gap,
                        }
                        for r in f.records
                    ],
                }
                for f in self.folds
            ],
        }
