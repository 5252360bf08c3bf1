"""
Enumerations for the grid-dropout ordinal toolkit.
"""

from enum import Enum

__all__ = ["ForwardMode", "HeadKind", "TrainMode"]


class ForwardMode(Enum):
    TRAIN = "train"
    EVAL = "eval"


class HeadKind(Enum):
    FLATTEN_DENSE = "flatten-dense"  # flatten -> dense hidden -> ReLU
    GAP_LINEAR = "gap-linear"        # global average pool; CAM identity holds


class TrainMode(Enum):
    NEURON = "neuron"
    GRID = "grid"                    # grid dropout alone, neuron dropout off
    NEURON_GRID = "neuron+grid"
    NEURON_GRID_MASKING = "neuron+grid+masking"

    @property
    def uses_grid(self) -> bool:
        return self is not TrainMode.NEURON

    @property
    def uses_neuron_dropout(self) -> bool:
        return self is not TrainMode.GRID

    @property
    def uses_mask_loss(self) -> bool:
        return self is TrainMode.NEURON_GRID_MASKING


ABLATION_MODES = (TrainMode.NEURON, TrainMode.NEURON_GRID, TrainMode.NEURON_GRID_MASKING)
