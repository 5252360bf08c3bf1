"""Core domain types shared across data and ml."""

from core.constants import DROP_RATIO, GRID_SIZE, IMAGE_SIZE, NUM_CLASSES
from core.enums import ForwardMode, HeadKind, TrainMode
from core.errors import OrdinalGridError
from core.models import GridSpec, MaskLabel, ModelConfig, Sample, SynthSpec, TrainConfig

__all__ = [
    "DROP_RATIO",
    "ForwardMode",
    "GRID_SIZE",
    "GridSpec",
    "HeadKind",
    "IMAGE_SIZE",
    "MaskLabel",
    "ModelConfig",
    "NUM_CLASSES",
    "OrdinalGridError",
    "Sample",
    "SynthSpec",
    "TrainConfig",
    "TrainMode",
]
