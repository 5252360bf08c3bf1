"""Pytest configuration and shared fixtures for the ordinal grid-dropout tests."""

import pytest

from core.enums import HeadKind, TrainMode
from core.models import GridSpec, ModelConfig, Sample, SynthSpec, TrainConfig
from data.synth import generate


def pytest_configure(config: pytest.Config) -> None:
    config.addinivalue_line(
        "markers",
        "slow: marks tests as slow (run with pytest -m slow or pytest --run-slow)",
    )


def pytest_addoption(parser: pytest.Parser) -> None:
    parser.addoption(
        "--run-slow",
        action="store_true",
        default=False,
        help="Run slow tests (disabled by default)",
    )


def pytest_collection_modifyitems(config: pytest.Config, items: list[pytest.Item]) -> None:
    if config.getoption("--run-slow"):
        return
    skip_slow = pytest.mark.skip(reason="slow test (use --run-slow to run)")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


# ---------------------------------------------------------------------------
# Tiny 4-level task: 24x24 disks, 3x3 grid, two conv blocks
# ---------------------------------------------------------------------------

TINY_SYNTH = SynthSpec(num_classes=4, image_size=24, base_radius=2.0, radius_step=2.0, center_jitter=1.0)
TINY_GRID = GridSpec(s=3, p=0.25)


@pytest.fixture
def tiny_samples() -> list[Sample]:
    """16 samples, four per level."""
    return generate(TINY_SYNTH, 4)


@pytest.fixture
def tiny_model_config() -> ModelConfig:
    return ModelConfig(input_shape=(1, 24, 24), conv_blocks=((4, 1), (4, 1)), num_classes=4, grid_cells=9)


@pytest.fixture
def tiny_train_config() -> TrainConfig:
    return TrainConfig(
        batch_size=4,
        epochs=2,
        max_steps=3,
        eval_every=2,
        folds=2,
        grid=TINY_GRID,
        mode=TrainMode.NEURON_GRID_MASKING,
    )


# ---------------------------------------------------------------------------
# Desk-scale study: default 8-level task, 3 folds (80 train / 40 test), flatten-dense head
# ---------------------------------------------------------------------------


@pytest.fixture
def study_model_config() -> ModelConfig:
    """Default topology with the flatten-dense head, which keeps where each edge lies."""
    return ModelConfig(head_kind=HeadKind.FLATTEN_DENSE)


@pytest.fixture
def study_train_config() -> TrainConfig:
    return TrainConfig(
        base_lr=0.01,
        decay_every=1000,
        batch_size=16,
        epochs=10_000,
        max_steps=3000,
        eval_every=500,
        folds=3,
    )
