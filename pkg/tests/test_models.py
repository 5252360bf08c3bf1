"""
Unit tests for domain models.

Tests cover:
  - Valid construction and defaults.
  - Invariant violations.
  - Derived properties on result records.
"""

import numpy as np
import pytest

from core.enums import HeadKind, TrainMode
from core.models import (
    CamResult,
    EvalRecord,
    FoldReport,
    GridSpec,
    LossWeights,
    ModelConfig,
    RunReport,
    Sample,
    SynthSpec,
    TrainConfig,
)


def _fold(fold: int, accuracy: float, train_loss: float, test_loss: float) -> FoldReport:
    record = EvalRecord(step=10, train_loss=train_loss, test_loss=test_loss, test_accuracy=accuracy)
    return FoldReport(
        fold=fold,
        records=(record,),
        accuracy=accuracy,
        mae=0.5,
        train_loss=train_loss,
        test_loss=test_loss,
        steps=10,
    )


# ===================================================================
# Configuration entities
# ===================================================================
class TestGridSpec:
    def test_defaults(self) -> None:
        """5x5 grid, drop ratio 0.25, six dropped cells."""
        spec = GridSpec()
        assert (spec.s, spec.p, spec.fill_value) == (5, 0.25, 0.0)
        assert spec.cells == 25
        assert spec.k == 6

    @pytest.mark.parametrize("p", [-0.1, 1.5])
    def test_ratio_out_of_range(self, p: float) -> None:
        with pytest.raises(AssertionError):
            GridSpec(p=p)

    def test_grid_size_positive(self) -> None:
        with pytest.raises(AssertionError):
            GridSpec(s=0)


class TestSample:
    def test_valid(self) -> None:
        sample = Sample(image=np.zeros((1, 4, 4)), label=2, id="a")
        assert sample.mask_label is None

    def test_image_needs_channel_axis(self) -> None:
        with pytest.raises(AssertionError):
            Sample(image=np.zeros((4, 4)), label=0, id="a")

    def test_negative_label(self) -> None:
        with pytest.raises(AssertionError):
            Sample(image=np.zeros((1, 4, 4)), label=-1, id="a")

    def test_empty_id(self) -> None:
        with pytest.raises(AssertionError):
            Sample(image=np.zeros((1, 4, 4)), label=0, id="")


class TestSynthSpec:
    def test_radius_schedule(self) -> None:
        spec = SynthSpec()
        assert spec.radius(0) == 4.0
        assert spec.radius(7) == 18.0
        assert spec.max_radius == 18.0

    def test_disk_must_fit(self) -> None:
        """Radius 18 plus jitter 3 cannot fit a 40-pixel image."""
        with pytest.raises(AssertionError):
            SynthSpec(image_size=40)


class TestModelConfig:
    def test_dict_round_trip(self) -> None:
        config = ModelConfig(head_kind=HeadKind.FLATTEN_DENSE, regression_head=True, conv_blocks=((4, 2),))
        assert ModelConfig.from_dict(config.to_dict()) == config

    def test_dropout_rate_below_one(self) -> None:
        with pytest.raises(AssertionError):
            ModelConfig(neuron_dropout_rate=1.0)

    def test_conv_layer_count(self) -> None:
        assert ModelConfig(conv_blocks=((4, 2), (8, 3))).num_conv_layers == 5


class TestTrainConfig:
    def test_defaults(self) -> None:
        config = TrainConfig()
        assert config.base_lr == 0.001
        assert config.decay_factor == 0.5
        assert config.decay_every == 5000
        assert config.batch_size == 64
        assert config.mode is TrainMode.NEURON_GRID_MASKING
        assert config.weights == LossWeights(alpha=0.5, beta=0.5)

    def test_needs_two_folds(self) -> None:
        with pytest.raises(AssertionError):
            TrainConfig(folds=1)

    def test_negative_loss_weight(self) -> None:
        with pytest.raises(AssertionError):
            LossWeights(beta=-0.1)


class TestTrainModeFlags:
    @pytest.mark.parametrize(
        ("mode", "grid", "neuron", "mask"),
        [
            (TrainMode.NEURON, False, True, False),
            (TrainMode.GRID, True, False, False),
            (TrainMode.NEURON_GRID, True, True, False),
            (TrainMode.NEURON_GRID_MASKING, True, True, True),
        ],
    )
    def test_flags(self, mode: TrainMode, grid: bool, neuron: bool, mask: bool) -> None:
        assert (mode.uses_grid, mode.uses_neuron_dropout, mode.uses_mask_loss) == (grid, neuron, mask)


# ===================================================================
# Results
# ===================================================================
class TestResults:
    def test_eval_record_gap(self) -> None:
        assert EvalRecord(step=0, train_loss=0.5, test_loss=0.75, test_accuracy=0.5).gap == pytest.approx(0.25)

    def test_accuracy_range(self) -> None:
        with pytest.raises(AssertionError):
            EvalRecord(step=0, train_loss=0.5, test_loss=0.5, test_accuracy=1.5)

    def test_fold_records_monotone(self) -> None:
        late = EvalRecord(step=20, train_loss=1.0, test_loss=1.0, test_accuracy=0.5)
        early = EvalRecord(step=10, train_loss=1.0, test_loss=1.0, test_accuracy=0.5)
        with pytest.raises(AssertionError):
            FoldReport(fold=0, records=(late, early), accuracy=0.5, mae=0.0, train_loss=1.0, test_loss=1.0, steps=20)

    def test_run_means(self) -> None:
        run = RunReport(
            mode=TrainMode.NEURON,
            seed=0,
            folds=(_fold(0, 0.5, 0.25, 0.75), _fold(1, 1.0, 0.5, 0.5)),
        )
        assert run.fold_accuracies == [0.5, 1.0]
        assert run.mean_accuracy == pytest.approx(0.75)
        assert run.mean_gap == pytest.approx(0.25)
        assert run.to_dict()["folds"][0]["records"][0]["gap"] == pytest.approx(0.5)

    def test_cam_display_range(self) -> None:
        with pytest.raises(AssertionError):
            CamResult(
                class_index=0,
                channel_weights=np.ones(2),
                raw_map=np.zeros((2, 2)),
                display_map=np.full((4, 4), 2.0),
            )
