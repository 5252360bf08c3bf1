"""
Tests for ml/train.py: schedule, single steps, evaluation and k-fold runs.
"""

from __future__ import annotations

import json
import time
from dataclasses import replace
from functools import partial
from types import SimpleNamespace

import numpy as np
import pytest

from core.enums import HeadKind, TrainMode
from core.errors import ConfigError, NumericalAbortError
from core.models import GridSpec, ModelConfig, Sample, SynthSpec, TrainConfig
from core.validate import check_masked_sample
from data.augment import augment_sample, sample_stream
from data.synth import generate
from ml.autodiff import constant
from ml.model import build
from ml.train import LossLog, evaluate, init_rng, lr_at, run_training, train_fold, train_step


# disks stay centred so the level is the only thing that moves a disk edge
SMOKE_SYNTH = SynthSpec(noise_sigma=0.02, center_jitter=0.0)


class _FixedPredictions:
    """Predicts round(10 * first pixel) for every image."""

    def forward(self, images, mode=None):
        preds = np.rint(images[:, 0, 0, 0] * 10).astype(int)
        logits = np.eye(4)[preds] * 5.0
        return SimpleNamespace(class_logits=constant(logits))


def _coded(labels: list[int], preds: list[int]) -> list[Sample]:
    return [
        Sample(image=np.full((1, 2, 2), p / 10), label=y, id=f"s{i}")
        for i, (y, p) in enumerate(zip(labels, preds))
    ]


def _masked(samples: list[Sample], grid: GridSpec) -> list[Sample]:
    return [augment_sample(s, grid, sample_stream(0, 0, i)) for i, s in enumerate(samples)]


# ===================================================================
# Learning-rate schedule
# ===================================================================
class TestLearningRate:
    @pytest.mark.parametrize(("step", "lr"), [(0, 0.001), (4999, 0.001), (5000, 0.0005), (10000, 0.00025)])
    def test_step_decay(self, step: int, lr: float) -> None:
        """Halved every 5000 steps from 0.001."""
        assert lr_at(TrainConfig(), step) == pytest.approx(lr)

    def test_non_increasing(self) -> None:
        """The rate never rises from one step to the next."""
        config = TrainConfig(decay_every=3)
        rates = [lr_at(config, s) for s in range(20)]
        assert all(a >= b for a, b in zip(rates, rates[1:]))


# ===================================================================
# Evaluation
# ===================================================================
class TestEvaluate:
    def test_all_correct(self) -> None:
        """Every prediction right: accuracy 1, MAE 0."""
        labels = [0, 1, 2, 3]
        loss, acc, mae = evaluate(_FixedPredictions(), _coded(labels, labels))
        assert acc == 1.0
        assert mae == 0.0
        assert loss > 0.0

    def test_none_correct(self) -> None:
        """Every prediction wrong: accuracy 0."""
        _, acc, _ = evaluate(_FixedPredictions(), _coded([0, 1, 2, 3], [1, 2, 3, 0]))
        assert acc == 0.0

    def test_three_of_eight(self) -> None:
        """3 correct of 8 is 0.375; absolute level errors sum to 9."""
        _, acc, mae = evaluate(_FixedPredictions(), _coded([0, 1, 2, 3, 0, 1, 2, 3], [0, 1, 2, 0, 1, 2, 3, 0]))
        assert acc == pytest.approx(0.375)
        assert mae == pytest.approx(9 / 8)

    def test_empty_rejected(self) -> None:
        """An empty evaluation set is rejected."""
        with pytest.raises(ValueError):
            evaluate(_FixedPredictions(), [])


# ===================================================================
# Single steps
# ===================================================================
class TestTrainStep:
    def test_neuron_mode_has_no_mask_loss(self, tiny_samples, tiny_model_config, tiny_train_config) -> None:
        """Without the masking loss l_mask is reported as None."""
        model = build(tiny_model_config, init_rng(0, 0))
        config = replace(tiny_train_config, mode=TrainMode.NEURON)
        b = train_step(model, tiny_samples[:4], config, 0, np.random.default_rng(0))
        assert b.l_mask is None
        assert b.l_reg is None
        assert b.total == pytest.approx(b.l_cla)

    def test_masking_mode_reports_mask_loss(self, tiny_samples, tiny_model_config, tiny_train_config) -> None:
        """total = l_cla + beta * l_mask."""
        model = build(tiny_model_config, init_rng(0, 0))
        batch = _masked(tiny_samples[:4], tiny_train_config.grid)
        b = train_step(model, batch, tiny_train_config, 0, np.random.default_rng(0))
        assert b.l_mask is not None and b.l_mask > 0
        assert b.total == pytest.approx(b.l_cla + 0.5 * b.l_mask)
        assert b.graph is None

    def test_masking_mode_needs_masks(self, tiny_samples, tiny_model_config, tiny_train_config) -> None:
        """Clean samples carry no masking label."""
        model = build(tiny_model_config, init_rng(0, 0))
        with pytest.raises(ConfigError):
            train_step(model, tiny_samples[:4], tiny_train_config, 0, np.random.default_rng(0))

    def test_update_moves_parameters(self, tiny_samples, tiny_model_config, tiny_train_config) -> None:
        """An SGD step changes the classifier weights."""
        model = build(tiny_model_config, init_rng(0, 0))
        before = model.params["cls.weight"].value.copy()
        config = replace(tiny_train_config, mode=TrainMode.NEURON)
        train_step(model, tiny_samples[:4], config, 0, np.random.default_rng(0))
        assert not np.array_equal(model.params["cls.weight"].value, before)

    def test_freezing_every_conv_layer(self, tiny_samples, tiny_model_config, tiny_train_config) -> None:
        """With every conv layer frozen a step leaves all conv weights and biases bit-identical."""
        model = build(tiny_model_config, init_rng(0, 0))
        model.freeze_prefix(len(model.conv_layers))
        conv = {n: p.value.tobytes() for n, p in model.params.items() if n.startswith("conv")}
        config = replace(tiny_train_config, mode=TrainMode.NEURON)
        train_step(model, tiny_samples[:4], config, 0, np.random.default_rng(0))
        assert {n: model.params[n].value.tobytes() for n in conv} == conv
        assert all(model.params[n].has_grad for n in conv)

    def test_grid_mode_disables_neuron_dropout(self, tiny_samples, tiny_model_config, tiny_train_config) -> None:
        """Grid dropout alone runs the heads on undropped features."""
        model = build(tiny_model_config, init_rng(0, 0))
        seen = []
        original = model.forward

        def spy(*args, **kwargs):
            seen.append(kwargs.get("neuron_dropout"))
            return original(*args, **kwargs)

        model.forward = spy
        batch = _masked(tiny_samples[:4], tiny_train_config.grid)
        train_step(model, batch, replace(tiny_train_config, mode=TrainMode.GRID), 0, np.random.default_rng(0))
        train_step(model, batch, replace(tiny_train_config, mode=TrainMode.NEURON_GRID), 1, np.random.default_rng(0))
        assert seen == [False, True]

    def test_non_finite_loss_aborts(self, tiny_samples, tiny_model_config, tiny_train_config) -> None:
        """A NaN loss stops training with the step number."""
        model = build(tiny_model_config, init_rng(0, 0))
        model.params["cls.bias"].value[:] = np.nan
        config = replace(tiny_train_config, mode=TrainMode.NEURON)
        with pytest.raises(NumericalAbortError) as excinfo:
            train_step(model, tiny_samples[:4], config, 7, np.random.default_rng(0))
        assert excinfo.value.step == 7


# ===================================================================
# Folds and runs
# ===================================================================
class TestTrainFold:
    def test_frozen_layers_unchanged(self, tiny_samples, tiny_model_config, tiny_train_config) -> None:
        """freeze_layers=1 keeps conv1_1 bit-identical while conv2_1 trains."""
        model = build(tiny_model_config, init_rng(0, 0))
        frozen = model.params["conv1_1.weight"].value.copy()
        trained = model.params["conv2_1.weight"].value.copy()
        config = replace(tiny_train_config, freeze_layers=1)
        train_fold(model, tiny_samples[:8], tiny_samples[8:], config)
        assert model.params["conv1_1.weight"].value.tobytes() == frozen.tobytes()
        assert not np.array_equal(model.params["conv2_1.weight"].value, trained)

    def test_records_and_final_eval(self, tiny_samples, tiny_model_config, tiny_train_config) -> None:
        """eval_every=2 with max_steps=3 evaluates at steps 2 and 3."""
        model = build(tiny_model_config, init_rng(0, 0))
        report = train_fold(model, tiny_samples[:8], tiny_samples[8:], tiny_train_config)
        assert [r.step for r in report.records] == [2, 3]
        assert report.steps == 3
        assert report.accuracy == report.records[-1].test_accuracy
        assert report.gap == pytest.approx(report.test_loss - report.train_loss)

    def test_hook_sees_every_masked_draw(self, tiny_samples, tiny_model_config, tiny_train_config) -> None:
        """3 steps of 4 draws, each a valid masked sample."""
        seen: list[Sample] = []

        def hook(sample: Sample) -> None:
            check_masked_sample(sample, tiny_train_config.grid)
            seen.append(sample)

        model = build(tiny_model_config, init_rng(0, 0))
        train_fold(model, tiny_samples[:8], tiny_samples[8:], tiny_train_config, hook=hook)
        assert len(seen) == 12
        assert all(s.mask_label.zeros == 2 for s in seen)

    def test_neuron_mode_never_masks(self, tiny_samples, tiny_model_config, tiny_train_config) -> None:
        """Neuron-only training never hands a masked draw to the hook."""
        seen: list[Sample] = []
        model = build(tiny_model_config, init_rng(0, 0))
        config = replace(tiny_train_config, mode=TrainMode.NEURON)
        train_fold(model, tiny_samples[:8], tiny_samples[8:], config, hook=seen.append)
        assert seen == []

    def test_zero_epochs_evaluates_initial_model(self, tiny_samples, tiny_model_config, tiny_train_config) -> None:
        """With no epochs the report holds one record at step 0."""
        model = build(tiny_model_config, init_rng(0, 0))
        report = train_fold(model, tiny_samples[:8], tiny_samples[8:], replace(tiny_train_config, epochs=0))
        assert report.steps == 0
        assert [r.step for r in report.records] == [0]


class TestRunTraining:
    def test_writes_outputs(self, tmp_path, tiny_samples, tiny_model_config, tiny_train_config) -> None:
        """losses.jsonl, report.json and one checkpoint pair per fold."""
        report = run_training(tiny_samples, tiny_train_config, tiny_model_config, tmp_path)
        lines = [json.loads(line) for line in (tmp_path / "losses.jsonl").read_text().splitlines()]
        assert len(lines) == 6
        assert [line["fold"] for line in lines] == [0, 0, 0, 1, 1, 1]
        assert all(line["l_mask"] is not None for line in lines)
        assert lines[0]["lr"] == pytest.approx(0.001)
        saved = json.loads((tmp_path / "report.json").read_text())
        assert saved["mode"] == "neuron+grid+masking"
        assert saved["mean_accuracy"] == pytest.approx(report.mean_accuracy)
        for fold in (0, 1):
            assert (tmp_path / f"fold{fold}.ordg").exists()
            assert (tmp_path / f"fold{fold}.json").exists()

    def test_reproducible(self, tmp_path, tiny_samples, tiny_model_config, tiny_train_config) -> None:
        """Same config, same seed: identical losses and reports."""
        a = run_training(tiny_samples, tiny_train_config, tiny_model_config, tmp_path / "a")
        b = run_training(tiny_samples, tiny_train_config, tiny_model_config, tmp_path / "b")
        assert a.to_dict() == b.to_dict()
        assert (tmp_path / "a" / "losses.jsonl").read_text() == (tmp_path / "b" / "losses.jsonl").read_text()

    def test_selected_folds(self, tiny_samples, tiny_model_config, tiny_train_config) -> None:
        """Only the requested folds are trained."""
        report = run_training(tiny_samples, tiny_train_config, tiny_model_config, folds=[1])
        assert [f.fold for f in report.folds] == [1]

    def test_stream_ends_with_done(self, capsys, tiny_samples, tiny_model_config, tiny_train_config) -> None:
        """Streaming echoes step records and ends with the done marker."""
        run_training(tiny_samples, tiny_train_config, tiny_model_config, stream=True, folds=[0])
        out = capsys.readouterr().out.strip().splitlines()
        assert out[-1] == '{"done":true}'
        assert any(line.startswith('{"fold": 0, "step": 0') for line in out)

    def test_grid_cell_mismatch(self, tiny_samples, tiny_model_config, tiny_train_config) -> None:
        """The mask head width must match the grid."""
        with pytest.raises(ConfigError):
            run_training(tiny_samples, replace(tiny_train_config, grid=GridSpec(s=4)), tiny_model_config)

    def test_regression_needs_head(self, tiny_samples, tiny_model_config, tiny_train_config) -> None:
        """use_regression without a regression head is a config error."""
        with pytest.raises(ConfigError):
            run_training(tiny_samples, replace(tiny_train_config, use_regression=True), tiny_model_config)

    def test_regression_loss_logged(self, tmp_path, tiny_samples, tiny_model_config, tiny_train_config) -> None:
        """The regression term is logged and weighted by alpha in the total."""
        model_config = replace(tiny_model_config, regression_head=True)
        config = replace(tiny_train_config, use_regression=True)
        run_training(tiny_samples, config, model_config, tmp_path, folds=[0])
        first = json.loads((tmp_path / "losses.jsonl").read_text().splitlines()[0])
        assert first["l_reg"] is not None
        assert first["total"] == pytest.approx(first["l_cla"] + 0.5 * first["l_reg"] + 0.5 * first["l_mask"])


def test_loss_log_echo(tmp_path, capsys) -> None:
    """Records go to the file and, when streaming, to stdout."""
    with LossLog(tmp_path / "out" / "losses.jsonl", stream=True) as log:
        log({"step": 0})
    assert (tmp_path / "out" / "losses.jsonl").read_text() == '{"step": 0}\n'
    assert capsys.readouterr().out == '{"step": 0}\n'


# ===================================================================
# Convergence (slow)
# ===================================================================
@pytest.mark.slow
def test_overfits_one_batch() -> None:
    """Repeated steps on one fixed batch drive the loss below 0.05."""
    rng = np.random.default_rng(0)
    batch = [Sample(image=rng.random((1, 8, 8)), label=i % 4, id=f"b{i}") for i in range(8)]
    model_config = ModelConfig(
        input_shape=(1, 8, 8),
        conv_blocks=((4, 1),),
        head_kind=HeadKind.FLATTEN_DENSE,
        hidden_dim=32,
        num_classes=4,
        grid_cells=4,
        neuron_dropout_rate=0.0,
    )
    config = TrainConfig(base_lr=0.1, decay_every=10_000, mode=TrainMode.NEURON, grid=GridSpec(s=2))
    model = build(model_config, np.random.default_rng(1))
    step_rng = np.random.default_rng(2)
    total = float("inf")
    for step in range(500):
        total = train_step(model, batch, config, step, step_rng).total
    assert total < 0.05


@pytest.mark.slow
def test_smoke_reaches_accuracy(study_model_config, study_train_config) -> None:
    """Low-noise 8-level task, fold 0 of 3, full augmentation: 3000 steps reach 85% test accuracy."""
    samples = generate(SMOKE_SYNTH, 15)
    hook = partial(check_masked_sample, spec=study_train_config.grid)
    started = time.perf_counter()
    report = run_training(samples, study_train_config, study_model_config, folds=[0], hook=hook)
    elapsed = time.perf_counter() - started
    fold = report.folds[0]
    assert report.mode is TrainMode.NEURON_GRID_MASKING
    assert fold.steps == 3000
    assert fold.accuracy >= 0.85
    assert elapsed < 5 * 60
