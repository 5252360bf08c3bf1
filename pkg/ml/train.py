"""
SGD training with online grid-dropout augmentation.

Modes (core.enums.TrainMode):
  neuron                 clean images, neuron dropout on X
  grid                   grid-masked images, no neuron dropout
  neuron+grid            grid-masked images + neuron dropout
  neuron+grid+masking    as above, plus the masking-label loss

Every random draw has its own stream: model init per (seed, fold), batch
order per (seed, fold, epoch), neuron dropout per (seed, fold), grid masks
per (seed, epoch, sample index). A run is fully determined by its config.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import replace
from pathlib import Path
from typing import Callable, TextIO

import numpy as np
from sklearn.metrics import accuracy_score, mean_absolute_error

from core.enums import ForwardMode
from core.errors import ConfigError, NumericalAbortError
from core.models import EvalRecord, FoldReport, LossBreakdown, ModelConfig, RunReport, Sample, TrainConfig
from data.augment import augment_sample, sample_stream
from data.folds import kfold, train_test_for_fold
from ml.autodiff import zero_grad
from ml.checkpoint import save_model
from ml.losses import euclidean_loss, sigmoid_cross_entropy, softmax_cross_entropy, total_loss
from ml.model import OrdinalNet, build

logger = logging.getLogger(__name__)

EVAL_CHUNK = 64

# stream tags keep derived generators apart
_INIT_STREAM = 1
_SHUFFLE_STREAM = 2
_DROPOUT_STREAM = 3


def _stream(*keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(list(keys)))


def init_rng(seed: int, fold: int) -> np.random.Generator:
    """Initialization stream shared by every mode trained on (seed, fold)."""
    return _stream(seed, fold, _INIT_STREAM)


def lr_at(config: TrainConfig, step: int) -> float:
    """base_lr * decay_factor ** floor(step / decay_every)."""
    assert step >= 0, f"step must be >= 0, got {step}"
    return config.base_lr * config.decay_factor ** (step // config.decay_every)


class LossLog:
    """Appends per-step loss records to losses.jsonl; echoes them with stream=True."""

    def __init__(self, path: Path | None = None, stream: bool = False) -> None:
        self.path = path
        self.stream = stream
        self._fh: TextIO | None = None
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(path, "w")

    def __call__(self, record: dict) -> None:
        line = json.dumps(record)
        if self._fh is not None:
            self._fh.write(line + "\n")
        if self.stream:
            print(line, flush=True)

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def __enter__(self) -> LossLog:
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()


def _stack(samples: list[Sample]) -> tuple[np.ndarray, np.ndarray]:
    images = np.stack([s.image for s in samples])
    labels = np.array([s.label for s in samples], dtype=np.int64)
    return images, labels


def train_step(
    model: OrdinalNet,
    batch: list[Sample],
    config: TrainConfig,
    step: int,
    rng: np.random.Generator,
) -> LossBreakdown:
    """One forward/backward/SGD update. Frozen parameters are left untouched."""
    assert batch, "train_step needs a non-empty batch"
    images, labels = _stack(batch)
    record = model.forward(
        images,
        ForwardMode.TRAIN,
        rng=rng,
        neuron_dropout=config.mode.uses_neuron_dropout,
    )

    l_cla = softmax_cross_entropy(record.class_logits, labels)
    l_reg = None
    if config.use_regression:
        if record.regression_out is None:
            raise ConfigError("use_regression is set but the model has no regression head")
        l_reg = euclidean_loss(record.regression_out, labels.astype(np.float64))
    l_mask = None
    if config.mode.uses_mask_loss:
        missing = [s.id for s in batch if s.mask_label is None]
        if missing:
            raise ConfigError(f"masking loss needs mask labels; missing for {missing[:3]}")
        targets = np.stack([s.mask_label.as_array() for s in batch])
        l_mask = sigmoid_cross_entropy(record.mask_logits, targets)

    breakdown = total_loss(l_cla, l_reg, l_mask, config.weights)
    if not math.isfinite(breakdown.total):
        raise NumericalAbortError(step, f"l_cla={breakdown.l_cla} l_reg={breakdown.l_reg} l_mask={breakdown.l_mask}")

    zero_grad(model.parameters)
    breakdown.graph.backward()
    lr = lr_at(config, step)
    for p in model.parameters:
        if p.frozen or not p.has_grad:
            continue
        p.value -= lr * p.grad
    return replace(breakdown, graph=None)


def evaluate(model: OrdinalNet, samples: list[Sample]) -> tuple[float, float, float]:
    """Eval-mode (mean classification loss, accuracy, mean absolute level error) on clean images."""
    if not samples:
        raise ValueError("cannot evaluate an empty sample set")
    loss_sum = 0.0
    preds: list[np.ndarray] = []
    for start in range(0, len(samples), EVAL_CHUNK):
        images, labels = _stack(samples[start:start + EVAL_CHUNK])
        record = model.forward(images, ForwardMode.EVAL)
        loss_sum += softmax_cross_entropy(record.class_logits, labels).item() * len(labels)
        preds.append(record.class_logits.value.argmax(axis=-1))
    y_true = [s.label for s in samples]
    y_pred = np.concatenate(preds)
    return (
        loss_sum / len(samples),
        float(accuracy_score(y_true, y_pred)),
        float(mean_absolute_error(y_true, y_pred)),
    )


def train_fold(
    model: OrdinalNet,
    train: list[Sample],
    test: list[Sample],
    config: TrainConfig,
    fold: int = 0,
    log: Callable[[dict], None] | None = None,
    hook: Callable[[Sample], None] | None = None,
) -> FoldReport:
    """
    Train on one fold and evaluate every eval_every steps.

    In grid modes every draw gets a fresh mask; `hook` sees each augmented
    sample before it reaches the model.
    """
    assert train and test, "train and test sets must be non-empty"
    model.freeze_prefix(config.freeze_layers)
    dropout_rng = _stream(config.seed, fold, _DROPOUT_STREAM)
    records: list[EvalRecord] = []
    step = 0

    def checkpoint_eval() -> None:
        train_loss, _, _ = evaluate(model, train)
        test_loss, acc, _ = evaluate(model, test)
        records.append(EvalRecord(step, train_loss, test_loss, acc))
        print(
            f"  Fold {fold}  step {step:5d}  train_loss={train_loss:.4f}  "
            f"test_loss={test_loss:.4f}  test_acc={acc:.3f}  lr={lr_at(config, step):.1e}",
            flush=True,
        )

    for epoch in range(config.epochs):
        if config.max_steps is not None and step >= config.max_steps:
            break
        order = _stream(config.seed, fold, epoch, _SHUFFLE_STREAM).permutation(len(train))
        for start in range(0, len(train), config.batch_size):
            if config.max_steps is not None and step >= config.max_steps:
                break
            batch = []
            for i in order[start:start + config.batch_size]:
                sample = train[int(i)]
                if config.mode.uses_grid:
                    sample = augment_sample(sample, config.grid, sample_stream(config.seed, epoch, int(i)))
                    if hook is not None:
                        hook(sample)
                batch.append(sample)
            breakdown = train_step(model, batch, config, step, dropout_rng)
            if log is not None:
                log({"fold": fold, **breakdown.to_record(step, lr_at(config, step))})
            step += 1
            if step % config.eval_every == 0:
                checkpoint_eval()

    if not records or records[-1].step != step:
        checkpoint_eval()
    _, _, mae = evaluate(model, test)
    last = records[-1]
    return FoldReport(
        fold=fold,
        records=tuple(records),
        accuracy=last.test_accuracy,
        mae=mae,
        train_loss=last.train_loss,
        test_loss=last.test_loss,
        steps=step,
    )


def run_training(
    samples: list[Sample],
    config: TrainConfig,
    model_config: ModelConfig,
    out_dir: Path | None = None,
    stream: bool = False,
    folds: list[int] | None = None,
    hook: Callable[[Sample], None] | None = None,
) -> RunReport:
    """
    k-fold training run. With out_dir, writes losses.jsonl, report.json and
    fold{i}.ordg + fold{i}.json checkpoints.
    """
    if model_config.grid_cells != config.grid.cells:
        raise ConfigError(f"mask head has {model_config.grid_cells} outputs but the grid has {config.grid.cells} cells")
    if config.use_regression and not model_config.regression_head:
        raise ConfigError("use_regression needs a model with a regression head")

    split = kfold([s.id for s in samples], [s.label for s in samples], config.folds, config.seed)
    by_id = {s.id: s for s in samples}
    fold_ids = range(config.folds) if folds is None else folds
    assert all(0 <= f < config.folds for f in fold_ids), f"folds {list(fold_ids)} outside [0, {config.folds})"

    print(f"Training mode={config.mode.value} seed={config.seed} folds={list(fold_ids)}", flush=True)
    reports: list[FoldReport] = []
    with LossLog(None if out_dir is None else out_dir / "losses.jsonl", stream) as log:
        for fold in fold_ids:
            train_ids, test_ids = train_test_for_fold(split, fold)
            model = build(model_config, init_rng(config.seed, fold))
            report = train_fold(
                model,
                [by_id[i] for i in train_ids],
                [by_id[i] for i in test_ids],
                config,
                fold=fold,
                log=log,
                hook=hook,
            )
            reports.append(report)
            print(f"  Fold {fold} done: accuracy={report.accuracy:.3f}  mae={report.mae:.3f}  gap={report.gap:.4f}")
            if out_dir is not None:
                save_model(model, out_dir / f"fold{fold}.ordg")

    run = RunReport(mode=config.mode, seed=config.seed, folds=tuple(reports))
    print(f"Mean accuracy: {run.mean_accuracy:.3f}  mean gap: {run.mean_gap:.4f}", flush=True)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "report.json").write_text(json.dumps(run.to_dict(), indent=2) + "\n")
        logger.info("wrote %s", out_dir / "report.json")
    if stream:
        print('{"done":true}', flush=True)
    return run
