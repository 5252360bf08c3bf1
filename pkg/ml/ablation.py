"""
Mode ablation: the same folds and initializations trained under each mode.

Rows are modes, columns one Cross<i> per trained fold plus Mean (per-fold
accuracy averaged over seeds). Seed-level statistics use the median across seeds.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import pandas as pd

from core.enums import ABLATION_MODES, TrainMode
from core.models import ModelConfig, RunReport, Sample, TrainConfig
from data.folds import fold_name
from ml.train import run_training


@dataclass(frozen=True)
class AblationResult:
    folds: tuple[int, ...]
    seeds: tuple[int, ...]
    runs: dict[TrainMode, tuple[RunReport, ...]]

    def table(self) -> pd.DataFrame:
        """Mode x (Cross<i> per trained fold, Mean) accuracy table."""
        rows = {}
        for mode, reports in self.runs.items():
            per_fold = np.mean([r.fold_accuracies for r in reports], axis=0)
            rows[mode.value] = [*per_fold, float(np.mean(per_fold))]
        return pd.DataFrame.from_dict(rows, orient="index", columns=[*map(fold_name, self.folds), "Mean"])

    def median_accuracy(self, mode: TrainMode) -> float:
        return float(np.median([r.mean_accuracy for r in self.runs[mode]]))

    def median_gap(self, mode: TrainMode) -> float:
        return float(np.median([r.mean_gap for r in self.runs[mode]]))

    def format_table(self) -> str:
        """Accuracies in percent, two decimals."""
        return (self.table() * 100).to_string(float_format=lambda v: f"{v:.2f}") + "\n"

    def to_dict(self) -> dict[str, Any]:
        return {
            "folds": list(self.folds),
            "seeds": list(self.seeds),
            "table": self.table().to_dict(orient="index"),
            "median_accuracy": {m.value: self.median_accuracy(m) for m in self.runs},
            "median_gap": {m.value: self.median_gap(m) for m in self.runs},
            "runs": {m.value: [r.to_dict() for r in reports] for m, reports in self.runs.items()},
        }


def _mode_dir(mode: TrainMode) -> str:
    return mode.value.replace("+", "_")


def run_ablation(
    samples: list[Sample],
    config: TrainConfig,
    model_config: ModelConfig,
    seeds: Sequence[int],
    modes: Sequence[TrainMode] = ABLATION_MODES,
    out_dir: Path | None = None,
    folds: Sequence[int] | None = None,
) -> AblationResult:
    """
    Train every (mode, seed) over the selected folds (default: all
    config.folds). Within one seed all modes share fold assignment and
    per-fold initialization.
    """
    assert seeds, "at least one seed is required"
    assert modes, "at least one mode is required"
    fold_ids = list(range(config.folds)) if folds is None else list(folds)
    runs: dict[TrainMode, tuple[RunReport, ...]] = {}
    for mode in modes:
        reports = []
        for seed in seeds:
            run_dir = None if out_dir is None else out_dir / _mode_dir(mode) / f"seed{seed}"
            run_config = replace(config, mode=mode, seed=seed)
            reports.append(run_training(samples, run_config, model_config, run_dir, folds=fold_ids))
        runs[mode] = tuple(reports)

    result = AblationResult(folds=tuple(fold_ids), seeds=tuple(seeds), runs=runs)
    print("\n" + result.format_table(), flush=True)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "table.txt").write_text(result.format_table())
        (out_dir / "ablation.json").write_text(json.dumps(result.to_dict(), indent=2) + "\n")
    return result
