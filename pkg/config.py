"""Run configuration: synthetic data, grid dropout, model and training settings."""

from __future__ import annotations

import json
from copy import deepcopy
from dataclasses import dataclass, field
from pathlib import Path

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
from core.errors import ConfigError
from core.models import GridSpec, LossWeights, ModelConfig, SynthSpec, TrainConfig

SECTIONS = ("synth", "grid", "model", "train")


def _default_config() -> dict:
    return {
        "seed": 0,
        "synth": {
            "num_classes": NUM_CLASSES,
            "image_size": IMAGE_SIZE,
            "base_radius": 4.0,
            "radius_step": 2.0,
            "noise_sigma": 0.05,
            "center_jitter": 3.0,
            "count_per_class": 15,
        },
        "grid": {
            "s": GRID_SIZE,
            "p": DROP_RATIO,  # drop ratio; k = round-half-up(s*s*p)
            "fill_value": FILL_VALUE,
        },
        "model": {
            "conv_blocks": [[8, 1], [16, 1], [32, 1]],
            "head_kind": HeadKind.GAP_LINEAR.value,
            "hidden_dim": 64,
            "neuron_dropout_rate": NEURON_DROPOUT_RATE,
        },
        "train": {
            "base_lr": BASE_LR,
            "decay_factor": DECAY_FACTOR,
            "decay_every": DECAY_EVERY,
            "batch_size": BATCH_SIZE,
            "epochs": 150,
            "max_steps": None,
            "alpha": LOSS_ALPHA,
            "beta": LOSS_BETA,
            "mode": TrainMode.NEURON_GRID_MASKING.value,
            "use_regression": False,
            "eval_every": 100,
            "folds": DEFAULT_FOLDS,
            "freeze_layers": 0,
        },
    }


def _parse_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


@dataclass
class RunConfig:
    """Hierarchical run config: section -> parameter, plus the single seed."""

    seed: int = 0
    synth: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    model: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        default = _default_config()
        for key in SECTIONS:
            given = getattr(self, key) or {}
            unknown = sorted(set(given) - set(default[key]))
            if unknown:
                raise ConfigError(f"unknown keys in [{key}]: {', '.join(unknown)}")
            setattr(self, key, {**deepcopy(default[key]), **given})
        self._validate()

    def __getitem__(self, key: str):
        """Support dict-like access: config['train']."""
        return getattr(self, key, None)

    def to_dict(self) -> dict:
        return {"seed": self.seed, **{key: deepcopy(getattr(self, key)) for key in SECTIONS}}

    @classmethod
    def from_dict(cls, d: dict) -> RunConfig:
        unknown = sorted(set(d) - {"seed", *SECTIONS})
        if unknown:
            raise ConfigError(f"unknown config sections: {', '.join(unknown)}")
        return cls(seed=d.get("seed", 0), **{key: d.get(key, {}) for key in SECTIONS})

    @classmethod
    def from_json(cls, path: Path) -> RunConfig:
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e})") from e
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(doc)

    def _resolve(self, key: str) -> tuple[str | None, str]:
        if key == "seed":
            return None, key
        if "." in key:
            section, name = key.split(".", 1)
            if section not in SECTIONS or name not in getattr(self, section):
                raise ConfigError(f"unknown config key {key!r}")
            return section, name
        owners = [s for s in SECTIONS if key in getattr(self, s)]
        if not owners:
            raise ConfigError(f"unknown config key {key!r}")
        if len(owners) > 1:
            raise ConfigError(f"ambiguous key {key!r}; use one of {[f'{s}.{key}' for s in owners]}")
        return owners[0], key

    def with_overrides(self, pairs: list[str]) -> RunConfig:
        """New config with KEY=VALUE pairs applied; values parse as JSON, else as strings."""
        d = self.to_dict()
        for pair in pairs:
            if "=" not in pair:
                raise ConfigError(f"override {pair!r} is not KEY=VALUE")
            key, raw = pair.split("=", 1)
            section, name = self._resolve(key.strip())
            value = _parse_value(raw.strip())
            if section is None:
                d[name] = value
            else:
                d[section][name] = value
        return RunConfig.from_dict(d)

    # ---- typed views ----

    def grid_spec(self) -> GridSpec:
        return GridSpec(s=self.grid["s"], p=float(self.grid["p"]), fill_value=float(self.grid["fill_value"]))

    def synth_spec(self) -> SynthSpec:
        s = self.synth
        return SynthSpec(
            num_classes=s["num_classes"],
            image_size=s["image_size"],
            base_radius=float(s["base_radius"]),
            radius_step=float(s["radius_step"]),
            noise_sigma=float(s["noise_sigma"]),
            center_jitter=float(s["center_jitter"]),
            seed=self.seed,
        )

    def model_config(self) -> ModelConfig:
        size = self.synth["image_size"]
        return ModelConfig(
            input_shape=(1, size, size),
            conv_blocks=tuple(tuple(b) for b in self.model["conv_blocks"]),
            head_kind=HeadKind(self.model["head_kind"]),
            hidden_dim=self.model["hidden_dim"],
            num_classes=self.synth["num_classes"],
            grid_cells=self.grid["s"] ** 2,
            regression_head=bool(self.train["use_regression"]),
            neuron_dropout_rate=float(self.model["neuron_dropout_rate"]),
        )

    def train_config(self) -> TrainConfig:
        t = self.train
        return TrainConfig(
            base_lr=float(t["base_lr"]),
            decay_factor=float(t["decay_factor"]),
            decay_every=t["decay_every"],
            batch_size=t["batch_size"],
            epochs=t["epochs"],
            max_steps=t["max_steps"],
            weights=LossWeights(alpha=float(t["alpha"]), beta=float(t["beta"])),
            mode=TrainMode(t["mode"]),
            use_regression=bool(t["use_regression"]),
            grid=self.grid_spec(),
            seed=self.seed,
            eval_every=t["eval_every"],
            folds=t["folds"],
            freeze_layers=t["freeze_layers"],
        )

    def _validate(self) -> None:
        """Raise AssertionError if any invariant is violated."""
        errs: list[str] = []

        def check_int(path: str, val, lo: int) -> None:
            if not isinstance(val, int) or isinstance(val, bool) or val < lo:
                errs.append(f"{path}={val!r}: must be an int >= {lo}")

        def check_range(path: str, val, lo: float, hi: float, hi_open: bool = False) -> None:
            ok = isinstance(val, (int, float)) and not isinstance(val, bool) and lo <= val <= hi
            if ok and hi_open and val == hi:
                ok = False
            if not ok:
                errs.append(f"{path}={val!r}: must be in [{lo}, {hi}{')' if hi_open else ']'}")

        check_int("seed", self.seed, 0)

        s = self.synth
        check_int("synth.num_classes", s["num_classes"], 2)
        check_int("synth.image_size", s["image_size"], 1)
        check_int("synth.count_per_class", s["count_per_class"], 1)
        for key in ("base_radius", "radius_step", "noise_sigma", "center_jitter"):
            check_range(f"synth.{key}", s[key], 0.0, float("inf"))

        check_int("grid.s", self.grid["s"], 1)
        check_range("grid.p", self.grid["p"], 0.0, 1.0)
        if isinstance(self.grid["s"], int) and isinstance(s["image_size"], int) and self.grid["s"] > s["image_size"]:
            errs.append(f"grid.s={self.grid['s']}: larger than synth.image_size={s['image_size']}")

        m = self.model
        blocks = m["conv_blocks"]
        if not isinstance(blocks, list) or not blocks or not all(
            isinstance(b, list) and len(b) == 2 and all(isinstance(x, int) and x >= 1 for x in b) for b in blocks
        ):
            errs.append(f"model.conv_blocks={blocks!r}: must be a non-empty list of [channels, convs] pairs")
        if m["head_kind"] not in {h.value for h in HeadKind}:
            errs.append(f"model.head_kind={m['head_kind']!r}: must be one of {[h.value for h in HeadKind]}")
        check_int("model.hidden_dim", m["hidden_dim"], 1)
        check_range("model.neuron_dropout_rate", m["neuron_dropout_rate"], 0.0, 1.0, hi_open=True)

        t = self.train
        if not (isinstance(t["base_lr"], (int, float)) and t["base_lr"] > 0):
            errs.append(f"train.base_lr={t['base_lr']!r}: must be > 0")
        if not (isinstance(t["decay_factor"], (int, float)) and 0 < t["decay_factor"] <= 1):
            errs.append(f"train.decay_factor={t['decay_factor']!r}: must be in (0, 1]")
        check_int("train.decay_every", t["decay_every"], 1)
        check_int("train.batch_size", t["batch_size"], 1)
        check_int("train.epochs", t["epochs"], 0)
        if t["max_steps"] is not None:
            check_int("train.max_steps", t["max_steps"], 0)
        check_range("train.alpha", t["alpha"], 0.0, float("inf"))
        check_range("train.beta", t["beta"], 0.0, float("inf"))
        if t["mode"] not in {mode.value for mode in TrainMode}:
            errs.append(f"train.mode={t['mode']!r}: must be one of {[mode.value for mode in TrainMode]}")
        if not isinstance(t["use_regression"], bool):
            errs.append(f"train.use_regression={t['use_regression']!r}: must be a boolean")
        check_int("train.eval_every", t["eval_every"], 1)
        check_int("train.folds", t["folds"], 2)
        check_int("train.freeze_layers", t["freeze_layers"], 0)

        if errs:
            raise AssertionError("Config invariants violated:\n  " + "\n  ".join(errs))


RUN_CONFIG = RunConfig()
