"""
Reduced VGG-style ordinal network on the autodiff core.

Conv blocks of 3x3 same-padded convs + ReLU, each closed by a 2x2 max
pool. The last pooled maps F (K x l x l) feed either global average
pooling or flatten -> dense -> ReLU to form the feature vector X. Neuron
dropout sits between X and three heads that all read the same vector:

  - class head: C ordinal logits
  - mask head: s*s grid keep/drop logits
  - regression head (optional): scalar level estimate
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from core.enums import ForwardMode, HeadKind
from core.errors import ConfigError, ShapeError
from core.models import ModelConfig
from core.validate import feature_map_shape
from ml.autodiff import (
    Node,
    Parameter,
    Reshape,
    constant,
    conv2d,
    dense,
    flatten,
    global_average_pool,
    inverted_dropout,
    maxpool2,
    relu,
)

KERNEL_SIZE = 3


@dataclass(eq=False)
class ForwardRecord:
    """
    Graph handles of one forward pass (batch axis first).

    feature_vector is X before neuron dropout, head_input after it.
    The graph stays intact so class-logit gradients w.r.t.
    last_feature_maps can be taken after the fact.
    """

    last_feature_maps: Node
    feature_vector: Node
    head_input: Node
    class_logits: Node
    mask_logits: Node
    regression_out: Node | None
    dropout_mask_used: np.ndarray | None
    mode: ForwardMode


class OrdinalNet:
    """Parameters + topology; forward builds a fresh graph per call."""

    def __init__(self, config: ModelConfig, params: dict[str, Parameter]) -> None:
        self.config = config
        self.params = params
        self.conv_layers = [
            f"conv{b}_{i}"
            for b, (_, n_convs) in enumerate(config.conv_blocks, start=1)
            for i in range(1, n_convs + 1)
        ]
        self.feature_shape = feature_map_shape(config)

    @property
    def parameters(self) -> list[Parameter]:
        return list(self.params.values())

    def num_parameters(self) -> int:
        return sum(p.value.size for p in self.params.values())

    def freeze_prefix(self, n_layers: int) -> None:
        """Freeze the first n_layers conv layers (weights and biases); unfreeze the rest."""
        if not 0 <= n_layers <= len(self.conv_layers):
            raise ConfigError(f"cannot freeze {n_layers} of {len(self.conv_layers)} conv layers")
        for i, layer in enumerate(self.conv_layers):
            for suffix in ("weight", "bias"):
                self.params[f"{layer}.{suffix}"].frozen = i < n_layers

    def forward(
        self,
        images: np.ndarray,
        mode: ForwardMode = ForwardMode.EVAL,
        rng: np.random.Generator | None = None,
        neuron_dropout: bool = True,
        dropout_mask: np.ndarray | None = None,
    ) -> ForwardRecord:
        """
        Run the network on (C, H, W) or (N, C, H, W) images.

        In TRAIN mode with neuron_dropout, X is multiplied by a keep mask
        (drawn from rng unless dropout_mask is given) scaled by 1/(1-r).
        EVAL mode never drops.
        """
        images = np.asarray(images, dtype=np.float64)
        if images.ndim == 3:
            images = images[None]
        if images.ndim != 4 or images.shape[1:] != self.config.input_shape:
            raise ShapeError(f"images {images.shape} do not match input shape {self.config.input_shape}")

        p = self.params
        x = constant(images, name="images")
        for layer_block in self._blocks():
            for layer in layer_block:
                x = relu(conv2d(x, p[f"{layer}.weight"], p[f"{layer}.bias"]))
            x = maxpool2(x)
        fmaps = x

        if self.config.head_kind is HeadKind.GAP_LINEAR:
            features = global_average_pool(fmaps)
        else:
            features = relu(dense(flatten(fmaps), p["fc.weight"], p["fc.bias"]))

        keep = None
        head_input = features
        rate = self.config.neuron_dropout_rate
        if mode is ForwardMode.TRAIN and neuron_dropout:
            if dropout_mask is not None:
                keep = np.broadcast_to(np.asarray(dropout_mask, dtype=np.float64), features.shape).copy()
            else:
                assert rng is not None, "train-mode dropout needs an rng"
                keep = (rng.random(features.shape) >= rate).astype(np.float64)
            head_input = inverted_dropout(features, keep, rate)

        class_logits = dense(head_input, p["cls.weight"], p["cls.bias"])
        mask_logits = dense(head_input, p["mask.weight"], p["mask.bias"])
        regression = None
        if self.config.regression_head:
            out = dense(head_input, p["reg.weight"], p["reg.bias"])
            regression = Reshape((out.shape[0],)).apply(out)

        return ForwardRecord(
            last_feature_maps=fmaps,
            feature_vector=features,
            head_input=head_input,
            class_logits=class_logits,
            mask_logits=mask_logits,
            regression_out=regression,
            dropout_mask_used=keep,
            mode=mode,
        )

    def predict(self, images: np.ndarray) -> np.ndarray:
        """Eval-mode argmax level per image."""
        record = self.forward(images, ForwardMode.EVAL)
        return record.class_logits.value.argmax(axis=-1)

    def _blocks(self) -> list[list[str]]:
        blocks: list[list[str]] = []
        for b, (_, n_convs) in enumerate(self.config.conv_blocks, start=1):
            blocks.append([f"conv{b}_{i}" for i in range(1, n_convs + 1)])
        return blocks


def _uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def build(config: ModelConfig, rng: np.random.Generator) -> OrdinalNet:
    """
    Initialize parameters with fan-in uniform weights (bound sqrt(6/fan_in))
    and zero biases. Creation order is fixed so a seed fully determines the
    model; the mask head is always built so grid and non-grid runs share
    their initialization.
    """
    k, h, w = feature_map_shape(config)
    params: dict[str, Parameter] = {}

    def add(name: str, shape: tuple[int, ...], fan_in: int) -> None:
        params[f"{name}.weight"] = Parameter(_uniform(rng, shape, fan_in), f"{name}.weight")
        params[f"{name}.bias"] = Parameter(np.zeros(shape[0]), f"{name}.bias")

    c_in = config.input_shape[0]
    for b, (out_ch, n_convs) in enumerate(config.conv_blocks, start=1):
        for i in range(1, n_convs + 1):
            add(f"conv{b}_{i}", (out_ch, c_in, KERNEL_SIZE, KERNEL_SIZE), c_in * KERNEL_SIZE**2)
            c_in = out_ch

    if config.head_kind is HeadKind.GAP_LINEAR:
        feat_dim = k
    else:
        add("fc", (config.hidden_dim, k * h * w), k * h * w)
        feat_dim = config.hidden_dim

    add("cls", (config.num_classes, feat_dim), feat_dim)
    add("mask", (config.grid_cells, feat_dim), feat_dim)
    if config.regression_head:
        add("reg", (1, feat_dim), feat_dim)
    return OrdinalNet(config, params)
