"""
Finite-difference gradient checking against reverse-mode gradients.

The recorded graph is replayed with a perturbed parameter, so any graph
built from re-runnable ops (all of ml.autodiff and ml.losses) can be
checked without rebuilding it. Ops holding constants (dropout masks,
labels) replay with the same constants.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from core.constants import GRADCHECK_PROBES, GRADCHECK_STEP
from core.enums import ForwardMode, HeadKind
from core.errors import GraphReleasedError, ShapeError
from core.models import LossWeights, ModelConfig
from ml.autodiff import (
    Node,
    Parameter,
    conv2d,
    dense,
    global_average_pool,
    maxpool2,
    relu,
    sigmoid,
    topological_order,
    weighted_sum,
)
from ml.losses import euclidean_loss, sigmoid_cross_entropy, softmax_cross_entropy, total_loss
from ml.model import build


def replay(output: Node) -> float:
    """Recompute every interior value from current leaf values; return the output scalar."""
    for node in topological_order(output):
        if node.op is None:
            continue
        if node.op.released:
            raise GraphReleasedError(f"cannot replay released op {node.op.name}")
        node.value = node.op.forward(*(p.value for p in node.parents))
    return output.item()


def relative_error(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-8)


def gradcheck(
    output: Node,
    parameter: Parameter | Node,
    probes: int = GRADCHECK_PROBES,
    step: float = GRADCHECK_STEP,
    rng: np.random.Generator | None = None,
) -> float:
    """
    Max relative error between the reverse-mode gradient and central
    differences at `probes` random coordinates of `parameter`.

    Probes are drawn without replacement while the parameter has enough
    coordinates, with replacement otherwise.
    """
    if output.value.size != 1:
        raise ShapeError(f"gradcheck needs a scalar output, got shape {output.shape}")
    assert step > 0, f"step must be > 0, got {step}"
    rng = rng or np.random.default_rng(0)

    for node in topological_order(output):
        if node.op is None:
            node.zero_grad()
    output.backward(retain_graph=True)
    analytic = parameter.grad.copy()

    if not parameter.value.flags.c_contiguous:
        parameter.value = np.ascontiguousarray(parameter.value)
        replay(output)
    flat = parameter.value.reshape(-1)
    coords = rng.choice(flat.size, size=probes, replace=probes > flat.size)
    worst = 0.0
    for i in coords:
        original = flat[i]
        flat[i] = original + step
        f_plus = replay(output)
        flat[i] = original - step
        f_minus = replay(output)
        flat[i] = original
        numeric = (f_plus - f_minus) / (2.0 * step)
        worst = max(worst, relative_error(float(analytic.reshape(-1)[i]), numeric))
    replay(output)
    return worst


# ===================================================================
# Suite: one scalar graph per op, checked against every parameter
# ===================================================================
# relu inputs stay this far from the kink; the step is 1e-5
KINK_MARGIN = 1e-3

CheckCase = Callable[[np.random.Generator], tuple[Node, list[Parameter]]]
SUITE: dict[str, CheckCase] = {}


def register(name: str) -> Callable[[CheckCase], CheckCase]:
    def wrap(fn: CheckCase) -> CheckCase:
        assert name not in SUITE, f"gradcheck case {name!r} registered twice"
        SUITE[name] = fn
        return fn
    return wrap


def _param(rng: np.random.Generator, shape: tuple[int, ...], name: str) -> Parameter:
    return Parameter(rng.normal(size=shape), name)


def _reduce(out: Node, rng: np.random.Generator) -> Node:
    """Scalarize with random weights so every output entry matters."""
    return weighted_sum(out, rng.normal(size=out.shape))


@register("conv2d")
def _conv2d_case(rng: np.random.Generator) -> tuple[Node, list[Parameter]]:
    x = _param(rng, (2, 2, 6, 6), "x")
    k = _param(rng, (3, 2, 3, 3), "kernels")
    b = _param(rng, (3,), "bias")
    return _reduce(conv2d(x, k, b), rng), [x, k, b]


@register("relu")
def _relu_case(rng: np.random.Generator) -> tuple[Node, list[Parameter]]:
    """Inputs pushed at least KINK_MARGIN away from zero."""
    values = rng.normal(size=(5, 24))
    x = Parameter(values + np.where(values >= 0, KINK_MARGIN, -KINK_MARGIN), "x")
    return _reduce(relu(x), rng), [x]


@register("maxpool2")
def _maxpool_case(rng: np.random.Generator) -> tuple[Node, list[Parameter]]:
    """Distinct values spaced far wider than the step, so no window has a tie."""
    shape = (2, 3, 6, 6)
    n = int(np.prod(shape))
    x = Parameter((rng.permutation(n) / n).reshape(shape), "x")
    return _reduce(maxpool2(x), rng), [x]


@register("dense")
def _dense_case(rng: np.random.Generator) -> tuple[Node, list[Parameter]]:
    x = _param(rng, (4, 25), "x")
    w = _param(rng, (6, 25), "weight")
    b = _param(rng, (6,), "bias")
    return _reduce(dense(x, w, b), rng), [x, w, b]


@register("global_average_pool")
def _gap_case(rng: np.random.Generator) -> tuple[Node, list[Parameter]]:
    x = _param(rng, (3, 3, 4, 4), "x")
    return _reduce(global_average_pool(x), rng), [x]


@register("sigmoid")
def _sigmoid_case(rng: np.random.Generator) -> tuple[Node, list[Parameter]]:
    x = _param(rng, (5, 24), "x")
    return _reduce(sigmoid(x), rng), [x]


@register("softmax_cross_entropy")
def _softmax_ce_case(rng: np.random.Generator) -> tuple[Node, list[Parameter]]:
    z = _param(rng, (10, 12), "logits")
    return softmax_cross_entropy(z, rng.integers(0, 12, size=10)), [z]


@register("sigmoid_cross_entropy")
def _sigmoid_ce_case(rng: np.random.Generator) -> tuple[Node, list[Parameter]]:
    z = _param(rng, (4, 25), "logits")
    return sigmoid_cross_entropy(z, rng.integers(0, 2, size=(4, 25)).astype(np.float64)), [z]


@register("euclidean_loss")
def _euclidean_case(rng: np.random.Generator) -> tuple[Node, list[Parameter]]:
    y = _param(rng, (100,), "prediction")
    return euclidean_loss(y, rng.normal(size=100)), [y]


@register("composite")
def _composite_case(rng: np.random.Generator) -> tuple[Node, list[Parameter]]:
    """Classification + regression + masking loss through a small network in train mode."""
    config = ModelConfig(
        input_shape=(1, 8, 8),
        conv_blocks=((3, 1), (4, 1)),
        head_kind=HeadKind.GAP_LINEAR,
        num_classes=3,
        grid_cells=4,
        regression_head=True,
        neuron_dropout_rate=0.5,
    )
    model = build(config, rng)
    for p in model.parameters:
        if p.name.endswith(".bias"):
            p.value = rng.normal(scale=0.1, size=p.value.shape)
    images = rng.random((2, 1, 8, 8))
    labels = np.array([0, 2])
    keep = np.array([[1.0, 0.0, 1.0, 1.0], [1.0, 1.0, 0.0, 1.0]])
    record = model.forward(images, ForwardMode.TRAIN, dropout_mask=keep)
    breakdown = total_loss(
        softmax_cross_entropy(record.class_logits, labels),
        euclidean_loss(record.regression_out, labels.astype(np.float64)),
        sigmoid_cross_entropy(record.mask_logits, np.array([[1.0, 0.0, 1.0, 1.0], [0.0, 1.0, 1.0, 1.0]])),
        LossWeights(),
    )
    return breakdown.graph, model.parameters


def run_suite(
    probes: int = GRADCHECK_PROBES,
    step: float = GRADCHECK_STEP,
    seed: int = 0,
) -> dict[str, float]:
    """Max relative error per registered case, over all of its parameters."""
    results: dict[str, float] = {}
    for i, (name, case) in enumerate(SUITE.items()):
        rng = np.random.default_rng([seed, i])
        output, params = case(rng)
        results[name] = max(gradcheck(output, p, probes=probes, step=step, rng=rng) for p in params)
    return results
