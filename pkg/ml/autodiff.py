"""
Minimal reverse-mode automatic differentiation over float64 numpy arrays.

A Node wraps a value array, a lazily materialized gradient and the record
of the op that produced it. Ops cache what their backward needs; they can
be re-run on new parent values (see ml.gradcheck) until the graph is
released by a backward pass without retain_graph.

Gradients of leaves accumulate across backward passes; interior gradients
are reset at the start of each pass so they always hold the derivative of
the most recent seed. Call zero_grad() between optimizer steps.

Every op accepts a single example (C, H, W) / (D,) or a batch with a
leading axis.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from core.errors import GraphReleasedError, ShapeError

Tensor = np.ndarray


class Node:
    """Value + gradient + producing-op record."""

    def __init__(
        self,
        value: Tensor | float,
        op: Op | None = None,
        parents: Sequence[Node] = (),
        requires_grad: bool | None = None,
        name: str = "",
    ) -> None:
        self.value = np.asarray(value, dtype=np.float64)
        self.op = op
        self.parents = tuple(parents)
        if requires_grad is None:
            requires_grad = any(p.requires_grad for p in self.parents)
        self.requires_grad = requires_grad
        self.name = name
        self._grad: Tensor | None = None

    def __repr__(self) -> str:
        kind = self.op.name if self.op is not None else "leaf"
        return f"Node({self.name or kind}, shape={self.shape})"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def grad(self) -> Tensor:
        if self._grad is None:
            self._grad = np.zeros_like(self.value)
        return self._grad

    @property
    def has_grad(self) -> bool:
        return self._grad is not None

    def zero_grad(self) -> None:
        self._grad = None

    def item(self) -> float:
        assert self.value.size == 1, f"item() needs a scalar, got shape {self.shape}"
        return float(self.value.reshape(()))

    def _accumulate(self, g: Tensor) -> None:
        if self._grad is None:
            self._grad = np.array(g, dtype=np.float64, copy=True).reshape(self.value.shape)
        else:
            self._grad += g

    def backward(self, seed: Tensor | None = None, retain_graph: bool = False) -> None:
        """Backpropagate from this node. Scalar nodes default to seed 1."""
        if seed is None:
            if self.value.size != 1:
                raise ShapeError(f"backward without seed needs a scalar, got shape {self.shape}")
            seed = np.ones_like(self.value)
        seed = np.asarray(seed, dtype=np.float64)
        if seed.shape != self.value.shape:
            raise ShapeError(f"seed shape {seed.shape} does not match node shape {self.shape}")

        order = topological_order(self)
        for node in order:
            if node.op is not None and node.op.released:
                raise GraphReleasedError(f"graph through {node.op.name} was already released")
        for node in order:
            if node.op is not None:
                node._grad = None

        self._accumulate(seed)
        for node in reversed(order):
            if node.op is None or node._grad is None:
                continue
            grads = node.op.backward(node._grad)
            for parent, g in zip(node.parents, grads):
                if g is not None and parent.requires_grad:
                    parent._accumulate(g)

        if not retain_graph:
            for node in order:
                if node.op is not None:
                    node.op.release()

    # small operator surface used by loss composition
    def __add__(self, other: Node) -> Node:
        return add(self, other)

    def __mul__(self, c: float) -> Node:
        return scale(self, c)

    __rmul__ = __mul__


class Parameter(Node):
    """Trainable leaf. Frozen parameters still receive gradients but no updates."""

    def __init__(self, value: Tensor, name: str, frozen: bool = False) -> None:
        super().__init__(value, requires_grad=True, name=name)
        self.frozen = frozen


def constant(value: Tensor | float, name: str = "") -> Node:
    return Node(value, requires_grad=False, name=name)


def zero_grad(params: Iterable[Node]) -> None:
    for p in params:
        p.zero_grad()


def topological_order(root: Node) -> list[Node]:
    """Nodes reachable from root, parents before children."""
    order: list[Node] = []
    visited: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in reversed(node.parents):
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


class Op:
    """Base op: forward(*values) caches state, backward(grad) returns one grad per parent."""

    name = "op"

    def __init__(self) -> None:
        self.released = False

    def apply(self, *parents: Node) -> Node:
        value = self.forward(*(p.value for p in parents))
        return Node(value, op=self, parents=parents)

    def forward(self, *values: Tensor) -> Tensor:
        raise NotImplementedError

    def backward(self, grad: Tensor) -> tuple[Tensor | None, ...]:
        raise NotImplementedError

    def release(self) -> None:
        self.released = True
        self.__dict__.update({k: None for k in self.__dict__ if k.startswith("_")})


def _as_batch(x: Tensor, ndim: int) -> tuple[Tensor, bool]:
    """Add a leading batch axis to single examples of rank ndim - 1."""
    if x.ndim == ndim - 1:
        return x[None], True
    if x.ndim == ndim:
        return x, False
    raise ShapeError(f"expected rank {ndim - 1} or {ndim}, got shape {x.shape}")


# ===================================================================
# Convolution / pooling
# ===================================================================
class Conv2d(Op):
    """Stride-1, zero same-padding cross-correlation with odd kernels."""

    name = "conv2d"

    def forward(self, x: Tensor, kernels: Tensor, bias: Tensor) -> Tensor:
        xb, single = _as_batch(x, 4)
        if kernels.ndim != 4:
            raise ShapeError(f"kernels must be (C_out, C_in, kh, kw), got {kernels.shape}")
        c_out, c_in, kh, kw = kernels.shape
        if xb.shape[1] != c_in:
            raise ShapeError(f"input has {xb.shape[1]} channels, kernels expect {c_in}")
        if kh % 2 == 0 or kw % 2 == 0:
            raise ShapeError(f"kernel size must be odd, got {kh}x{kw}")
        if bias.shape != (c_out,):
            raise ShapeError(f"bias must have shape ({c_out},), got {bias.shape}")
        ph, pw = kh // 2, kw // 2
        padded = np.pad(xb, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
        windows = sliding_window_view(padded, (kh, kw), axis=(2, 3))  # N, C, H, W, kh, kw
        out = np.tensordot(windows, kernels, axes=([1, 4, 5], [1, 2, 3]))  # N, H, W, C_out
        out = out.transpose(0, 3, 1, 2) + bias[None, :, None, None]
        self._windows = windows
        self._kernels = kernels
        self._single = single
        self._x_shape = x.shape
        return out[0] if single else out

    def backward(self, grad: Tensor) -> tuple[Tensor, Tensor, Tensor]:
        g = grad[None] if self._single else grad
        kernels = self._kernels
        _, _, kh, kw = kernels.shape
        ph, pw = kh // 2, kw // 2
        g_kernels = np.tensordot(g, self._windows, axes=([0, 2, 3], [0, 2, 3]))
        g_bias = g.sum(axis=(0, 2, 3))
        g_padded = np.pad(g, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
        g_windows = sliding_window_view(g_padded, (kh, kw), axis=(2, 3))
        flipped = kernels[:, :, ::-1, ::-1]
        g_x = np.tensordot(g_windows, flipped, axes=([1, 4, 5], [0, 2, 3])).transpose(0, 3, 1, 2)
        return g_x.reshape(self._x_shape), g_kernels, g_bias


class MaxPool2(Op):
    """2x2 non-overlapping max; ties go to the first position in row-major order."""

    name = "maxpool2"

    def forward(self, x: Tensor) -> Tensor:
        xb, single = _as_batch(x, 4)
        n, c, h, w = xb.shape
        if h % 2 or w % 2:
            raise ShapeError(f"maxpool2 needs even spatial dims, got {h}x{w}")
        win = xb.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
        arg = win.argmax(axis=-1)
        out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
        self._arg = arg
        self._x_shape = x.shape
        self._single = single
        return out[0] if single else out

    def backward(self, grad: Tensor) -> tuple[Tensor]:
        g = grad[None] if self._single else grad
        n, c, h2, w2 = g.shape
        routed = np.zeros((n, c, h2, w2, 4))
        np.put_along_axis(routed, self._arg[..., None], g[..., None], axis=-1)
        g_x = routed.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h2 * 2, w2 * 2)
        return (g_x.reshape(self._x_shape),)


class GlobalAveragePool(Op):
    """Per-channel spatial mean over the last two axes."""

    name = "global_average_pool"

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim not in (3, 4):
            raise ShapeError(f"global_average_pool needs (K, l, l) or (N, K, l, l), got {x.shape}")
        self._x_shape = x.shape
        return x.mean(axis=(-2, -1))

    def backward(self, grad: Tensor) -> tuple[Tensor]:
        h, w = self._x_shape[-2:]
        return (np.broadcast_to(grad[..., None, None] / (h * w), self._x_shape).copy(),)


# ===================================================================
# Elementwise / dense
# ===================================================================
class ReLU(Op):
    """max(0, x); the subgradient at exactly 0 is 0."""

    name = "relu"

    def forward(self, x: Tensor) -> Tensor:
        self._active = x > 0
        return np.where(self._active, x, 0.0)

    def backward(self, grad: Tensor) -> tuple[Tensor]:
        return (np.where(self._active, grad, 0.0),)


class Sigmoid(Op):
    name = "sigmoid"

    def forward(self, x: Tensor) -> Tensor:
        out = stable_sigmoid(x)
        self._out = out
        return out

    def backward(self, grad: Tensor) -> tuple[Tensor]:
        return (grad * self._out * (1.0 - self._out),)


class Dense(Op):
    """Affine map x @ W.T + b with W of shape (D_out, D_in)."""

    name = "dense"

    def forward(self, x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
        if weight.ndim != 2:
            raise ShapeError(f"weight must be (D_out, D_in), got {weight.shape}")
        d_out, d_in = weight.shape
        if x.ndim not in (1, 2) or x.shape[-1] != d_in:
            raise ShapeError(f"input shape {x.shape} does not match weight {weight.shape}")
        if bias.shape != (d_out,):
            raise ShapeError(f"bias must have shape ({d_out},), got {bias.shape}")
        self._x = x
        self._weight = weight
        return x @ weight.T + bias

    def backward(self, grad: Tensor) -> tuple[Tensor, Tensor, Tensor]:
        g2 = np.atleast_2d(grad)
        x2 = np.atleast_2d(self._x)
        g_x = (g2 @ self._weight).reshape(self._x.shape)
        return g_x, g2.T @ x2, g2.sum(axis=0)


class Reshape(Op):
    name = "reshape"

    def __init__(self, shape: tuple[int, ...]) -> None:
        super().__init__()
        self.shape = shape

    def forward(self, x: Tensor) -> Tensor:
        self._x_shape = x.shape
        return x.reshape(self.shape)

    def backward(self, grad: Tensor) -> tuple[Tensor]:
        return (grad.reshape(self._x_shape),)


class InvertedDropout(Op):
    """Multiply by a fixed keep mask scaled by 1 / (1 - rate)."""

    name = "dropout"

    def __init__(self, keep: Tensor, rate: float) -> None:
        super().__init__()
        assert 0.0 <= rate < 1.0, f"dropout rate must be in [0, 1), got {rate}"
        self.factor = np.asarray(keep, dtype=np.float64) / (1.0 - rate)

    def forward(self, x: Tensor) -> Tensor:
        if self.factor.shape != x.shape:
            raise ShapeError(f"dropout mask shape {self.factor.shape} does not match input {x.shape}")
        return x * self.factor

    def backward(self, grad: Tensor) -> tuple[Tensor]:
        return (grad * self.factor,)


class Index(Op):
    """Select a single entry as a scalar node."""

    name = "index"

    def __init__(self, index: tuple[int, ...]) -> None:
        super().__init__()
        self.index = index

    def forward(self, x: Tensor) -> Tensor:
        self._x_shape = x.shape
        return np.asarray(x[self.index], dtype=np.float64)

    def backward(self, grad: Tensor) -> tuple[Tensor]:
        g = np.zeros(self._x_shape)
        g[self.index] = grad
        return (g,)


class WeightedSum(Op):
    """sum(x * w) for a constant weight array."""

    name = "weighted_sum"

    def __init__(self, weights: Tensor) -> None:
        super().__init__()
        self.weights = np.asarray(weights, dtype=np.float64)

    def forward(self, x: Tensor) -> Tensor:
        if self.weights.shape != x.shape:
            raise ShapeError(f"weights {self.weights.shape} do not match input {x.shape}")
        return np.asarray(np.sum(x * self.weights))

    def backward(self, grad: Tensor) -> tuple[Tensor]:
        return (grad * self.weights,)


class Add(Op):
    name = "add"

    def forward(self, a: Tensor, b: Tensor) -> Tensor:
        if a.shape != b.shape:
            raise ShapeError(f"add needs equal shapes, got {a.shape} and {b.shape}")
        return a + b

    def backward(self, grad: Tensor) -> tuple[Tensor, Tensor]:
        return grad, grad


class Scale(Op):
    name = "scale"

    def __init__(self, factor: float) -> None:
        super().__init__()
        self.factor = float(factor)

    def forward(self, x: Tensor) -> Tensor:
        return x * self.factor

    def backward(self, grad: Tensor) -> tuple[Tensor]:
        return (grad * self.factor,)


def stable_sigmoid(x: Tensor) -> Tensor:
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


# ===================================================================
# Functional surface
# ===================================================================
def conv2d(x: Node, kernels: Node, bias: Node) -> Node:
    return Conv2d().apply(x, kernels, bias)


def maxpool2(x: Node) -> Node:
    return MaxPool2().apply(x)


def global_average_pool(x: Node) -> Node:
    return GlobalAveragePool().apply(x)


def relu(x: Node) -> Node:
    return ReLU().apply(x)


def sigmoid(x: Node) -> Node:
    return Sigmoid().apply(x)


def dense(x: Node, weight: Node, bias: Node) -> Node:
    return Dense().apply(x, weight, bias)


def flatten(x: Node) -> Node:
    """Collapse all axes after the batch axis."""
    return Reshape((x.shape[0], -1)).apply(x)


def inverted_dropout(x: Node, keep: Tensor, rate: float) -> Node:
    return InvertedDropout(keep, rate).apply(x)


def index(x: Node, idx: tuple[int, ...]) -> Node:
    return Index(idx).apply(x)


def weighted_sum(x: Node, weights: Tensor) -> Node:
    return WeightedSum(weights).apply(x)


def add(a: Node, b: Node) -> Node:
    return Add().apply(a, b)


def scale(x: Node, factor: float) -> Node:
    return Scale(factor).apply(x)
