"""Minimal reverse-mode autodiff over numpy float64 arrays.

Just enough operations for a small transformer encoder: broadcasting
add/mul, batched matmul, embedding gather, position gather, reshape,
transpose, fused layer norm, masked softmax, GELU, and the two fused
losses.  Plain numpy arrays passed to an op are treated as constants.

Every backward formula here is exercised against central finite
differences in the test suite and gated end to end by grad_check.
"""

from __future__ import annotations

import numpy as np


class Tensor:
    """A node in the computation graph; leaves are parameters or constants."""

    __slots__ = ("value", "grad", "_parents", "_backward")

    def __init__(self, value, parents=(), backward=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = tuple(parents)
        self._backward = backward

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.value.shape})"


def parameter(value) -> Tensor:
    """Leaf tensor intended to be updated by the optimizer."""
    return Tensor(np.array(value, dtype=np.float64))


def _accumulate(t: Tensor, grad: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.zeros_like(t.value)
    t.grad += grad


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum grad down to shape, undoing numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def backward(root: Tensor) -> None:
    """Run reverse-mode accumulation from a scalar root.

    Grads of every node reachable from root are reset first, so parameters
    carry exactly this loss's gradient afterwards.
    """
    if root.value.size != 1:
        raise ValueError(f"backward expects a scalar root, got shape {root.value.shape}")
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    for node in order:
        node.grad = None
    root.grad = np.ones_like(root.value)
    for node in reversed(order):
        if node._backward is not None:
            node._backward(node.grad)


def add(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.value + b.value, parents=(a, b))

    def backward_fn(g):
        _accumulate(a, _unbroadcast(g, a.value.shape))
        _accumulate(b, _unbroadcast(g, b.value.shape))

    out._backward = backward_fn
    return out


def mul_const(a: Tensor, c) -> Tensor:
    """Elementwise multiply by a constant array or scalar (no grad through c)."""
    c = np.asarray(c, dtype=np.float64)
    out = Tensor(a.value * c, parents=(a,))

    def backward_fn(g):
        _accumulate(a, _unbroadcast(g * c, a.value.shape))

    out._backward = backward_fn
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(np.matmul(a.value, b.value), parents=(a, b))

    def backward_fn(g):
        bt = np.swapaxes(b.value, -1, -2)
        at = np.swapaxes(a.value, -1, -2)
        _accumulate(a, _unbroadcast(np.matmul(g, bt), a.value.shape))
        _accumulate(b, _unbroadcast(np.matmul(at, g), b.value.shape))

    out._backward = backward_fn
    return out


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    ids = np.asarray(ids)
    out = Tensor(table.value[ids], parents=(table,))

    def backward_fn(g):
        if table.grad is None:
            table.grad = np.zeros_like(table.value)
        np.add.at(table.grad, ids, g)

    out._backward = backward_fn
    return out


def take_positions(x: Tensor, rows: np.ndarray, cols: np.ndarray) -> Tensor:
    """Gather x[rows[i], cols[i], :] into an (N, D) tensor."""
    rows = np.asarray(rows)
    cols = np.asarray(cols)
    out = Tensor(x.value[rows, cols], parents=(x,))

    def backward_fn(g):
        if x.grad is None:
            x.grad = np.zeros_like(x.value)
        np.add.at(x.grad, (rows, cols), g)

    out._backward = backward_fn
    return out


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = Tensor(x.value.reshape(shape), parents=(x,))

    def backward_fn(g):
        _accumulate(x, g.reshape(x.value.shape))

    out._backward = backward_fn
    return out


def transpose(x: Tensor, axes: tuple[int, ...]) -> Tensor:
    out = Tensor(x.value.transpose(axes), parents=(x,))
    inverse = tuple(np.argsort(axes))

    def backward_fn(g):
        _accumulate(x, g.transpose(inverse))

    out._backward = backward_fn
    return out


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis, then scale and shift."""
    mu = x.value.mean(axis=-1, keepdims=True)
    var = ((x.value - mu) ** 2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.value - mu) * inv
    out = Tensor(xhat * gain.value + bias.value, parents=(x, gain, bias))

    def backward_fn(g):
        dxhat = g * gain.value
        m1 = dxhat.mean(axis=-1, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
        _accumulate(x, inv * (dxhat - m1 - xhat * m2))
        axes = tuple(range(g.ndim - 1))
        _accumulate(gain, (g * xhat).sum(axis=axes))
        _accumulate(bias, g.sum(axis=axes))

    out._backward = backward_fn
    return out


def softmax_last(x: Tensor, additive_mask: np.ndarray | None = None) -> Tensor:
    """Softmax over the last axis, optionally after adding a constant mask."""
    z = x.value if additive_mask is None else x.value + additive_mask
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)
    out = Tensor(y, parents=(x,))

    def backward_fn(g):
        inner = (g * y).sum(axis=-1, keepdims=True)
        _accumulate(x, y * (g - inner))

    out._backward = backward_fn
    return out


_GELU_K = np.sqrt(2.0 / np.pi)
_GELU_C = 0.044715


def gelu(x: Tensor) -> Tensor:
    """GELU with the tanh approximation used by BERT-family models."""
    v = x.value
    inner = _GELU_K * (v + _GELU_C * v ** 3)
    t = np.tanh(inner)
    out = Tensor(0.5 * v * (1.0 + t), parents=(x,))

    def backward_fn(g):
        dinner = _GELU_K * (1.0 + 3.0 * _GELU_C * v ** 2)
        dy = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t ** 2) * dinner
        _accumulate(x, g * dy)

    out._backward = backward_fn
    return out


def cross_entropy_logits(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean cross-entropy of (N, V) logits against integer labels."""
    labels = np.asarray(labels, dtype=np.int64)
    n = logits.value.shape[0]
    if n == 0:
        raise ValueError("cross entropy over zero rows is undefined")
    z = logits.value - logits.value.max(axis=-1, keepdims=True)
    log_probs = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    picked = log_probs[np.arange(n), labels]
    out = Tensor(-picked.mean(), parents=(logits,))

    def backward_fn(g):
        p = np.exp(log_probs)
        p[np.arange(n), labels] -= 1.0
        _accumulate(logits, (float(g) / n) * p)

    out._backward = backward_fn
    return out


def bce_with_logits(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean binary cross-entropy of (N,) logits against 0/1 targets."""
    targets = np.asarray(targets, dtype=np.float64)
    z = logits.value
    n = z.shape[0]
    if n == 0:
        raise ValueError("BCE over zero rows is undefined")
    losses = np.maximum(z, 0.0) - z * targets + np.log1p(np.exp(-np.abs(z)))
    out = Tensor(losses.mean(), parents=(logits,))

    def backward_fn(g):
        sig = 1.0 / (1.0 + np.exp(-z))
        _accumulate(logits, (float(g) / n) * (sig - targets))

    out._backward = backward_fn
    return out
