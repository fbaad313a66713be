"""Minimal reverse-mode autodiff over float64 numpy arrays.

Just the op set the encoder-decoder forecaster needs: affine, sigmoid,
tanh, elementwise arithmetic, concatenation, embedding row lookup, a
fused GRU-over-sequence op (delegates to the kernel backend), and a
numerically stable softmax cross-entropy. Graphs are built per call;
backward() walks them in reverse topological order with a fixed
accumulation order, so gradients are deterministic.
"""

from __future__ import annotations

import numpy as np

from . import _kernels


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible; names both operands."""


def _as_array(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    return a


class Tensor:
    """A node in the computation graph."""

    __slots__ = ("value", "grad", "name", "_parents", "_backward")

    def __init__(self, value, parents=(), backward=None, name=None):
        self.value = _as_array(value)
        self.grad = None
        self.name = name
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        label = self.name or "tensor"
        return f"Tensor({label}, shape={self.value.shape})"

    # Operator sugar for the few elementwise ops the model and tests use.
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)


def as_tensor(x, name=None) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x, name=name)


def _check_finite(t: Tensor, op: str):
    if not np.all(np.isfinite(t.value)):
        raise ValueError(f"{op}: non-finite input in {t.name or 'operand'}")


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum out axes that numpy broadcasting added or expanded."""
    if grad.shape == tuple(shape):
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        value = a.value + b.value
    except ValueError:
        raise ShapeError(f"add: incompatible shapes {a.shape} and {b.shape} "
                         f"({a.name or 'lhs'}, {b.name or 'rhs'})")
    out = Tensor(value, parents=(a, b))

    def backward(g):
        return (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape))

    out._backward = backward
    return out


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        value = a.value * b.value
    except ValueError:
        raise ShapeError(f"mul: incompatible shapes {a.shape} and {b.shape} "
                         f"({a.name or 'lhs'}, {b.name or 'rhs'})")
    out = Tensor(value, parents=(a, b))

    def backward(g):
        return (_unbroadcast(g * b.value, a.shape),
                _unbroadcast(g * a.value, b.shape))

    out._backward = backward
    return out


def affine(x, w, b) -> Tensor:
    """x @ w + b with x of shape (..., I), w (I, O), b (O,)."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    if x.shape[-1] != w.shape[0]:
        raise ShapeError(f"affine: x has trailing dim {x.shape[-1]} but "
                         f"{w.name or 'weight'} expects {w.shape[0]}")
    if b.shape != (w.shape[1],):
        raise ShapeError(f"affine: bias shape {b.shape} does not match "
                         f"output dim {w.shape[1]}")
    out = Tensor(x.value @ w.value + b.value, parents=(x, w, b))

    def backward(g):
        dx = g @ w.value.T
        lead = tuple(range(g.ndim - 1))
        dw = np.tensordot(x.value, g, axes=(lead, lead))
        db = g.sum(axis=lead)
        return dx, dw, db

    out._backward = backward
    return out


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    v = x.value
    s = np.empty_like(v)
    pos = v >= 0
    s[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    e = np.exp(v[~pos])
    s[~pos] = e / (1.0 + e)
    out = Tensor(s, parents=(x,))
    out._backward = lambda g: (g * s * (1.0 - s),)
    return out


def tanh(x) -> Tensor:
    x = as_tensor(x)
    t = np.tanh(x.value)
    out = Tensor(t, parents=(x,))
    out._backward = lambda g: (g * (1.0 - t * t),)
    return out


def concat(tensors, axis=-1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        value = np.concatenate([t.value for t in tensors], axis=axis)
    except ValueError:
        shapes = [t.shape for t in tensors]
        raise ShapeError(f"concat: incompatible shapes {shapes}")
    out = Tensor(value, parents=tuple(tensors))
    sizes = [t.value.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    out._backward = backward
    return out


def row_lookup(table, indices) -> Tensor:
    """Select rows of a 2-D table (embedding lookup)."""
    table = as_tensor(table)
    idx = np.asarray(indices, dtype=np.intp)
    if table.value.ndim != 2:
        raise ShapeError(f"row_lookup: table must be 2-D, got {table.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise IndexError(f"row_lookup: index out of range for table with "
                         f"{table.shape[0]} rows")
    out = Tensor(table.value[idx], parents=(table,))

    def backward(g):
        dt = np.zeros_like(table.value)
        np.add.at(dt, idx, g)
        return (dt,)

    out._backward = backward
    return out


def tile_leading(x, reps: int) -> Tensor:
    """Repeat x along a new leading axis: (B, m) -> (reps, B, m)."""
    x = as_tensor(x)
    out = Tensor(np.broadcast_to(x.value, (reps,) + x.value.shape).copy(),
                 parents=(x,))
    out._backward = lambda g: (g.sum(axis=0),)
    return out


def total(x) -> Tensor:
    """Sum of all entries, as a scalar tensor."""
    x = as_tensor(x)
    out = Tensor(x.value.sum(), parents=(x,))
    out._backward = lambda g: (np.full_like(x.value, float(g)),)
    return out


def last_step(x) -> Tensor:
    """Select the final step of a (T, ...) tensor."""
    x = as_tensor(x)
    out = Tensor(x.value[-1], parents=(x,))

    def backward(g):
        dx = np.zeros_like(x.value)
        dx[-1] = g
        return (dx,)

    out._backward = backward
    return out


def gru_sequence(x, h0, w_ih, w_hh, b_ih, b_hh) -> Tensor:
    """One GRU layer over a (T, B, I) sequence; returns (T, B, H).

    Forward/backward run in the selected kernel backend.
    """
    x, h0 = as_tensor(x), as_tensor(h0)
    w_ih, w_hh = as_tensor(w_ih), as_tensor(w_hh)
    b_ih, b_hh = as_tensor(b_ih), as_tensor(b_hh)
    T, B, I = x.shape
    H = h0.shape[1]
    if w_ih.shape != (I, 3 * H) or w_hh.shape != (H, 3 * H):
        raise ShapeError(
            f"gru_sequence: weights {w_ih.shape}/{w_hh.shape} do not match "
            f"input dim {I} and hidden dim {H} "
            f"({w_ih.name or 'w_ih'}, {w_hh.name or 'w_hh'})")
    xv = np.ascontiguousarray(x.value)
    h0v = np.ascontiguousarray(h0.value)
    h_seq, cache = _kernels.gru_forward(xv, h0v, w_ih.value, w_hh.value,
                                        b_ih.value, b_hh.value)
    out = Tensor(h_seq, parents=(x, h0, w_ih, w_hh, b_ih, b_hh))

    def backward(g):
        dh_last = np.zeros((B, H))
        dx, dh0, dw_ih, dw_hh, db_ih, db_hh = _kernels.gru_backward(
            np.ascontiguousarray(g), dh_last, xv, h0v, h_seq, cache,
            w_ih.value, w_hh.value)
        return dx, dh0, dw_ih, dw_hh, db_ih, db_hh

    out._backward = backward
    return out


def softmax_cross_entropy(logits, targets, reduction="mean") -> Tensor:
    """Mean (or sum) cross-entropy of integer targets under softmax logits.

    logits: (..., C); targets: integer array of shape (...). Stable via
    max subtraction.
    """
    logits = as_tensor(logits)
    t = np.asarray(targets, dtype=np.intp)
    if t.shape != logits.shape[:-1]:
        raise ShapeError(f"softmax_cross_entropy: targets {t.shape} do not "
                         f"match logits {logits.shape}")
    z = logits.value - logits.value.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    logp = z - lse
    picked = np.take_along_axis(logp, t[..., None], axis=-1)[..., 0]
    count = t.size if reduction == "mean" else 1
    out = Tensor(-picked.sum() / count, parents=(logits,))

    def backward(g):
        p = np.exp(logp)
        onehot = np.zeros_like(p)
        np.put_along_axis(onehot, t[..., None], 1.0, axis=-1)
        return ((p - onehot) * (g / count),)

    out._backward = backward
    return out


def backward(loss: Tensor):
    """Propagate d(loss)/d(node) into .grad of every reachable node.

    loss must be scalar. Grads of reachable nodes are overwritten, not
    accumulated across calls; use ParameterSet.zero_grad between steps.
    """
    if loss.value.size != 1:
        raise ValueError(f"backward: loss must be scalar, got shape "
                         f"{loss.value.shape}")

    order = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
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
        node.grad = np.zeros_like(node.value)
    loss.grad = np.ones_like(loss.value)

    for node in reversed(order):
        if node._backward is None:
            continue
        gs = node._backward(node.grad)
        for parent, g in zip(node._parents, gs):
            parent.grad = parent.grad + g
