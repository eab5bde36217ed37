"""Reverse-mode automatic differentiation over dense numpy arrays.

The graph is built eagerly: every operation returns a new :class:`Tensor`
holding its value, references to its inputs, and a closure that maps the
upstream gradient to gradients of the inputs (the local vector-Jacobian
product).  Calling :func:`backward` on a scalar node walks the graph once in
reverse topological order, accumulating gradients additively so shared
subexpressions are handled correctly.

Convention: training runs in float32, verification (finite-difference
checking) builds float64 tensors throughout.  Tensors are treated as
immutable once constructed; gradient buffers are rebuilt on every backward
pass, so graphs and parameters can be reused across calls.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

DEFAULT_DTYPE = np.float32

_FLOAT_KINDS = (np.dtype(np.float32), np.dtype(np.float64))


class Tensor:
    """Dense n-dimensional float array, optionally part of the tape."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, dtype=None, requires_grad: bool = False):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in _FLOAT_KINDS:
            arr = arr.astype(DEFAULT_DTYPE)
        if not np.all(np.isfinite(arr)):
            raise ValueError("tensor values must be finite (got NaN or Inf)")
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._backward: Callable | None = None

    # Fast constructors for internal use: op results skip the finiteness
    # scan (it would dominate runtime in training loops).
    @classmethod
    def _from_op(cls, data: np.ndarray, parents: tuple, backward: Callable) -> "Tensor":
        out = object.__new__(cls)
        out.data = data
        out.grad = None
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
        return out

    @classmethod
    def constant(cls, data: np.ndarray) -> "Tensor":
        out = object.__new__(cls)
        out.data = np.asarray(data)
        out.grad = None
        out.requires_grad = False
        out._parents = ()
        out._backward = None
        return out

    @classmethod
    def parameter(cls, data: np.ndarray) -> "Tensor":
        """Leaf tensor that receives gradients (no validation; internal)."""
        out = cls.constant(data)
        out.requires_grad = True
        return out

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype})"

    # Operator sugar; constants are lifted automatically.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __neg__(self):
        return mul(self, -1.0)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self, axis=None, keepdims=False):
        return tensor_sum(self, axis=axis, keepdims=keepdims)


def _lift(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor.constant(np.asarray(x, dtype=dtype or DEFAULT_DTYPE))


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    t.grad = g if t.grad is None else t.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `g` down to `shape`, undoing numpy broadcasting."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise arithmetic

def add(a, b) -> Tensor:
    a = _lift(a)
    b = _lift(b, a.dtype)
    out = a.data + b.data
    if not (a.requires_grad or b.requires_grad):
        return Tensor.constant(out)

    def backward(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g, a.data.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g, b.data.shape))

    return Tensor._from_op(out, (a, b), backward)


def mul(a, b) -> Tensor:
    a = _lift(a)
    b = _lift(b, a.dtype)
    out = a.data * b.data
    if not (a.requires_grad or b.requires_grad):
        return Tensor.constant(out)

    def backward(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    return Tensor._from_op(out, (a, b), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _lift(a), _lift(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    out = a.data @ b.data
    if not (a.requires_grad or b.requires_grad):
        return Tensor.constant(out)

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g @ b.data.T)
        if b.requires_grad:
            _accumulate(b, a.data.T @ g)

    return Tensor._from_op(out, (a, b), backward)


# ---------------------------------------------------------------------------
# activations
#
# Backward rules live in module-level helpers so verification harnesses can
# substitute them (fault injection in tests).

def _elu_grad(x: np.ndarray, out: np.ndarray) -> np.ndarray:
    return np.where(x > 0, np.asarray(1.0, dtype=out.dtype), out + 1.0)


def _sigmoid_grad(out: np.ndarray) -> np.ndarray:
    return out * (1.0 - out)


def _tanh_grad(out: np.ndarray) -> np.ndarray:
    return 1.0 - out * out


def elu(x) -> Tensor:
    """Exponential linear unit with alpha = 1."""
    x = _lift(x)
    xd = x.data
    out = np.where(xd > 0, xd, np.expm1(np.minimum(xd, 0.0)))
    if not x.requires_grad:
        return Tensor.constant(out)

    def backward(g):
        _accumulate(x, g * _elu_grad(xd, out))

    return Tensor._from_op(out, (x,), backward)


def _sigmoid_values(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(x) -> Tensor:
    x = _lift(x)
    out = _sigmoid_values(x.data)
    if not x.requires_grad:
        return Tensor.constant(out)

    def backward(g):
        _accumulate(x, g * _sigmoid_grad(out))

    return Tensor._from_op(out, (x,), backward)


def tanh(x) -> Tensor:
    x = _lift(x)
    out = np.tanh(x.data)
    if not x.requires_grad:
        return Tensor.constant(out)

    def backward(g):
        _accumulate(x, g * _tanh_grad(out))

    return Tensor._from_op(out, (x,), backward)


# ---------------------------------------------------------------------------
# shape manipulation

def reshape(x: Tensor, shape) -> Tensor:
    x = _lift(x)
    out = x.data.reshape(shape)
    if not x.requires_grad:
        return Tensor.constant(out)

    def backward(g):
        _accumulate(x, g.reshape(x.data.shape))

    return Tensor._from_op(out, (x,), backward)


def transpose(x: Tensor, axes) -> Tensor:
    x = _lift(x)
    axes = tuple(axes)
    out = x.data.transpose(axes)
    if not x.requires_grad:
        return Tensor.constant(out)
    inverse = tuple(np.argsort(axes))

    def backward(g):
        _accumulate(x, g.transpose(inverse))

    return Tensor._from_op(out, (x,), backward)


def getitem(x: Tensor, idx) -> Tensor:
    """Basic (non-fancy) indexing; backward scatters into zeros."""
    x = _lift(x)
    out = x.data[idx]
    if not x.requires_grad:
        return Tensor.constant(out)

    def backward(g):
        buf = np.zeros_like(x.data)
        buf[idx] = g
        _accumulate(x, buf)

    return Tensor._from_op(out, (x,), backward)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [_lift(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    if not any(t.requires_grad for t in tensors):
        return Tensor.constant(out)
    offsets = np.cumsum([t.data.shape[axis] for t in tensors])[:-1]

    def backward(g):
        for t, piece in zip(tensors, np.split(g, offsets, axis=axis)):
            if t.requires_grad:
                _accumulate(t, piece)

    return Tensor._from_op(out, tuple(tensors), backward)


def tensor_sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    x = _lift(x)
    out = x.data.sum(axis=axis, keepdims=keepdims)
    if not x.requires_grad:
        return Tensor.constant(out)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(x, np.broadcast_to(g, x.data.shape))

    return Tensor._from_op(out, (x,), backward)


def dropout(x: Tensor, keep_prob: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout: survivors are scaled by 1/keep so evaluation needs
    no rescaling.  Callers skip this entirely in eval mode."""
    if not 0.0 < keep_prob <= 1.0:
        raise ValueError(f"keep probability must be in (0, 1], got {keep_prob}")
    if keep_prob == 1.0:
        return x
    mask = (rng.random(x.shape) < keep_prob).astype(x.dtype) / x.dtype.type(keep_prob)
    return mul(x, Tensor.constant(mask))


# ---------------------------------------------------------------------------
# softmax cross-entropy

_LOG_CLAMP = 1e-12


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: Tensor, label: int):
    """Loss and probabilities for a single K-way prediction.

    Returns ``(loss, probs)`` where ``loss`` is a scalar tensor on the tape
    and ``probs`` is a plain array (it does not join the graph).
    """
    logits = _lift(logits)
    z = logits.data
    if z.ndim != 1:
        raise ValueError(f"expected 1-d logits, got shape {z.shape}")
    k = z.shape[0]
    if not 0 <= int(label) < k:
        raise ValueError(f"label {label} out of range for {k} classes")
    label = int(label)
    probs = _softmax_rows(z)
    loss = -np.log(max(probs[label], _LOG_CLAMP))
    loss_arr = np.asarray(loss, dtype=z.dtype)
    if not logits.requires_grad:
        return Tensor.constant(loss_arr), probs

    def backward(g):
        d = probs.copy()
        d[label] -= 1.0
        _accumulate(logits, d * g)

    return Tensor._from_op(loss_arr, (logits,), backward), probs


def softmax_cross_entropy_batch(logits: Tensor, labels: np.ndarray):
    """Mean cross-entropy over a batch of logits (B, K)."""
    logits = _lift(logits)
    z = logits.data
    if z.ndim != 2:
        raise ValueError(f"expected 2-d batched logits, got shape {z.shape}")
    batch, k = z.shape
    labels = np.asarray(labels)
    if labels.shape != (batch,):
        raise ValueError(f"labels shape {labels.shape} does not match batch {batch}")
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"labels out of range for {k} classes")
    probs = _softmax_rows(z)
    picked = np.clip(probs[np.arange(batch), labels], _LOG_CLAMP, None)
    loss_arr = np.asarray(-np.log(picked).mean(), dtype=z.dtype)
    if not logits.requires_grad:
        return Tensor.constant(loss_arr), probs

    def backward(g):
        d = probs.copy()
        d[np.arange(batch), labels] -= 1.0
        _accumulate(logits, d * (g / batch))

    return Tensor._from_op(loss_arr, (logits,), backward), probs


# ---------------------------------------------------------------------------
# backward pass

def backward(loss: Tensor) -> None:
    """Populate ``.grad`` on every tensor reachable from a scalar loss.

    Gradients in the reachable subgraph are reset first, so repeated calls
    (and parameter reuse across training steps) are safe.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward root must be scalar, got shape {loss.shape}")
    # Iterative post-order DFS: a node joins `topo` only after every one of
    # its parents has joined, so the reversed order runs each node's backward
    # after all of its consumers' backwards (correct for diamond graphs).
    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, done = stack.pop()
        if done:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    for node in topo:
        node.grad = None
    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
