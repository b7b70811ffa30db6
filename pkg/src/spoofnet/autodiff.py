"""Dense tensors with reverse-mode automatic differentiation.

A Tensor wraps a numpy array and remembers how it was produced; calling
:func:`backward` on a scalar walks the recorded graph once in reverse
topological order and accumulates gradients into every tensor that
requires them. The op set is deliberately closed: exactly what the
detector network and its losses need, nothing speculative.

Values are float32 by default (model-sized buffers); gradient-checking
code builds float64 graphs by passing float64 arrays in. Broadcasting is
restricted to row-vector bias addition; everything else must shape-match
exactly, mismatches raise ShapeError naming both shapes.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np
from scipy.special import erf

from .errors import NotScalar, ShapeError

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph recording inside the block (inference mode)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """N-dimensional value, optionally tracked by the autodiff graph."""

    __slots__ = ("data", "requires_grad", "grad", "name",
                 "_parents", "_backward_fn", "_backward_done")

    def __init__(self, data, requires_grad: bool = False, name: str = ""):
        self.data = np.asarray(data)
        if self.data.dtype not in (np.float32, np.float64):
            self.data = self.data.astype(np.float64)
        self.requires_grad = requires_grad and _grad_enabled
        self.grad = None
        self.name = name
        self._parents = ()
        self._backward_fn = None
        self._backward_done = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def T(self):
        return transpose(self)

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def zero_grad(self):
        self.grad = None

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __neg__(self):
        return mul(self, -1.0)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{tag})"


def parameter(data, name: str = "") -> Tensor:
    """A leaf tensor that always participates in gradients."""
    t = Tensor(np.asarray(data), requires_grad=True, name=name)
    t.requires_grad = True  # parameters track grads even inside no_grad
    return t


def _result(data, parents, backward_fn) -> Tensor:
    tracked = _grad_enabled and any(
        p.requires_grad for p in parents if isinstance(p, Tensor)
    )
    out = Tensor(data, requires_grad=tracked)
    if tracked:
        out._parents = tuple(p for p in parents if isinstance(p, Tensor))
        out._backward_fn = backward_fn
    return out


def _accumulate(t: Tensor, g: np.ndarray):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _const(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x)


def _check_into(op: str, a: Tensor, bd: np.ndarray):
    """Operand bd must broadcast into a's shape without enlarging it."""
    try:
        out = np.broadcast_shapes(a.data.shape, bd.shape)
    except ValueError:
        out = None
    if out != a.data.shape:
        raise ShapeError(f"{op}: cannot combine shapes {a.data.shape} and {bd.shape}")


def _reduce_to(g: np.ndarray, shape) -> np.ndarray:
    """Sum a gradient down to the shape of a broadcast operand."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(shape)


def add(a: Tensor, b) -> Tensor:
    """Elementwise sum; b may be a same-shape tensor, a row-vector bias
    of shape (D,) or (1, D) against (..., D), a scalar, or a constant."""
    bd = _const(b)
    _check_into("add", a, bd)
    if isinstance(b, Tensor) and not (
        bd.shape == a.data.shape or bd.size == 1
        or (a.data.ndim >= 1
            and bd.shape in ((a.data.shape[-1],), (1, a.data.shape[-1])))
    ):
        raise ShapeError(f"add: cannot combine shapes {a.data.shape} and {bd.shape}")
    data = a.data + bd

    def backward_fn(g):
        _accumulate(a, g)
        if isinstance(b, Tensor):
            _accumulate(b, g if bd.shape == g.shape else _reduce_to(g, bd.shape))

    return _result(data, (a, b), backward_fn)


def sub(a: Tensor, b) -> Tensor:
    bd = _const(b)
    _check_into("sub", a, bd)
    if isinstance(b, Tensor) and bd.shape != a.data.shape and bd.size != 1:
        raise ShapeError(f"sub: cannot combine shapes {a.data.shape} and {bd.shape}")
    data = a.data - bd

    def backward_fn(g):
        _accumulate(a, g)
        if isinstance(b, Tensor):
            _accumulate(b, -g if bd.shape == g.shape else _reduce_to(-g, bd.shape))

    return _result(data, (a, b), backward_fn)


def mul(a: Tensor, b) -> Tensor:
    """Elementwise product; b may be a same-shape tensor, a scalar, or a
    constant array that broadcasts into a's shape."""
    bd = _const(b)
    _check_into("mul", a, bd)
    if isinstance(b, Tensor) and bd.shape != a.data.shape and bd.size != 1:
        raise ShapeError(f"mul: cannot combine shapes {a.data.shape} and {bd.shape}")
    data = a.data * bd

    def backward_fn(g):
        _accumulate(a, g * bd)
        if isinstance(b, Tensor):
            gb = g * a.data
            _accumulate(b, gb if bd.shape == gb.shape else _reduce_to(gb, bd.shape))

    return _result(data, (a, b), backward_fn)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(
            f"matmul: cannot multiply shapes {a.data.shape} and {b.data.shape}"
        )
    data = a.data @ b.data

    def backward_fn(g):
        _accumulate(a, g @ b.data.T)
        _accumulate(b, a.data.T @ g)

    return _result(data, (a, b), backward_fn)


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = list(tensors)
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward_fn(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            _accumulate(t, g[tuple(idx)])

    return _result(data, tuple(tensors), backward_fn)


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice of `length` entries along `axis`."""
    if start < 0 or start + length > a.data.shape[axis]:
        raise ShapeError(
            f"narrow: slice [{start}:{start + length}] exceeds axis {axis} "
            f"of shape {a.data.shape}"
        )
    idx = [slice(None)] * a.data.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)
    data = a.data[idx].copy()

    def backward_fn(g):
        full = np.zeros_like(a.data)
        full[idx] = g
        _accumulate(a, full)

    return _result(data, (a,), backward_fn)


def reshape(a: Tensor, shape) -> Tensor:
    data = a.data.reshape(shape)

    def backward_fn(g):
        _accumulate(a, g.reshape(a.data.shape))

    return _result(data, (a,), backward_fn)


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"transpose expects a 2-D tensor, got shape {a.data.shape}")
    data = a.data.T.copy()

    def backward_fn(g):
        _accumulate(a, g.T)

    return _result(data, (a,), backward_fn)


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    y = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                 np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    def backward_fn(g):
        _accumulate(a, g * y * (1.0 - y))

    return _result(y, (a,), backward_fn)


def gelu(a: Tensor) -> Tensor:
    """Exact Gaussian-error linear unit, x * Phi(x)."""
    x = a.data
    cdf = 0.5 * (1.0 + erf(x / np.sqrt(2.0)))
    y = x * cdf

    def backward_fn(g):
        pdf = np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)
        _accumulate(a, g * (cdf + x * pdf))

    return _result(y, (a,), backward_fn)


def log(a: Tensor) -> Tensor:
    data = np.log(a.data)

    def backward_fn(g):
        _accumulate(a, g / a.data)

    return _result(data, (a,), backward_fn)


def exp(a: Tensor) -> Tensor:
    data = np.exp(a.data)

    def backward_fn(g):
        _accumulate(a, g * data)

    return _result(data, (a,), backward_fn)


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp values to [lo, hi]; gradient is passed through inside the
    range and zeroed where the clamp is active."""
    data = np.clip(a.data, lo, hi)
    inside = (a.data > lo) & (a.data < hi)

    def backward_fn(g):
        _accumulate(a, g * inside)

    return _result(data, (a,), backward_fn)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward_fn(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        _accumulate(a, y * (g - dot))

    return _result(y, (a,), backward_fn)


def logsumexp(a: Tensor, axis: int = -1, keepdims: bool = False) -> Tensor:
    """log(sum(exp(x))) along an axis, max-subtracted for overflow safety."""
    m = a.data.max(axis=axis, keepdims=True)
    e = np.exp(a.data - m)
    s = e.sum(axis=axis, keepdims=True)
    data = m + np.log(s)
    soft = e / s
    if not keepdims:
        data = data.squeeze(axis=axis)

    def backward_fn(g):
        gk = g if keepdims else np.expand_dims(g, axis=axis)
        _accumulate(a, gk * soft)

    return _result(data, (a,), backward_fn)


def layer_norm(a: Tensor, gain: Tensor, bias: Tensor,
               eps: float = 1e-5) -> Tensor:
    """Normalize each row of the last dim to mean 0 / variance 1, then
    apply the learned elementwise scale and shift."""
    d = a.data.shape[-1]
    if gain.data.shape != (d,) or bias.data.shape != (d,):
        raise ShapeError(
            f"layer_norm: scale/shift must have shape ({d},), got "
            f"{gain.data.shape} and {bias.data.shape}"
        )
    mu = a.data.mean(axis=-1, keepdims=True)
    var = a.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (a.data - mu) * inv
    data = xhat * gain.data + bias.data

    def backward_fn(g):
        dxhat = g * gain.data
        m1 = dxhat.mean(axis=-1, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
        _accumulate(a, inv * (dxhat - m1 - xhat * m2))
        lead = tuple(range(g.ndim - 1))
        _accumulate(gain, (g * xhat).sum(axis=lead))
        _accumulate(bias, g.sum(axis=lead))

    return _result(data, (a, gain, bias), backward_fn)


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward_fn(g):
        gk = g
        if axis is not None and not keepdims:
            gk = np.expand_dims(g, axis=axis)
        _accumulate(a, np.broadcast_to(gk, a.data.shape).copy())

    return _result(data, (a,), backward_fn)


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = a.data.size if axis is None else a.data.shape[axis]
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def _toposort(root: Tensor) -> list[Tensor]:
    order, visited, stack = [], set(), [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Populate .grad on every requires_grad tensor reachable from loss.

    The loss must be a single scalar; calling backward twice on the same
    graph without rebuilding it is an error because saved activations
    are not reference-counted.
    """
    if loss.data.size != 1:
        raise NotScalar(f"backward needs a scalar loss, got shape {loss.data.shape}")
    if loss._backward_done:
        raise RuntimeError("backward already called on this graph; rebuild the "
                           "forward pass before differentiating again")
    loss._backward_done = True
    order = _toposort(loss)
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward_fn is not None and node.grad is not None:
            node._backward_fn(node.grad)


def zero_grads(params) -> None:
    """Clear gradients on an iterable or dict of tensors."""
    values = params.values() if isinstance(params, dict) else params
    for p in values:
        p.grad = None
