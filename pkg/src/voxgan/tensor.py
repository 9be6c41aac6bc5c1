"""Dense N-d tensors with reverse-mode automatic differentiation.

Every value is an immutable numpy array wrapped in a graph node. Applying
an operation eagerly computes the result and, while recording is enabled,
links the output to its parents together with one VJP closure per parent.
The VJP closures are themselves written in terms of these same primitives,
so a gradient produced with ``grad(..., create_graph=True)`` is an ordinary
graph node and can be differentiated again. That property is what makes
penalties defined on gradient norms trainable.

Broadcasting is numpy-style expansion of size-1 axes only; any other
mismatch raises ``ShapeError``. 64-bit floats are the default element type;
``set_default_dtype(np.float32)`` switches the global mode.
"""

from __future__ import annotations

import itertools
import threading
from contextlib import contextmanager

import numpy as np

from .errors import GradientError, ShapeError

_ids = itertools.count()

_state = threading.local()


def _dtype():
    return getattr(_state, "dtype", np.float64)


def set_default_dtype(dtype):
    dtype = np.dtype(dtype)
    if dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError(f"unsupported dtype {dtype}; use float32 or float64")
    _state.dtype = dtype.type


def default_dtype():
    return _dtype()


def is_grad_enabled():
    return getattr(_state, "grad_enabled", True)


@contextmanager
def no_grad():
    prev = is_grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


class Tensor:
    """Graph node: immutable value plus provenance (op tag, parents, VJPs)."""

    __slots__ = ("id", "data", "requires_grad", "op", "parents", "_vjps")

    def __init__(self, data, requires_grad=False):
        arr = np.array(data, dtype=_dtype())
        arr.flags.writeable = False
        self.id = next(_ids)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.op = "leaf"
        self.parents = ()
        self._vjps = ()

    # -- construction helpers -------------------------------------------------

    @classmethod
    def _from_op(cls, data, op, parents):
        t = object.__new__(cls)
        arr = np.asarray(data)
        if arr.flags.writeable:
            arr.flags.writeable = False
        t.id = next(_ids)
        t.data = arr
        t.op = op
        if is_grad_enabled() and any(p.requires_grad for p in parents):
            t.requires_grad = True
            t.parents = tuple(parents)
        else:
            t.requires_grad = False
            t.parents = ()
        t._vjps = ()
        return t

    def _set_vjps(self, *vjps):
        if self.parents:
            self._vjps = vjps
        return self

    # -- basic protocol -------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        if self.data.size != 1:
            raise ValueError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self):
        t = object.__new__(Tensor)
        t.id = next(_ids)
        t.data = self.data
        t.requires_grad = False
        t.op = "leaf"
        t.parents = ()
        t._vjps = ()
        return t

    def assign_(self, data):
        """Replace the value of a leaf in place (parameter updates only)."""
        if self.parents:
            raise GradientError("assign_ is only valid on leaf tensors")
        arr = np.asarray(data, dtype=self.data.dtype)
        if arr.shape != self.data.shape:
            raise ShapeError("assign_", self.data.shape, arr.shape)
        arr = arr.copy() if arr.flags.writeable is False else np.array(arr)
        arr.flags.writeable = False
        self.data = arr

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op!r}{flag})"

    # -- operator sugar -------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce_mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, axes=None):
        return transpose(self, axes)


def _wrap(x):
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


def zeros(shape):
    return Tensor(np.zeros(shape, dtype=_dtype()))


def ones(shape):
    return Tensor(np.ones(shape, dtype=_dtype()))


def zeros_like(t):
    return Tensor(np.zeros(t.shape, dtype=t.data.dtype))


def ones_like(t):
    return Tensor(np.ones(t.shape, dtype=t.data.dtype))


# -- broadcasting -------------------------------------------------------------


def _broadcast_shape(op, sa, sb):
    ra, rb = len(sa), len(sb)
    out = []
    for i in range(max(ra, rb)):
        da = sa[ra - max(ra, rb) + i] if ra - max(ra, rb) + i >= 0 else 1
        db = sb[rb - max(ra, rb) + i] if rb - max(ra, rb) + i >= 0 else 1
        if da == db or da == 1 or db == 1:
            out.append(max(da, db))
        else:
            raise ShapeError(op, sa, sb, "only size-1 axes may broadcast")
    return tuple(out)


def _unbroadcast(g, target_shape):
    """Reduce gradient ``g`` back to ``target_shape`` (inverse of broadcast)."""
    if g.shape == tuple(target_shape):
        return g
    extra = g.ndim - len(target_shape)
    if extra > 0:
        g = reduce_sum(g, axis=tuple(range(extra)))
    axes = tuple(
        i for i, (gs, ts) in enumerate(zip(g.shape, target_shape)) if ts == 1 and gs != 1
    )
    if axes:
        g = reduce_sum(g, axis=axes, keepdims=True)
    return g


# -- elementwise binary primitives --------------------------------------------


def add(a, b):
    a, b = _wrap(a), _wrap(b)
    _broadcast_shape("add", a.shape, b.shape)
    out = Tensor._from_op(a.data + b.data, "add", (a, b))
    return out._set_vjps(
        lambda u: _unbroadcast(u, a.shape),
        lambda u: _unbroadcast(u, b.shape),
    )


def sub(a, b):
    a, b = _wrap(a), _wrap(b)
    _broadcast_shape("sub", a.shape, b.shape)
    out = Tensor._from_op(a.data - b.data, "sub", (a, b))
    return out._set_vjps(
        lambda u: _unbroadcast(u, a.shape),
        lambda u: _unbroadcast(neg(u), b.shape),
    )


def mul(a, b):
    a, b = _wrap(a), _wrap(b)
    _broadcast_shape("mul", a.shape, b.shape)
    out = Tensor._from_op(a.data * b.data, "mul", (a, b))
    return out._set_vjps(
        lambda u: _unbroadcast(mul(u, b), a.shape),
        lambda u: _unbroadcast(mul(u, a), b.shape),
    )


def div(a, b):
    a, b = _wrap(a), _wrap(b)
    _broadcast_shape("div", a.shape, b.shape)
    out = Tensor._from_op(a.data / b.data, "div", (a, b))
    return out._set_vjps(
        lambda u: _unbroadcast(div(u, b), a.shape),
        lambda u: _unbroadcast(neg(div(mul(u, out), b)), b.shape),
    )


# -- elementwise unary primitives ----------------------------------------------


def neg(a):
    a = _wrap(a)
    out = Tensor._from_op(-a.data, "neg", (a,))
    return out._set_vjps(lambda u: neg(u))


def power(a, exponent):
    a = _wrap(a)
    c = float(exponent)
    out = Tensor._from_op(a.data**c, "pow", (a,))
    return out._set_vjps(lambda u: mul(u, mul(c, power(a, c - 1.0))))


def exp(a):
    a = _wrap(a)
    out = Tensor._from_op(np.exp(a.data), "exp", (a,))
    return out._set_vjps(lambda u: mul(u, out))


def log(a):
    a = _wrap(a)
    out = Tensor._from_op(np.log(a.data), "log", (a,))
    return out._set_vjps(lambda u: div(u, a))


def sqrt(a):
    a = _wrap(a)
    out = Tensor._from_op(np.sqrt(a.data), "sqrt", (a,))
    return out._set_vjps(lambda u: div(mul(u, 0.5), out))


def tanh(a):
    a = _wrap(a)
    out = Tensor._from_op(np.tanh(a.data), "tanh", (a,))
    return out._set_vjps(lambda u: mul(u, sub(1.0, mul(out, out))))


def sigmoid(a):
    a = _wrap(a)
    val = 1.0 / (1.0 + np.exp(-a.data))
    out = Tensor._from_op(val, "sigmoid", (a,))
    return out._set_vjps(lambda u: mul(u, mul(out, sub(1.0, out))))


def relu(a):
    a = _wrap(a)
    mask = Tensor((a.data > 0).astype(a.data.dtype))
    out = Tensor._from_op(a.data * mask.data, "relu", (a,))
    return out._set_vjps(lambda u: mul(u, mask))


def leaky_relu(a, alpha=0.2):
    a = _wrap(a)
    slope = np.where(a.data > 0, 1.0, alpha).astype(a.data.dtype)
    mask = Tensor(slope)
    out = Tensor._from_op(a.data * slope, "leaky_relu", (a,))
    return out._set_vjps(lambda u: mul(u, mask))


def clip(a, lo, hi):
    a = _wrap(a)
    mask = Tensor(((a.data >= lo) & (a.data <= hi)).astype(a.data.dtype))
    out = Tensor._from_op(np.clip(a.data, lo, hi), "clip", (a,))
    return out._set_vjps(lambda u: mul(u, mask))


# -- linear algebra -----------------------------------------------------------


def matmul(a, b):
    a, b = _wrap(a), _wrap(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape, "expects [m,k] @ [k,n]")
    out = Tensor._from_op(a.data @ b.data, "matmul", (a, b))
    return out._set_vjps(
        lambda u: matmul(u, transpose(b)),
        lambda u: matmul(transpose(a), u),
    )


def transpose(a, axes=None):
    a = _wrap(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    out = Tensor._from_op(np.transpose(a.data, axes), "transpose", (a,))
    return out._set_vjps(lambda u: transpose(u, inv))


# -- shape ops ----------------------------------------------------------------


def reshape(a, shape):
    a = _wrap(a)
    shape = tuple(int(s) for s in shape)
    out = Tensor._from_op(a.data.reshape(shape), "reshape", (a,))
    orig = a.shape
    return out._set_vjps(lambda u: reshape(u, orig))


def narrow(a, axis, start, length):
    """Contiguous slice ``[start, start+length)`` along one axis."""
    a = _wrap(a)
    axis = int(axis)
    n = a.shape[axis]
    if not (0 <= start and start + length <= n):
        raise ShapeError("narrow", a.shape, (start, length), "slice out of range")
    idx = tuple(
        slice(start, start + length) if i == axis else slice(None) for i in range(a.ndim)
    )
    out = Tensor._from_op(a.data[idx], "narrow", (a,))
    return out._set_vjps(lambda u: pad_axis(u, axis, start, n - start - length))


def pad_axis(a, axis, before, after):
    """Zero-pad along one axis; the adjoint of ``narrow``."""
    a = _wrap(a)
    axis = int(axis)
    pads = [(0, 0)] * a.ndim
    pads[axis] = (int(before), int(after))
    out = Tensor._from_op(np.pad(a.data, pads), "pad_axis", (a,))
    length = a.shape[axis]
    return out._set_vjps(lambda u: narrow(u, axis, before, length))


# -- reductions ---------------------------------------------------------------


def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        return (axis % ndim,)
    return tuple(a % ndim for a in axis)


def reduce_sum(a, axis=None, keepdims=False):
    a = _wrap(a)
    axes = _norm_axes(axis, a.ndim)
    out = Tensor._from_op(a.data.sum(axis=axes, keepdims=keepdims), "sum", (a,))
    in_shape = a.shape
    kept = tuple(1 if i in axes else s for i, s in enumerate(in_shape))

    def vjp(u):
        if not keepdims:
            u = reshape(u, kept)
        return mul(u, Tensor(np.ones(in_shape, dtype=a.data.dtype)))

    return out._set_vjps(vjp)


def reduce_mean(a, axis=None, keepdims=False):
    a = _wrap(a)
    axes = _norm_axes(axis, a.ndim)
    n = 1
    for i in axes:
        n *= a.shape[i]
    return mul(reduce_sum(a, axis=axis, keepdims=keepdims), 1.0 / n)


# -- reverse pass ---------------------------------------------------------------


def grad(output, wrt, create_graph=False, strict=False):
    """Gradients of a scalar ``output`` with respect to each tensor in ``wrt``.

    Returns a dict keyed by the requested tensors. Tensors absent from the
    output's ancestry map to zeros unless ``strict`` is set. With
    ``create_graph`` the returned gradients are recorded nodes, so they can
    be differentiated once more (the reverse pass replays through the same
    primitive set).
    """
    if not isinstance(output, Tensor):
        raise GradientError("grad output must be a Tensor")
    if output.size != 1:
        raise GradientError(f"grad requires a scalar output, got shape {output.shape}")
    wrt = list(wrt)

    # Topological order over the recorded subgraph that requires grad.
    order = []
    seen = set()
    stack = [(output, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    grads = {id(output): ones_like(output)}
    ctx = _nullcontext() if create_graph else no_grad()
    with ctx:
        for node in reversed(order):
            g = grads.get(id(node))
            if g is None:
                continue
            for parent, vjp in zip(node.parents, node._vjps):
                if not parent.requires_grad:
                    continue
                contrib = vjp(g)
                prev = grads.get(id(parent))
                grads[id(parent)] = contrib if prev is None else add(prev, contrib)

    result = {}
    for t in wrt:
        g = grads.get(id(t))
        if g is None:
            if strict:
                raise GradientError(
                    f"tensor id={t.id} is not part of the output's graph (strict mode)"
                )
            g = zeros_like(t)
        result[t] = g
    return result


@contextmanager
def _nullcontext():
    yield
