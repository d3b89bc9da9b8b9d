"""Reverse-mode differentiation over a closed set of primitives.

The supported set is exactly what the survival losses need: affine maps
(including structural ops like reshape, slice, gather, concat), rectified
linear, exp, log, sum, mean, and stabilized log-sum-exp.  Values are
float64 numpy arrays; every primitive validates that its output is finite
and raises :class:`NonFiniteError` naming itself otherwise.

Typical use: wrap parameters with :func:`param`, data with :func:`const`,
compose a scalar loss, then call :func:`backward` and read ``.grad`` off
the parameter leaves.
"""

from __future__ import annotations

import numpy as np

from . import backend as K
from .errors import NonFiniteError, ShapeError


class Var:
    """A node in the recorded computation."""

    __slots__ = ("value", "grad", "parents", "_vjp", "needs_grad")

    def __init__(self, value, parents=(), vjp=None, needs_grad=False):
        self.value = value
        self.grad = None
        self.parents = parents
        self._vjp = vjp
        self.needs_grad = needs_grad

    def __repr__(self):
        return f"Var(shape={self.value.shape}, needs_grad={self.needs_grad})"

    # light operator sugar; second operands may be constants
    def __add__(self, other):
        return add(self, as_var(other))

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_var(other)))

    def __neg__(self):
        return neg(self)

    def __mul__(self, c):
        return mul_const(self, c)

    __rmul__ = __mul__


def const(value) -> Var:
    """A leaf holding fixed data; gradients are not propagated into it."""
    arr = np.ascontiguousarray(value, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError("constant input contains non-finite values")
    return Var(arr)


def param(value) -> Var:
    """A leaf whose gradient is accumulated by :func:`backward`."""
    arr = np.ascontiguousarray(value, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError("parameter contains non-finite values")
    return Var(arr, needs_grad=True)


def as_var(x) -> Var:
    return x if isinstance(x, Var) else const(x)


def _accum(p: Var, g: np.ndarray) -> None:
    if p.needs_grad or p.parents:
        p.grad = g if p.grad is None else p.grad + g


def _make(value, parents, vjp, name) -> Var:
    value = np.asarray(value, dtype=np.float64)
    if not np.all(np.isfinite(value)):
        raise NonFiniteError(f"{name} produced non-finite values")
    if any(p.needs_grad or p.parents for p in parents):
        return Var(value, parents, vjp, any(p.needs_grad for p in parents))
    return Var(value)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcast cotangent back to the original shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# primitives


def linear(x: Var, w: Var, b: Var) -> Var:
    """Affine map: x @ w + b over rows of a 2-D input."""
    x, w, b = as_var(x), as_var(w), as_var(b)
    if x.value.ndim != 2 or w.value.ndim != 2 or x.value.shape[1] != w.value.shape[0]:
        raise ShapeError(
            f"linear: cannot multiply {x.value.shape} by {w.value.shape}"
        )
    out = K.affine(np.ascontiguousarray(x.value), w.value, b.value)

    def vjp(g):
        g = np.ascontiguousarray(g)
        if x.needs_grad or x.parents:
            _accum(x, K.matmul(g, w.value, trans_b=True))
        if w.needs_grad:
            _accum(w, K.matmul(np.ascontiguousarray(x.value), g, trans_a=True))
        if b.needs_grad:
            _accum(b, K.col_sum(g))

    return _make(out, (x, w, b), vjp, "linear")


def relu(x: Var) -> Var:
    x = as_var(x)
    xv = np.ascontiguousarray(np.atleast_2d(x.value))
    out = K.relu(xv).reshape(x.value.shape)

    def vjp(g):
        gg = K.relu_backward(
            np.ascontiguousarray(np.atleast_2d(g)), xv
        ).reshape(x.value.shape)
        _accum(x, gg)

    return _make(out, (x,), vjp, "relu")


def exp(x: Var) -> Var:
    x = as_var(x)
    out = np.exp(x.value)

    def vjp(g):
        _accum(x, g * out)

    return _make(out, (x,), vjp, "exp")


def log(x: Var) -> Var:
    x = as_var(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(x.value)

    def vjp(g):
        _accum(x, g / x.value)

    return _make(out, (x,), vjp, "log")


def add(a: Var, b: Var) -> Var:
    a, b = as_var(a), as_var(b)
    out = a.value + b.value

    def vjp(g):
        _accum(a, _unbroadcast(g, a.value.shape))
        _accum(b, _unbroadcast(g, b.value.shape))

    return _make(out, (a, b), vjp, "add")


def neg(x: Var) -> Var:
    x = as_var(x)

    def vjp(g):
        _accum(x, -g)

    return _make(-x.value, (x,), vjp, "neg")


def mul_const(x: Var, c) -> Var:
    """Elementwise product with a constant array or scalar (an affine map)."""
    if isinstance(c, Var):
        raise ShapeError("mul_const requires a constant second operand")
    x = as_var(x)
    c = np.asarray(c, dtype=np.float64)

    def vjp(g):
        _accum(x, _unbroadcast(g * c, x.value.shape))

    return _make(x.value * c, (x,), vjp, "mul_const")


def vsum(x: Var, axis=None) -> Var:
    x = as_var(x)
    out = np.asarray(x.value.sum(axis=axis))

    def vjp(g):
        if axis is None:
            _accum(x, np.broadcast_to(g, x.value.shape).copy())
        else:
            _accum(x, np.broadcast_to(np.expand_dims(g, axis), x.value.shape).copy())

    return _make(out, (x,), vjp, "sum")


def vmean(x: Var, axis=None) -> Var:
    x = as_var(x)
    n = x.value.size if axis is None else x.value.shape[axis]
    if n == 0:
        raise ShapeError("mean over an empty axis")
    return mul_const(vsum(x, axis=axis), 1.0 / n)


def logsumexp(x: Var) -> Var:
    """Row-wise log(sum(exp)) of a 2-D input, max-shift stabilized."""
    x = as_var(x)
    if x.value.ndim != 2:
        raise ShapeError("logsumexp expects a 2-D input")
    xv = np.ascontiguousarray(x.value)
    lse = K.logsumexp_rows(xv)

    def vjp(g):
        _accum(x, K.softmax_rows(xv, lse) * g[:, None])

    return _make(lse, (x,), vjp, "logsumexp")


def reshape(x: Var, shape) -> Var:
    x = as_var(x)

    def vjp(g):
        _accum(x, g.reshape(x.value.shape))

    return _make(x.value.reshape(shape), (x,), vjp, "reshape")


def segment(x: Var, start: int, stop: int) -> Var:
    """Contiguous slice of a 1-D value."""
    x = as_var(x)
    if x.value.ndim != 1:
        raise ShapeError("segment expects a 1-D input")

    def vjp(g):
        full = np.zeros_like(x.value)
        full[start:stop] = g
        _accum(x, full)

    return _make(x.value[start:stop].copy(), (x,), vjp, "segment")


def take(x: Var, idx) -> Var:
    """Gather elements of a 1-D value at integer indices."""
    x = as_var(x)
    if x.value.ndim != 1:
        raise ShapeError("take expects a 1-D input")
    idx = np.asarray(idx, dtype=np.intp)

    def vjp(g):
        full = np.zeros_like(x.value)
        np.add.at(full, idx, g)
        _accum(x, full)

    return _make(x.value[idx], (x,), vjp, "take")


def concat_cols(parts: list[Var]) -> Var:
    """Column-wise concatenation of 2-D values with equal row counts."""
    parts = [as_var(p) for p in parts]
    widths = [p.value.shape[1] for p in parts]
    out = np.concatenate([p.value for p in parts], axis=1)

    def vjp(g):
        offset = 0
        for p, w in zip(parts, widths):
            _accum(p, g[:, offset : offset + w])
            offset += w

    return _make(out, tuple(parts), vjp, "concat")


# ---------------------------------------------------------------------------


def backward(root: Var) -> None:
    """Accumulate gradients of a scalar root into every reachable leaf."""
    if root.value.shape != ():
        raise ShapeError(f"backward needs a scalar root, got shape {root.value.shape}")
    order: list[Var] = []
    seen: set[int] = set()
    stack: list[tuple[Var, bool]] = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    for v in order:
        v.grad = None
    root.grad = np.ones((), dtype=np.float64)
    for v in reversed(order):
        if v._vjp is not None and v.grad is not None:
            v._vjp(v.grad)
