"""Minimal reverse-mode differentiation on numpy float64 arrays.

Every primitive builds a :class:`Tensor` node that remembers its parents and
a closure that pushes the output gradient back to them.  :class:`Graph`
wraps a loss-building function over named parameters, and
:func:`grad_check` compares its gradients against central differences.
"""
from __future__ import annotations

import builtins
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np


class ShapeError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


class BackwardError(RuntimeError):
    pass


def _check_finite(arr: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite values produced by {what}")
    return arr


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")
    __array_ufunc__ = None  # make ndarray <op> Tensor dispatch to the Tensor

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, name={self.name!r})"

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad = self.grad + g

    # operator sugar
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

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __rtruediv__(self, other):
        return div(other, self)

    def __getitem__(self, key):
        return getitem(self, key)

    @property
    def T(self):
        return transpose(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data: np.ndarray, parents: tuple, backward, what: str) -> Tensor:
    out = Tensor(_check_finite(data, what))
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


# ---------------------------------------------------------------- primitives

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data + b.data
    except ValueError as exc:
        raise ShapeError(f"add: {a.shape} vs {b.shape}") from exc

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _node(data, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data - b.data
    except ValueError as exc:
        raise ShapeError(f"sub: {a.shape} vs {b.shape}") from exc

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.shape))

    return _node(data, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    """Elementwise product with numpy broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data * b.data
    except ValueError as exc:
        raise ShapeError(f"mul: {a.shape} vs {b.shape}") from exc

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _node(data, (a, b), backward, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data / b.data
    except ValueError as exc:
        raise ShapeError(f"div: {a.shape} vs {b.shape}") from exc

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g / b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    with np.errstate(divide="ignore", invalid="ignore"):
        return _node(data, (a, b), backward, "div")


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)

    def backward(g):
        a._accumulate(g * c)

    return _node(a.data * c, (a,), backward, "scale")


def matmul(a, b) -> Tensor:
    """Batched matrix product following ``np.matmul`` broadcasting.

    1-D operands are promoted the same way numpy does, so ``[1,2] @ [3,4]``
    yields a 0-d tensor.
    """
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = np.matmul(a.data, b.data)
    except ValueError as exc:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape}") from exc

    def backward(g):
        A = a.data[None, :] if a.ndim == 1 else a.data
        B = b.data[:, None] if b.ndim == 1 else b.data
        G = g
        if a.ndim == 1:
            G = np.expand_dims(G, -2)
        if b.ndim == 1:
            G = np.expand_dims(G, -1)
        if a.requires_grad:
            ga = np.matmul(G, np.swapaxes(B, -1, -2))
            if a.ndim == 1:
                ga = ga.reshape(ga.shape[:-2] + (ga.shape[-1],))
                ga = _unbroadcast(ga, a.shape)
            else:
                ga = _unbroadcast(ga, a.shape)
            a._accumulate(ga)
        if b.requires_grad:
            gb = np.matmul(np.swapaxes(A, -1, -2), G)
            if b.ndim == 1:
                gb = gb[..., 0]
            b._accumulate(_unbroadcast(gb, b.shape))

    return _node(data, (a, b), backward, "matmul")


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0  # subgradient 0 at exactly 0

    def backward(g):
        a._accumulate(g * mask)

    return _node(np.where(mask, a.data, 0.0), (a,), backward, "relu")


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)

    def backward(g):
        a._accumulate(g * out * (1.0 - out))

    return _node(out, (a,), backward, "sigmoid")


def exp(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(over="ignore"):
        out = np.exp(a.data)

    def backward(g):
        a._accumulate(g * out)

    return _node(out, (a,), backward, "exp")


def log(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(a.data)

    def backward(g):
        a._accumulate(g / a.data)

    return _node(out, (a,), backward, "log")


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(invalid="ignore"):
        out = np.sqrt(a.data)

    def backward(g):
        with np.errstate(divide="ignore"):
            a._accumulate(_check_finite(g * 0.5 / out, "sqrt backward"))

    return _node(out, (a,), backward, "sqrt")


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp to ``[lo, hi]``; the gradient is passed only strictly inside."""
    a = as_tensor(a)
    inside = (a.data > lo) & (a.data < hi)

    def backward(g):
        a._accumulate(g * inside)

    return _node(np.clip(a.data, lo, hi), (a,), backward, "clip")


def softmax(a) -> Tensor:
    """Softmax over the last axis."""
    a = as_tensor(a)
    z = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        a._accumulate(out * (g - (g * out).sum(axis=-1, keepdims=True)))

    return _node(out, (a,), backward, "softmax")


def logsumexp(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    m = a.data.max(axis=axis, keepdims=True)
    e = np.exp(a.data - m)
    s = e.sum(axis=axis, keepdims=True)
    out = np.squeeze(m + np.log(s), axis=axis)
    w = e / s

    def backward(g):
        a._accumulate(np.expand_dims(g, axis) * w)

    return _node(out, (a,), backward, "logsumexp")


def sum(a, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.shape))

    return _node(np.asarray(out), (a,), backward, "sum")


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    n = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return scale(sum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def max(a, axis: int = -1) -> Tensor:  # noqa: A001
    """Max-reduce along ``axis``; the gradient goes to the first argmax."""
    a = as_tensor(a)
    idx = np.expand_dims(a.data.argmax(axis=axis), axis)
    out = np.take_along_axis(a.data, idx, axis=axis).squeeze(axis)

    def backward(g):
        grad = np.zeros_like(a.data)
        np.put_along_axis(grad, idx, np.expand_dims(g, axis), axis=axis)
        a._accumulate(grad)

    return _node(out, (a,), backward, "max")


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"reshape: {a.shape} -> {shape}") from exc

    def backward(g):
        a._accumulate(g.reshape(a.shape))

    return _node(out, (a,), backward, "reshape")


def transpose(a, axes=None) -> Tensor:
    """Permute axes; the default swaps the last two."""
    a = as_tensor(a)
    if axes is None:
        axes = tuple(range(a.ndim - 2)) + (a.ndim - 1, a.ndim - 2) if a.ndim >= 2 else (0,)
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))

    def backward(g):
        a._accumulate(np.transpose(g, inv))

    return _node(np.transpose(a.data, axes), (a,), backward, "transpose")


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: {[t.shape for t in tensors]}") from exc
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def backward(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                t._accumulate(g[tuple(sl)])

    return _node(out, tuple(tensors), backward, "concat")


def gather_rows(table, index) -> Tensor:
    """``table[index]`` for an integer array; backward scatter-adds into the table."""
    table = as_tensor(table)
    index = np.asarray(index)
    if not np.issubdtype(index.dtype, np.integer):
        raise ShapeError("gather_rows needs an integer index")
    if index.size and (index.min() < 0 or index.max() >= table.shape[0]):
        raise ShapeError(f"gather_rows: index out of range for {table.shape[0]} rows")

    def backward(g):
        grad = np.zeros_like(table.data)
        np.add.at(grad, index, g)
        table._accumulate(grad)

    return _node(table.data[index], (table,), backward, "gather_rows")


def getitem(a, key) -> Tensor:
    """Basic or advanced indexing; backward scatter-adds."""
    a = as_tensor(a)
    out = a.data[key]

    def backward(g):
        grad = np.zeros_like(a.data)
        np.add.at(grad, key, g)
        a._accumulate(grad)

    return _node(np.array(out), (a,), backward, "getitem")


# ------------------------------------------------------------ reverse sweep

def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backprop(root: Tensor, seed=None) -> None:
    """Accumulate d(root)/d(leaf) into ``.grad`` of every reachable leaf."""
    if seed is None:
        if root.data.size != 1:
            raise ShapeError("a seed gradient is required for non-scalar outputs")
        seed = np.ones_like(root.data)
    seed = np.asarray(seed, dtype=np.float64)
    if seed.shape != root.shape:
        raise ShapeError(f"seed shape {seed.shape} != output shape {root.shape}")
    order = _topo_order(root)
    for node in order:
        if node._backward is not None:
            node.grad = None
    root.grad = seed.copy()
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
            node.grad = None  # free intermediates


# ------------------------------------------------------------------ graphs

class Graph:
    """A computation over named parameters.

    ``fn(params, inputs)`` receives the parameters as leaf tensors and the
    inputs as plain arrays, and returns a tensor (or a dict of tensors).
    """

    def __init__(self, fn: Callable[[dict, dict], Tensor | dict], params: Mapping[str, np.ndarray]):
        self.fn = fn
        self.params = params
        self._leaves: dict[str, Tensor] | None = None
        self._out = None

    def forward(self, **inputs):
        self._leaves = {k: Tensor(v, requires_grad=True, name=k) for k, v in self.params.items()}
        self._out = self.fn(self._leaves, inputs)
        if isinstance(self._out, dict):
            return {k: v.data for k, v in self._out.items()}
        return self._out.data

    def backward(self, seed=None, output: str | None = None) -> dict[str, np.ndarray]:
        if self._out is None:
            raise BackwardError("backward called before forward")
        root = self._out[output] if isinstance(self._out, dict) else self._out
        for leaf in self._leaves.values():
            leaf.grad = None
        backprop(root, seed)
        grads = {}
        for k, leaf in self._leaves.items():
            g = np.zeros_like(leaf.data) if leaf.grad is None else leaf.grad
            grads[k] = _check_finite(g, f"gradient of {k}")
        return grads


@dataclass
class GradCheckReport:
    errors: dict[str, float] = field(default_factory=dict)
    rel_tol: float = 1e-4

    @property
    def max_error(self) -> float:
        return builtins.max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_error <= self.rel_tol


def grad_check(graph: Graph, inputs: Mapping | None = None, rel_tol: float = 1e-4,
               step: float = 1e-5, output: str | None = None) -> GradCheckReport:
    """Compare analytic gradients with central differences.

    The error for a parameter is ``max|analytic - numeric|`` divided by the
    larger of the two gradients' max magnitudes (floored at 1e-8), so that
    entries that are tiny relative to the rest of the tensor do not turn
    round-off into spurious failures.
    """
    inputs = dict(inputs or {})

    def scalar_out():
        out = graph.forward(**inputs)
        out = out[output] if isinstance(out, dict) else out
        if np.size(out) != 1:
            raise ShapeError("grad_check needs a scalar output")
        return float(out)

    scalar_out()
    analytic = graph.backward(output=output)
    report = GradCheckReport(rel_tol=rel_tol)
    for name, arr in graph.params.items():
        numeric = np.zeros_like(arr)
        flat = arr.reshape(-1)
        nflat = numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            fp = scalar_out()
            flat[i] = orig - step
            fm = scalar_out()
            flat[i] = orig
            nflat[i] = (fp - fm) / (2 * step)
        denom = builtins.max(np.abs(analytic[name]).max(initial=0.0), np.abs(numeric).max(initial=0.0), 1e-8)
        report.errors[name] = float(np.abs(analytic[name] - numeric).max(initial=0.0) / denom)
    return report
