"""Dense float64 tensors with define-by-run reverse-mode differentiation.

Every operation on a :class:`Tensor` that requires gradients records a node
holding its parents and a closure that maps the output adjoint to parent
adjoints.  :meth:`Tensor.backward` walks the record in reverse topological
order.  The graph is rebuilt on every forward pass.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

from . import kernels


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible for an operation."""

    def __init__(self, op: str, *shapes):
        self.op = op
        self.shapes = tuple(tuple(s) for s in shapes)
        joined = " and ".join(str(s) for s in self.shapes)
        super().__init__(f"{op}: incompatible shapes {joined}")


_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    """A float64 array that can take part in reverse-mode differentiation."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op", "name")
    __array_priority__ = 100.0

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self.op = "leaf"
        self.name = name

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op}{flag})"

    def __len__(self) -> int:
        return len(self.data)

    # -- graph ------------------------------------------------------------
    def backward(self, grad: np.ndarray | None = None) -> None:
        """Accumulate d(self)/d(leaf) into ``leaf.grad`` for every leaf that requires it."""
        if grad is None:
            if self.data.size != 1:
                raise ShapeError("backward (loss must be scalar)", self.shape)
            grad = np.ones_like(self.data)
        order = _topological_order(self)
        adjoints: dict[int, np.ndarray] = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in reversed(order):
            g = adjoints.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            parent_grads = node._backward(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in adjoints:
                    adjoints[key] = adjoints[key] + pg
                else:
                    adjoints[key] = pg

    # -- operator sugar ---------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent: float):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def tanh(self):
        return tanh(self)

    def sigmoid(self):
        return sigmoid(self)

    def relu(self):
        return relu(self)


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
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
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: Iterable[Tensor], backward, op: str) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    out.op = op
    parents = tuple(parents)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape) from None


# -- elementwise binary ------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)
    sa, sb = a.shape, b.shape
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)
    sa, sb = a.shape, b.shape
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)), "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)
    ad, bd = a.data, b.data

    def backward(g):
        return (_unbroadcast(g * bd, ad.shape) if a.requires_grad else None,
                _unbroadcast(g * ad, bd.shape) if b.requires_grad else None)

    return _make(ad * bd, (a, b), backward, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("div", a, b)
    ad, bd = a.data, b.data
    out = ad / bd

    def backward(g):
        return (_unbroadcast(g / bd, ad.shape) if a.requires_grad else None,
                _unbroadcast(-g * out / bd, bd.shape) if b.requires_grad else None)

    return _make(out, (a, b), backward, "div")


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _make(-a.data, (a,), lambda g: (-g,), "neg")


def power(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    p = float(exponent)
    return _make(ad ** p, (a,), lambda g: (g * p * ad ** (p - 1.0),), "pow")


# -- elementwise unary -------------------------------------------------------

def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,), "exp")


def log(a) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    return _make(np.log(ad), (a,), lambda g: (g / ad,), "log")


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return _make(out, (a,), lambda g: (g * 0.5 / out,), "sqrt")


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form avoids overflow in exp for large |x|
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = _sigmoid(a.data)
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _make(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,), "relu")


def elementwise(op_kind: str, *inputs) -> Tensor:
    """Dispatch an elementwise primitive by name."""
    table = {
        "add": add, "sub": sub, "mul": mul, "div": div,
        "exp": exp, "log": log, "tanh": tanh, "sigmoid": sigmoid, "relu": relu,
    }
    try:
        fn = table[op_kind]
    except KeyError:
        raise ValueError(f"unknown elementwise op {op_kind!r}") from None
    return fn(*inputs)


# -- reductions and shape ops -------------------------------------------------

def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    shape = a.shape

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _make(np.asarray(a.data.sum(axis=axis, keepdims=keepdims)), (a,), backward, "sum")


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        count = a.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([a.shape[ax] for ax in axes]))
    return tsum(a, axis=axis, keepdims=keepdims) * (1.0 / count)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    old = a.shape
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),), "reshape")


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inv = tuple(np.argsort(axes))
    return _make(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),), "transpose")


def getitem(a, index) -> Tensor:
    a = as_tensor(a)
    shape = a.shape

    def backward(g):
        full = np.zeros(shape)
        np.add.at(full, index, g) if _needs_add_at(index) else full.__setitem__(index, g)
        return (full,)

    return _make(np.asarray(a.data[index]), (a,), backward, "getitem")


def _needs_add_at(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return any(isinstance(i, (list, np.ndarray)) for i in items)


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    ax = axis % ts[0].ndim
    for t in ts[1:]:
        if t.ndim != ts[0].ndim or any(
                t.shape[i] != ts[0].shape[i] for i in range(t.ndim) if i != ax):
            raise ShapeError("concat", ts[0].shape, t.shape)
    splits = np.cumsum([t.shape[ax] for t in ts])[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=ax))

    return _make(np.concatenate([t.data for t in ts], axis=ax), ts, backward, "concat")


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    for t in ts[1:]:
        if t.shape != ts[0].shape:
            raise ShapeError("stack", ts[0].shape, t.shape)
    ax = axis % (ts[0].ndim + 1)

    def backward(g):
        return tuple(np.take(g, i, axis=ax) for i in range(len(ts)))

    return _make(np.stack([t.data for t in ts], axis=ax), ts, backward, "stack")


# -- linear algebra -----------------------------------------------------------

def matmul(a, b) -> Tensor:
    """Matrix product; ``a`` may carry leading batch dimensions, ``b`` is 2-D."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 1 or b.ndim != 2 or a.shape[-1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)
    ad, bd = a.data, b.data

    def backward(g):
        ga = g @ bd.T if a.requires_grad else None
        gb = None
        if b.requires_grad:
            gb = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        return ga, gb

    return _make(ad @ bd, (a, b), backward, "matmul")


def log_mean_exp(x, axis=None) -> Tensor:
    """``log(mean(exp(x)))`` with max subtraction."""
    x = as_tensor(x)
    if x.size == 0:
        raise ValueError("log_mean_exp of an empty tensor")
    xd = x.data
    m = np.max(xd, axis=axis, keepdims=True)
    e = np.exp(xd - m)
    s = e.sum(axis=axis, keepdims=True)
    count = xd.size if axis is None else xd.shape[axis]
    out = np.log(s / count) + m
    if axis is None:
        out = out.reshape(())
    else:
        out = np.squeeze(out, axis=axis)
    weights = e / s

    def backward(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (g * weights,)

    return _make(out, (x,), backward, "log_mean_exp")


# -- fused recurrent primitives ---------------------------------------------

def lstm_cell(x, h, c, weight, bias) -> Tensor:
    """One LSTM update as a single graph node.

    ``x`` has shape ``(..., D)``; ``h`` and ``c`` have shape ``(..., H)`` and
    broadcast against the leading dimensions of ``x``.  ``weight`` is
    ``(D + H, 4H)`` with gate blocks ordered input, forget, candidate,
    output.  Returns ``(..., 2H)``: new hidden state then new cell state.
    """
    x, h, c, weight, bias = (as_tensor(t) for t in (x, h, c, weight, bias))
    d = x.shape[-1]
    hid = h.shape[-1]
    if weight.shape != (d + hid, 4 * hid) or bias.shape != (4 * hid,) or c.shape[-1] != hid:
        raise ShapeError("lstm_cell", x.shape, h.shape, weight.shape)
    out, cache = kernels.lstm_cell_forward(x.data, h.data, c.data, weight.data, bias.data)

    def backward(g):
        dx, dh, dc, dw, db = kernels.lstm_cell_backward(cache, g[..., :hid], g[..., hid:])
        return dx, _unbroadcast(dh, h.shape), _unbroadcast(dc, c.shape), dw, db

    return _make(out, (x, h, c, weight, bias), backward, "lstm_cell")


def lstm_sequence(xs, weight, bias) -> Tensor:
    """Run an LSTM over time-major inputs ``(T, B, D)`` from a zero state.

    Returns ``(T, B, 2H)`` holding the hidden and cell state after each step.
    The time recursion runs inside the compiled kernel when available.
    """
    xs, weight, bias = as_tensor(xs), as_tensor(weight), as_tensor(bias)
    if xs.ndim != 3:
        raise ShapeError("lstm_sequence", xs.shape, weight.shape)
    hid = bias.shape[0] // 4
    if weight.shape != (xs.shape[2] + hid, 4 * hid):
        raise ShapeError("lstm_sequence", xs.shape, weight.shape)
    out, cache = kernels.lstm_seq_forward(xs.data, weight.data, bias.data)

    def backward(g):
        dxs, dw, db = kernels.lstm_seq_backward(cache, np.ascontiguousarray(g[..., :hid]),
                                                np.ascontiguousarray(g[..., hid:]))
        return dxs, dw, db

    return _make(out, (xs, weight, bias), backward, "lstm_sequence")


# -- numerical checks ---------------------------------------------------------

def gradient_check(function: Callable[..., Tensor], point, step: float = 1e-6) -> float:
    """Max relative error between reverse-mode and central-difference gradients.

    ``function`` maps one or more tensors to a scalar tensor; ``point`` is an
    array or a sequence of arrays at which to compare.
    """
    arrays = [np.array(point, dtype=np.float64)] if not isinstance(point, (list, tuple)) \
        else [np.array(p, dtype=np.float64) for p in point]
    leaves = [Tensor(a, requires_grad=True) for a in arrays]
    out = function(*leaves)
    out.backward()
    worst = 0.0
    for leaf, base in zip(leaves, arrays):
        ad = leaf.grad if leaf.grad is not None else np.zeros_like(base)
        flat = base.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            f_plus = function(*[Tensor(a) for a in arrays]).item()
            flat[i] = orig - step
            f_minus = function(*[Tensor(a) for a in arrays]).item()
            flat[i] = orig
            fd = (f_plus - f_minus) / (2.0 * step)
            err = abs(ad.reshape(-1)[i] - fd) / (abs(fd) + 1e-8)
            worst = max(worst, err)
    return worst
