"""Dense float64 tensors with tape-based reverse-mode differentiation.

The graph is rebuilt on every forward pass.  ``Tensor.backward`` may be
called once per graph; gradients accumulate into ``.grad`` of every tensor
on a differentiable path, so parameter gradients must be reset between
optimizer steps (see :func:`crossdistill.optim.zero_grad`).
"""

from __future__ import annotations

import numpy as np

Array = np.ndarray


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    """Sum ``grad`` over the axes numpy broadcasting introduced."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    """A dense float64 array with an optional gradient slot.

    ``requires_grad`` marks trainable leaves; any tensor computed from one
    is placed on the tape automatically.  Constants (inputs, detached
    values) carry no graph and cost nothing at backward time.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_ran")

    def __init__(self, data, requires_grad: bool = False):
        self.data: Array = np.asarray(data, dtype=np.float64)
        self.grad: Array | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None
        self._ran = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        """A view of the same values with no graph attached."""
        return Tensor(self.data)

    def _accumulate(self, g: Array) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self) -> None:
        """Populate ``.grad`` for every tensor this scalar depends on."""
        if self.data.size != 1:
            raise ValueError(f"backward requires a scalar loss, got shape {self.data.shape}")
        if self._ran:
            raise RuntimeError(
                "backward already ran for this graph; rebuild the forward pass "
                "(and reset gradients) before differentiating again"
            )
        if not self.requires_grad:
            raise RuntimeError("loss does not depend on any tensor with requires_grad=True")
        self._ran = True
        order = _toposort(self)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- operator sugar ----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, mul(_wrap(other), -1.0))

    def __rsub__(self, other):
        return add(_wrap(other), mul(self, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_wrap(other), self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self) -> "Tensor":
        return transpose(self)


def _wrap(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _toposort(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, emitted = stack.pop()
        if emitted:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def _node(data: Array, parents: tuple[Tensor, ...], backward) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


# -- primitive operations ----------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out_data = a.data + b.data

    def backward(g: Array) -> None:
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.data.shape))

    return _node(out_data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out_data = a.data * b.data

    def backward(g: Array) -> None:
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.data.shape))

    return _node(out_data, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out_data = a.data / b.data

    def backward(g: Array) -> None:
        if a.requires_grad:
            a._accumulate(_unbroadcast(g / b.data, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return _node(out_data, (a, b), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError(f"matmul expects 2-d operands, got {a.data.shape} @ {b.data.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.data.shape} @ {b.data.shape}")
    out_data = a.data @ b.data

    def backward(g: Array) -> None:
        if a.requires_grad:
            a._accumulate(g @ b.data.T)
        if b.requires_grad:
            b._accumulate(a.data.T @ g)

    return _node(out_data, (a, b), backward)


def transpose(a: Tensor) -> Tensor:
    out_data = a.data.T

    def backward(g: Array) -> None:
        if a.requires_grad:
            a._accumulate(g.T)

    return _node(out_data, (a,), backward)


def relu(a: Tensor) -> Tensor:
    # subgradient at 0 is 0
    mask = a.data > 0
    out_data = np.where(mask, a.data, 0.0)

    def backward(g: Array) -> None:
        if a.requires_grad:
            a._accumulate(g * mask)

    return _node(out_data, (a,), backward)


def tanh(a: Tensor) -> Tensor:
    out_data = np.tanh(a.data)

    def backward(g: Array) -> None:
        if a.requires_grad:
            a._accumulate(g * (1.0 - out_data * out_data))

    return _node(out_data, (a,), backward)


def exp(a: Tensor) -> Tensor:
    out_data = np.exp(a.data)

    def backward(g: Array) -> None:
        if a.requires_grad:
            a._accumulate(g * out_data)

    return _node(out_data, (a,), backward)


def log(a: Tensor) -> Tensor:
    out_data = np.log(a.data)

    def backward(g: Array) -> None:
        if a.requires_grad:
            a._accumulate(g / a.data)

    return _node(out_data, (a,), backward)


def sqrt(a: Tensor) -> Tensor:
    # subgradient at 0 is 0, mirroring the relu convention
    out_data = np.sqrt(a.data)

    def backward(g: Array) -> None:
        if a.requires_grad:
            safe = np.where(out_data > 0, out_data, 1.0)
            a._accumulate(g * np.where(out_data > 0, 0.5 / safe, 0.0))

    return _node(out_data, (a,), backward)


def tsum(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g: Array) -> None:
        if not a.requires_grad:
            return
        gg = g
        if axis is not None and not keepdims:
            gg = np.expand_dims(gg, axis)
        a._accumulate(np.broadcast_to(gg, a.data.shape))

    return _node(out_data, (a,), backward)


def tmean(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    n = a.data.size if axis is None else a.data.shape[axis]
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / n)


# -- composites --------------------------------------------------------------


def log_softmax(a: Tensor, axis: int) -> Tensor:
    """Numerically stable log-softmax along ``axis``.

    The max shift is a constant, so gradients are exact.
    """
    shift = Tensor(a.data.max(axis=axis, keepdims=True))
    centered = add(a, mul(shift, -1.0))
    lse = log(tsum(exp(centered), axis=axis, keepdims=True))
    return add(centered, mul(lse, -1.0))


def softmax(a: Tensor, axis: int) -> Tensor:
    return exp(log_softmax(a, axis))


def normalize_rows(a: Tensor, eps: float = 1e-12) -> Tensor:
    """Scale each row to unit L2 norm; ``eps`` keeps zero rows at zero."""
    sq = mul(a, a)
    norm = sqrt(tsum(sq, axis=1, keepdims=True))
    return div(a, add(norm, eps))


def assert_finite(a: Tensor, what: str = "tensor") -> None:
    if not np.all(np.isfinite(a.data)):
        raise FloatingPointError(f"{what} contains non-finite values")
    if a.grad is not None and not np.all(np.isfinite(a.grad)):
        raise FloatingPointError(f"{what} gradient contains non-finite values")
