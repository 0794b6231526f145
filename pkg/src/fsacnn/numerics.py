"""Dense float64 tensors with reverse-mode automatic differentiation.

Every operation returns a new :class:`Tensor`. When at least one input requires
a gradient, the result records its inputs and a vector-Jacobian product so that
:func:`gradients` can walk the graph backwards from a scalar root.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

VJP = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


class Tensor:
    """An immutable n-d array node of the computation graph."""

    __slots__ = ("data", "requires_grad", "op", "inputs", "_vjp")

    def __init__(self, data, requires_grad: bool = False, *, op: str = "leaf",
                 inputs: tuple["Tensor", ...] = (), vjp: VJP | None = None):
        arr = np.array(data, dtype=np.float64, copy=True)
        arr.flags.writeable = False
        self.data = arr
        self.requires_grad = requires_grad
        self.op = op
        self.inputs = inputs
        self._vjp = vjp

    @classmethod
    def _result(cls, data: np.ndarray, op: str, inputs: tuple["Tensor", ...], vjp: VJP) -> "Tensor":
        out = cls.__new__(cls)
        data = np.asarray(data, dtype=np.float64)
        data.flags.writeable = False
        out.data = data
        if any(t.requires_grad for t in inputs):
            out.requires_grad = True
            out.op = op
            out.inputs = inputs
            out._vjp = vjp
        else:
            out.requires_grad = False
            out.op = "const"
            out.inputs = ()
            out._vjp = None
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def is_leaf(self) -> bool:
        return self._vjp is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    def __add__(self, other): return add(self, other)
    def __radd__(self, other): return add(other, self)
    def __sub__(self, other): return sub(self, other)
    def __rsub__(self, other): return sub(other, self)
    def __mul__(self, other): return mul(self, other)
    def __rmul__(self, other): return mul(other, self)
    def __matmul__(self, other): return matmul(self, other)
    def __neg__(self): return mul(self, -1.0)

    def __pow__(self, k: int):
        return elementwise_pow(self, k)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# --- elementwise -----------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return Tensor._result(a.data + b.data, "add", (a, b),
                          lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return Tensor._result(a.data - b.data, "sub", (a, b),
                          lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return Tensor._result(a.data * b.data, "mul", (a, b),
                          lambda g: (_unbroadcast(g * b.data, a.shape),
                                     _unbroadcast(g * a.data, b.shape)))


def elementwise_pow(x, k: int) -> Tensor:
    """Raise every element to the non-negative integer power ``k`` (0**0 == 1)."""
    x = as_tensor(x)
    k = int(k)
    if k < 0:
        raise ValueError(f"exponent must be non-negative, got {k}")
    if k == 0:
        return Tensor._result(np.ones_like(x.data), "pow", (x,), lambda g: (np.zeros_like(x.data),))
    if k == 1:
        return Tensor._result(x.data.copy(), "pow", (x,), lambda g: (g,))
    lower = _int_power(x.data, k - 1)
    return Tensor._result(lower * x.data, "pow", (x,), lambda g: (g * k * lower,))


def _int_power(a: np.ndarray, k: int) -> np.ndarray:
    out = a.copy()
    for _ in range(k - 1):
        out *= a
    return out


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    return Tensor._result(np.where(mask, x.data, 0.0), "relu", (x,), lambda g: (g * mask,))


# --- shape -----------------------------------------------------------------

def reshape(x, shape: tuple[int, ...]) -> Tensor:
    x = as_tensor(x)
    return Tensor._result(x.data.reshape(shape), "reshape", (x,), lambda g: (g.reshape(x.shape),))


def stack(xs: Sequence[Tensor], axis: int = 0) -> Tensor:
    xs = tuple(as_tensor(x) for x in xs)

    def vjp(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(xs)))

    return Tensor._result(np.stack([x.data for x in xs], axis=axis), "stack", xs, vjp)


def concat(xs: Sequence[Tensor], axis: int = 0) -> Tensor:
    xs = tuple(as_tensor(x) for x in xs)
    bounds = np.cumsum([x.shape[axis] for x in xs])[:-1]
    return Tensor._result(np.concatenate([x.data for x in xs], axis=axis), "concat", xs,
                          lambda g: tuple(np.split(g, bounds, axis=axis)))


def sum_(x, axis: int | None = None) -> Tensor:
    x = as_tensor(x)
    if axis is None:
        return Tensor._result(np.sum(x.data), "sum", (x,), lambda g: (np.broadcast_to(g, x.shape),))

    def vjp(g):
        return (np.broadcast_to(np.expand_dims(g, axis), x.shape),)

    return Tensor._result(np.sum(x.data, axis=axis), "sum", (x,), vjp)


def mean(x) -> Tensor:
    x = as_tensor(x)
    n = x.data.size
    return Tensor._result(np.mean(x.data), "mean", (x,), lambda g: (np.broadcast_to(g / n, x.shape),))


# --- linear algebra --------------------------------------------------------

def matmul(a, b) -> Tensor:
    """Matrix product of 2-d ``a`` with 2-d (or 1-d) ``b``."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim not in (1, 2) or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} x {b.shape}")

    def vjp(g):
        if b.data.ndim == 1:
            return np.outer(g, b.data), a.data.T @ g
        return g @ b.data.T, a.data.T @ g

    return Tensor._result(a.data @ b.data, "matmul", (a, b), vjp)


def output_length(T: int, k: int, stride: int = 1, pad: int = 0) -> int:
    return (T + 2 * pad - k) // stride + 1


def toeplitz_unroll(x, k: int, stride: int = 1, pad: int = 0) -> Tensor:
    """Unroll ``x`` [C x T] into the [(C*k) x T'] matrix of sliding windows.

    Row ``c*k + j`` of column ``t`` holds ``x_padded[c, t*stride + j]`` so that a
    kernel of shape [C_out, C, k] reshaped to [C_out, C*k] multiplies it directly.
    """
    x = as_tensor(x)
    if x.data.ndim != 2:
        raise ValueError(f"expected a [channels x time] map, got shape {x.shape}")
    if stride < 1 or pad < 0 or k < 1:
        raise ValueError(f"invalid kernel geometry k={k} stride={stride} pad={pad}")
    C, T = x.shape
    T_out = output_length(T, k, stride, pad)
    if T_out < 1:
        raise ValueError(f"sequence too short for kernel: T={T}, k={k}, pad={pad}")
    xp = np.pad(x.data, ((0, 0), (pad, pad))) if pad else x.data
    win = sliding_window_view(xp, k, axis=1)[:, ::stride][:, :T_out]  # C x T' x k
    cols = np.ascontiguousarray(win.transpose(0, 2, 1)).reshape(C * k, T_out)

    def vjp(g):
        g = g.reshape(C, k, T_out)
        gp = np.zeros((C, T + 2 * pad))
        span = stride * (T_out - 1) + 1
        for j in range(k):
            gp[:, j:j + span:stride] += g[:, j, :]
        return (gp[:, pad:pad + T] if pad else gp,)

    return Tensor._result(cols, "unroll", (x,), vjp)


def conv1d(x, kernels, stride: int = 1, pad: int = 0) -> Tensor:
    """1-d cross-correlation of ``x`` [C_in x T] with ``kernels`` [C_out x C_in x k]."""
    x, kernels = as_tensor(x), as_tensor(kernels)
    C_out, C_in, k = kernels.shape
    if x.shape[0] != C_in:
        raise ValueError(f"conv1d channel mismatch: input {x.shape}, kernels {kernels.shape}")
    cols = toeplitz_unroll(x, k, stride, pad)
    return matmul(reshape(kernels, (C_out, C_in * k)), cols)


# --- pooling & loss --------------------------------------------------------

def global_max_pool_time(x) -> Tensor:
    """Per-channel maximum over time; the gradient goes to the first maximal column."""
    x = as_tensor(x)
    if x.data.ndim != 2 or x.shape[1] == 0:
        raise ValueError(f"global max pool needs a non-empty [C x T] map, got {x.shape}")
    idx = np.argmax(x.data, axis=1)
    rows = np.arange(x.shape[0])

    def vjp(g):
        gx = np.zeros(x.shape)
        gx[rows, idx] = g
        return (gx,)

    return Tensor._result(x.data[rows, idx], "maxpool", (x,), vjp)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - np.max(logits)
    return shifted - np.log(np.sum(np.exp(shifted)))


def softmax_cross_entropy(logits, label: int) -> Tensor:
    logits = as_tensor(logits)
    C = logits.shape[0]
    if logits.data.ndim != 1:
        raise ValueError(f"expected a logit vector, got shape {logits.shape}")
    if not 0 <= label < C:
        raise ValueError(f"label {label} out of range for {C} classes")
    logp = log_softmax(logits.data)
    p = np.exp(logp)
    onehot = np.zeros(C)
    onehot[label] = 1.0
    return Tensor._result(-logp[label], "xent", (logits,), lambda g: (g * (p - onehot),))


# --- backward --------------------------------------------------------------

def _topological(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack_: list[tuple[Tensor, bool]] = [(root, False)]
    while stack_:
        node, expanded = stack_.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack_.append((node, True))
        for parent in node.inputs:
            if id(parent) not in seen:
                stack_.append((parent, False))
    return order


def gradients(root: Tensor, wrt: Iterable[Tensor]) -> list[np.ndarray]:
    """Gradients of the scalar ``root`` with respect to each tensor in ``wrt``.

    Tensors that the root does not depend on receive zeros of their own shape.
    """
    wrt = list(wrt)
    if root.data.size != 1:
        raise ValueError(f"backward needs a scalar root, got shape {root.shape}")
    grads: dict[int, np.ndarray] = {id(root): np.ones(root.shape)}
    for node in reversed(_topological(root)):
        g = grads.pop(id(node), None) if node._vjp is not None else grads.get(id(node))
        if g is None or node._vjp is None:
            continue
        for parent, pg in zip(node.inputs, node._vjp(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = np.array(pg, dtype=np.float64)
    return [np.array(grads[id(w)]) if id(w) in grads else np.zeros(w.shape) for w in wrt]


def grad_check(builder: Callable[..., Tensor], inputs: Sequence[np.ndarray], eps: float = 1e-5) -> float:
    """Maximum relative error between analytic and central-difference gradients.

    ``builder`` maps one Tensor per entry of ``inputs`` to a scalar loss. The
    relative error uses the denominator ``max(|analytic|, |numeric|, 1e-12)``.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ValueError(f"eps must lie in [1e-7, 1e-3], got {eps}")
    base = [np.array(x, dtype=np.float64) for x in inputs]

    def loss_at(arrays) -> float:
        val = builder(*[Tensor(a) for a in arrays]).item()
        if not np.isfinite(val):
            raise ValueError("non-finite loss in gradient check")
        return val

    params = [Tensor(a, requires_grad=True) for a in base]
    root = builder(*params)
    if not np.isfinite(root.item()):
        raise ValueError("non-finite loss in gradient check")
    analytic = gradients(root, params)

    worst = 0.0
    for i, arr in enumerate(base):
        flat = arr.reshape(-1)
        for e in range(flat.size):
            orig = flat[e]
            flat[e] = orig + eps
            f_plus = loss_at(base)
            flat[e] = orig - eps
            f_minus = loss_at(base)
            flat[e] = orig
            numeric = (f_plus - f_minus) / (2 * eps)
            a = analytic[i].reshape(-1)[e]
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-12)
            worst = max(worst, err)
    return worst
