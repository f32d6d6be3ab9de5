"""Dense tensors with tape-based reverse-mode differentiation.

Every operation in this module returns a new :class:`Tensor`. When any input
requires a gradient (and recording is enabled), the result keeps a reference
to its inputs and a closure computing the local vector-Jacobian product.
:meth:`Tensor.backward` orders that graph topologically and visits each node
once.

Binary elementwise operations require identical shapes. The only implicit
broadcast is between a tensor and a scalar.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .exceptions import ContractError, DimensionError, DomainError, NumericError

__all__ = [
    "Tensor",
    "apply_op",
    "no_grad",
    "is_grad_enabled",
    "as_tensor",
    "add",
    "sub",
    "mul",
    "scale",
    "neg",
    "tanh",
    "sigmoid",
    "log",
    "clip",
    "matmul",
    "linear",
    "concat",
    "stack",
    "select",
    "pick",
    "sum",
    "mean",
    "softmax",
    "backward",
    "finite_diff_check",
    "GradCheckReport",
]

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _GRAD_ENABLED
    previous = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


def is_grad_enabled() -> bool:
    return _GRAD_ENABLED


def _as_float_array(data) -> np.ndarray:
    arr = np.asarray(data)
    if arr.dtype == np.float32 or arr.dtype == np.float64:
        return arr
    return arr.astype(np.float64)


class Tensor:
    """An n-dimensional float array that can take part in differentiation.

    ``data`` is a numpy array (float64 by default, float32 when built from
    float32 input). ``grad`` is ``None`` until a backward pass reaches the
    tensor, after which it has the same shape as ``data``.
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = _as_float_array(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None
        self._op: str | None = None

    @property
    def shape(self) -> tuple[int, ...]:
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

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> Tensor:
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __len__(self) -> int:
        return len(self.data)

    def __add__(self, other):
        return add(self, other) if isinstance(other, Tensor) else _shift(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other) if isinstance(other, Tensor) else _shift(self, -other)

    def __rsub__(self, other):
        return _shift(neg(self), other)

    def __mul__(self, other):
        return mul(self, other) if isinstance(other, Tensor) else scale(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def apply_op(
    value: np.ndarray,
    parents: Sequence[Tensor],
    backward_fn: Callable[[np.ndarray], Sequence[np.ndarray | None]],
    op: str,
) -> Tensor:
    """Wrap ``value`` as the output of a primitive.

    ``backward_fn`` maps the output gradient to one gradient (or ``None``)
    per parent. Fused primitives elsewhere in the package are built on this.
    """
    if not np.all(np.isfinite(value)):
        raise NumericError(f"{op} produced non-finite values")
    out = Tensor(value)
    if _GRAD_ENABLED:
        for p in parents:
            if p.requires_grad:
                out.requires_grad = True
                out._parents = tuple(parents)
                out._backward = backward_fn
                out._op = op
                break
    return out


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} differ")


# --------------------------------------------------------------------------
# elementwise


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")
    return apply_op(a.data + b.data, (a, b), lambda g: (g, g), "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")
    return apply_op(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim == 0 and b.ndim != 0:
        a, b = b, a
    if b.ndim == 0 and a.ndim != 0:
        return apply_op(
            a.data * b.data,
            (a, b),
            lambda g: (g * b.data, np.sum(g * a.data)),
            "mul",
        )
    _same_shape(a, b, "mul")
    return apply_op(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data), "mul")


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return apply_op(a.data * c, (a,), lambda g: (g * c,), "scale")


def _shift(a: Tensor, c: float) -> Tensor:
    return apply_op(a.data + float(c), (a,), lambda g: (g,), "shift")


def neg(a: Tensor) -> Tensor:
    return apply_op(-a.data, (a,), lambda g: (-g,), "neg")


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    return apply_op(y, (a,), lambda g: (g * (1.0 - y * y),), "tanh")


def _sigmoid_array(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a: Tensor) -> Tensor:
    y = _sigmoid_array(a.data)
    return apply_op(y, (a,), lambda g: (g * y * (1.0 - y),), "sigmoid")


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0):
        raise DomainError("log of non-positive element")
    x = a.data
    return apply_op(np.log(x), (a,), lambda g: (g / x,), "log")


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp to ``[lo, hi]``; the gradient is zero where clamping is active."""
    inside = (a.data >= lo) & (a.data <= hi)
    return apply_op(np.clip(a.data, lo, hi), (a,), lambda g: (g * inside,), "clip")


# --------------------------------------------------------------------------
# linear algebra and structure


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: shapes {a.shape} and {b.shape} are not aligned")

    def grad_fn(g):
        return (
            g @ b.data.T if a.requires_grad else None,
            a.data.T @ g if b.requires_grad else None,
        )

    return apply_op(a.data @ b.data, (a, b), grad_fn, "matmul")


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Affine map ``x @ weight.T + bias`` over the last axis of ``x``.

    ``x`` is ``(in,)`` or ``(batch, in)``, ``weight`` is ``(out, in)`` and
    ``bias`` is ``(out,)``. The bias is added to every row.
    """
    if weight.ndim != 2 or x.ndim not in (1, 2) or x.shape[-1] != weight.shape[1]:
        raise DimensionError(f"linear: input {x.shape} does not match weight {weight.shape}")
    if bias is not None and bias.shape != (weight.shape[0],):
        raise DimensionError(f"linear: bias {bias.shape} does not match weight {weight.shape}")
    y = x.data @ weight.data.T
    if bias is not None:
        y = y + bias.data
    parents = (x, weight) if bias is None else (x, weight, bias)

    def grad_fn(g):
        gx = g @ weight.data if x.requires_grad else None
        if weight.requires_grad:
            gw = np.outer(g, x.data) if x.ndim == 1 else g.T @ x.data
        else:
            gw = None
        if bias is None:
            return gx, gw
        gb = (g if g.ndim == 1 else g.sum(axis=0)) if bias.requires_grad else None
        return gx, gw, gb

    return apply_op(y, parents, grad_fn, "linear")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ContractError("concat needs at least one tensor")
    ref = tensors[0]
    ax = axis % ref.ndim if ref.ndim else 0
    for t in tensors[1:]:
        if t.ndim != ref.ndim or any(
            t.shape[i] != ref.shape[i] for i in range(ref.ndim) if i != ax
        ):
            raise DimensionError(
                f"concat along axis {axis}: shapes {ref.shape} and {t.shape} are incompatible"
            )
    bounds = np.cumsum([0] + [t.shape[ax] for t in tensors])

    def grad_fn(g):
        return tuple(
            np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=ax) for i in range(len(tensors))
        )

    return apply_op(np.concatenate([t.data for t in tensors], axis=ax), tensors, grad_fn, "concat")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ContractError("stack needs at least one tensor")
    for t in tensors[1:]:
        _same_shape(tensors[0], t, "stack")

    def grad_fn(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return apply_op(np.stack([t.data for t in tensors], axis=axis), tensors, grad_fn, "stack")


def select(t: Tensor, index: int, axis: int = 0) -> Tensor:
    """Take one slice along ``axis`` (the axis is dropped)."""
    if not -t.shape[axis] <= index < t.shape[axis]:
        raise DimensionError(f"select: index {index} out of range for axis of size {t.shape[axis]}")

    def grad_fn(g):
        full = np.zeros_like(t.data)
        idx = [slice(None)] * t.ndim
        idx[axis] = index
        full[tuple(idx)] = g
        return (full,)

    return apply_op(np.take(t.data, index, axis=axis), (t,), grad_fn, "select")


def pick(t: Tensor, indices) -> Tensor:
    """Row-wise gather: ``out[i] = t[i, indices[i]]`` for a 2-D ``t``."""
    idx = np.asarray(indices, dtype=np.int64)
    if t.ndim != 2 or idx.shape != (t.shape[0],):
        raise DimensionError(f"pick: tensor {t.shape} with index vector {idx.shape}")
    rows = np.arange(t.shape[0])

    def grad_fn(g):
        full = np.zeros_like(t.data)
        full[rows, idx] = g
        return (full,)

    return apply_op(t.data[rows, idx], (t,), grad_fn, "pick")


def _check_axis(t: Tensor, axis: int | None, op: str) -> None:
    if axis is not None and not -t.ndim <= axis < t.ndim:
        raise DimensionError(f"{op}: axis {axis} invalid for rank {t.ndim}")


def sum(t: Tensor, axis: int | None = None) -> Tensor:  # noqa: A001
    _check_axis(t, axis, "sum")

    def grad_fn(g):
        if axis is None:
            return (np.broadcast_to(g, t.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), t.shape).copy(),)

    return apply_op(np.sum(t.data, axis=axis), (t,), grad_fn, "sum")


def mean(t: Tensor, axis: int | None = None) -> Tensor:
    _check_axis(t, axis, "mean")
    n = t.size if axis is None else t.shape[axis]
    return scale(sum(t, axis), 1.0 / n)


def softmax(t: Tensor) -> Tensor:
    """Softmax over the last axis, stabilised by subtracting the row max."""
    if t.ndim == 0 or t.shape[-1] < 1:
        raise DimensionError(f"softmax: need a non-empty last axis, got {t.shape}")
    shifted = t.data - np.max(t.data, axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / np.sum(e, axis=-1, keepdims=True)

    def grad_fn(g):
        return (y * (g - np.sum(g * y, axis=-1, keepdims=True)),)

    return apply_op(y, (t,), grad_fn, "softmax")


# --------------------------------------------------------------------------
# backward pass


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    visited: set[int] = set()
    stack_: list[tuple[Tensor, bool]] = [(root, False)]
    while stack_:
        node, expanded = stack_.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack_.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in visited:
                stack_.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every leaf requiring it."""
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_topological_order(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg


# --------------------------------------------------------------------------
# finite differences


@dataclass
class GradCheckReport:
    """Per-parameter relative error between analytic and numeric gradients."""

    errors: dict[str, float]
    tolerance: float
    failures: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)


def _relative_error(analytic: np.ndarray, numeric: np.ndarray, atol: float = 1e-10) -> float:
    scale_ = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    diff = np.linalg.norm(analytic - numeric)
    if scale_ < atol:
        return float(diff)
    return float(diff / scale_)


def finite_diff_check(
    f: Callable[[], Tensor],
    params: dict[str, Tensor] | Iterable[Tensor],
    epsilon: float = 1e-6,
    tolerance: float = 1e-5,
) -> GradCheckReport:
    """Compare backprop gradients of ``f()`` with central differences.

    ``f`` must rebuild its graph from the current parameter values on every
    call and return a scalar. Per parameter the error is
    ``|g_analytic - g_numeric| / max(|g_analytic|, |g_numeric|)`` in the
    Euclidean norm, where ``g_numeric = (f(p+eps) - f(p-eps)) / (2 eps)``.
    """
    if not 0.0 < epsilon <= 1e-2:
        raise ContractError(f"epsilon must lie in (0, 1e-2], got {epsilon}")
    if not isinstance(params, dict):
        params = {f"param{i}": p for i, p in enumerate(params)}
    saved_flags = {name: p.requires_grad for name, p in params.items()}
    for p in params.values():
        p.data = np.ascontiguousarray(p.data)
        p.requires_grad = True
        p.grad = None
    try:
        loss = f()
        backward(loss)
        analytic = {
            name: (np.zeros_like(p.data) if p.grad is None else p.grad.copy())
            for name, p in params.items()
        }
        errors: dict[str, float] = {}
        with no_grad():
            for name, p in params.items():
                numeric = np.zeros_like(p.data)
                flat = p.data.reshape(-1)
                out = numeric.reshape(-1)
                for i in range(flat.size):
                    orig = flat[i]
                    flat[i] = orig + epsilon
                    up = float(f().data)
                    flat[i] = orig - epsilon
                    down = float(f().data)
                    flat[i] = orig
                    out[i] = (up - down) / (2.0 * epsilon)
                errors[name] = _relative_error(analytic[name], numeric)
    finally:
        for name, p in params.items():
            p.requires_grad = saved_flags[name]
            p.grad = None
    failures = [name for name, err in errors.items() if not err < tolerance]
    return GradCheckReport(errors=errors, tolerance=tolerance, failures=failures)
