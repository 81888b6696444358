"""Reverse-mode automatic differentiation on 64-bit numpy arrays.

A Tensor wraps a float64 ndarray; differentiable operations executed while
a Tape is active are recorded on it, and backward() replays the records in
exact reverse order, accumulating gradients into every tensor that
requires them. One tape serves exactly one backward pass.

Gradient arrays are never mutated in place, so backward closures may
return views or shared arrays safely. Reductions use a fixed order, which
makes every op bit-deterministic for identical inputs.
"""

from __future__ import annotations

import numpy as np

from . import _kernels


class ShapeError(ValueError):
    """Operand shapes violate an operation's contract."""


class TapeError(RuntimeError):
    """Tape misuse: reuse after backward, or nested activation."""


_ACTIVE_TAPE = None


class Tensor:
    """Shape-annotated float64 array, optionally tracked for gradients."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on non-scalar tensor of shape {self.data.shape}")
        return float(self.data.reshape(()))

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


class _Node:
    __slots__ = ("inputs", "output", "bwd")

    def __init__(self, inputs, output, bwd):
        self.inputs = inputs
        self.output = output
        self.bwd = bwd


class Tape:
    """Ordered record of differentiable ops; consumed by one backward pass."""

    def __init__(self):
        self._nodes = []
        self._consumed = False

    def __enter__(self):
        global _ACTIVE_TAPE
        if _ACTIVE_TAPE is not None:
            raise TapeError("a tape is already active; tapes do not nest")
        if self._consumed:
            raise TapeError("tape already consumed by a backward pass")
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, exc_type, exc, tb):
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = None
        return False

    def _record(self, node):
        self._nodes.append(node)

    def __len__(self):
        return len(self._nodes)


def _make(data, inputs, bwd):
    out = Tensor(data, requires_grad=any(t.requires_grad for t in inputs))
    if out.requires_grad and _ACTIVE_TAPE is not None:
        _ACTIVE_TAPE._record(_Node(tuple(inputs), out, bwd))
    return out


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# ---------------------------------------------------------------------------
# primitive ops

def add(a, b) -> Tensor:
    """Elementwise sum; also supports adding a length-d row vector to a
    (n, d) matrix (bias broadcast over rows)."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape == b.shape:
        return _make(a.data + b.data, (a, b), lambda gy: (gy, gy))
    if a.data.ndim == 2 and b.data.ndim == 1 and a.shape[1] == b.shape[0]:
        return _make(a.data + b.data, (a, b), lambda gy: (gy, gy.sum(axis=0)))
    raise ShapeError(f"add: incompatible shapes {a.shape} and {b.shape}")


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"sub: incompatible shapes {a.shape} and {b.shape}")
    return _make(a.data - b.data, (a, b), lambda gy: (gy, -gy))


def mul(a, b) -> Tensor:
    """Elementwise (Hadamard) product of same-shape tensors."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"mul: incompatible shapes {a.shape} and {b.shape}")
    return _make(a.data * b.data, (a, b), lambda gy: (gy * b.data, gy * a.data))


def scale(a, c: float) -> Tensor:
    a = _as_tensor(a)
    c = float(c)
    return _make(a.data * c, (a,), lambda gy: (gy * c,))


def matmul(a, b) -> Tensor:
    """2-D matrix product; gradient flows to both operands."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul: expected 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions disagree: {a.shape} x {b.shape}")
    return _make(
        a.data @ b.data,
        (a, b),
        lambda gy: (gy @ b.data.T, a.data.T @ gy),
    )


def transpose(a) -> Tensor:
    a = _as_tensor(a)
    if a.data.ndim != 2:
        raise ShapeError(f"transpose: expected 2-D tensor, got {a.shape}")
    return _make(a.data.T.copy(), (a,), lambda gy: (gy.T,))


def concat_cols(tensors) -> Tensor:
    """Concatenate 2-D tensors along columns (axis 1)."""
    tensors = [_as_tensor(t) for t in tensors]
    rows = {t.shape[0] for t in tensors}
    if len(rows) != 1 or any(t.data.ndim != 2 for t in tensors):
        raise ShapeError(f"concat_cols: row counts differ: {[t.shape for t in tensors]}")
    widths = [t.shape[1] for t in tensors]
    offsets = np.cumsum([0] + widths)

    def bwd(gy):
        return tuple(gy[:, offsets[i]:offsets[i + 1]] for i in range(len(widths)))

    return _make(np.concatenate([t.data for t in tensors], axis=1), tensors, bwd)


def sum_all(a) -> Tensor:
    """Sum of all elements, as a scalar tensor."""
    a = _as_tensor(a)
    return _make(a.data.sum(), (a,), lambda gy: (np.full_like(a.data, float(gy)),))


def relu(a) -> Tensor:
    a = _as_tensor(a)
    pos = a.data > 0
    return _make(np.where(pos, a.data, 0.0), (a,), lambda gy: (gy * pos,))


def sigmoid(a) -> Tensor:
    """Logistic function, computed branch-wise so exp never overflows."""
    a = _as_tensor(a)
    x = a.data
    out = np.empty_like(x)
    nonneg = x >= 0
    out[nonneg] = 1.0 / (1.0 + np.exp(-x[nonneg]))
    ex = np.exp(x[~nonneg])
    out[~nonneg] = ex / (1.0 + ex)
    return _make(out, (a,), lambda gy: (gy * out * (1.0 - out),))


def log(a) -> Tensor:
    a = _as_tensor(a)
    return _make(np.log(a.data), (a,), lambda gy: (gy / a.data,))


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp values to [lo, hi]; gradient passes only where unclamped."""
    a = _as_tensor(a)
    inside = (a.data >= lo) & (a.data <= hi)
    return _make(np.clip(a.data, lo, hi), (a,), lambda gy: (gy * inside,))


def softmax(a, axis: int = -1) -> Tensor:
    """Softmax along `axis`, max-subtracted; slices sum to 1."""
    a = _as_tensor(a)
    nd = a.data.ndim
    if not -nd <= axis < nd:
        raise ShapeError(f"softmax: axis {axis} invalid for shape {a.shape}")
    axis = axis % nd

    moved = np.moveaxis(a.data, axis, -1)
    flat = np.ascontiguousarray(moved.reshape(-1, moved.shape[-1]))
    y_flat = _kernels.softmax_rows(flat)
    y = np.moveaxis(y_flat.reshape(moved.shape), -1, axis)

    def bwd(gy):
        gy_flat = np.ascontiguousarray(
            np.moveaxis(gy, axis, -1).reshape(-1, moved.shape[-1])
        )
        gx_flat = _kernels.softmax_rows_grad(y_flat, gy_flat)
        return (np.moveaxis(gx_flat.reshape(moved.shape), -1, axis),)

    return _make(y, (a,), bwd)


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Row-wise normalization of the last dimension, then affine.

    Each row is shifted to zero mean and scaled to unit (population)
    variance before gamma/beta are applied.
    """
    x, gamma, beta = _as_tensor(x), _as_tensor(gamma), _as_tensor(beta)
    if eps <= 0:
        raise ValueError(f"layer_norm: eps must be positive, got {eps}")
    if x.data.ndim < 1:
        raise ShapeError("layer_norm: input must have at least one dimension")
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(
            f"layer_norm: gamma/beta shapes {gamma.shape}/{beta.shape} "
            f"do not match last dimension {d}"
        )
    flat = np.ascontiguousarray(x.data.reshape(-1, d))
    y_flat, xhat, rstd = _kernels.layer_norm_rows(flat, gamma.data, beta.data, eps)

    def bwd(gy):
        gy_flat = np.ascontiguousarray(gy.reshape(-1, d))
        gx, ggamma, gbeta = _kernels.layer_norm_rows_grad(
            xhat, rstd, gamma.data, gy_flat
        )
        return gx.reshape(x.shape), ggamma, gbeta

    return _make(y_flat.reshape(x.shape), (x, gamma, beta), bwd)


# ---------------------------------------------------------------------------
# backward pass and the finite-difference check

def backward(loss: Tensor, tape: Tape) -> None:
    """Populate .grad for every requires_grad tensor reachable from loss.

    Gradients accumulate (shared inputs sum their contributions). The tape
    is consumed: a second backward on it raises TapeError.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")
    if tape._consumed:
        raise TapeError("tape already consumed by a backward pass")
    tape._consumed = True

    loss.grad = np.ones_like(loss.data)
    for node in reversed(tape._nodes):
        gy = node.output.grad
        if gy is None:
            continue
        grads = node.bwd(gy)
        for t, g in zip(node.inputs, grads):
            if g is None or not t.requires_grad:
                continue
            t.grad = g if t.grad is None else t.grad + g


def grad_check(f, x: Tensor, h: float = 1e-5) -> float:
    """Max relative error between reverse-mode and central-difference
    gradients of the scalar function f at x.

    Relative error per element is |g_ad - g_fd| / max(1, |g_ad|, |g_fd|).
    """
    if h <= 0:
        raise ValueError(f"grad_check: h must be positive, got {h}")
    tape = Tape()
    with tape:
        out = f(x)
    if not isinstance(out, Tensor) or out.data.size != 1:
        raise ShapeError("grad_check: f must return a scalar tensor")
    x.grad = None
    backward(out, tape)
    g_ad = np.zeros_like(x.data) if x.grad is None else np.array(x.grad)

    g_fd = np.zeros_like(x.data)
    flat = x.data.reshape(-1)
    fd_flat = g_fd.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x).item()
        flat[i] = orig - h
        fm = f(x).item()
        flat[i] = orig
        fd_flat[i] = (fp - fm) / (2.0 * h)

    denom = np.maximum(1.0, np.maximum(np.abs(g_ad), np.abs(g_fd)))
    return float(np.max(np.abs(g_ad - g_fd) / denom)) if flat.size else 0.0
