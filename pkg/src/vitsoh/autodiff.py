"""Minimal dense-tensor engine with reverse-mode differentiation.

numpy-backed float64 values with per-op backward closures. Implements
exactly what a small patch-transformer regressor needs: batched matrix
products, row softmax, layer/batch normalization, ReLU/GELU, inverted
dropout, concatenation and the usual elementwise arithmetic and
reductions. Graphs are built per forward pass through parent links and
freed together with the tensors.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError

__all__ = [
    "Tensor",
    "ShapeError",
    "NonFiniteError",
    "set_nan_checks",
    "matmul",
    "concat",
    "softmax_rows",
    "layer_norm",
    "batch_norm",
    "relu",
    "gelu",
    "activation",
    "dropout",
    "backward",
]

# tanh-approximation constants for GELU
GELU_SQRT_2_OVER_PI = 0.7978845608
GELU_CUBIC = 0.044715


class ShapeError(ValueError):
    """Operand shapes violate an operation's contract."""


class NonFiniteError(ArithmeticError):
    """A NaN/Inf appeared while finite-value checking is enabled."""


_nan_checks = False


def set_nan_checks(enabled: bool) -> bool:
    """Toggle the post-op finite check; returns the previous setting.

    When enabled, every operation (including tensor creation) verifies its
    result is finite and raises NonFiniteError otherwise, so NaN/Inf can
    never propagate silently.
    """
    global _nan_checks
    previous = _nan_checks
    _nan_checks = bool(enabled)
    return previous


def _check_finite(data: np.ndarray, op: str) -> None:
    if _nan_checks and not np.all(np.isfinite(data)):
        raise NonFiniteError(f"non-finite values produced by {op}")


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """A dense float64 array plus the graph links needed for backward."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        _check_finite(self.data, "tensor creation")
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    def item(self) -> float:
        return float(self.data.reshape(()))

    def accumulate_grad(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = grad.copy()
        else:
            self.grad = self.grad + grad

    # ------------------------------------------------------------------
    # graph
    # ------------------------------------------------------------------
    def backward(self) -> None:
        """Reverse-mode sweep from a scalar loss; fills `.grad` on leaves."""
        if self.data.size != 1:
            raise ShapeError("backward requires a scalar loss node")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        self.accumulate_grad(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # ------------------------------------------------------------------
    # arithmetic
    # ------------------------------------------------------------------
    def _coerce(self, other) -> "Tensor":
        return other if isinstance(other, Tensor) else Tensor(other)

    def __add__(self, other) -> "Tensor":
        other = self._coerce(other)
        out = _node(self.data + other.data, (self, other), "add")
        if out._parents:
            def _bw(g, a=self, b=other):
                if a.requires_grad:
                    a.accumulate_grad(_unbroadcast(g, a.data.shape))
                if b.requires_grad:
                    b.accumulate_grad(_unbroadcast(g, b.data.shape))
            out._backward = _bw
        return out

    __radd__ = __add__

    def __sub__(self, other) -> "Tensor":
        other = self._coerce(other)
        out = _node(self.data - other.data, (self, other), "sub")
        if out._parents:
            def _bw(g, a=self, b=other):
                if a.requires_grad:
                    a.accumulate_grad(_unbroadcast(g, a.data.shape))
                if b.requires_grad:
                    b.accumulate_grad(_unbroadcast(-g, b.data.shape))
            out._backward = _bw
        return out

    def __rsub__(self, other) -> "Tensor":
        return self._coerce(other).__sub__(self)

    def __mul__(self, other) -> "Tensor":
        other = self._coerce(other)
        out = _node(self.data * other.data, (self, other), "mul")
        if out._parents:
            def _bw(g, a=self, b=other):
                if a.requires_grad:
                    a.accumulate_grad(_unbroadcast(g * b.data, a.data.shape))
                if b.requires_grad:
                    b.accumulate_grad(_unbroadcast(g * a.data, b.data.shape))
            out._backward = _bw
        return out

    __rmul__ = __mul__

    def __neg__(self) -> "Tensor":
        out = _node(-self.data, (self,), "neg")
        if out._parents:
            def _bw(g, a=self):
                a.accumulate_grad(-g)
            out._backward = _bw
        return out

    def __matmul__(self, other) -> "Tensor":
        return matmul(self, other)

    # ------------------------------------------------------------------
    # shape ops
    # ------------------------------------------------------------------
    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out = _node(self.data.reshape(shape), (self,), "reshape")
        if out._parents:
            def _bw(g, a=self):
                a.accumulate_grad(g.reshape(a.data.shape))
            out._backward = _bw
        return out

    def transpose_last2(self) -> "Tensor":
        """Swap the last two axes (matrix transpose for stacked matrices)."""
        if self.ndim < 2:
            raise ShapeError("transpose_last2 needs at least 2 dimensions")
        out = _node(np.swapaxes(self.data, -1, -2), (self,), "transpose")
        if out._parents:
            def _bw(g, a=self):
                a.accumulate_grad(np.swapaxes(g, -1, -2))
            out._backward = _bw
        return out

    # ------------------------------------------------------------------
    # reductions
    # ------------------------------------------------------------------
    def sum(self, axis: int | None = None) -> "Tensor":
        out = _node(self.data.sum(axis=axis), (self,), "sum")
        if out._parents:
            def _bw(g, a=self, ax=axis):
                if ax is None:
                    a.accumulate_grad(np.broadcast_to(g, a.data.shape).copy())
                else:
                    a.accumulate_grad(np.broadcast_to(
                        np.expand_dims(g, ax), a.data.shape).copy())
            out._backward = _bw
        return out

    def mean(self, axis: int | None = None) -> "Tensor":
        count = self.data.size if axis is None else self.data.shape[axis]
        out = _node(self.data.mean(axis=axis), (self,), "mean")
        if out._parents:
            def _bw(g, a=self, ax=axis, n=count):
                if ax is None:
                    a.accumulate_grad(np.broadcast_to(g / n, a.data.shape).copy())
                else:
                    a.accumulate_grad(np.broadcast_to(
                        np.expand_dims(g, ax) / n, a.data.shape).copy())
            out._backward = _bw
        return out


def _node(data: np.ndarray, inputs: tuple[Tensor, ...], op: str) -> Tensor:
    """Build an op output, keeping parent links only where grads can flow."""
    _check_finite(data, op)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out._backward = None
    parents = tuple(p for p in inputs if p.requires_grad)
    out._parents = parents
    out.requires_grad = bool(parents)
    return out


# ----------------------------------------------------------------------
# linear algebra
# ----------------------------------------------------------------------
def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product with optional stacked leading dimensions.

    C[i][j] = sum_p A[i][p] * B[p][j] on the trailing two axes; leading
    axes broadcast as in numpy.
    """
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul operands must have at least 2 dimensions")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(
            f"matmul inner extents differ: {a.shape} @ {b.shape}")
    out = _node(np.matmul(a.data, b.data), (a, b), "matmul")
    if out._parents:
        def _bw(g, a=a, b=b):
            if a.requires_grad:
                ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
                a.accumulate_grad(_unbroadcast(ga, a.data.shape))
            if b.requires_grad:
                gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
                b.accumulate_grad(_unbroadcast(gb, b.data.shape))
        out._backward = _bw
    return out


def concat(tensors: list[Tensor] | tuple[Tensor, ...], axis: int = -1) -> Tensor:
    """Concatenate tensors along `axis`; gradients split back."""
    if not tensors:
        raise ShapeError("concat needs at least one tensor")
    out = _node(np.concatenate([t.data for t in tensors], axis=axis),
                tuple(tensors), "concat")
    if out._parents:
        sizes = [t.data.shape[axis] for t in tensors]
        bounds = np.cumsum(sizes)[:-1]

        def _bw(g, ts=tuple(tensors), ax=axis, cuts=bounds):
            pieces = np.split(g, cuts, axis=ax)
            for t, piece in zip(ts, pieces):
                if t.requires_grad:
                    t.accumulate_grad(piece)
        out._backward = _bw
    return out


# ----------------------------------------------------------------------
# normalization and nonlinearities
# ----------------------------------------------------------------------
def softmax_rows(x: Tensor) -> Tensor:
    """Row-wise softmax over the last axis, max-subtracted for stability."""
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=-1, keepdims=True)
    out = _node(s, (x,), "softmax_rows")
    if out._parents:
        def _bw(g, x=x, s=s):
            inner = (g * s).sum(axis=-1, keepdims=True)
            x.accumulate_grad(s * (g - inner))
        out._backward = _bw
    return out


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Standardize each row over the last axis, then scale and shift."""
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError("layer_norm gamma/beta must match the last axis")
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = _node(xhat * gamma.data + beta.data, (x, gamma, beta), "layer_norm")
    if out._parents:
        def _bw(g, x=x, gamma=gamma, beta=beta, xhat=xhat, inv=inv, d=d):
            if gamma.requires_grad:
                gamma.accumulate_grad(
                    (g * xhat).reshape(-1, d).sum(axis=0))
            if beta.requires_grad:
                beta.accumulate_grad(g.reshape(-1, d).sum(axis=0))
            if x.requires_grad:
                gh = g * gamma.data
                m1 = gh.mean(axis=-1, keepdims=True)
                m2 = (gh * xhat).mean(axis=-1, keepdims=True)
                x.accumulate_grad(inv * (gh - m1 - xhat * m2))
        out._backward = _bw
    return out


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor,
               running_mean: Tensor, running_var: Tensor,
               training: bool, momentum: float = 0.1,
               eps: float = 1e-5) -> Tensor:
    """Normalize features over the batch axis of a 2-D (batch, d) tensor.

    Training mode uses batch statistics (population variance) and updates
    the running statistics in place; eval mode uses the running
    statistics. Running-stat tensors never receive gradients.
    """
    if x.ndim != 2:
        raise ShapeError("batch_norm expects a 2-D (batch, features) tensor")
    if training:
        if x.shape[0] < 2:
            raise ShapeError("batch_norm in train mode needs batch size >= 2")
        mu = x.data.mean(axis=0)
        var = x.data.var(axis=0)
        running_mean.data = (1.0 - momentum) * running_mean.data + momentum * mu
        running_var.data = (1.0 - momentum) * running_var.data + momentum * var
    else:
        mu = running_mean.data
        var = running_var.data
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = _node(xhat * gamma.data + beta.data, (x, gamma, beta), "batch_norm")
    if out._parents:
        def _bw(g, x=x, gamma=gamma, beta=beta, xhat=xhat, inv=inv,
                train=training):
            if gamma.requires_grad:
                gamma.accumulate_grad((g * xhat).sum(axis=0))
            if beta.requires_grad:
                beta.accumulate_grad(g.sum(axis=0))
            if x.requires_grad:
                gh = g * gamma.data
                if train:
                    m1 = gh.mean(axis=0)
                    m2 = (gh * xhat).mean(axis=0)
                    x.accumulate_grad(inv * (gh - m1 - xhat * m2))
                else:
                    x.accumulate_grad(gh * inv)
        out._backward = _bw
    return out


def relu(x: Tensor) -> Tensor:
    out = _node(np.maximum(x.data, 0.0), (x,), "relu")
    if out._parents:
        def _bw(g, x=x):
            x.accumulate_grad(g * (x.data > 0.0))
        out._backward = _bw
    return out


def gelu(x: Tensor) -> Tensor:
    """GELU via the tanh approximation."""
    u = GELU_SQRT_2_OVER_PI * (x.data + GELU_CUBIC * x.data ** 3)
    t = np.tanh(u)
    out = _node(0.5 * x.data * (1.0 + t), (x,), "gelu")
    if out._parents:
        def _bw(g, x=x, t=t):
            du = GELU_SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_CUBIC * x.data ** 2)
            local = 0.5 * (1.0 + t) + 0.5 * x.data * (1.0 - t ** 2) * du
            x.accumulate_grad(g * local)
        out._backward = _bw
    return out


def activation(kind: str, x: Tensor) -> Tensor:
    """Dispatch to relu/gelu by name."""
    if kind == "relu":
        return relu(x)
    if kind == "gelu":
        return gelu(x)
    raise ConfigError(f"unknown activation kind: {kind!r}")


def dropout(x: Tensor, rate: float, rng: np.random.Generator | None = None,
            training: bool = False) -> Tensor:
    """Inverted dropout: zero with probability `rate`, scale survivors.

    Eval mode and rate 0 return the input tensor unchanged (exact
    identity). Train mode requires an explicit generator so masks are
    deterministic per seed.
    """
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ConfigError("dropout in train mode requires an rng")
    keep = (rng.random(x.data.shape) >= rate)
    scale = 1.0 / (1.0 - rate)
    out = _node(x.data * keep * scale, (x,), "dropout")
    if out._parents:
        def _bw(g, x=x, keep=keep, scale=scale):
            x.accumulate_grad(g * keep * scale)
        out._backward = _bw
    return out


def backward(loss: Tensor) -> None:
    """Run the reverse sweep from a scalar loss node."""
    loss.backward()
