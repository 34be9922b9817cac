"""Dense float64 arrays with tape-based reverse-mode differentiation.

Every operation validates shapes up front, checks its result for NaN/Inf,
and (when gradients are enabled and at least one input needs them) records
a backward closure on the implicit tape.  Tensors created later always
have larger node ids than their inputs, so sorting reachable tensors by
descending id yields a reverse topological order for backpropagation.

Broadcasting is deliberately restricted to scalar-vs-tensor; anything else
must reshape or tile explicitly.  Graphs are confined to a single thread;
the grad-enabled flag is thread-local so frozen weights can be shared by
concurrent no-grad forward passes.
"""

from __future__ import annotations

import itertools
import threading
from contextlib import contextmanager
from typing import Callable, Sequence

import numpy as np


class DimensionError(ValueError):
    """Operand shapes violate an operation's contract."""


class ContractError(ValueError):
    """An operation precondition (other than shape) was violated."""


class NumericalError(FloatingPointError):
    """A forward operation produced NaN or Inf."""


_ids = itertools.count(1)
_state = threading.local()


def grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextmanager
def no_grad():
    """Disable tape recording in this thread for the duration."""
    prev = grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


def _check_finite(data: np.ndarray, op: str) -> None:
    if not np.isfinite(data).all():
        raise NumericalError(f"{op} produced non-finite values")


class Tensor:
    """A dense float64 array, optionally tracked for reverse-mode autodiff."""

    __slots__ = ("data", "requires_grad", "grad", "_nid", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        _check_finite(arr, "tensor construction")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._nid = next(_ids)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError("item() requires a single-element tensor")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def constant(data) -> Tensor:
    return Tensor(data)


def parameter(data) -> Tensor:
    return Tensor(data, requires_grad=True)


def _make(data: np.ndarray, op: str, parents: tuple[Tensor, ...],
          backward: Callable[[np.ndarray], Sequence[np.ndarray | None]],
          check: bool = True) -> Tensor:
    if check:
        _check_finite(data, op)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out._nid = next(_ids)
    if grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def backward(loss: Tensor) -> None:
    """Populate .grad on every requires_grad tensor reachable from `loss`.

    Gradients from multiple consumers accumulate by summation.
    """
    if loss.data.size != 1:
        raise ContractError("backward requires a scalar loss")
    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [loss]
    while stack:
        t = stack.pop()
        if id(t) in seen:
            continue
        seen.add(id(t))
        order.append(t)
        stack.extend(t._parents)
    order.sort(key=lambda t: t._nid, reverse=True)
    loss.grad = np.ones_like(loss.data)
    for t in order:
        if t._backward is None or t.grad is None:
            continue
        for p, g in zip(t._parents, t._backward(t.grad)):
            if g is None or not p.requires_grad:
                continue
            p.grad = g if p.grad is None else p.grad + g


# ---------------------------------------------------------------------------
# elementwise ops

def _binary_shapes(a: Tensor, b: Tensor, op: str) -> None:
    if a.data.shape != b.data.shape and a.data.size != 1 and b.data.size != 1:
        raise DimensionError(
            f"{op}: shapes {a.data.shape} and {b.data.shape} are neither equal "
            "nor scalar-vs-tensor")


def _reduce_to(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    # collapse a full-shape gradient onto a scalar operand
    if g.shape == shape:
        return g
    return np.sum(g).reshape(shape)


def add(a: Tensor, b: Tensor) -> Tensor:
    _binary_shapes(a, b, "add")
    return _make(a.data + b.data, "add", (a, b),
                 lambda g: (_reduce_to(g, a.data.shape), _reduce_to(g, b.data.shape)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _binary_shapes(a, b, "sub")
    return _make(a.data - b.data, "sub", (a, b),
                 lambda g: (_reduce_to(g, a.data.shape), _reduce_to(-g, b.data.shape)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _binary_shapes(a, b, "mul")
    ad, bd = a.data, b.data
    return _make(ad * bd, "mul", (a, b),
                 lambda g: (_reduce_to(g * bd, ad.shape), _reduce_to(g * ad, bd.shape)))


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _make(a.data * c, "scale", (a,), lambda g: (g * c,))


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """Add a vector to the last axis of x (explicit row-vector broadcast)."""
    if b.data.shape != x.data.shape[-1:]:
        raise DimensionError(
            f"add_bias: bias shape {b.data.shape} does not match last axis of {x.data.shape}")
    n = x.data.shape[-1]
    return _make(x.data + b.data, "add_bias", (x, b),
                 lambda g: (g, g.reshape(-1, n).sum(axis=0)))


def relu(x: Tensor) -> Tensor:
    xd = x.data
    return _make(np.maximum(xd, 0.0), "relu", (x,), lambda g: (g * (xd > 0.0),))


_GELU_S = np.sqrt(2.0 / np.pi)
_GELU_C = 0.044715


def gelu(x: Tensor) -> Tensor:
    """Gaussian error linear unit (tanh approximation).

    Built from explicit multiplies and in-place updates: this sits on the
    training hot path where np.power and extra temporaries are measurable.
    """
    xd = x.data
    x2 = xd * xd
    inner = x2 * (_GELU_C * _GELU_S)
    inner += _GELU_S
    inner *= xd
    th = np.tanh(inner)

    def bwd(g):
        dinner = x2 * (3.0 * _GELU_C * _GELU_S)
        dinner += _GELU_S
        sech2 = th * th
        np.subtract(1.0, sech2, out=sech2)
        out = sech2 * dinner
        out *= xd
        out += 1.0
        out += th
        out *= 0.5
        out *= g
        return (out,)

    y = th + 1.0
    y *= xd
    y *= 0.5
    return _make(y, "gelu", (x,), bwd)


# ---------------------------------------------------------------------------
# shape ops (no new values: finiteness checks skipped)

def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    xshape = x.data.shape
    return _make(x.data.reshape(shape), "reshape", (x,),
                 lambda g: (g.reshape(xshape),), check=False)


def permute(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(int(a) for a in axes)
    if sorted(axes) != list(range(x.data.ndim)):
        raise DimensionError(f"permute: {axes} is not a permutation of {x.data.ndim} axes")
    inv = tuple(np.argsort(axes))
    return _make(np.ascontiguousarray(x.data.transpose(axes)), "permute", (x,),
                 lambda g: (g.transpose(inv),), check=False)


def take_leading(x: Tensor, i: int) -> Tensor:
    """Select index i along axis 0; backward scatters into a zero tensor."""
    if not 0 <= i < x.data.shape[0]:
        raise DimensionError(f"take_leading: index {i} out of range for {x.data.shape}")
    xshape = x.data.shape

    def bwd(g):
        out = np.zeros(xshape)
        out[i] = g
        return (out,)

    return _make(np.ascontiguousarray(x.data[i]), "take_leading", (x,), bwd, check=False)


def concat(parts: Sequence[Tensor], axis: int) -> Tensor:
    if not parts:
        raise ContractError("concat of an empty sequence")
    datas = [p.data for p in parts]
    sizes = [d.shape[axis] for d in datas]
    offs = np.cumsum([0] + sizes)

    def bwd(g):
        sl = [slice(None)] * g.ndim
        grads = []
        for i in range(len(datas)):
            sl[axis] = slice(offs[i], offs[i + 1])
            grads.append(g[tuple(sl)])
        return grads

    return _make(np.concatenate(datas, axis=axis), "concat", tuple(parts), bwd, check=False)


def repeat_leading(x: Tensor, n: int) -> Tensor:
    """Stack n copies of x along a new leading axis; gradients sum back."""
    if n < 1:
        raise ContractError("repeat_leading needs n >= 1")
    data = np.ascontiguousarray(np.broadcast_to(x.data, (n,) + x.data.shape))
    return _make(data, "repeat_leading", (x,), lambda g: (g.sum(axis=0),), check=False)


def tile_axis(x: Tensor, axis: int, n: int) -> Tensor:
    """Tile a size-1 axis to size n; gradients sum over that axis."""
    if x.data.shape[axis] != 1:
        raise DimensionError(f"tile_axis: axis {axis} of {x.data.shape} is not 1")
    reps = [1] * x.data.ndim
    reps[axis] = n
    return _make(np.tile(x.data, reps), "tile_axis", (x,),
                 lambda g: (g.sum(axis=axis, keepdims=True),), check=False)


def mean_axis(x: Tensor, axis: int) -> Tensor:
    if x.data.shape[axis] == 0:
        raise ContractError("mean over an empty axis")
    n = x.data.shape[axis]
    return _make(x.data.mean(axis=axis), "mean_axis", (x,),
                 lambda g: (np.ascontiguousarray(np.broadcast_to(
                     np.expand_dims(g / n, axis), x.data.shape)),))


def sum_all(x: Tensor) -> Tensor:
    xshape = x.data.shape
    return _make(np.sum(x.data).reshape(()), "sum_all", (x,),
                 lambda g: (np.broadcast_to(g, xshape).copy(),))


# ---------------------------------------------------------------------------
# linear algebra

def matmul(a: Tensor, b: Tensor) -> Tensor:
    ad, bd = a.data, b.data
    if ad.ndim != 2 or bd.ndim != 2:
        raise DimensionError("matmul expects 2-D operands; reshape explicitly")
    if ad.shape[1] != bd.shape[0]:
        raise DimensionError(f"matmul: inner dims {ad.shape} x {bd.shape} do not match")
    return _make(ad @ bd, "matmul", (a, b),
                 lambda g: (g @ bd.T, ad.T @ g))


def bmm(a: Tensor, b: Tensor) -> Tensor:
    """Batched matmul: [B,m,k] @ [B,k,n]."""
    ad, bd = a.data, b.data
    if ad.ndim != 3 or bd.ndim != 3 or ad.shape[0] != bd.shape[0] or ad.shape[2] != bd.shape[1]:
        raise DimensionError(f"bmm: incompatible shapes {ad.shape} x {bd.shape}")
    return _make(ad @ bd, "bmm", (a, b),
                 lambda g: (g @ bd.transpose(0, 2, 1), ad.transpose(0, 2, 1) @ g))


# ---------------------------------------------------------------------------
# normalization, attention weights, loss

def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    xd = x.data
    d = xd.shape[-1] if xd.ndim else 0
    if d == 0:
        raise DimensionError("layer_norm over an empty last axis")
    if gain.data.shape != (d,) or bias.data.shape != (d,):
        raise DimensionError("layer_norm: gain/bias must match the last axis")
    if eps <= 0.0:
        raise ContractError("layer_norm needs eps > 0")
    mu = xd.mean(axis=-1, keepdims=True)
    var = xd.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xh = (xd - mu) * inv
    gd = gain.data

    def bwd(g):
        dxh = g * gd
        m1 = dxh.mean(axis=-1, keepdims=True)
        m2 = (dxh * xh).mean(axis=-1, keepdims=True)
        dx = inv * (dxh - m1 - xh * m2)
        dgain = (g * xh).reshape(-1, d).sum(axis=0)
        dbias = g.reshape(-1, d).sum(axis=0)
        return dx, dgain, dbias

    return _make(xh * gd + bias.data, "layer_norm", (x, gain, bias), bwd)


def softmax(x: Tensor) -> Tensor:
    """Row softmax over the last axis, stabilized by max subtraction."""
    xd = x.data
    if xd.shape[-1] < 1:
        raise DimensionError("softmax over an empty last axis")
    z = np.exp(xd - xd.max(axis=-1, keepdims=True))
    y = z / z.sum(axis=-1, keepdims=True)
    return _make(y, "softmax", (x,),
                 lambda g: (y * (g - (g * y).sum(axis=-1, keepdims=True)),))


def mse_loss(pred: Tensor, target: Tensor) -> Tensor:
    if pred.data.shape != target.data.shape:
        raise DimensionError(
            f"mse_loss: shapes {pred.data.shape} and {target.data.shape} differ")
    diff = pred.data - target.data
    n = diff.size

    def bwd(g):
        gp = g * (2.0 / n) * diff
        return gp, -gp

    return _make(np.mean(diff ** 2).reshape(()), "mse_loss", (pred, target), bwd)


# ---------------------------------------------------------------------------
# numerical gradient verification

def grad_check(f: Callable[[Tensor], Tensor], point: Tensor, h: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    Relative error per coordinate is |a - n| / (|a| + |n| + 1e-12), the
    analytic side coming from backward() and the numeric side from
    (f(x+h) - f(x-h)) / 2h evaluated with gradients disabled.
    """
    if h <= 0.0:
        raise ContractError("grad_check needs h > 0")
    x = Tensor(point.data.copy(), requires_grad=True)
    out = f(x)
    if out.data.size != 1:
        raise ContractError("grad_check requires a scalar-valued function")
    backward(out)
    analytic = np.zeros_like(x.data) if x.grad is None else x.grad.copy()

    flat = x.data.reshape(-1)
    worst = 0.0
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = f(Tensor(x.data.copy())).item()
            flat[i] = orig - h
            fm = f(Tensor(x.data.copy())).item()
            flat[i] = orig
            numeric = (fp - fm) / (2.0 * h)
            a = analytic.reshape(-1)[i]
            err = abs(a - numeric) / (abs(a) + abs(numeric) + 1e-12)
            worst = max(worst, err)
    return worst
