"""Reverse-mode autodiff on float64 numpy arrays.

Every operation builds a define-by-run graph node carrying a backward
closure; ``backward(loss)`` walks the graph in reverse topological order
and accumulates gradients into leaf tensors.

Two numerical ground rules hold throughout:

* all data is float64, and every forward result is checked finite
  (NaN/Inf raises :class:`~graphtalk.errors.NumericError`);
* order-sensitive reductions (softmax denominators, attention-weighted
  sums, n-ary accumulation) use exactly-rounded summation
  (``math.fsum``), so results are bitwise independent of term order.
  This is what makes the padding/permutation invariances of the model
  exact rather than approximate.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, InvalidMaskError, NumericError, ShapeError

Array = np.ndarray

__all__ = [
    "Tensor",
    "Parameter",
    "ParameterStore",
    "backward",
    "add",
    "sub",
    "mul",
    "neg",
    "scale",
    "divs",
    "matmul",
    "dot",
    "gather",
    "stack",
    "concat",
    "sigmoid",
    "tanh",
    "leaky_relu",
    "exp",
    "log",
    "tsum",
    "add_n",
    "weighted_rows_sum",
    "masked_softmax",
]


def _f64(x) -> Array:
    return np.asarray(x, dtype=np.float64)


def _check_finite(arr: Array, opname: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{opname} produced non-finite values")


class Tensor:
    """A float64 array plus the bookkeeping needed for reverse mode.

    ``grad`` is populated by :func:`backward` on every node that
    requires gradients; for :class:`Parameter` leaves it persists and
    accumulates across backward calls until explicitly zeroed.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_bwd")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _f64(data)
        self.requires_grad = requires_grad
        self.grad: Array | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._bwd: Callable[[Array], Sequence[Array | None]] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:  # pragma: no cover
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


class Parameter(Tensor):
    """A named trainable leaf; its gradient buffer always exists."""

    __slots__ = ("name",)

    def __init__(self, name: str, value):
        super().__init__(value, requires_grad=True)
        self.name = name
        self.grad = np.zeros_like(self.data)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:  # pragma: no cover
        return f"Parameter({self.name!r}, shape={self.shape})"


class ParameterStore:
    """Ordered collection of parameters with unique names."""

    def __init__(self):
        self._params: dict[str, Parameter] = {}

    def add(self, param: Parameter) -> Parameter:
        if param.name in self._params:
            raise ContractError(f"duplicate parameter name: {param.name!r}")
        self._params[param.name] = param
        return param

    def __getitem__(self, name: str) -> Parameter:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self):
        return iter(self._params.values())

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params.keys())

    def zero_grads(self) -> None:
        for p in self:
            p.zero_grad()


def _node(data: Array, parents: Sequence[Tensor], bwd, opname: str) -> Tensor:
    data = _f64(data)
    _check_finite(data, opname)
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._bwd = bwd
    return out


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    for _ in range(extra):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _fsum_axis0(mat: Array) -> Array:
    """Exactly-rounded column sums of a 2-D array (order-independent)."""
    return np.array([math.fsum(col) for col in mat.T], dtype=np.float64)


# ---------------------------------------------------------------------------
# elementwise and linear ops


def add(a: Tensor, b: Tensor) -> Tensor:
    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _node(a.data + b.data, (a, b), bwd, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _node(a.data - b.data, (a, b), bwd, "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    def bwd(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _node(a.data * b.data, (a, b), bwd, "mul")


def neg(a: Tensor) -> Tensor:
    return _node(-a.data, (a,), lambda g: (-g,), "neg")


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)
    return _node(a.data * s, (a,), lambda g: (g * s,), "scale")


def divs(a: Tensor, s: float) -> Tensor:
    s = float(s)
    return _node(a.data / s, (a,), lambda g: (g / s,), "divs")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim not in (1, 2) or b.ndim not in (1, 2):
        raise ShapeError(f"matmul supports 1-D/2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != (b.shape[0] if b.ndim >= 1 else None):
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} @ {b.shape}")

    ad, bd = a.data, b.data

    if a.ndim == 2 and b.ndim == 2:
        def bwd(g):
            return g @ bd.T, ad.T @ g
    elif a.ndim == 2 and b.ndim == 1:
        def bwd(g):
            return np.outer(g, bd), ad.T @ g
    elif a.ndim == 1 and b.ndim == 2:
        def bwd(g):
            return bd @ g, np.outer(ad, g)
    else:  # 1-D @ 1-D -> scalar
        def bwd(g):
            return g * bd, g * ad

    return _node(ad @ bd, (a, b), bwd, "matmul")


def dot(a: Tensor, b: Tensor) -> Tensor:
    """Inner product of two vectors, returned as a 0-d tensor."""
    if a.ndim != 1 or b.ndim != 1 or a.shape != b.shape:
        raise ShapeError(f"dot expects equal-length vectors, got {a.shape} and {b.shape}")
    return matmul(a, b)


def gather(x: Tensor, idx) -> Tensor:
    """Select rows (or elements of a vector) by integer index.

    ``idx`` may be a scalar int or an integer array; the output shape is
    ``idx.shape + x.shape[1:]``. Backward scatter-adds, so repeated
    indices accumulate.
    """
    idx = np.asarray(idx)
    if idx.dtype.kind not in "iu":
        raise ShapeError("gather index must be integral")
    if x.ndim == 0:
        raise ShapeError("cannot gather from a scalar")
    if idx.size and (idx.min() < 0 or idx.max() >= x.shape[0]):
        raise ShapeError(f"gather index out of range for leading dim {x.shape[0]}")

    def bwd(g):
        out = np.zeros_like(x.data)
        np.add.at(out, idx, g)
        return (out,)

    return _node(x.data[idx], (x,), bwd, "gather")


def stack(tensors: Sequence[Tensor]) -> Tensor:
    """Stack same-shaped tensors along a new leading axis."""
    ts = list(tensors)
    if not ts:
        raise ShapeError("stack of zero tensors")
    shape = ts[0].shape
    if any(t.shape != shape for t in ts):
        raise ShapeError("stack requires identical shapes")

    def bwd(g):
        return tuple(g[i] for i in range(len(ts)))

    return _node(np.stack([t.data for t in ts]), ts, bwd, "stack")


def concat(tensors: Sequence[Tensor]) -> Tensor:
    """Concatenate 1-D tensors."""
    ts = list(tensors)
    if not ts or any(t.ndim != 1 for t in ts):
        raise ShapeError("concat expects a non-empty list of vectors")
    sizes = [t.size for t in ts]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        return tuple(g[offsets[i]:offsets[i + 1]] for i in range(len(ts)))

    return _node(np.concatenate([t.data for t in ts]), ts, bwd, "concat")


# ---------------------------------------------------------------------------
# nonlinearities


def sigmoid(x: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        y = 1.0 / (1.0 + np.exp(-x.data))

    def bwd(g):
        return (g * y * (1.0 - y),)

    return _node(y, (x,), bwd, "sigmoid")


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)

    def bwd(g):
        return (g * (1.0 - y * y),)

    return _node(y, (x,), bwd, "tanh")


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    pos = x.data >= 0

    def bwd(g):
        return (g * np.where(pos, 1.0, slope),)

    return _node(np.where(pos, x.data, slope * x.data), (x,), bwd, "leaky_relu")


def exp(x: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        y = np.exp(x.data)

    def bwd(g):
        return (g * y,)

    return _node(y, (x,), bwd, "exp")


def log(x: Tensor) -> Tensor:
    with np.errstate(divide="ignore", invalid="ignore"):
        y = np.log(x.data)

    def bwd(g):
        return (g / x.data,)

    return _node(y, (x,), bwd, "log")


def tsum(x: Tensor) -> Tensor:
    """Sum of all elements (plain numpy reduction; used by tests/loss glue)."""

    def bwd(g):
        return (np.full_like(x.data, float(g)),)

    return _node(np.sum(x.data), (x,), bwd, "tsum")


# ---------------------------------------------------------------------------
# exact reductions


def add_n(tensors: Sequence[Tensor]) -> Tensor:
    """Sum of same-shaped tensors with exactly-rounded accumulation."""
    ts = list(tensors)
    if not ts:
        raise ShapeError("add_n of zero tensors")
    shape = ts[0].shape
    if any(t.shape != shape for t in ts):
        raise ShapeError("add_n requires identical shapes")
    if len(ts) == 1:
        t = ts[0]
        return _node(t.data.copy(), (t,), lambda g: (g,), "add_n")
    stacked = np.stack([t.data for t in ts]).reshape(len(ts), -1)
    out = _fsum_axis0(stacked).reshape(shape)

    def bwd(g):
        return tuple(g for _ in ts)

    return _node(out, ts, bwd, "add_n")


def weighted_rows_sum(weights: Tensor, rows: Tensor) -> Tensor:
    """``sum_i weights[i] * rows[i]`` with exactly-rounded accumulation.

    The result is bitwise invariant under any simultaneous permutation
    of ``weights`` and ``rows``.
    """
    if weights.ndim != 1 or rows.ndim != 2 or weights.shape[0] != rows.shape[0]:
        raise ShapeError(
            f"weighted_rows_sum expects (m,) and (m,d), got {weights.shape} and {rows.shape}"
        )
    products = weights.data[:, None] * rows.data
    out = _fsum_axis0(products)

    def bwd(g):
        return rows.data @ g, np.outer(weights.data, g)

    return _node(out, (weights, rows), bwd, "weighted_rows_sum")


def masked_softmax(logits: Tensor, mask) -> Tensor:
    """Softmax along the last axis with hard masking.

    Masked entries behave as if their logit were negative infinity:
    they receive probability exactly 0.0 and propagate exactly zero
    gradient. The normalizer is an exactly-rounded sum, so the result
    does not depend on the order of the unmasked entries.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != logits.shape:
        raise ShapeError(f"mask shape {mask.shape} != logits shape {logits.shape}")
    if logits.ndim not in (1, 2):
        raise ShapeError("masked_softmax supports 1-D or 2-D logits")

    x = logits.data
    flat = x.reshape(-1, x.shape[-1])
    mflat = mask.reshape(flat.shape)
    out = np.zeros_like(flat)
    for r in range(flat.shape[0]):
        row_mask = mflat[r]
        if not row_mask.any():
            raise InvalidMaskError("all entries masked in softmax row")
        vals = flat[r][row_mask]
        m = vals.max()
        z = np.zeros_like(flat[r])
        z[row_mask] = np.exp(vals - m)
        denom = math.fsum(z[row_mask])
        out[r] = z / denom
    y = out.reshape(x.shape)

    def bwd(g):
        gy = g * y
        s = gy.sum(axis=-1, keepdims=True)
        return (y * (g - s),)

    return _node(y, (logits,), bwd, "masked_softmax")


# ---------------------------------------------------------------------------
# reverse pass


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into every reachable gradient buffer.

    ``loss`` must be a 0-d tensor produced by the ops above.
    """
    if loss.ndim != 0:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return

    topo: list[Tensor] = []
    seen: set[int] = set()
    stack_: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack_:
        node, expanded = stack_.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack_.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack_.append((p, False))

    grads: dict[int, Array] = {id(loss): np.ones((), dtype=np.float64)}
    for node in reversed(topo):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.grad is None:
            node.grad = g.copy()
        else:
            node.grad = node.grad + g
        if node._bwd is None:
            continue
        parent_grads = node._bwd(g)
        for parent, pg in zip(node._parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            pid = id(parent)
            if pid in grads:
                grads[pid] = grads[pid] + pg
            else:
                grads[pid] = pg
