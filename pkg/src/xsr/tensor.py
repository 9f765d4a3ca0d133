"""Dense float64 tensors with reverse-mode automatic differentiation.

Values are C-contiguous ``numpy`` arrays; a :class:`GradTape` records the
operations applied to watched leaves so that :func:`backward` can return
``d(loss)/d(leaf)`` for every watched parameter. Operations called on
tensors that belong to no tape simply compute values (fast inference path).

Attention masking adds ``MASK_FILL`` (a large negative constant, never
infinity) to logits before softmax, so every public operation keeps all
entries finite.
"""

from __future__ import annotations

import math
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import erf

from .errors import ContractError, DomainError, ShapeError

MASK_FILL = -1e9
_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)

# When strict mode is on (tests), every op output is checked for finiteness.
# Otherwise only leaves and numerically risky ops (exp-like, normalizations)
# are checked.
_STRICT_FINITE = False


def set_strict_finite(flag: bool) -> None:
    global _STRICT_FINITE
    _STRICT_FINITE = bool(flag)


def _as_f64(value) -> np.ndarray:
    arr = np.ascontiguousarray(value, dtype=np.float64)
    return arr


def _check_finite(arr: np.ndarray, where: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"non-finite values produced by {where}")


class Tensor:
    """A float64 array value, optionally attached to a gradient tape.

    ``data`` is the row-major flat view of the values; ``shape`` the
    dimension sizes. Tensors are treated as immutable once created.
    """

    __slots__ = ("array", "tape", "node_id")

    def __init__(self, value, tape: Optional["GradTape"] = None, node_id: Optional[int] = None):
        self.array = _as_f64(value)
        _check_finite(self.array, "Tensor construction")
        self.tape = tape
        self.node_id = node_id

    @property
    def shape(self) -> tuple:
        return self.array.shape

    @property
    def data(self) -> np.ndarray:
        """Flat row-major float64 view of the values."""
        return self.array.reshape(-1)

    @property
    def value(self) -> np.ndarray:
        return self.array

    def item(self) -> float:
        if self.array.size != 1:
            raise ContractError(f"item() on tensor of shape {self.shape}")
        return float(self.array.reshape(()))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, tape={'yes' if self.tape is not None else 'no'})"

    # Operator sugar used by tests and small expressions.
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return scale(self, -1.0)


class _OpRecord:
    __slots__ = ("input_ids", "output_id", "backward_rule")

    def __init__(self, input_ids, output_id, backward_rule):
        self.input_ids = input_ids
        self.output_id = output_id
        self.backward_rule = backward_rule


class GradTape:
    """Ordered record of operations for reverse-mode differentiation.

    ``nodes`` lists one record per recorded operation, each holding its
    input node ids, output node id, and the local backward rule. Node ids
    are assigned in creation order, so every input id precedes the node
    that consumes it and the graph is acyclic by construction.
    """

    def __init__(self):
        self.nodes: list[_OpRecord] = []
        self._next_id = 0
        self._leaves: dict[int, str] = {}
        self._leaf_shapes: dict[str, tuple] = {}
        self._grad_cache: dict[int, dict[str, np.ndarray]] = {}

    def _new_id(self) -> int:
        nid = self._next_id
        self._next_id += 1
        return nid

    def watch(self, value, name: Optional[str] = None) -> Tensor:
        """Register a differentiable leaf and return its tensor."""
        t = Tensor(value, tape=self, node_id=self._new_id())
        if name is None:
            name = f"leaf{t.node_id}"
        if name in self._leaf_shapes:
            raise ContractError(f"duplicate leaf name {name!r}")
        self._leaves[t.node_id] = name
        self._leaf_shapes[name] = t.shape
        return t

    def _record(self, inputs: Sequence[Tensor], output_value: np.ndarray,
                backward_rule: Callable, risky: bool = False) -> Tensor:
        if risky or _STRICT_FINITE:
            _check_finite(output_value, backward_rule.__qualname__)
        out = Tensor.__new__(Tensor)
        out.array = output_value
        out.tape = self
        out.node_id = self._new_id()
        in_ids = tuple(t.node_id for t in inputs if t.tape is self)
        for iid in in_ids:
            assert iid < out.node_id
        self.nodes.append(_OpRecord(in_ids, out.node_id, backward_rule))
        return out


def backward(tape: GradTape, loss: Tensor) -> dict[str, np.ndarray]:
    """Return ``d(loss)/d(p)`` for every watched leaf of ``tape``.

    ``loss`` must be a scalar node recorded on ``tape``. Repeated calls
    with the same loss are idempotent (the first result is cached).
    Leaves the loss does not depend on get zero gradients.
    """
    if loss.tape is not tape or loss.node_id is None:
        raise ContractError("loss is not a node on this tape")
    if loss.array.size != 1:
        raise ContractError(f"backward requires a scalar loss, got shape {loss.shape}")
    cached = tape._grad_cache.get(loss.node_id)
    if cached is not None:
        return cached

    grads: dict[int, np.ndarray] = {loss.node_id: np.ones_like(loss.array)}
    for record in reversed(tape.nodes):
        if record.output_id > loss.node_id:
            continue
        g_out = grads.pop(record.output_id, None)
        if g_out is None:
            continue
        for nid, g in zip(record.input_ids, record.backward_rule(g_out)):
            if g is None:
                continue
            acc = grads.get(nid)
            grads[nid] = g if acc is None else acc + g

    result = {}
    for nid, name in tape._leaves.items():
        g = grads.get(nid)
        if g is None:
            g = np.zeros(tape._leaf_shapes[name], dtype=np.float64)
        _check_finite(g, f"gradient of {name}")
        result[name] = g
    tape._grad_cache[loss.node_id] = result
    return result


# ---------------------------------------------------------------------------
# op plumbing
# ---------------------------------------------------------------------------


def _wrap(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _common_tape(*tensors: Tensor) -> Optional[GradTape]:
    tape = None
    for t in tensors:
        if t.tape is None:
            continue
        if tape is None:
            tape = t.tape
        elif tape is not t.tape:
            raise ContractError("operands belong to different tapes")
    return tape


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _emit(tape, inputs, value, backward_rule, risky=False) -> Tensor:
    if tape is None:
        if risky or _STRICT_FINITE:
            _check_finite(value, backward_rule.__qualname__)
        return Tensor(value)
    return tape._record(inputs, value, backward_rule, risky=risky)


# ---------------------------------------------------------------------------
# elementwise and linear algebra ops
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    tape = _common_tape(a, b)
    value = a.array + b.array
    a_shape, b_shape = a.shape, b.shape
    a_on, b_on = a.tape is tape and tape is not None, b.tape is tape and tape is not None

    def add_bwd(g):
        out = []
        if a_on:
            out.append(_unbroadcast(g, a_shape))
        if b_on:
            out.append(_unbroadcast(g, b_shape))
        return out

    return _emit(tape, [t for t in (a, b) if t.tape is tape and tape is not None], value, add_bwd)


def sub(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    tape = _common_tape(a, b)
    value = a.array - b.array
    a_shape, b_shape = a.shape, b.shape
    a_on, b_on = a.tape is tape and tape is not None, b.tape is tape and tape is not None

    def sub_bwd(g):
        out = []
        if a_on:
            out.append(_unbroadcast(g, a_shape))
        if b_on:
            out.append(_unbroadcast(-g, b_shape))
        return out

    return _emit(tape, [t for t in (a, b) if t.tape is tape and tape is not None], value, sub_bwd)


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    tape = _common_tape(a, b)
    value = a.array * b.array
    a_arr, b_arr = a.array, b.array
    a_on, b_on = a.tape is tape and tape is not None, b.tape is tape and tape is not None

    def mul_bwd(g):
        out = []
        if a_on:
            out.append(_unbroadcast(g * b_arr, a_arr.shape))
        if b_on:
            out.append(_unbroadcast(g * a_arr, b_arr.shape))
        return out

    return _emit(tape, [t for t in (a, b) if t.tape is tape and tape is not None], value, mul_bwd)


def scale(a, c: float) -> Tensor:
    a = _wrap(a)
    c = float(c)

    def scale_bwd(g):
        return [g * c]

    return _emit(a.tape, [a] if a.tape is not None else [], a.array * c, scale_bwd)


def matmul(a, b) -> Tensor:
    """Matrix product with numpy stacking semantics (both operands >= 2-D)."""
    a, b = _wrap(a), _wrap(b)
    if a.array.ndim < 2 or b.array.ndim < 2:
        raise ShapeError(f"matmul requires >=2-D operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} x {b.shape}")
    tape = _common_tape(a, b)
    try:
        value = np.matmul(a.array, b.array)
    except ValueError as exc:
        raise ShapeError(f"matmul batch dimensions disagree: {a.shape} x {b.shape}") from exc
    a_arr, b_arr = a.array, b.array
    a_on, b_on = a.tape is tape and tape is not None, b.tape is tape and tape is not None

    def matmul_bwd(g):
        out = []
        if a_on:
            out.append(_unbroadcast(np.matmul(g, b_arr.swapaxes(-1, -2)), a_arr.shape))
        if b_on:
            out.append(_unbroadcast(np.matmul(a_arr.swapaxes(-1, -2), g), b_arr.shape))
        return out

    return _emit(tape, [t for t in (a, b) if t.tape is tape and tape is not None], value, matmul_bwd)


def reshape(a, shape) -> Tensor:
    a = _wrap(a)
    orig = a.shape
    value = a.array.reshape(shape)

    def reshape_bwd(g):
        return [g.reshape(orig)]

    return _emit(a.tape, [a] if a.tape is not None else [], value, reshape_bwd)


def transpose(a, axes) -> Tensor:
    a = _wrap(a)
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    value = np.ascontiguousarray(a.array.transpose(axes))

    def transpose_bwd(g):
        return [g.transpose(inv)]

    return _emit(a.tape, [a] if a.tape is not None else [], value, transpose_bwd)


def select(a, axis: int, index: int) -> Tensor:
    """Pick one slice along ``axis`` (drops that axis)."""
    a = _wrap(a)
    orig = a.shape
    sel = [slice(None)] * a.array.ndim
    sel[axis] = index
    sel = tuple(sel)
    value = np.ascontiguousarray(a.array[sel])

    def select_bwd(g):
        full = np.zeros(orig, dtype=np.float64)
        full[sel] = g
        return [full]

    return _emit(a.tape, [a] if a.tape is not None else [], value, select_bwd)


def slice_rows(a, n: int) -> Tensor:
    """First ``n`` rows of a 2-D tensor (position-embedding lookup)."""
    a = _wrap(a)
    orig = a.shape
    value = np.ascontiguousarray(a.array[:n])

    def slice_rows_bwd(g):
        full = np.zeros(orig, dtype=np.float64)
        full[:n] = g
        return [full]

    return _emit(a.tape, [a] if a.tape is not None else [], value, slice_rows_bwd)


def gather_rows(table, ids) -> Tensor:
    """Embedding lookup: ``table[ids]`` for an integer index array."""
    table = _wrap(table)
    ids = np.asarray(ids, dtype=np.int64)
    orig = table.shape
    value = np.ascontiguousarray(table.array[ids])

    def gather_rows_bwd(g):
        full = np.zeros(orig, dtype=np.float64)
        np.add.at(full, ids, g)
        return [full]

    return _emit(table.tape, [table] if table.tape is not None else [], value, gather_rows_bwd)


def gather_positions(a, batch_idx, pos_idx) -> Tensor:
    """Rows ``a[batch_idx[i], pos_idx[i]]`` of a (B, L, d) tensor."""
    a = _wrap(a)
    batch_idx = np.asarray(batch_idx, dtype=np.int64)
    pos_idx = np.asarray(pos_idx, dtype=np.int64)
    orig = a.shape
    value = np.ascontiguousarray(a.array[batch_idx, pos_idx])

    def gather_positions_bwd(g):
        full = np.zeros(orig, dtype=np.float64)
        np.add.at(full, (batch_idx, pos_idx), g)
        return [full]

    return _emit(a.tape, [a] if a.tape is not None else [], value, gather_positions_bwd)


def reduce_sum(a) -> Tensor:
    a = _wrap(a)
    orig = a.shape
    value = np.asarray(a.array.sum())

    def sum_bwd(g):
        return [np.broadcast_to(g, orig).astype(np.float64)]

    return _emit(a.tape, [a] if a.tape is not None else [], value, sum_bwd)


def reduce_mean(a) -> Tensor:
    a = _wrap(a)
    orig = a.shape
    n = a.array.size
    value = np.asarray(a.array.mean())

    def mean_bwd(g):
        return [np.broadcast_to(g / n, orig).astype(np.float64)]

    return _emit(a.tape, [a] if a.tape is not None else [], value, mean_bwd)


# ---------------------------------------------------------------------------
# neural-network ops
# ---------------------------------------------------------------------------


def softmax(a, axis: int = -1) -> Tensor:
    """Numerically stable softmax along ``axis`` (max-subtraction)."""
    a = _wrap(a)
    if not -a.array.ndim <= axis < a.array.ndim:
        raise ShapeError(f"softmax axis {axis} invalid for shape {a.shape}")
    shifted = a.array - a.array.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    value = e / e.sum(axis=axis, keepdims=True)
    out_val = value

    def softmax_bwd(g):
        dot = (g * out_val).sum(axis=axis, keepdims=True)
        return [out_val * (g - dot)]

    return _emit(a.tape, [a] if a.tape is not None else [], value, softmax_bwd, risky=True)


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Per-row normalization over the last axis (population variance)."""
    x, gamma, beta = _wrap(x), _wrap(gamma), _wrap(beta)
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(f"layer_norm affine shapes {gamma.shape}/{beta.shape} do not match width {d}")
    tape = _common_tape(x, gamma, beta)
    mu = x.array.mean(axis=-1, keepdims=True)
    xc = x.array - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    value = xhat * gamma.array + beta.array
    g_arr = gamma.array
    x_on = x.tape is tape and tape is not None
    gamma_on = gamma.tape is tape and tape is not None
    beta_on = beta.tape is tape and tape is not None
    lead_axes = tuple(range(value.ndim - 1))

    def layer_norm_bwd(g):
        out = []
        if x_on:
            dxhat = g * g_arr
            m1 = dxhat.mean(axis=-1, keepdims=True)
            m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
            out.append(inv * (dxhat - m1 - xhat * m2))
        if gamma_on:
            out.append((g * xhat).sum(axis=lead_axes))
        if beta_on:
            out.append(g.sum(axis=lead_axes))
        return out

    inputs = [t for t in (x, gamma, beta) if t.tape is tape and tape is not None]
    return _emit(tape, inputs, value, layer_norm_bwd, risky=True)


def gelu(a) -> Tensor:
    """Exact (erf-based) GELU."""
    a = _wrap(a)
    x = a.array
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    value = x * cdf

    def gelu_bwd(g):
        pdf = np.exp(-0.5 * x * x) * _INV_SQRT2PI
        return [g * (cdf + x * pdf)]

    return _emit(a.tape, [a] if a.tape is not None else [], value, gelu_bwd)


def dropout(a, p: float, rng: Optional[np.random.Generator], training: bool) -> Tensor:
    """Inverted dropout; identity when not training or p == 0."""
    a = _wrap(a)
    if not training or p == 0.0:
        return a
    if not 0.0 <= p < 1.0:
        raise ContractError(f"dropout rate must be in [0, 1), got {p}")
    if rng is None:
        raise ContractError("training-mode dropout needs a seeded generator")
    mask = (rng.random(a.shape) >= p) / (1.0 - p)

    def dropout_bwd(g):
        return [g * mask]

    return _emit(a.tape, [a] if a.tape is not None else [], a.array * mask, dropout_bwd)


def l2_normalize_rows(a) -> Tensor:
    """Scale each row (last axis) to unit L2 norm."""
    a = _wrap(a)
    norms = np.linalg.norm(a.array, axis=-1, keepdims=True)
    if np.any(norms == 0.0):
        raise DomainError("cannot L2-normalize a zero vector")
    value = a.array / norms
    y = value

    def l2_normalize_bwd(g):
        dot = (g * y).sum(axis=-1, keepdims=True)
        return [(g - y * dot) / norms]

    return _emit(a.tape, [a] if a.tape is not None else [], value, l2_normalize_bwd, risky=True)


def cross_entropy(logits, targets, reduction: str = "sum") -> Tensor:
    """Sum or mean of ``-log(softmax(row)[target])`` over logit rows."""
    logits = _wrap(logits)
    targets = np.asarray(targets, dtype=np.int64)
    if logits.array.ndim != 2:
        raise ShapeError(f"cross_entropy expects 2-D logits, got {logits.shape}")
    m = logits.shape[0]
    if targets.shape != (m,):
        raise ContractError(f"{m} logit rows but {targets.shape} targets")
    if reduction not in ("sum", "mean"):
        raise ContractError(f"unknown reduction {reduction!r}")
    if m == 0:
        return _emit(logits.tape, [logits] if logits.tape is not None else [],
                     np.asarray(0.0), lambda g: [np.zeros_like(logits.array)])
    x = logits.array
    mx = x.max(axis=1, keepdims=True)
    lse = mx[:, 0] + np.log(np.exp(x - mx).sum(axis=1))
    per_row = lse - x[np.arange(m), targets]
    denom = m if reduction == "mean" else 1
    value = np.asarray(per_row.sum() / denom)

    def cross_entropy_bwd(g):
        p = np.exp(x - mx)
        p /= p.sum(axis=1, keepdims=True)
        p[np.arange(m), targets] -= 1.0
        return [p * (float(g) / denom)]

    return _emit(logits.tape, [logits] if logits.tape is not None else [], value,
                 cross_entropy_bwd, risky=True)
