"""Reverse-mode automatic differentiation over dense float64 arrays.

A :class:`Tape` opened as a context manager records every op whose inputs
carry gradients; ``tape.backward(loss)`` replays the records in reverse and
accumulates ``d loss / d tensor`` into ``Tensor.grad``. Outside a tape the
same ops run forward-only, which is how evaluation passes avoid bookkeeping.

Storage is flat row-major float64 with an explicit shape. Ops never
broadcast between two tensors except :func:`broadcast_add_row` (matrix plus
row vector); anything else must shape-match exactly and errors loudly.
"""

from __future__ import annotations

import threading

import numpy as np

from . import _kernels
from .errors import ShapeMismatch

_STATE = threading.local()


def _active_tape() -> "Tape | None":
    return getattr(_STATE, "tape", None)


def active_tape() -> "Tape | None":
    """The tape currently recording on this thread, if any."""
    return _active_tape()


class Tensor:
    """Dense n-dimensional float64 array, optionally tracked for gradients."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        # ascontiguousarray would promote 0-d scalars to shape (1,)
        if arr.ndim > 0 and not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64)  # own the buffer
        else:
            self.grad += g

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # operator sugar; scalars multiply via scale()
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __getitem__(self, key):
        return slice_(self, key)

    def sum(self, axis: int | None = None):
        return sum_(self, axis)

    def mean(self, axis: int | None = None):
        return mean(self, axis)

    def tanh(self):
        return tanh(self)

    def sigmoid(self):
        return sigmoid(self)

    def relu(self):
        return relu(self)


class _Record:
    __slots__ = ("outs", "inputs", "backward", "multi")

    def __init__(self, outs, inputs, backward, multi=False):
        self.outs = outs
        self.inputs = inputs
        self.backward = backward
        self.multi = multi


class Tape:
    """Per-forward-pass op record; single-threaded, reset by recreation."""

    def __init__(self):
        self._records: list[_Record] = []
        self._consumed = False
        self.cache: dict = {}  # per-pass scratch (e.g. fused weight views)

    def __enter__(self) -> "Tape":
        if _active_tape() is not None:
            raise RuntimeError("a Tape is already active on this thread")
        _STATE.tape = self
        return self

    def __exit__(self, *exc) -> None:
        _STATE.tape = None

    def __len__(self) -> int:
        return len(self._records)

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(t) into ``t.grad`` for every tracked tensor."""
        if self._consumed:
            raise RuntimeError("backward() already ran on this tape; build a new tape")
        if loss.shape != ():
            raise ShapeMismatch(f"backward: loss must be a scalar, got shape {loss.shape}")
        self._consumed = True
        loss._accumulate(np.ones_like(loss.data))
        for rec in reversed(self._records):
            if rec.multi:
                outs_g = [o.grad for o in rec.outs]
                if all(g is None for g in outs_g):
                    continue
                outs_g = [
                    np.zeros_like(o.data) if g is None else g
                    for g, o in zip(outs_g, rec.outs)
                ]
                grads = rec.backward(*outs_g)
                borrowed_from = outs_g
            else:
                g_out = rec.outs[0].grad
                if g_out is None:
                    continue
                grads = rec.backward(g_out)
                borrowed_from = (g_out,)
            for t, g in zip(rec.inputs, grads):
                if g is None or not t.requires_grad:
                    continue
                if t.grad is not None:
                    t.grad += g
                elif any(g is src for src in borrowed_from) or g.base is not None:
                    t.grad = g.copy()  # alias of an upstream grad or a view
                else:
                    t.grad = g  # fresh buffer: take ownership


def _record(out: Tensor, inputs: tuple[Tensor, ...], backward) -> Tensor:
    tape = _active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape._records.append(_Record((out,), inputs, backward))
    return out


def _record_multi(outs: tuple[Tensor, ...], inputs: tuple[Tensor, ...], backward) -> None:
    tape = _active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        for out in outs:
            out.requires_grad = True
        tape._records.append(_Record(outs, inputs, backward, multi=True))


def _check_same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeMismatch(f"{op}: shapes {a.shape} and {b.shape} do not match")


# ---------------------------------------------------------------------------
# forward ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    out = Tensor(a.data @ b.data)

    def backward(g):
        return (
            g @ b.data.T if a.requires_grad else None,
            a.data.T @ g if b.requires_grad else None,
        )

    return _record(out, (a, b), backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("add", a, b)
    out = Tensor(a.data + b.data)
    return _record(out, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("sub", a, b)
    out = Tensor(a.data - b.data)
    return _record(out, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("mul", a, b)
    out = Tensor(a.data * b.data)

    def backward(g):
        return (
            g * b.data if a.requires_grad else None,
            g * a.data if b.requires_grad else None,
        )

    return _record(out, (a, b), backward)


def scale(a: Tensor, c: float) -> Tensor:
    out = Tensor(a.data * c)
    return _record(out, (a,), lambda g: (g * c,))


def concat(tensors: list[Tensor], axis: int) -> Tensor:
    if not tensors:
        raise ShapeMismatch("concat: empty tensor list")
    ndim = tensors[0].data.ndim
    for t in tensors[1:]:
        if t.data.ndim != ndim:
            raise ShapeMismatch(
                f"concat: rank mismatch {tensors[0].shape} vs {t.shape}"
            )
        if t.shape[:axis] + t.shape[axis + 1 :] != tensors[0].shape[:axis] + tensors[0].shape[axis + 1 :]:
            raise ShapeMismatch(
                f"concat: shapes {tensors[0].shape} and {t.shape} differ off axis {axis}"
            )
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    offsets = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def backward(g):
        sl = [slice(None)] * ndim
        grads = []
        for i in range(len(tensors)):
            sl[axis] = slice(offsets[i], offsets[i + 1])
            grads.append(g[tuple(sl)])
        return tuple(grads)

    return _record(out, tuple(tensors), backward)


def sum_(a: Tensor, axis: int | None = None) -> Tensor:
    out = Tensor(a.data.sum(axis=axis))

    def backward(g):
        if axis is None:
            return (np.full_like(a.data, float(g)),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return _record(out, (a,), backward)


def mean(a: Tensor, axis: int | None = None) -> Tensor:
    out = Tensor(a.data.mean(axis=axis))
    n = a.size if axis is None else a.shape[axis]

    def backward(g):
        if axis is None:
            return (np.full_like(a.data, float(g) / n),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape) / n,)

    return _record(out, (a,), backward)


def tanh(a: Tensor) -> Tensor:
    out = Tensor(np.tanh(a.data))
    return _record(out, (a,), lambda g: (g * (1.0 - out.data * out.data),))


def sigmoid(a: Tensor) -> Tensor:
    # tanh form is overflow-free and much faster than a piecewise exp
    out = Tensor(0.5 * np.tanh(0.5 * a.data) + 0.5)
    return _record(out, (a,), lambda g: (g * out.data * (1.0 - out.data),))


def relu(a: Tensor) -> Tensor:
    out = Tensor(np.maximum(a.data, 0.0))
    return _record(out, (a,), lambda g: (g * (a.data > 0.0),))


def slice_(a: Tensor, key) -> Tensor:
    out = Tensor(a.data[key])

    def backward(g):
        full = np.zeros_like(a.data)
        full[key] = g
        return (full,)

    return _record(out, (a,), backward)


def broadcast_add_row(m: Tensor, row: Tensor) -> Tensor:
    if m.data.ndim != 2 or row.data.ndim != 1 or m.shape[1] != row.shape[0]:
        raise ShapeMismatch(
            f"broadcast_add_row: matrix {m.shape} and row {row.shape} do not match"
        )
    out = Tensor(m.data + row.data)
    return _record(out, (m, row), lambda g: (g, g.sum(axis=0)))


def lstm_cell(pre: Tensor, c_prev: Tensor, hidden: int) -> tuple[Tensor, Tensor]:
    """Fused LSTM cell tail: gate activations + state update in one record.

    ``pre`` holds the four stacked gate pre-activations [i | f | o | g],
    shape (rows, 4*hidden). Returns (h, c). Semantically identical to the
    composed sigmoid/tanh/mul/add ops, fused to cut per-step dispatch cost.
    """
    if pre.data.ndim != 2 or pre.shape[1] != 4 * hidden:
        raise ShapeMismatch(f"lstm_cell: pre-activations {pre.shape} need {4 * hidden} columns")
    if c_prev.shape != (pre.shape[0], hidden):
        raise ShapeMismatch(f"lstm_cell: cell state {c_prev.shape} vs ({pre.shape[0]}, {hidden})")
    gates, g, c, tc, h = _kernels.lstm_cell_fwd(pre.data, c_prev.data, hidden)
    h_out = Tensor(h)
    c_out = Tensor(c)

    def backward(gh, gc):
        dpre, dc_prev = _kernels.lstm_cell_bwd(gh, gc, gates, g, tc, c_prev.data, hidden)
        return dpre, (dc_prev if c_prev.requires_grad else None)

    _record_multi((h_out, c_out), (pre, c_prev), backward)
    return h_out, c_out


def gather_rows(a: Tensor, idx: np.ndarray) -> Tensor:
    """Select rows of a 2-D tensor by index (repeats allowed); grad scatters back."""
    if a.data.ndim != 2:
        raise ShapeMismatch(f"gather_rows: need a 2-D tensor, got shape {a.shape}")
    idx = np.asarray(idx, dtype=np.int64)
    out = Tensor(_kernels.gather_rows(a.data, idx))
    n = a.shape[0]
    return _record(out, (a,), lambda g: (_kernels.scatter_add_rows(np.ascontiguousarray(g), idx, n),))


def segment_mean(a: Tensor, seg: np.ndarray, n_segments: int) -> Tensor:
    """Mean of rows per segment id; empty segments yield zero rows."""
    if a.data.ndim != 2:
        raise ShapeMismatch(f"segment_mean: need a 2-D tensor, got shape {a.shape}")
    seg = np.asarray(seg, dtype=np.int64)
    counts = np.bincount(seg, minlength=n_segments).astype(np.float64)
    safe = np.maximum(counts, 1.0)
    sums = _kernels.segment_sum(a.data, seg, n_segments)
    out = Tensor(sums / safe[:, None])

    def backward(g):
        return (_kernels.gather_rows(np.ascontiguousarray(g / safe[:, None]), seg),)

    return _record(out, (a,), backward)


__all__ = [
    "Tensor",
    "Tape",
    "matmul",
    "add",
    "sub",
    "mul",
    "scale",
    "concat",
    "sum_",
    "mean",
    "tanh",
    "sigmoid",
    "relu",
    "slice_",
    "broadcast_add_row",
    "lstm_cell",
    "gather_rows",
    "segment_mean",
]
