"""Dense float64 tensors with tape-based reverse-mode differentiation.

The op set is deliberately small: exactly what the graph encoders, losses
and fusion heads need. Ops accept tracked tensors, constants, or plain
numpy arrays; with no tracked input they behave as ordinary numpy kernels
and return an untracked tensor. Every op checks its output for NaN/Inf and
raises instead of propagating them.

A tape is single-writer: build one forward pass on it, call ``backward``
once, then discard it. Distinct tapes are independent and may be used from
distinct threads. Broadcasting is not supported except for the row-vector
bias form of ``add``; shapes must match exactly everywhere else.

Convention notes (they matter for the finite-difference tolerances):
relu'(0) = 0, and sqrt's derivative is clamped at x = 0.
"""

from __future__ import annotations

from typing import Callable, Mapping, Sequence

import numpy as np

Array = np.ndarray


class ShapeMismatchError(ValueError):
    pass


class _Node:
    __slots__ = ("parents", "backward_fn", "name", "trainable", "leaf_shape")

    def __init__(self, parents, backward_fn, name=None, trainable=False, leaf_shape=None):
        self.parents = parents  # tuple of parent node indices (None = constant)
        self.backward_fn = backward_fn  # out_grad -> tuple of parent grads
        self.name = name
        self.trainable = trainable
        self.leaf_shape = leaf_shape


class Tensor:
    __slots__ = ("values", "tape", "index")

    def __init__(self, values: Array, tape: "Tape | None" = None, index: int | None = None):
        self.values = values
        self.tape = tape
        self.index = index

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    def item(self) -> float:
        return float(self.values)

    def __repr__(self) -> str:
        tracked = "tracked" if self.tape is not None else "constant"
        return f"<Tensor shape={self.values.shape} {tracked}>"


class Tape:
    """Records the forward pass; topological order by construction."""

    def __init__(self):
        self.nodes: list[_Node] = []
        self._named: dict[str, int] = {}

    def leaf(self, values, name: str | None = None, trainable: bool = False) -> Tensor:
        arr = _as_array(values)
        if name is not None:
            if name in self._named:
                raise ValueError(f"leaf {name!r} already registered on this tape")
            self._named[name] = len(self.nodes)
        self.nodes.append(_Node((), None, name=name, trainable=trainable, leaf_shape=arr.shape))
        return Tensor(arr, self, len(self.nodes) - 1)

    def param(self, name: str, values) -> Tensor:
        """Trainable leaf, deduplicated by name (weight sharing)."""
        cached = self._named.get(name)
        if cached is not None:
            return Tensor(_as_array(values), self, cached)
        return self.leaf(values, name=name, trainable=True)

    def _record(self, values: Array, parents, backward_fn) -> Tensor:
        self.nodes.append(_Node(parents, backward_fn))
        return Tensor(values, self, len(self.nodes) - 1)


def constant(values) -> Tensor:
    return Tensor(_as_array(values))


def _as_array(values) -> Array:
    arr = np.asarray(values, dtype=np.float64)
    return arr


def _check_finite(values: Array, op: str) -> None:
    if not np.all(np.isfinite(values)):
        raise ValueError(f"non-finite values produced by {op}")


def _coerce(x) -> Tensor:
    return x if isinstance(x, Tensor) else constant(x)


def _common_tape(*tensors: Tensor) -> "Tape | None":
    tape = None
    for t in tensors:
        if t.tape is None:
            continue
        if tape is None:
            tape = t.tape
        elif tape is not t.tape:
            raise ValueError("operands live on different tapes")
    return tape


def _emit(op: str, out: Array, inputs: Sequence[Tensor],
          backward_fn: Callable[[Array], tuple]) -> Tensor:
    _check_finite(out, op)
    tape = _common_tape(*inputs)
    if tape is None:
        return Tensor(out)
    parents = tuple(t.index if t.tape is not None else None for t in inputs)
    return tape._record(out, parents, backward_fn)


# ----------------------------------------------------------------------
# ops
# ----------------------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    if a.values.ndim != 2 or b.values.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatchError(f"matmul shapes incompatible: {a.shape} @ {b.shape}")
    av, bv = a.values, b.values
    out = av @ bv

    def backward_fn(g):
        return g @ bv.T, av.T @ g

    return _emit("matmul", out, (a, b), backward_fn)


def add(a, b) -> Tensor:
    """Elementwise add; also admits a 1-D row bias added to a 2-D operand."""
    a, b = _coerce(a), _coerce(b)
    bias = a.values.ndim == 2 and b.values.ndim == 1 and a.shape[1] == b.shape[0]
    if not bias and a.shape != b.shape:
        raise ShapeMismatchError(f"add shapes incompatible: {a.shape} + {b.shape}")
    out = a.values + b.values

    def backward_fn(g):
        return g, (g.sum(axis=0) if bias else g)

    return _emit("add", out, (a, b), backward_fn)


def sub(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"sub shapes incompatible: {a.shape} - {b.shape}")
    out = a.values - b.values

    def backward_fn(g):
        return g, -g

    return _emit("sub", out, (a, b), backward_fn)


def mul(a, b) -> Tensor:
    """Hadamard product; ``b`` may also be a scalar-shaped tensor."""
    a, b = _coerce(a), _coerce(b)
    scalar = b.values.size == 1
    if not scalar and a.shape != b.shape:
        raise ShapeMismatchError(f"mul shapes incompatible: {a.shape} * {b.shape}")
    av, bv = a.values, b.values
    out = av * (bv if not scalar else float(bv))

    def backward_fn(g):
        if scalar:
            return g * float(bv), np.asarray((g * av).sum()).reshape(bv.shape)
        return g * bv, g * av

    return _emit("mul", out, (a, b), backward_fn)


def mul_colvec(a, b) -> Tensor:
    """Multiply each row of 2-D ``a`` by the matching entry of [N, 1] ``b``."""
    a, b = _coerce(a), _coerce(b)
    if a.values.ndim != 2 or b.values.ndim != 2 or b.shape != (a.shape[0], 1):
        raise ShapeMismatchError(f"mul_colvec shapes incompatible: {a.shape} * {b.shape}")
    av, bv = a.values, b.values
    out = av * bv

    def backward_fn(g):
        return g * bv, (g * av).sum(axis=1, keepdims=True)

    return _emit("mul_colvec", out, (a, b), backward_fn)


def scale(a, c: float) -> Tensor:
    a = _coerce(a)
    c = float(c)
    out = a.values * c

    def backward_fn(g):
        return (g * c,)

    return _emit("scale", out, (a,), backward_fn)


def relu(a) -> Tensor:
    a = _coerce(a)
    mask = a.values > 0
    out = np.where(mask, a.values, 0.0)

    def backward_fn(g):
        return (g * mask,)

    return _emit("relu", out, (a,), backward_fn)


def sigmoid(a) -> Tensor:
    a = _coerce(a)
    v = a.values
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)

    def backward_fn(g):
        return (g * out * (1.0 - out),)

    return _emit("sigmoid", out, (a,), backward_fn)


def softplus(a) -> Tensor:
    """log(1 + e^x), evaluated stably; gradient is sigmoid(x)."""
    a = _coerce(a)
    v = a.values
    out = np.maximum(v, 0.0) + np.log1p(np.exp(-np.abs(v)))

    def backward_fn(g):
        s = np.empty_like(v)
        pos = v >= 0
        s[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
        ev = np.exp(v[~pos])
        s[~pos] = ev / (1.0 + ev)
        return (g * s,)

    return _emit("softplus", out, (a,), backward_fn)


def log(a) -> Tensor:
    a = _coerce(a)
    if np.any(a.values <= 0):
        raise ValueError("log requires strictly positive input")
    av = a.values
    out = np.log(av)

    def backward_fn(g):
        return (g / av,)

    return _emit("log", out, (a,), backward_fn)


def sqrt(a) -> Tensor:
    a = _coerce(a)
    if np.any(a.values < 0):
        raise ValueError("sqrt requires non-negative input")
    out = np.sqrt(a.values)

    def backward_fn(g):
        return (g * 0.5 / np.maximum(out, 1e-150),)

    return _emit("sqrt", out, (a,), backward_fn)


def concat(tensors: Sequence, axis: int = 1) -> Tensor:
    ts = [_coerce(t) for t in tensors]
    if not ts:
        raise ValueError("concat of an empty sequence")
    ndim = ts[0].values.ndim
    if axis >= ndim or any(t.values.ndim != ndim for t in ts):
        raise ShapeMismatchError(
            f"concat shapes incompatible: {[t.shape for t in ts]} along axis {axis}"
        )
    out = np.concatenate([t.values for t in ts], axis=axis)
    sizes = [t.shape[axis] for t in ts]
    offsets = np.cumsum([0] + sizes)

    def backward_fn(g):
        slicer = [slice(None)] * ndim
        grads = []
        for k in range(len(ts)):
            slicer[axis] = slice(offsets[k], offsets[k + 1])
            grads.append(g[tuple(slicer)])
        return tuple(grads)

    return _emit("concat", out, ts, backward_fn)


def row_softmax(a) -> Tensor:
    """Softmax per row of a 2-D tensor; subtracts the row max first."""
    a = _coerce(a)
    if a.values.ndim != 2:
        raise ShapeMismatchError(f"row_softmax needs a 2-D tensor, got {a.shape}")
    shifted = a.values - a.values.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=1, keepdims=True)

    def backward_fn(g):
        dot = (g * out).sum(axis=1, keepdims=True)
        return (out * (g - dot),)

    return _emit("row_softmax", out, (a,), backward_fn)


def log_row_softmax(a) -> Tensor:
    """log(row_softmax(a)) computed without materializing tiny exponents."""
    a = _coerce(a)
    if a.values.ndim != 2:
        raise ShapeMismatchError(f"log_row_softmax needs a 2-D tensor, got {a.shape}")
    shifted = a.values - a.values.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    out = shifted - lse
    soft = np.exp(out)

    def backward_fn(g):
        return (g - soft * g.sum(axis=1, keepdims=True),)

    return _emit("log_row_softmax", out, (a,), backward_fn)


def masked_log_row_softmax(a, mask) -> Tensor:
    """log softmax per row restricted to ``mask`` (a constant bool matrix).

    Excluded positions get output 0 and receive/emit no gradient; every row
    must keep at least one allowed position.
    """
    a = _coerce(a)
    m = np.asarray(mask, dtype=bool)
    if a.values.ndim != 2 or m.shape != a.values.shape:
        raise ShapeMismatchError(
            f"masked_log_row_softmax shapes incompatible: {a.shape} with mask {m.shape}"
        )
    if not m.any(axis=1).all():
        raise ValueError("mask excludes an entire row")
    neg = np.where(m, a.values, -np.inf)
    rowmax = neg.max(axis=1, keepdims=True)
    e = np.where(m, np.exp(a.values - rowmax), 0.0)
    denom = e.sum(axis=1, keepdims=True)
    soft = e / denom
    out = np.where(m, a.values - rowmax - np.log(denom), 0.0)

    def backward_fn(g):
        gm = g * m
        return (gm - soft * gm.sum(axis=1, keepdims=True),)

    return _emit("masked_log_row_softmax", out, (a,), backward_fn)


def reduce_sum(a) -> Tensor:
    a = _coerce(a)
    av = a.values
    out = np.asarray(av.sum())

    def backward_fn(g):
        return (np.broadcast_to(g, av.shape).copy(),)

    return _emit("reduce_sum", out, (a,), backward_fn)


def reduce_mean(a) -> Tensor:
    a = _coerce(a)
    av = a.values
    out = np.asarray(av.mean())

    def backward_fn(g):
        return (np.broadcast_to(g / av.size, av.shape).copy(),)

    return _emit("reduce_mean", out, (a,), backward_fn)


def gather_rows(a, indices) -> Tensor:
    a = _coerce(a)
    idx = np.asarray(indices, dtype=np.int64)
    av = a.values
    out = av[idx]

    def backward_fn(g):
        grad = np.zeros_like(av)
        np.add.at(grad, idx, g)
        return (grad,)

    return _emit("gather_rows", out, (a,), backward_fn)


def segment_sum(a, segment_ids, num_segments: int) -> Tensor:
    """Sum rows of ``a`` into ``num_segments`` buckets."""
    a = _coerce(a)
    seg = np.asarray(segment_ids, dtype=np.int64)
    av = a.values
    if av.ndim != 2 or seg.shape[0] != av.shape[0]:
        raise ShapeMismatchError(
            f"segment_sum shapes incompatible: {av.shape} with {seg.shape} ids"
        )
    out = np.zeros((num_segments, av.shape[1]), dtype=np.float64)
    np.add.at(out, seg, av)

    def backward_fn(g):
        return (g[seg],)

    return _emit("segment_sum", out, (a,), backward_fn)


def scale_rows(a, factors) -> Tensor:
    """Multiply each row by a fixed (untracked) per-row factor."""
    a = _coerce(a)
    f = np.asarray(factors, dtype=np.float64).reshape(-1, 1)
    if a.values.ndim != 2 or f.shape[0] != a.shape[0]:
        raise ShapeMismatchError(f"scale_rows shapes incompatible: {a.shape} rows vs {f.shape[0]} factors")
    out = a.values * f

    def backward_fn(g):
        return (g * f,)

    return _emit("scale_rows", out, (a,), backward_fn)


def l2_normalize_rows(a, eps: float = 1e-12) -> Tensor:
    a = _coerce(a)
    if a.values.ndim != 2:
        raise ShapeMismatchError(f"l2_normalize_rows needs a 2-D tensor, got {a.shape}")
    norms = np.sqrt((a.values ** 2).sum(axis=1, keepdims=True))
    if np.any(norms <= eps):
        raise ValueError("cannot normalize a zero row")
    out = a.values / norms

    def backward_fn(g):
        dot = (g * out).sum(axis=1, keepdims=True)
        return ((g - out * dot) / norms,)

    return _emit("l2_normalize_rows", out, (a,), backward_fn)


def transpose(a) -> Tensor:
    a = _coerce(a)
    if a.values.ndim != 2:
        raise ShapeMismatchError(f"transpose needs a 2-D tensor, got {a.shape}")
    out = a.values.T.copy()

    def backward_fn(g):
        return (g.T,)

    return _emit("transpose", out, (a,), backward_fn)


# ----------------------------------------------------------------------
# reverse pass
# ----------------------------------------------------------------------

def backward(loss: Tensor) -> dict[str, Tensor]:
    """Gradients of a scalar loss for every trainable leaf on its tape.

    Trainable leaves that do not influence the loss get zero gradients;
    non-trainable leaves are untouched. Each tape node is visited at most
    once (the tape is already topologically ordered).
    """
    if loss.tape is None:
        raise ValueError("loss is not attached to a tape")
    if loss.values.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    tape = loss.tape
    nodes = tape.nodes

    relevant = np.zeros(len(nodes), dtype=bool)
    relevant[loss.index] = True
    for i in range(loss.index, -1, -1):
        if relevant[i]:
            for p in nodes[i].parents:
                if p is not None:
                    relevant[p] = True

    grads: list[Array | None] = [None] * len(nodes)
    grads[loss.index] = np.ones_like(loss.values)
    for i in range(loss.index, -1, -1):
        node = nodes[i]
        if not relevant[i] or grads[i] is None or node.backward_fn is None:
            continue
        parent_grads = node.backward_fn(grads[i])
        for p, pg in zip(node.parents, parent_grads):
            if p is None:
                continue
            if grads[p] is None:
                grads[p] = np.array(pg, dtype=np.float64)
            else:
                grads[p] = grads[p] + pg

    out: dict[str, Tensor] = {}
    for name, idx in tape._named.items():
        node = nodes[idx]
        if not node.trainable:
            continue
        g = grads[idx]
        if g is None:
            # The leaf never fed the loss; report a zero gradient so
            # optimizers can treat the map as total.
            g = np.zeros(node.leaf_shape, dtype=np.float64)
        out[name] = Tensor(g)
    return out


def finite_diff_check(f: Callable[[Tensor], Tensor], x, eps: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    The relative error of a coordinate uses max(|analytic|, |numeric|, 1e-8)
    as denominator.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    x = np.array(x, dtype=np.float64, order="C")  # private copy; probed in place
    tape = Tape()
    xt = tape.leaf(x, name="__fd_x", trainable=True)
    out = f(xt)
    analytic = backward(out)["__fd_x"].values
    if analytic.shape != x.shape:
        analytic = np.broadcast_to(analytic, x.shape)

    numeric = np.zeros_like(x)
    flat = x.reshape(-1)
    nflat = numeric.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + eps
        hi = float(f(constant(x)).values)
        flat[k] = orig - eps
        lo = float(f(constant(x)).values)
        flat[k] = orig
        nflat[k] = (hi - lo) / (2.0 * eps)

    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float((np.abs(analytic - numeric) / denom).max())
