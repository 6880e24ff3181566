"""Dense tensors with tape-based reverse-mode differentiation.

Every op is a plain function taking :class:`Tensor` arguments.  When a
:class:`Tape` is active (``with Tape() as tape:``) each op appends a node to
it; :func:`backward` then replays the nodes in reverse, accumulating
gradients into every reachable :class:`Param`.

All values are float64.  Ops work on batched arrays and broadcast like numpy.
"""

from __future__ import annotations

import builtins
import contextlib
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

NEG_INF = -1e9


class ShapeError(ValueError):
    """Raised when an op receives inputs with non-conforming shapes."""

    def __init__(self, op: str, *shapes):
        self.op = op
        self.shapes = shapes
        super().__init__(f"{op}: incompatible shapes {' vs '.join(str(s) for s in shapes)}")


class NonFiniteError(FloatingPointError, ValueError):
    """An op received NaN or infinite input where finite values are required."""


class TapeError(RuntimeError):
    pass


class Tensor:
    __slots__ = ("data", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __getitem__(self, key):
        return getitem(self, key)


class Param(Tensor):
    """A leaf tensor that accumulates a gradient.

    ``frozen_rows`` lists rows of a 2-d table whose gradient is always
    discarded (used for the PAD embedding row).
    """

    __slots__ = ("grad", "trainable", "frozen_rows")

    def __init__(self, data, name: str | None = None, trainable: bool = True,
                 frozen_rows: Sequence[int] = ()):
        super().__init__(np.array(data, dtype=np.float64, copy=True), requires_grad=True, name=name)
        self.grad = np.zeros_like(self.data)
        self.trainable = trainable
        self.frozen_rows = tuple(frozen_rows)

    @property
    def tensor(self) -> Tensor:
        return self

    def zero_grad(self):
        self.grad[...] = 0.0

    def __repr__(self):
        return f"Param({self.name!r}, shape={self.shape}, trainable={self.trainable})"


@dataclass
class Node:
    op: str
    scope: str
    inputs: tuple
    output: Tensor
    backward: Callable[[np.ndarray], tuple]


@dataclass
class Tape:
    nodes: list = field(default_factory=list)
    consumed: bool = False
    _scopes: list = field(default_factory=list)

    def __enter__(self):
        _TAPES.append(self)
        return self

    def __exit__(self, *exc):
        _TAPES.remove(self)
        return False

    @contextlib.contextmanager
    def scope(self, name: str):
        self._scopes.append(name)
        try:
            yield
        finally:
            self._scopes.pop()

    @property
    def current_scope(self) -> str:
        return "/".join(self._scopes)

    def ops(self) -> list[str]:
        return [n.op for n in self.nodes]

    def scopes(self) -> set[str]:
        return {n.scope for n in self.nodes}


_TAPES: list[Tape] = []


def active_tape() -> Tape | None:
    return _TAPES[-1] if _TAPES else None


@contextlib.contextmanager
def scope(name: str):
    """Label ops recorded inside the block (no-op without an active tape)."""
    tape = active_tape()
    if tape is None:
        yield
    else:
        with tape.scope(name):
            yield


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(op: str, inputs: tuple, out: Tensor, backward_fn) -> Tensor:
    tape = active_tape()
    if tape is not None and any(isinstance(t, Tensor) and t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.nodes.append(Node(op, tape.current_scope, inputs, out, backward_fn))
    elif tape is not None:
        # constants are still recorded so the tape reflects the full computation
        tape.nodes.append(Node(op, tape.current_scope, inputs, out, None))
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _broadcast_shape(op, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape) from None


# ---------------------------------------------------------------------------
# elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)
    out = Tensor(a.data + b.data)
    return _record("add", (a, b), out,
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)
    out = Tensor(a.data - b.data)
    return _record("sub", (a, b), out,
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)
    out = Tensor(a.data * b.data)
    return _record("mul", (a, b), out,
                   lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("div", a, b)
    out = Tensor(a.data / b.data)
    return _record("div", (a, b), out,
                   lambda g: (_unbroadcast(g / b.data, a.shape),
                              _unbroadcast(-g * a.data / b.data ** 2, b.shape)))


def relu(x) -> Tensor:
    x = as_tensor(x)
    out = Tensor(np.maximum(x.data, 0.0))
    return _record("relu", (x,), out, lambda g: (g * (x.data > 0),))


def log(x) -> Tensor:
    x = as_tensor(x)
    out = Tensor(np.log(x.data))
    return _record("log", (x,), out, lambda g: (g / x.data,))


def masked_fill(x, mask: np.ndarray, value: float = NEG_INF) -> Tensor:
    """Replace entries where ``mask`` is False with ``value``."""
    x = as_tensor(x)
    keep = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
    out = Tensor(np.where(keep, x.data, value))
    return _record("masked_fill", (x,), out, lambda g: (g * keep,))


def dropout(x, rate: float, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout; identity when ``rate == 0`` or ``rng`` is None."""
    x = as_tensor(x)
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    if rng is None or rate == 0.0:
        return x
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    out = Tensor(x.data * mask)
    return _record("dropout", (x,), out, lambda g: (g * mask,))


# ---------------------------------------------------------------------------
# shape ops


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    try:
        data = x.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", x.shape, tuple(shape)) from None
    out = Tensor(data)
    return _record("reshape", (x,), out, lambda g: (g.reshape(x.shape),))


def swapaxes(x, a1: int, a2: int) -> Tensor:
    x = as_tensor(x)
    out = Tensor(np.swapaxes(x.data, a1, a2))
    return _record("swapaxes", (x,), out, lambda g: (np.swapaxes(g, a1, a2),))


def narrow(x, start: int, stop: int) -> Tensor:
    """Slice ``[start:stop]`` along the last axis."""
    x = as_tensor(x)
    n = x.shape[-1]
    if not 0 <= start < stop <= n:
        raise ShapeError("narrow", x.shape, (start, stop))
    out = Tensor(x.data[..., start:stop])

    def bw(g):
        full = np.zeros(x.shape)
        full[..., start:stop] = g
        return (full,)

    return _record("narrow", (x,), out, bw)


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    ax = axis % ts[0].ndim
    ref = ts[0].shape
    for t in ts[1:]:
        if t.ndim != len(ref) or any(t.shape[i] != ref[i] for i in range(len(ref)) if i != ax):
            raise ShapeError("concat", ref, t.shape)
    out = Tensor(np.concatenate([t.data for t in ts], axis=ax))
    splits = np.cumsum([t.shape[ax] for t in ts])[:-1]
    return _record("concat", tuple(ts), out, lambda g: tuple(np.split(g, splits, axis=ax)))


def take(table, idx: np.ndarray) -> Tensor:
    """Row gather ``table[idx]`` (embedding lookup)."""
    table = as_tensor(table)
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise ShapeError("take", table.shape, (int(idx.min()), int(idx.max())))
    out = Tensor(table.data[idx])

    def bw(g):
        full = np.zeros(table.shape)
        np.add.at(full, idx.reshape(-1), g.reshape(-1, *table.shape[1:]))
        return (full,)

    return _record("take", (table,), out, bw)


def window_stack(x, window: int) -> Tensor:
    """Zero-padded sliding windows along axis -2.

    ``x`` of shape (..., L, D) becomes (..., L, window*D); output row ``i``
    concatenates rows ``i - window//2 .. i + window//2``.
    """
    x = as_tensor(x)
    if window < 1 or window % 2 == 0:
        raise ValueError(f"window must be a positive odd integer, got {window}")
    half = window // 2
    L, D = x.shape[-2], x.shape[-1]
    pad = [(0, 0)] * (x.ndim - 2) + [(half, half), (0, 0)]
    padded = np.pad(x.data, pad)
    out = Tensor(np.concatenate([padded[..., j:j + L, :] for j in range(window)], axis=-1))

    def bw(g):
        gp = np.zeros(padded.shape)
        for j in range(window):
            gp[..., j:j + L, :] += g[..., j * D:(j + 1) * D]
        return (gp[..., half:half + L, :],)

    return _record("window_stack", (x,), out, bw)


# ---------------------------------------------------------------------------
# reductions and linear algebra


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul", a.shape, b.shape)
    try:
        data = np.matmul(a.data, b.data)
    except ValueError:
        raise ShapeError("matmul", a.shape, b.shape) from None
    out = Tensor(data)

    def bw(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _record("matmul", (a, b), out, bw)


def sum(x, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    x = as_tensor(x)
    out = Tensor(np.sum(x.data, axis=axis, keepdims=keepdims))

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _record("sum", (x,), out, bw)


def mean(x, axis=None) -> Tensor:
    x = as_tensor(x)
    n = x.data.size if axis is None else x.shape[axis]
    return mul(sum(x, axis=axis), 1.0 / n)


def max(x, axis: int = -1) -> Tensor:  # noqa: A001
    """Max along ``axis``; the gradient goes to the lowest index among ties."""
    x = as_tensor(x)
    arg = np.argmax(x.data, axis=axis)
    out = Tensor(np.take_along_axis(x.data, np.expand_dims(arg, axis), axis).squeeze(axis))

    def bw(g):
        full = np.zeros(x.shape)
        np.put_along_axis(full, np.expand_dims(arg, axis), np.expand_dims(g, axis), axis)
        return (full,)

    return _record("max", (x,), out, bw)


def segment_max(x, bounds: np.ndarray) -> Tensor:
    """Max over index ranges along axis 1.

    ``x`` has shape (B, L, C); ``bounds`` has shape (B, S, 2) holding
    half-open ``[start, stop)`` ranges.  Returns (B, S, C).  Every range must
    be nonempty.  Ties route the gradient to the lowest index.
    """
    x = as_tensor(x)
    bounds = np.asarray(bounds, dtype=np.int64)
    B, L, C = x.shape
    if bounds.shape[:1] != (B,) or bounds.ndim != 3 or bounds.shape[2] != 2:
        raise ShapeError("segment_max", x.shape, bounds.shape)
    starts, stops = bounds[..., 0], bounds[..., 1]
    if np.any(stops <= starts) or np.any(starts < 0) or np.any(stops > L):
        raise ValueError("segment_max: every range must be nonempty and inside [0, L)")
    pos = np.arange(L)
    inside = (pos[None, None, :] >= starts[..., None]) & (pos[None, None, :] < stops[..., None])  # B,S,L
    vals = np.where(inside[..., None], x.data[:, None, :, :], -np.inf)  # B,S,L,C
    arg = np.argmax(vals, axis=2)  # B,S,C
    bi = np.arange(B)[:, None, None]
    ci = np.arange(C)[None, None, :]
    out = Tensor(x.data[bi, arg, ci])

    def bw(g):
        full = np.zeros(x.shape)
        np.add.at(full, (np.broadcast_to(bi, arg.shape), arg, np.broadcast_to(ci, arg.shape)), g)
        return (full,)

    return _record("segment_max", (x,), out, bw)


def softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    if not np.all(np.isfinite(x.data)):
        raise NonFiniteError("softmax: input must be finite")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(p)
    return _record("softmax", (x,), out,
                   lambda g: (p * (g - (g * p).sum(axis=axis, keepdims=True)),))


def log_softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    ls = z - lse
    out = Tensor(ls)
    p = np.exp(ls)
    return _record("log_softmax", (x,), out,
                   lambda g: (g - p * g.sum(axis=axis, keepdims=True),))


def pick(x, idx: np.ndarray) -> Tensor:
    """``x[..., idx]`` per leading row: x (B, K), idx (B,) -> (B,)."""
    x = as_tensor(x)
    idx = np.asarray(idx, dtype=np.int64)
    if x.ndim != 2 or idx.shape != (x.shape[0],):
        raise ShapeError("pick", x.shape, idx.shape)
    rows = np.arange(x.shape[0])
    out = Tensor(x.data[rows, idx])

    def bw(g):
        full = np.zeros(x.shape)
        full[rows, idx] = g
        return (full,)

    return _record("pick", (x,), out, bw)


def cosine(a, b) -> Tensor:
    """Cosine similarity along the last axis; a zero vector scores 0."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError("cosine", a.shape, b.shape)
    na = np.sqrt((a.data ** 2).sum(axis=-1, keepdims=True))
    nb = np.sqrt((b.data ** 2).sum(axis=-1, keepdims=True))
    ok = (na > 0) & (nb > 0)
    ia = np.where(ok, 1.0 / np.where(na > 0, na, 1.0), 0.0)
    ib = np.where(ok, 1.0 / np.where(nb > 0, nb, 1.0), 0.0)
    ua, ub = a.data * ia, b.data * ib
    c = (ua * ub).sum(axis=-1, keepdims=True)
    out = Tensor(c[..., 0])

    def bw(g):
        g = g[..., None]
        return g * (ub - c * ua) * ia, g * (ua - c * ub) * ib

    return _record("cosine", (a, b), out, bw)


def getitem(x, key) -> Tensor:
    x = as_tensor(x)
    out = Tensor(x.data[key])

    def bw(g):
        full = np.zeros(x.shape)
        full[key] = g
        return (full,)

    return _record("getitem", (x,), out, bw)


def cosine_matrix(x) -> Tensor:
    """Pairwise cosine similarities of the rows of ``x`` (..., N, D) -> (..., N, N).

    Rows with zero norm have similarity 0 with everything, themselves included.
    """
    x = as_tensor(x)
    norms = np.sqrt((x.data ** 2).sum(axis=-1, keepdims=True))  # ..., N, 1
    nz = norms > 0
    inv = np.where(nz, 1.0 / np.where(nz, norms, 1.0), 0.0)
    u = x.data * inv  # unit rows (zero rows stay zero)
    out = Tensor(np.matmul(u, np.swapaxes(u, -1, -2)))

    def bw(g):
        gs = g + np.swapaxes(g, -1, -2)
        gu = np.matmul(gs, u)  # dL/du
        # d u / d x = (I - u u^T) / |x|
        proj = gu - (gu * u).sum(axis=-1, keepdims=True) * u
        return (proj * inv,)

    return _record("cosine_matrix", (x,), out, bw)


# ---------------------------------------------------------------------------
# differentiation and optimisation


def backward(loss: Tensor, tape: Tape | None = None) -> None:
    """Accumulate d(loss)/d(param) into ``param.grad`` for every reachable Param."""
    tape = tape if tape is not None else active_tape()
    if tape is None:
        raise TapeError("backward requires the tape the loss was recorded on")
    if tape.consumed:
        raise TapeError("backward already ran on this tape")
    if loss.data.size != 1 or loss.ndim > 1:
        raise TapeError(f"loss must be a scalar, got shape {loss.shape}")
    tape.consumed = True
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.output), None)
        if g is None or node.backward is None:
            continue
        for inp, gi in zip(node.inputs, node.backward(g)):
            if not (isinstance(inp, Tensor) and inp.requires_grad):
                continue
            if isinstance(inp, Param):
                inp.grad += gi
            elif id(inp) in grads:
                grads[id(inp)] = grads[id(inp)] + gi
            else:
                grads[id(inp)] = gi
    # a loss that is itself a Param
    if isinstance(loss, Param) and id(loss) in grads:
        loss.grad += grads[id(loss)]


def sgd_step(params: Iterable[Param], learning_rate: float) -> None:
    """``p <- p - lr * grad`` for trainable params, then zero every grad."""
    if learning_rate < 0:
        raise ValueError("learning_rate must be nonnegative")
    for p in params:
        if p.trainable and learning_rate != 0.0:
            g = p.grad
            if p.frozen_rows:
                g = g.copy()
                g[list(p.frozen_rows)] = 0.0
            p.data -= learning_rate * g
        p.zero_grad()


@dataclass
class GradCheckReport:
    max_rel_error: dict
    tol: float

    @property
    def passed(self) -> bool:
        return all(e <= self.tol for e in self.max_rel_error.values())

    @property
    def worst(self) -> tuple[str, float]:
        name = builtins.max(self.max_rel_error, key=self.max_rel_error.get)
        return name, self.max_rel_error[name]


def relative_error(g_ad: np.ndarray, g_fd: np.ndarray) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(g_ad), np.abs(g_fd)), 1e-8)
    return np.abs(g_ad - g_fd) / denom


def finite_difference_check(params: Sequence[Param], loss_fn: Callable[[], Tensor],
                            step: float = 1e-4, tol: float = 1e-3) -> GradCheckReport:
    """Compare reverse-mode gradients of ``loss_fn`` with central differences.

    ``loss_fn`` must be deterministic (dropout off or reseeded on each call)
    and build its computation under whatever tape is active.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    params = list(params)
    for p in params:
        p.zero_grad()
    with Tape() as tape:
        loss = loss_fn()
    if not np.isfinite(loss.data).all():
        raise FloatingPointError("loss is not finite")
    backward(loss, tape)
    report = {}
    for p in params:
        g_ad = p.grad.copy()
        g_fd = np.zeros_like(g_ad)
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = float(loss_fn().data)
            flat[i] = orig - step
            down = float(loss_fn().data)
            flat[i] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise FloatingPointError(f"non-finite loss while perturbing {p.name}[{i}]")
            g_fd.reshape(-1)[i] = (up - down) / (2 * step)
        report[p.name] = float(relative_error(g_ad, g_fd).max()) if g_ad.size else 0.0
        p.zero_grad()
    return GradCheckReport(report, tol)
