"""Small reverse-mode differentiation engine over numpy float64 arrays.

Values are wrapped in :class:`Var`.  Operations run eagerly; while a
:class:`GradTape` is active each operation appends one record to it, and
:func:`backward` walks the records in exact reverse order.  Recording order is
creation order, so reversing it is a valid reverse topological order.

Nothing here mutates its inputs.
"""

from __future__ import annotations

import threading
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

_state = threading.local()


def _tape_stack() -> list:
    stack = getattr(_state, "stack", None)
    if stack is None:
        stack = _state.stack = []
    return stack


class Var:
    """A float64 array that operations can record on a tape."""

    __slots__ = ("value", "name")
    __array_priority__ = 1000

    def __init__(self, value, name: str | None = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def item(self) -> float:
        if self.value.size != 1:
            raise ValueError(f"item() needs a single-element Var, got shape {self.shape}")
        return float(self.value.reshape(()))

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Var{label}(shape={self.shape})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        if isinstance(other, Var):
            raise TypeError("division by a Var is not supported")
        return mul(self, 1.0 / np.asarray(other, dtype=np.float64))

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        return take(self, idx)

    @property
    def T(self):
        return transpose(self)


class GradTape:
    """Context manager that records operations for one forward pass."""

    def __init__(self):
        self.records: list[tuple[Var, tuple, Callable]] = []

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc):
        stack = _tape_stack()
        if not stack or stack[-1] is not self:
            raise RuntimeError("tapes must be exited in LIFO order")
        stack.pop()
        return False

    def __len__(self):
        return len(self.records)


def _record(out: Var, inputs: tuple, backward_fn: Callable) -> Var:
    stack = _tape_stack()
    if stack and any(isinstance(x, Var) for x in inputs):
        stack[-1].records.append((out, inputs, backward_fn))
    return out


def backward(tape: GradTape, loss: Var, params: Mapping[str, Var] | Sequence[Var]) -> dict:
    """Gradients of scalar ``loss`` with respect to ``params``.

    Returns a dict keyed like ``params`` (names for a mapping, positions for a
    sequence).  Parameters the loss does not depend on get zero gradients.
    """
    if not isinstance(loss, Var):
        raise TypeError("loss must be a Var")
    if loss.value.size != 1:
        raise ValueError(f"loss must be scalar, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.value)}
    for out, inputs, fn in reversed(tape.records):
        g = grads.pop(id(out), None)
        if g is None:
            continue
        in_grads = fn(g)
        for x, gx in zip(inputs, in_grads):
            if gx is None or not isinstance(x, Var):
                continue
            key = id(x)
            if key in grads:
                grads[key] = grads[key] + gx
            else:
                grads[key] = gx
    items = params.items() if isinstance(params, Mapping) else enumerate(params)
    return {k: grads.get(id(v), np.zeros_like(v.value)) for k, v in items}


def _val(x) -> np.ndarray:
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=np.float64)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# --------------------------------------------------------------------------
# Elementwise


def add(a, b) -> Var:
    av, bv = _val(a), _val(b)
    out = Var(av + bv)
    return _record(out, (a, b), lambda g: (_unbroadcast(g, av.shape), _unbroadcast(g, bv.shape)))


def sub(a, b) -> Var:
    av, bv = _val(a), _val(b)
    out = Var(av - bv)
    return _record(out, (a, b), lambda g: (_unbroadcast(g, av.shape), _unbroadcast(-g, bv.shape)))


def mul(a, b) -> Var:
    av, bv = _val(a), _val(b)
    out = Var(av * bv)
    return _record(
        out, (a, b), lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape))
    )


def square(a) -> Var:
    av = _val(a)
    out = Var(av * av)
    return _record(out, (a,), lambda g: (2.0 * av * g,))


def abs_(a) -> Var:
    av = _val(a)
    out = Var(np.abs(av))
    return _record(out, (a,), lambda g: (np.sign(av) * g,))


def sigmoid_np(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-x))


def _gate_activations(z: np.ndarray, H: int) -> tuple[np.ndarray, np.ndarray]:
    """Sigmoid of the first 3H columns and tanh of the last H, from one exp."""
    # tanh(x) = 2 * sigmoid(2x) - 1
    zz = z.copy()
    zz[:, 3 * H :] *= 2.0
    with np.errstate(over="ignore"):
        r = 1.0 / (1.0 + np.exp(-zz))
    return r[:, : 3 * H], 2.0 * r[:, 3 * H :] - 1.0


def _tanh(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        return 2.0 / (1.0 + np.exp(-2.0 * x)) - 1.0


def sigmoid(a) -> Var:
    s = sigmoid_np(_val(a))
    out = Var(s)
    return _record(out, (a,), lambda g: (g * s * (1.0 - s),))


def tanh(a) -> Var:
    t = np.tanh(_val(a))
    out = Var(t)
    return _record(out, (a,), lambda g: (g * (1.0 - t * t),))


def relu(a) -> Var:
    av = _val(a)
    mask = av > 0
    out = Var(np.where(mask, av, 0.0))
    return _record(out, (a,), lambda g: (g * mask,))


def identity(a) -> Var:
    return a if isinstance(a, Var) else Var(a)


# --------------------------------------------------------------------------
# Linear algebra and reductions


def matmul(a, b) -> Var:
    av, bv = _val(a), _val(b)
    out = Var(av @ bv)

    def fn(g):
        if av.ndim == 1:
            ga = g @ bv.T
            gb = np.outer(av, g)
        elif bv.ndim == 1:
            ga = np.outer(g, bv)
            gb = av.T @ g
        else:
            ga = g @ bv.T
            gb = av.T @ g
        return ga, gb

    return _record(out, (a, b), fn)


def transpose(a) -> Var:
    out = Var(_val(a).T)
    return _record(out, (a,), lambda g: (g.T,))


def sum_(a, axis=None) -> Var:
    av = _val(a)
    out = Var(av.sum(axis=axis))

    def fn(g):
        if axis is None:
            return (np.broadcast_to(g, av.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), av.shape).copy(),)

    return _record(out, (a,), fn)


def mean(a, axis=None) -> Var:
    av = _val(a)
    n = av.size if axis is None else av.shape[axis]
    return mul(sum_(a, axis=axis), 1.0 / n)


def take(a, idx) -> Var:
    """Basic or integer-array indexing."""
    av = _val(a)
    out = Var(av[idx])

    basic = all(isinstance(i, (slice, int)) for i in (idx if isinstance(idx, tuple) else (idx,)))

    def fn(g):
        ga = np.zeros_like(av)
        if basic:
            ga[idx] = g
        else:
            np.add.at(ga, idx, g)
        return (ga,)

    return _record(out, (a,), fn)


def reshape(a, shape) -> Var:
    av = _val(a)
    out = Var(av.reshape(shape))
    return _record(out, (a,), lambda g: (g.reshape(av.shape),))


def concat(xs: Sequence, axis: int = 0) -> Var:
    vals = [_val(x) for x in xs]
    out = Var(np.concatenate(vals, axis=axis))
    bounds = np.cumsum([0] + [v.shape[axis] for v in vals])

    def fn(g):
        parts = []
        for i in range(len(vals)):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(bounds[i], bounds[i + 1])
            parts.append(g[tuple(sl)])
        return tuple(parts)

    return _record(out, tuple(xs), fn)


def stack(xs: Sequence, axis: int = 0) -> Var:
    vals = [_val(x) for x in xs]
    out = Var(np.stack(vals, axis=axis))
    return _record(
        out, tuple(xs), lambda g: tuple(np.take(g, i, axis=axis) for i in range(len(vals)))
    )


# --------------------------------------------------------------------------
# Fused recurrent cell


def lstm_step(x, state, w_input, w_hidden, bias, mask=None) -> Var:
    """One LSTM step on a batch.

    ``state`` is the ``(B, 2H)`` concatenation ``[h | c]``.  Gate columns are
    ordered (input, forget, output, candidate).  Rows where ``mask`` is 0 keep
    their previous state, which lets padded batches reproduce per-sequence
    results exactly.
    """
    xv, sv = _val(x), _val(state)
    wx, wh, b = _val(w_input), _val(w_hidden), _val(bias)
    H = wh.shape[0]
    h, c = sv[:, :H], sv[:, H:]
    z = xv @ wx + h @ wh + b
    sg = sigmoid_np(z[:, : 3 * H])
    i, f, o = sg[:, :H], sg[:, H : 2 * H], sg[:, 2 * H :]
    gg = np.tanh(z[:, 3 * H :])
    c_new = f * c + i * gg
    tc = np.tanh(c_new)
    h_new = o * tc
    if mask is not None:
        m = np.asarray(mask, dtype=np.float64).reshape(-1, 1)
        h_new = m * h_new + (1.0 - m) * h
        c_new = m * c_new + (1.0 - m) * c
    else:
        m = None
    out = Var(np.concatenate([h_new, c_new], axis=1))

    def fn(g):
        gh_out, gc_out = g[:, :H], g[:, H:]
        if m is not None:
            gh = m * gh_out
            gc_direct = m * gc_out
        else:
            gh = gh_out
            gc_direct = gc_out
        gc = gc_direct + gh * o * (1.0 - tc * tc)
        dz = np.concatenate(
            [
                gc * gg * i * (1.0 - i),
                gc * c * f * (1.0 - f),
                gh * tc * o * (1.0 - o),
                gc * i * (1.0 - gg * gg),
            ],
            axis=1,
        )
        gh_prev = dz @ wh.T
        gc_prev = gc * f
        if m is not None:
            gh_prev = gh_prev + (1.0 - m) * gh_out
            gc_prev = gc_prev + (1.0 - m) * gc_out
        g_state = np.concatenate([gh_prev, gc_prev], axis=1)
        g_x = dz @ wx.T if isinstance(x, Var) else None
        return g_x, g_state, xv.T @ dz, h.T @ dz, dz.sum(axis=0)

    return _record(out, (x, state, w_input, w_hidden, bias), fn)


def lstm_sequence(x, mask, w_input, w_hidden, bias) -> Var:
    """Whole-sequence LSTM from a zero state, differentiated by BPTT.

    ``x`` is ``(T, B, D)`` (constant input), ``mask`` ``(T, B)`` with 1 on
    valid steps.  Returns the hidden states ``(T, B, H)``; on padded steps a
    row repeats its last valid state.  Same gate layout as :func:`lstm_step`.
    """
    xv = np.asarray(x, dtype=np.float64)
    mv = np.asarray(mask, dtype=np.float64)
    wx, wh, b = _val(w_input), _val(w_hidden), _val(bias)
    T, B, D = xv.shape
    H = wh.shape[0]
    zx = (xv.reshape(T * B, D) @ wx).reshape(T, B, 4 * H) + b
    full = mv.all(axis=1)
    sg = np.empty((T, B, 3 * H))
    gg = np.empty((T, B, H))
    tc = np.empty((T, B, H))
    c_prev = np.empty((T, B, H))
    h_prev = np.empty((T, B, H))
    hs = np.empty((T, B, H))
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    for t in range(T):
        z = zx[t] + h @ wh
        s_t, g_t = _gate_activations(z, H)
        c_new = s_t[:, H : 2 * H] * c + s_t[:, :H] * g_t
        tc_t = _tanh(c_new)
        h_new = s_t[:, 2 * H :] * tc_t
        sg[t], gg[t], tc[t], c_prev[t], h_prev[t] = s_t, g_t, tc_t, c, h
        if full[t]:
            h, c = h_new, c_new
        else:
            m = mv[t][:, None]
            h = m * h_new + (1.0 - m) * h
            c = m * c_new + (1.0 - m) * c
        hs[t] = h
    out = Var(hs)

    def fn(g):
        dZ = np.empty((T, B, 4 * H))
        gh_next = np.zeros((B, H))
        gc_next = np.zeros((B, H))
        for t in range(T - 1, -1, -1):
            gh_out = g[t] + gh_next
            gc_out = gc_next
            i, f, o = sg[t, :, :H], sg[t, :, H : 2 * H], sg[t, :, 2 * H :]
            if full[t]:
                gh, gc_direct = gh_out, gc_out
            else:
                m = mv[t][:, None]
                gh, gc_direct = m * gh_out, m * gc_out
            gc = gc_direct + gh * o * (1.0 - tc[t] * tc[t])
            dz = dZ[t]
            dz[:, :H] = gc * gg[t] * i * (1.0 - i)
            dz[:, H : 2 * H] = gc * c_prev[t] * f * (1.0 - f)
            dz[:, 2 * H : 3 * H] = gh * tc[t] * o * (1.0 - o)
            dz[:, 3 * H :] = gc * i * (1.0 - gg[t] * gg[t])
            gh_next = dz @ wh.T
            gc_next = gc * f
            if not full[t]:
                gh_next = gh_next + (1.0 - m) * gh_out
                gc_next = gc_next + (1.0 - m) * gc_out
        flat = dZ.reshape(T * B, 4 * H)
        g_wx = xv.reshape(T * B, D).T @ flat
        g_wh = h_prev.reshape(T * B, H).T @ flat
        return g_wx, g_wh, flat.sum(axis=0)

    return _record(out, (w_input, w_hidden, bias), fn)


def as_vars(arrays: Mapping[str, np.ndarray]) -> dict[str, Var]:
    return {k: Var(v, name=k) for k, v in arrays.items()}


def values(vs: Iterable[Var]) -> list[np.ndarray]:
    return [v.value for v in vs]
