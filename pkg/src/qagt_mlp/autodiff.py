"""Small dense-tensor engine with tape-based reverse-mode differentiation.

Operations record themselves on the active :class:`Tape` only when one is
open and at least one input requires a gradient; outside a tape everything
runs as plain numpy, which is what inference uses.

    with Tape() as tape:
        loss = mse(matmul(x, w), y)
    tape.backward(loss)
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

_local = threading.local()


class NumericError(FloatingPointError):
    """A tensor operation produced NaN or Inf."""


class TapeError(RuntimeError):
    pass


def _active() -> Optional["Tape"]:
    stack = getattr(_local, "stack", None)
    return stack[-1] if stack else None


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name", "_tape")

    def __init__(self, data, requires_grad: bool = False, name: str = ""):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._tape: Optional[Tape] = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def zero_grad(self) -> None:
        self.grad = None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

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


@dataclass
class _Entry:
    out: Tensor
    parents: tuple
    backward: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


@dataclass
class Tape:
    entries: list = field(default_factory=list)
    consumed: bool = False

    def __enter__(self) -> "Tape":
        if not hasattr(_local, "stack"):
            _local.stack = []
        _local.stack.append(self)
        return self

    def __exit__(self, *exc):
        _local.stack.pop()
        return False

    def __len__(self):
        return len(self.entries)

    def backward(self, loss: Tensor) -> None:
        if loss.data.size != 1:
            raise TapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        if loss._tape is not self:
            raise TapeError("loss was not produced on this tape")
        if self.consumed:
            raise TapeError("tape already consumed by a previous backward call")
        self.consumed = True
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for entry in reversed(self.entries):
            g = grads.pop(id(entry.out), None)
            if g is None:
                continue
            for parent, pg in zip(entry.parents, entry.backward(g)):
                if pg is None or not isinstance(parent, Tensor) or not parent.requires_grad:
                    continue
                if parent._tape is self:
                    key = id(parent)
                    grads[key] = grads[key] + pg if key in grads else pg
                else:
                    parent.grad = pg.copy() if parent.grad is None else parent.grad + pg
        self.entries.clear()


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` of every leaf that requires it, using the loss's tape."""
    if loss._tape is None:
        raise TapeError("loss was not recorded on a tape")
    loss._tape.backward(loss)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data: np.ndarray, parents: tuple, fn) -> Tensor:
    if not np.all(np.isfinite(data)):
        raise NumericError("operation produced a non-finite value")
    out = Tensor(data)
    tape = _active()
    if tape is not None and any(isinstance(p, Tensor) and p.requires_grad for p in parents):
        if tape.consumed:
            raise TapeError("cannot record on a consumed tape")
        out.requires_grad = True
        out._tape = tape
        tape.entries.append(_Entry(out, parents, fn))
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# ---------------------------------------------------------------- arithmetic

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    sa, sb = a.shape, b.shape
    return _result(a.data + b.data, (a, b),
                   lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    sa, sb = a.shape, b.shape
    return _result(a.data - b.data, (a, b),
                   lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    ad, bd = a.data, b.data
    return _result(ad * bd, (a, b),
                   lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def matmul(a, b) -> Tensor:
    """Matrix product of 2-D tensors, or batched over equal leading dimensions."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim < 2 or a.data.ndim != b.data.ndim or a.shape[:-2] != b.shape[:-2] \
            or a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data

    def back(g):
        return (g @ np.swapaxes(bd, -1, -2) if a.requires_grad else None,
                np.swapaxes(ad, -1, -2) @ g if b.requires_grad else None)

    return _result(ad @ bd, (a, b), back)


def relu(x) -> Tensor:
    x = _as_tensor(x)
    pos = x.data > 0
    return _result(np.where(pos, x.data, 0.0), (x,), lambda g: (g * pos,))


def tanh(x) -> Tensor:
    x = _as_tensor(x)
    y = np.tanh(x.data)
    return _result(y, (x,), lambda g: (g * (1.0 - y * y),))


def total(x) -> Tensor:
    x = _as_tensor(x)
    shape = x.shape
    return _result(np.array(x.data.sum()), (x,), lambda g: (np.broadcast_to(g, shape).copy(),))


def mean(x) -> Tensor:
    x = _as_tensor(x)
    shape, n = x.shape, x.data.size
    return _result(np.array(x.data.mean()), (x,), lambda g: (np.full(shape, g / n),))


def mse(pred, target) -> Tensor:
    pred, target = _as_tensor(pred), _as_tensor(target)
    if pred.shape != target.shape:
        raise ValueError(f"mse shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred.data - target.data
    n = diff.size
    return _result(np.array(np.mean(diff * diff)), (pred, target),
                   lambda g: (2.0 * g * diff / n, -2.0 * g * diff / n))


# ---------------------------------------------------------------- structure

def reshape(x, shape) -> Tensor:
    x = _as_tensor(x)
    old = x.shape
    return _result(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def transpose(x, axes) -> Tensor:
    x = _as_tensor(x)
    inv = np.argsort(axes)
    return _result(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inv),))


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [_as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in ts]
    splits = np.cumsum(sizes)[:-1]
    return _result(np.concatenate([t.data for t in ts], axis=axis), tuple(ts),
                   lambda g: tuple(np.split(g, splits, axis=axis)))


def concat_rows(tensors: Sequence) -> Tensor:
    return concat(tensors, axis=0)


def concat_cols(tensors: Sequence) -> Tensor:
    return concat(tensors, axis=-1)


def gather_rows(x, rows) -> Tensor:
    x = _as_tensor(x)
    idx = np.asarray(rows, dtype=np.intp)
    shape = x.shape

    def back(g):
        out = np.zeros(shape)
        np.add.at(out, idx, g)
        return (out,)

    return _result(x.data[idx], (x,), back)


def sparse_matmul(rows, cols, vals, n_rows: int, x) -> Tensor:
    """A @ x for a constant sparse A given as coordinate triples."""
    x = _as_tensor(x)
    r = np.asarray(rows, dtype=np.intp)
    c = np.asarray(cols, dtype=np.intp)
    w = np.asarray(vals, dtype=float)[:, None]
    out = np.zeros((n_rows,) + x.shape[1:])
    np.add.at(out, r, w * x.data[c])

    def back(g):
        gx = np.zeros(x.shape)
        np.add.at(gx, c, w * g[r])
        return (gx,)

    return _result(out, (x,), back)


def mean_pool_rows(x, rows=None) -> Tensor:
    """Mean over a subset of rows of a 2-D tensor (all rows when ``rows`` is None)."""
    x = _as_tensor(x)
    n = x.shape[0]
    idx = np.arange(n) if rows is None else np.asarray(rows, dtype=np.intp)
    if idx.size == 0:
        raise ValueError("mean_pool_rows needs a nonempty row subset")
    k = idx.size

    def back(g):
        out = np.zeros(x.shape)
        np.add.at(out, idx, g / k)
        return (out,)

    return _result(x.data[idx].mean(axis=0), (x,), back)


# ---------------------------------------------------------------- normalisation

def masked_softmax(scores, mask=None) -> Tensor:
    """Softmax over the last axis restricted to ``mask``; fully masked rows give zeros."""
    s = _as_tensor(scores)
    x = s.data
    if mask is None:
        shifted = x - x.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
        y = e / e.sum(axis=-1, keepdims=True)
    else:
        m = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
        masked = np.where(m, x, -np.inf)
        top = masked.max(axis=-1, keepdims=True)
        top = np.where(np.isfinite(top), top, 0.0)
        e = np.exp(np.where(m, x - top, -np.inf))
        denom = e.sum(axis=-1, keepdims=True)
        y = np.divide(e, denom, out=np.zeros_like(e), where=denom > 0)

    def back(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _result(y, (s,), back)


def _softmax_inplace(x: np.ndarray, mask=None) -> np.ndarray:
    if mask is None:
        x -= x.max(axis=-1, keepdims=True)
        np.exp(x, out=x)
        x /= x.sum(axis=-1, keepdims=True)
        return x
    m = np.broadcast_to(mask, x.shape)
    x[~m] = -np.inf
    top = x.max(axis=-1, keepdims=True)
    top[~np.isfinite(top)] = 0.0
    x -= top
    np.exp(x, out=x)
    denom = x.sum(axis=-1, keepdims=True)
    denom[denom == 0.0] = 1.0
    x /= denom
    return x


def attention_scores(q, k, v, mask=None) -> Tensor:
    """softmax(q k^T / sqrt(d) | mask) v over (heads, nodes, dim) tensors.

    Fused for memory: only the attention weights are kept for backward.
    Fully masked rows attend to nothing and return zeros.
    """
    q, k, v = _as_tensor(q), _as_tensor(k), _as_tensor(v)
    if q.data.ndim != 3 or q.shape != k.shape or q.shape[:2] != v.shape[:2]:
        raise ValueError(f"attention shape mismatch: {q.shape}, {k.shape}, {v.shape}")
    scale = 1.0 / np.sqrt(q.shape[-1])
    qd, kd, vd = q.data, k.data, v.data
    w = qd @ np.swapaxes(kd, 1, 2)
    w *= scale
    w = _softmax_inplace(w, None if mask is None else np.asarray(mask, dtype=bool))

    def back(g):
        dv = np.swapaxes(w, 1, 2) @ g
        ds = g @ np.swapaxes(vd, 1, 2)
        ds -= (ds * w).sum(axis=-1, keepdims=True)
        ds *= w
        ds *= scale
        return ds @ kd, np.swapaxes(ds, 1, 2) @ qd, dv

    return _result(w @ vd, (q, k, v), back)


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    x, gamma, beta = _as_tensor(x), _as_tensor(gamma), _as_tensor(beta)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    gd = gamma.data

    def back(g):
        gx = g * gd
        dx = inv * (gx - gx.mean(axis=-1, keepdims=True)
                    - xhat * (gx * xhat).mean(axis=-1, keepdims=True))
        return (dx,
                _unbroadcast(g * xhat, gamma.shape),
                _unbroadcast(g, beta.shape))

    return _result(xhat * gd + beta.data, (x, gamma, beta), back)


# ---------------------------------------------------------------- optimiser

@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(params: Sequence[Tensor], grads: Sequence[Optional[np.ndarray]], state: AdamState) -> None:
    """One bias-corrected Adam update, in place."""
    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
    if len(state.m) != len(params):
        raise ValueError("optimizer state does not match parameter list")
    for p, g in zip(params, grads):
        if g is not None and not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {p.name or '?'}")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.data.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


class Adam:
    def __init__(self, params: Sequence[Tensor], lr: float = 1e-3,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.state = AdamState(lr=lr, beta1=betas[0], beta2=betas[1], eps=eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        adam_step(self.params, [p.grad for p in self.params], self.state)
