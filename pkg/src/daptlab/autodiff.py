"""Dense float tensors plus taped reverse-mode differentiation.

All primitives take an optional ``tape``; when one is passed, a backward
closure is appended so that ``backward(tape, loss)`` can replay adjoints in
reverse order. Forward values are float32 by default, but float64 arrays are
kept as-is so the same graph can be re-run at higher precision by oracles.

Non-finite values are treated as an error state. NaN/Inf propagates to the
loss, so enforcement lives at the loss/optimizer boundary (see pretrain and
optim) instead of an isfinite scan after every primitive.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np
from scipy.special import erf

# Label value that cross_entropy_masked skips.
IGNORE_INDEX = -100

_FLOAT_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))


class Tensor:
    """A dense row-major float array with a lazily allocated gradient slot."""

    __slots__ = ("data", "grad")

    def __init__(self, data):
        arr = np.asarray(data)
        if arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(np.float32)
        if not arr.flags.c_contiguous:  # ascontiguousarray would promote 0-d
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def zero_grad(self) -> None:
        self.grad = None

    def copy(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"


class Tape:
    """Ordered record of primitive operations, replayed in reverse by backward()."""

    def __init__(self):
        self._ops: list[Callable[[], None]] = []

    def record(self, backward_fn: Callable[[], None]) -> None:
        self._ops.append(backward_fn)

    def __len__(self) -> int:
        return len(self._ops)


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    # Gradients keep the tensor's dtype; copy so later in-place adds own the buffer.
    if t.grad is None:
        t.grad = np.array(g, dtype=t.data.dtype, copy=True)
    else:
        t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape``, inverting numpy broadcasting."""
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def add(a: Tensor, b: Tensor, tape: Tape | None = None) -> Tensor:
    """Elementwise a + b with numpy broadcasting."""
    out = Tensor(a.data + b.data)
    if tape is not None:
        def bwd():
            g = out.grad
            if g is None:
                return
            _accumulate(a, _unbroadcast(g, a.data.shape))
            _accumulate(b, _unbroadcast(g, b.data.shape))
        tape.record(bwd)
    return out


def add_const(a: Tensor, c, tape: Tape | None = None) -> Tensor:
    """a + c for a constant array/scalar; no gradient flows into c."""
    out = Tensor(a.data + c)
    if tape is not None:
        def bwd():
            g = out.grad
            if g is None:
                return
            _accumulate(a, _unbroadcast(g, a.data.shape))
        tape.record(bwd)
    return out


def mul(a: Tensor, b: Tensor, tape: Tape | None = None) -> Tensor:
    """Elementwise a * b with numpy broadcasting."""
    out = Tensor(a.data * b.data)
    if tape is not None:
        def bwd():
            g = out.grad
            if g is None:
                return
            _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
            _accumulate(b, _unbroadcast(g * a.data, b.data.shape))
        tape.record(bwd)
    return out


def scale(a: Tensor, c: float, tape: Tape | None = None) -> Tensor:
    """a * c for a python scalar constant."""
    out = Tensor(a.data * a.data.dtype.type(c))
    if tape is not None:
        def bwd():
            g = out.grad
            if g is None:
                return
            _accumulate(a, g * a.data.dtype.type(c))
        tape.record(bwd)
    return out


def matmul(a: Tensor, b: Tensor, tape: Tape | None = None) -> Tensor:
    """Matrix product over the last two axes.

    Supported shapes: [.., m, k] x [k, n] (shared weight) and
    [d0.., m, k] x [d0.., k, n] (batched, identical leading dims).
    """
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ValueError(f"matmul needs rank >= 2 operands, got {a.shape} x {b.shape}")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ValueError(f"matmul inner extents differ: {a.shape} x {b.shape}")
    if b.data.ndim > 2 and a.data.shape[:-2] != b.data.shape[:-2]:
        raise ValueError(f"matmul leading extents differ: {a.shape} x {b.shape}")
    out = Tensor(a.data @ b.data)
    if tape is not None:
        def bwd():
            g = out.grad
            if g is None:
                return
            if b.data.ndim == 2:
                _accumulate(a, g @ b.data.T)
                k = a.data.shape[-1]
                n = b.data.shape[-1]
                _accumulate(b, a.data.reshape(-1, k).T @ g.reshape(-1, n))
            else:
                _accumulate(a, g @ np.swapaxes(b.data, -1, -2))
                _accumulate(b, np.swapaxes(a.data, -1, -2) @ g)
        tape.record(bwd)
    return out


def transpose(a: Tensor, axes: tuple[int, ...], tape: Tape | None = None) -> Tensor:
    out = Tensor(np.transpose(a.data, axes))
    if tape is not None:
        inverse = tuple(np.argsort(axes))
        def bwd():
            g = out.grad
            if g is None:
                return
            _accumulate(a, np.transpose(g, inverse))
        tape.record(bwd)
    return out


def reshape(a: Tensor, shape: tuple[int, ...], tape: Tape | None = None) -> Tensor:
    out = Tensor(a.data.reshape(shape))
    if tape is not None:
        def bwd():
            g = out.grad
            if g is None:
                return
            _accumulate(a, g.reshape(a.data.shape))
        tape.record(bwd)
    return out


def gather_rows(table: Tensor, ids: np.ndarray, tape: Tape | None = None) -> Tensor:
    """Row lookup table[ids]; ids is an integer array of any shape."""
    ids = np.asarray(ids)
    if not np.issubdtype(ids.dtype, np.integer):
        raise ValueError("gather_rows ids must be integers")
    if ids.size and (ids.min() < 0 or ids.max() >= table.data.shape[0]):
        raise ValueError(f"gather_rows id out of range for table of {table.data.shape[0]} rows")
    out = Tensor(table.data[ids])
    if tape is not None:
        def bwd():
            g = out.grad
            if g is None:
                return
            if table.grad is None:
                table.grad = np.zeros_like(table.data)
            np.add.at(table.grad, ids, g)
        tape.record(bwd)
    return out


def select_position(a: Tensor, pos: int, tape: Tape | None = None) -> Tensor:
    """Slice position ``pos`` from axis -2: [.., S, H] -> [.., H]."""
    if not -a.data.shape[-2] <= pos < a.data.shape[-2]:
        raise ValueError(f"position {pos} out of range for shape {a.shape}")
    out = Tensor(a.data[..., pos, :])
    if tape is not None:
        def bwd():
            g = out.grad
            if g is None:
                return
            if a.grad is None:
                a.grad = np.zeros_like(a.data)
            a.grad[..., pos, :] += g
        tape.record(bwd)
    return out


def softmax(a: Tensor, axis: int = -1, tape: Tape | None = None) -> Tensor:
    """Numerically stable softmax along ``axis`` (max-subtracted)."""
    if not -a.data.ndim <= axis < a.data.ndim:
        raise ValueError(f"softmax axis {axis} invalid for shape {a.shape}")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(p)
    if tape is not None:
        def bwd():
            g = out.grad
            if g is None:
                return
            inner = (g * p).sum(axis=axis, keepdims=True)
            _accumulate(a, p * (g - inner))
        tape.record(bwd)
    return out


def layer_norm(a: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-12,
               tape: Tape | None = None) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then scale and shift."""
    h = a.data.shape[-1]
    if h == 0:
        raise ValueError("layer_norm over a zero-length axis")
    if gamma.data.shape != (h,) or beta.data.shape != (h,):
        raise ValueError(f"layer_norm scale/shift must have shape ({h},), "
                         f"got {gamma.shape} and {beta.shape}")
    mu = a.data.mean(axis=-1, keepdims=True)
    var = ((a.data - mu) ** 2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + a.data.dtype.type(eps))
    xhat = (a.data - mu) * inv
    out = Tensor(xhat * gamma.data + beta.data)
    if tape is not None:
        def bwd():
            g = out.grad
            if g is None:
                return
            lead = tuple(range(g.ndim - 1))
            _accumulate(gamma, (g * xhat).sum(axis=lead))
            _accumulate(beta, g.sum(axis=lead))
            gx = g * gamma.data
            term = gx - gx.mean(axis=-1, keepdims=True) \
                - xhat * (gx * xhat).mean(axis=-1, keepdims=True)
            _accumulate(a, inv * term)
        tape.record(bwd)
    return out


def gelu(a: Tensor, tape: Tape | None = None) -> Tensor:
    """Exact GELU: 0.5 * x * (1 + erf(x / sqrt(2)))."""
    x = a.data
    cdf = 0.5 * (1.0 + erf(x / np.sqrt(x.dtype.type(2.0))))
    out = Tensor(x * cdf)
    if tape is not None:
        def bwd():
            g = out.grad
            if g is None:
                return
            pdf = np.exp(-0.5 * x * x) / x.dtype.type(math.sqrt(2.0 * math.pi))
            _accumulate(a, g * (cdf + x * pdf))
        tape.record(bwd)
    return out


def dropout(a: Tensor, p: float, rng: np.random.Generator,
            tape: Tape | None = None) -> Tensor:
    """Inverted dropout; call only on the training path."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {p}")
    if p == 0.0:
        return a
    keep = (rng.random(a.data.shape) >= p).astype(a.data.dtype)
    factor = keep / a.data.dtype.type(1.0 - p)
    out = Tensor(a.data * factor)
    if tape is not None:
        def bwd():
            g = out.grad
            if g is None:
                return
            _accumulate(a, g * factor)
        tape.record(bwd)
    return out


def tsum(a: Tensor, tape: Tape | None = None) -> Tensor:
    """Sum of all entries, as a scalar tensor."""
    out = Tensor(a.data.sum())
    if tape is not None:
        def bwd():
            g = out.grad
            if g is None:
                return
            _accumulate(a, np.broadcast_to(g, a.data.shape))
        tape.record(bwd)
    return out


def cross_entropy_masked(logits: Tensor, labels: np.ndarray,
                         tape: Tape | None = None) -> Tensor:
    """Mean cross-entropy over rows whose label is not IGNORE_INDEX.

    logits: [positions, classes]; labels: [positions] ints. Raises if every
    position is ignored or a non-ignored label is out of range.
    """
    if logits.data.ndim != 2:
        raise ValueError(f"cross_entropy_masked expects 2-d logits, got {logits.shape}")
    labels = np.asarray(labels)
    if labels.shape != (logits.data.shape[0],):
        raise ValueError(f"labels shape {labels.shape} does not match logits rows "
                         f"{logits.data.shape[0]}")
    valid = np.nonzero(labels != IGNORE_INDEX)[0]
    if valid.size == 0:
        raise ValueError("cross_entropy_masked: all positions ignored")
    picked = labels[valid]
    if picked.min() < 0 or picked.max() >= logits.data.shape[1]:
        raise ValueError("cross_entropy_masked: label out of range")

    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - lse
    n = valid.size
    loss = -logp[valid, picked].sum() / logits.data.dtype.type(n)
    out = Tensor(np.asarray(loss, dtype=logits.data.dtype))
    if tape is not None:
        def bwd():
            g = out.grad
            if g is None:
                return
            gl = np.zeros_like(logits.data)
            gl[valid] = np.exp(logp[valid]) * (g / n)
            gl[valid, picked] -= g / logits.data.dtype.type(n)
            _accumulate(logits, gl)
        tape.record(bwd)
    return out


def backward(tape: Tape, loss: Tensor) -> None:
    """Seed d(loss)/d(loss)=1 and replay the tape in reverse.

    Adjoints accumulate into each participating tensor's ``.grad``; a tensor
    used several times (e.g. a tied embedding table) ends up with the sum of
    all its path contributions.
    """
    if loss.data.shape != ():
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    loss.grad = np.ones((), dtype=loss.data.dtype)
    for fn in reversed(tape._ops):
        fn()


def zero_grads(params) -> None:
    """Clear gradients on an iterable (or dict) of tensors."""
    tensors = params.values() if isinstance(params, dict) else params
    for t in tensors:
        t.zero_grad()
