"""Reverse-mode automatic differentiation on dense float64 arrays.

A Tape records primitive operations in execution order (which is already a
topological order); backward walks it once in reverse and produces a gradient
for every reachable leaf. All storage is numpy float64.

Layout and reproducibility notes:

* Activations are channels-last, shape (batch, time, joint, channel).
* Channel contractions flatten to (rows, C) and multiply by a C-contiguous
  (C_in, C_out) matrix. On the pinned BLAS, per-row results are then bitwise
  independent of the row count (for >= 2 rows; 1-row inputs are padded with a
  zero row and sliced back). This is what makes decoding a single frame
  reproduce the batch-decoded frame exactly. Transposed weight views must not
  reach the BLAS call: they change kernel dispatch and break that guarantee.
* Convolutions pack all taps into one (rows, ks*C_in) @ (ks*C_in, C_out)
  product, so a width-1 kernel is exactly the contraction above and inherits
  its row-count stability.
* Backward never returns views of cached arrays, so repeated backward passes
  over one tape are bitwise identical.
"""

import threading

import numpy as np

from .errors import NumericError

# When enabled, every op output is checked for NaN/Inf.
DEBUG_CHECKS = False

_state = threading.local()


def _active_tape():
    return getattr(_state, "tape", None)


class Tensor:
    """Dense float64 array plus autodiff bookkeeping. Treated as immutable."""

    __slots__ = ("data", "requires_grad", "name", "grad", "_is_leaf")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.name = name
        self.grad = None
        self._is_leaf = True

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}, name={self.name!r})"

    # Small operator surface for readable loss composition.
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __neg__(self):
        return neg(self)

    def sum(self, axis=None):
        return reduce_sum(self, axis=axis)

    def mean(self, axis=None):
        return reduce_mean(self, axis=axis)

    def reshape(self, shape):
        return reshape(self, shape)


def parameter(name, data):
    """Leaf tensor that accumulates gradients under the given path name."""
    return Tensor(data, requires_grad=True, name=name)


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


class Tape:
    """Ordered record of executed ops; one active tape per thread."""

    def __init__(self):
        self._nodes = []
        self._produced = set()

    def __enter__(self):
        if _active_tape() is not None:
            raise RuntimeError("a tape is already active on this thread")
        _state.tape = self
        return self

    def __exit__(self, exc_type, exc, tb):
        _state.tape = None
        return False

    def __len__(self):
        return len(self._nodes)


def _emit(out_data, inputs, backward_fn):
    """Wrap op output; record on the active tape when gradients are needed."""
    if DEBUG_CHECKS and not np.all(np.isfinite(out_data)):
        raise NumericError("non-finite value produced by a forward op")
    out = Tensor(out_data)
    out._is_leaf = False
    tape = _active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape._nodes.append((out, inputs, backward_fn))
        tape._produced.add(id(out))
    return out


def backward(tape, loss):
    """Gradients of scalar loss w.r.t. every requires_grad leaf on the tape.

    Returns a map keyed by parameter name for named leaves; every reachable
    leaf also gets its .grad set (zeros if the loss does not depend on it).
    """
    if not isinstance(loss, Tensor):
        raise ValueError("loss must be a Tensor")
    if loss.data.shape != ():
        raise ValueError("loss must be a scalar")
    if id(loss) not in tape._produced and not loss._is_leaf:
        raise ValueError("loss was not recorded on this tape")

    grads = {id(loss): np.ones(())}
    leaves = {}
    for out, inputs, backward_fn in reversed(tape._nodes):
        for t in inputs:
            if t.requires_grad and t._is_leaf:
                leaves[id(t)] = t
        g = grads.pop(id(out), None)
        if g is None:
            continue
        for t, gi in zip(inputs, backward_fn(g)):
            if gi is None or not t.requires_grad:
                continue
            have = grads.get(id(t))
            grads[id(t)] = gi if have is None else have + gi

    if loss._is_leaf and loss.requires_grad:
        leaves[id(loss)] = loss

    named = {}
    for tid, t in leaves.items():
        g = grads.get(tid)
        t.grad = np.zeros_like(t.data) if g is None else np.asarray(g, dtype=np.float64)
        if g is not None and t.grad.shape != t.data.shape:
            t.grad = t.grad.reshape(t.data.shape)
        if t.name is not None:
            named[t.name] = t.grad
    return named


# ------------------------------------------------------------ helpers


def _unbroadcast(g, shape):
    """Sum gradient over axes that numpy broadcasting expanded."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _contiguous(a):
    return a if a.flags.c_contiguous else np.ascontiguousarray(a)


def _scratch(slot, count):
    """Reusable flat float64 buffer; avoids page-fault churn on big temporaries.

    Callers own the returned view only until the next request for the same
    slot, so nothing that escapes an op (outputs, gradients) may alias it.
    """
    store = getattr(_state, "scratch", None)
    if store is None:
        store = _state.scratch = {}
    buf = store.get(slot)
    if buf is None or buf.size < count:
        buf = store[slot] = np.empty(count)
    return buf[:count]


def _rows_matmul(x2, w):
    """(rows, k) @ (k, n) with bitwise row-count stability; w must be C-contiguous."""
    if x2.shape[0] == 1:
        padded = np.concatenate([x2, np.zeros((1, x2.shape[1]))], axis=0)
        return (padded @ w)[:1]
    return x2 @ w


# ------------------------------------------------------------ primitives


def add(a, b):
    out = a.data + b.data

    def back(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _emit(out, (a, b), back)


def sub(a, b):
    out = a.data - b.data

    def back(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _emit(out, (a, b), back)


def mul(a, b):
    ad, bd = a.data, b.data
    out = ad * bd

    def back(g):
        return _unbroadcast(g * bd, a.shape), _unbroadcast(g * ad, b.shape)

    return _emit(out, (a, b), back)


def neg(a):
    def back(g):
        return (-g,)

    return _emit(-a.data, (a,), back)


def matmul(a, b):
    """Matrix product. Supports (..., k) @ (k, n) and (j, j) @ (..., j, n)."""
    ad, bd = a.data, b.data
    if bd.ndim == 2 and ad.ndim >= 2:
        # channel contraction over the last axis, single contiguous gemm
        lead = ad.shape[:-1]
        k = ad.shape[-1]
        x2 = _contiguous(ad.reshape(-1, k))
        w = _contiguous(bd)
        out = _rows_matmul(x2, w).reshape(lead + (bd.shape[1],))

        def back(g):
            g2 = _contiguous(g.reshape(-1, bd.shape[1]))
            # copying the small transposed weight keeps the big gemm on the
            # fast contiguous path
            ga = (g2 @ np.ascontiguousarray(bd.T)).reshape(ad.shape)
            gb = x2.T @ g2
            return ga, gb

        return _emit(out, (a, b), back)

    if ad.ndim == 2 and bd.ndim > 2:
        # fixed matrix applied to stacked (j, n) slices, one gemm per slice
        out = np.matmul(ad, bd)

        def back(g):
            ga = np.matmul(g, np.swapaxes(bd, -1, -2))
            ga = ga.sum(axis=tuple(range(ga.ndim - 2)))
            gb = np.matmul(ad.T, g)
            return ga, gb

        return _emit(out, (a, b), back)

    raise ValueError(f"unsupported matmul operands {ad.shape} @ {bd.shape}")


def conv1d(x, w, bias):
    """1-D convolution along the time axis with zero same-padding.

    x: (B, T, J, C_in); w: (C_out, C_in, ks) with ks odd; bias: (C_out,) or None.
    Weights are shared across joints. All taps are packed into a single
    (rows, ks*C_in) @ (ks*C_in, C_out) product; the patch matrix is kept
    alive for backward, trading memory for a second strided copy.
    """
    xd, wd = x.data, w.data
    b_, t_, j_, c_in = xd.shape
    c_out, c_in_w, ks = wd.shape
    if c_in_w != c_in:
        raise ValueError(f"conv1d channel mismatch: input {c_in}, kernel {c_in_w}")
    if ks % 2 == 0:
        raise ValueError("conv1d kernel size must be odd for same padding")
    pad = (ks - 1) // 2
    kc = ks * c_in
    w2 = np.ascontiguousarray(wd.transpose(2, 1, 0).reshape(kc, c_out))

    if pad:
        xp = np.empty((b_, t_ + 2 * pad, j_, c_in))
        xp[:, :pad] = 0.0
        xp[:, pad + t_:] = 0.0
        xp[:, pad:pad + t_] = xd
    else:
        xp = xd

    if ks == 1:
        patches = _contiguous(xp).reshape(-1, c_in)
    else:
        patches = np.empty((b_, t_, j_, kc))
        for k in range(ks):
            patches[..., k * c_in:(k + 1) * c_in] = xp[:, k:k + t_]
        patches = patches.reshape(-1, kc)

    out = _rows_matmul(patches, w2).reshape(b_, t_, j_, c_out)
    if bias is not None:
        out += bias.data

    def back(g):
        g2 = _contiguous(g.reshape(-1, c_out))
        gw = np.ascontiguousarray(
            (patches.T @ g2).reshape(ks, c_in, c_out).transpose(2, 1, 0))
        w2t = np.ascontiguousarray(w2.T)
        if ks == 1:
            gx = (g2 @ w2t).reshape(b_, t_, j_, c_in)
        else:
            gp = _scratch("conv.gradpatch", g2.shape[0] * kc).reshape(-1, kc)
            np.matmul(g2, w2t, out=gp)
            gp4 = gp.reshape(b_, t_, j_, kc)
            tp = t_ + 2 * pad
            gxp = _scratch("conv.gxp", b_ * tp * j_ * c_in).reshape(b_, tp, j_, c_in)
            gxp.fill(0.0)
            for k in range(ks):
                gxp[:, k:k + t_] += gp4[..., k * c_in:(k + 1) * c_in]
            gx = gxp[:, pad:pad + t_].copy()
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 1, 2))

    inputs = (x, w) if bias is None else (x, w, bias)
    return _emit(out, inputs, back)


def batchnorm_train(x, scale, shift, running_mean=None, running_var=None,
                    momentum=0.1, eps=1e-5):
    """Batch normalization over all axes but the last, using batch statistics.

    Per-channel scale and shift are learnable. When running stats are given
    they are updated in place (biased variance); they do not affect the output.
    """
    xd = x.data
    c = xd.shape[-1]
    n = xd.size // c
    x2 = _contiguous(xd).reshape(-1, c)
    mu = x2.mean(axis=0)
    xh2 = x2 - mu
    var = np.einsum("ij,ij->j", xh2, xh2) / n
    inv = 1.0 / np.sqrt(var + eps)
    np.multiply(xh2, inv, out=xh2)
    out = xh2 * scale.data
    out += shift.data
    out = out.reshape(xd.shape)

    if running_mean is not None:
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
    if running_var is not None:
        running_var *= 1.0 - momentum
        running_var += momentum * var

    def back(g):
        g2 = _contiguous(g).reshape(-1, c)
        gshift = g2.sum(axis=0)
        gscale = np.einsum("ij,ij->j", g2, xh2)
        # d var and d mean collapse to per-channel scalars because the
        # centered activations sum to zero
        gvar = -0.5 * scale.data * gscale * inv * inv
        gmu = -inv * scale.data * gshift
        gx = g2 * (scale.data * inv)
        gx += xh2 * (2.0 * gvar / (n * inv))
        gx += gmu / n
        return gx.reshape(xd.shape), gscale, gshift

    return _emit(out, (x, scale, shift), back)


def batchnorm_eval(x, scale, shift, running_mean, running_var, eps=1e-5):
    """Batch normalization with frozen running statistics (per-sample, per-frame)."""
    xd = x.data
    inv = 1.0 / np.sqrt(running_var + eps)
    out = xd * (inv * scale.data)
    out += shift.data - running_mean * inv * scale.data

    def back(g):
        gx = g * (scale.data * inv)
        xh = (xd - running_mean) * inv
        gscale = (g * xh).sum(axis=tuple(range(g.ndim - 1)))
        gshift = g.sum(axis=tuple(range(g.ndim - 1)))
        return gx, gscale, gshift

    return _emit(out, (x, scale, shift), back)


def leaky_relu(x, slope=0.01):
    # max(x, slope*x) equals the leaky rectifier for slopes below one and
    # needs a single temporary
    xd = x.data
    out = xd * slope
    np.maximum(xd, out, out=out)

    def back(g):
        return (np.where(xd > 0, g, slope * g),)

    return _emit(out, (x,), back)


def dropout(x, mask, rate):
    """Inverted dropout with an externally supplied 0/1 mask."""
    keep = 1.0 - rate
    out = x.data * mask / keep

    def back(g):
        return (g * mask / keep,)

    return _emit(out, (x,), back)


def softmax(x):
    """Softmax along the last axis, numerically stabilized."""
    xd = x.data
    e = np.exp(xd - xd.max(axis=-1, keepdims=True))
    p = e / e.sum(axis=-1, keepdims=True)

    def back(g):
        inner = (g * p).sum(axis=-1, keepdims=True)
        return (p * (g - inner),)

    return _emit(p, (x,), back)


def log(x):
    xd = x.data

    def back(g):
        return (g / xd,)

    return _emit(np.log(xd), (x,), back)


def clip_floor(x, floor):
    xd = x.data
    passed = xd > floor

    def back(g):
        return (g * passed,)

    return _emit(np.maximum(xd, floor), (x,), back)


def absolute(x):
    xd = x.data
    sign = np.sign(xd)

    def back(g):
        return (g * sign,)

    return _emit(np.abs(xd), (x,), back)


def pick(x, indices):
    """Select one entry per row of a (B, C) tensor by integer label."""
    idx = np.asarray(indices)
    rows = np.arange(x.shape[0])
    out = x.data[rows, idx]

    def back(g):
        gx = np.zeros_like(x.data)
        gx[rows, idx] = g
        return (gx,)

    return _emit(out, (x,), back)


def reduce_sum(x, axis=None):
    xd = x.data
    out = xd.sum(axis=axis)

    def back(g):
        if axis is None:
            return (np.broadcast_to(g, xd.shape).copy(),)
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        ge = np.expand_dims(g, axes)
        return (np.broadcast_to(ge, xd.shape).copy(),)

    return _emit(out, (x,), back)


def reduce_mean(x, axis=None):
    xd = x.data
    out = xd.mean(axis=axis)
    if axis is None:
        count = xd.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = 1
        for ax in axes:
            count *= xd.shape[ax]

    def back(g):
        if axis is None:
            return (np.broadcast_to(g / count, xd.shape).copy(),)
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        ge = np.expand_dims(g / count, axes)
        return (np.broadcast_to(ge, xd.shape).copy(),)

    return _emit(out, (x,), back)


def reshape(x, shape):
    xd = x.data

    def back(g):
        return (g.reshape(xd.shape),)

    return _emit(xd.reshape(shape), (x,), back)


def transpose(x, axes):
    inverse = np.argsort(axes)

    def back(g):
        return (g.transpose(inverse).copy(),)

    return _emit(x.data.transpose(axes).copy(), (x,), back)


def broadcast_to(x, shape):
    xd = x.data

    def back(g):
        return (_unbroadcast(g, xd.shape),)

    return _emit(np.broadcast_to(xd, shape).copy(), (x,), back)


def concat(parts, axis):
    datas = [p.data for p in parts]
    sizes = [d.shape[axis] for d in datas]
    splits = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(piece.copy() for piece in np.split(g, splits, axis=axis))

    return _emit(np.concatenate(datas, axis=axis), tuple(parts), back)
