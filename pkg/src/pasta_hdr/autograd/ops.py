"""Differentiable operations on :class:`~pasta.autograd.tensor.Tensor`.

Every op computes its forward result with numpy and registers a closure that
maps the output gradient to input gradients. Loops run in a fixed order, so
results are bitwise reproducible.
"""

from __future__ import annotations

import functools
from typing import Optional, Sequence

import numpy as np
from scipy import special

from .tensor import Tensor, as_tensor, make_result

__all__ = [
    "add", "sub", "mul", "div", "neg", "matmul", "elementwise",
    "sigmoid", "relu", "gelu", "exp", "log", "sqrt", "abs", "clamp",
    "sum", "mean", "reshape", "transpose", "getitem", "concat", "pad", "roll",
    "conv2d", "layer_norm", "softmax", "gather", "window_attention",
    "attention_probs", "pixel_shuffle", "pixel_unshuffle", "upsample_nearest",
    "window_partition", "window_merge", "shifted_window_mask",
]


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    extra = grad.ndim - len(shape)
    axes = tuple(range(extra)) + tuple(
        extra + i for i, size in enumerate(shape) if size == 1 and grad.shape[extra + i] != 1
    )
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape) if extra or axes else grad


def _broadcast_shape(a: Tensor, b: Tensor, name: str) -> tuple:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ValueError(f"{name}: cannot broadcast shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------- arithmetic

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")
    return make_result(
        "add", a.data + b.data, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")
    return make_result(
        "sub", a.data - b.data, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")
    return make_result(
        "mul", a.data * b.data, (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "div")
    out = a.data / b.data

    def backward(g):
        ga = g / b.data
        return _unbroadcast(ga, a.shape), _unbroadcast(-ga * out, b.shape)

    return make_result("div", out, (a, b), backward)


def neg(a) -> Tensor:
    a = as_tensor(a)
    return make_result("neg", -a.data, (a,), lambda g: (-g,))


def matmul(a, b) -> Tensor:
    """Batched matrix product ``a @ b`` with broadcast leading dimensions."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul needs operands with at least two dimensions")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul: inner dimensions differ ({a.shape} @ {b.shape})")
    # A shared 2-D right operand (a Linear weight) folds every leading axis
    # into one GEMM instead of many small stacked ones.
    flat = b.ndim == 2
    k = a.shape[-1]
    if flat:
        out = (a.data.reshape(-1, k) @ b.data).reshape(a.shape[:-1] + (b.shape[-1],))
    else:
        out = np.matmul(a.data, b.data)

    def backward(g):
        ga = gb = None
        if flat:
            g2 = g.reshape(-1, g.shape[-1])
            if a.requires_grad:
                ga = (g2 @ b.data.T).reshape(a.shape)
            if b.requires_grad:
                gb = a.data.reshape(-1, k).T @ g2
            return ga, gb
        if a.requires_grad:
            ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape)
        if b.requires_grad:
            gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
        return ga, gb

    return make_result("matmul", out, (a, b), backward)


# ---------------------------------------------------------------- pointwise

def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    out = special.expit(x.data)
    return make_result("sigmoid", out, (x,), lambda g: (g * out * (1.0 - out),))


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    return make_result("relu", np.where(mask, x.data, 0).astype(x.dtype), (x,), lambda g: (g * mask,))


_SQRT_HALF = np.sqrt(0.5)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu(x) -> Tensor:
    """Exact (erf-based) GELU."""
    x = as_tensor(x)
    cdf = 0.5 * (1.0 + special.erf(x.data * _SQRT_HALF))
    out = x.data * cdf

    def backward(g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * x.data * x.data)
        return (g * (cdf + x.data * pdf),)

    return make_result("gelu", out.astype(x.dtype), (x,), backward)


def exp(x) -> Tensor:
    x = as_tensor(x)
    out = np.exp(x.data)
    return make_result("exp", out, (x,), lambda g: (g * out,))


def log(x) -> Tensor:
    x = as_tensor(x)
    return make_result("log", np.log(x.data), (x,), lambda g: (g / x.data,))


def sqrt(x) -> Tensor:
    x = as_tensor(x)
    out = np.sqrt(x.data)
    return make_result("sqrt", out, (x,), lambda g: (g * 0.5 / out,))


def abs(x) -> Tensor:  # noqa: A001 - mirrors numpy naming
    x = as_tensor(x)
    return make_result("abs", np.abs(x.data), (x,), lambda g: (g * np.sign(x.data),))


def clamp(x, lo: float, hi: float) -> Tensor:
    x = as_tensor(x)
    inside = (x.data >= lo) & (x.data <= hi)
    return make_result("clamp", np.clip(x.data, lo, hi), (x,), lambda g: (g * inside,))


_ELEMENTWISE = {
    "sigmoid": sigmoid,
    "gelu": gelu,
    "relu": relu,
    "mul": mul,
    "add": add,
    "sub": sub,
}


def elementwise(op: str, *operands) -> Tensor:
    """Dispatch by name to one of sigmoid, gelu, relu, mul, add, sub."""
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ValueError(f"unknown elementwise op {op!r}; expected one of {sorted(_ELEMENTWISE)}") from None
    return fn(*operands)


# ---------------------------------------------------------------- reductions

def _norm_axes(axis, ndim: int) -> tuple:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def sum(x, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    x = as_tensor(x)
    axes = _norm_axes(axis, x.ndim)
    # float64 accumulation keeps reductions exact enough to be order-insensitive
    out = np.sum(x.data, axis=axes, keepdims=keepdims, dtype=np.float64).astype(x.dtype)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape).astype(x.dtype),)

    return make_result("sum", np.asarray(out), (x,), backward)


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    axes = _norm_axes(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    out = np.mean(x.data, axis=axes, keepdims=keepdims, dtype=np.float64).astype(x.dtype)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, x.shape).astype(x.dtype),)

    return make_result("mean", np.asarray(out), (x,), backward)


# ---------------------------------------------------------------- shape ops

def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    out = x.data.reshape(shape)
    return make_result("reshape", out, (x,), lambda g: (g.reshape(x.shape),))


def transpose(x, axes=None) -> Tensor:
    x = as_tensor(x)
    if not axes:
        axes = tuple(reversed(range(x.ndim)))
    elif len(axes) == 1 and isinstance(axes[0], (tuple, list)):
        axes = tuple(axes[0])
    inverse = np.argsort(axes)
    return make_result(
        "transpose", np.transpose(x.data, axes), (x,),
        lambda g: (np.transpose(g, inverse),),
    )


def getitem(x, index) -> Tensor:
    """Basic (slice/int) indexing."""
    x = as_tensor(x)

    def backward(g):
        full = np.zeros(x.shape, dtype=g.dtype)
        full[index] = g
        return (full,)

    return make_result("getitem", np.array(x.data[index]), (x,), backward)


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)
    axis = axis % tensors[0].ndim
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        return tuple(
            np.take(g, np.arange(lo, hi), axis=axis) for lo, hi in zip(bounds[:-1], bounds[1:])
        )

    return make_result("concat", np.concatenate([t.data for t in tensors], axis=axis), tensors, backward)


def _fold_reflect(g: np.ndarray, axis: int, before: int, after: int) -> np.ndarray:
    """Adjoint of reflect padding along one axis."""
    n = g.shape[axis] - before - after
    g = np.moveaxis(g, axis, -1)
    core = g[..., before:before + n].copy()
    if before:
        core[..., 1:before + 1] += g[..., :before][..., ::-1]
    if after:
        core[..., n - 1 - after:n - 1] += g[..., before + n:][..., ::-1]
    return np.moveaxis(core, -1, axis)


def pad(x, pad_width: Sequence[tuple], mode: str = "constant") -> Tensor:
    """Pad like :func:`numpy.pad`; ``mode`` is ``"constant"`` (zeros) or ``"reflect"``."""
    x = as_tensor(x)
    pad_width = [tuple(int(v) for v in p) for p in pad_width]
    if len(pad_width) != x.ndim:
        raise ValueError("pad_width needs one (before, after) pair per axis")
    if mode == "reflect":
        for (lo, hi), size in zip(pad_width, x.shape):
            if max(lo, hi) >= size:
                raise ValueError(f"reflect padding {max(lo, hi)} needs a dimension larger than {size}")
    elif mode != "constant":
        raise ValueError(f"unsupported pad mode {mode!r}")
    out = np.pad(x.data, pad_width, mode=mode)

    def backward(g):
        if mode == "constant":
            index = tuple(slice(lo, lo + n) for (lo, _), n in zip(pad_width, x.shape))
            return (g[index],)
        for axis, (lo, hi) in enumerate(pad_width):
            if lo or hi:
                g = _fold_reflect(g, axis, lo, hi)
        return (np.ascontiguousarray(g),)

    return make_result("pad", out, (x,), backward)


def roll(x, shift, axis) -> Tensor:
    x = as_tensor(x)
    neg_shift = tuple(-s for s in shift) if isinstance(shift, (tuple, list)) else -shift
    return make_result(
        "roll", np.roll(x.data, shift, axis=axis), (x,),
        lambda g: (np.roll(g, neg_shift, axis=axis),),
    )


def pixel_unshuffle(x, factor: int) -> Tensor:
    """Space-to-depth: ``[B, C, H, W] -> [B, C*f*f, H/f, W/f]``."""
    x = as_tensor(x)
    b, c, h, w = x.shape
    f = factor
    if h % f or w % f:
        raise ValueError(f"pixel_unshuffle: {h}x{w} not divisible by {f}")
    y = reshape(x, (b, c, h // f, f, w // f, f))
    y = transpose(y, (0, 1, 3, 5, 2, 4))
    return reshape(y, (b, c * f * f, h // f, w // f))


def pixel_shuffle(x, factor: int) -> Tensor:
    """Depth-to-space, the exact inverse of :func:`pixel_unshuffle`."""
    x = as_tensor(x)
    b, c, h, w = x.shape
    f = factor
    if c % (f * f):
        raise ValueError(f"pixel_shuffle: {c} channels not divisible by {f * f}")
    y = reshape(x, (b, c // (f * f), f, f, h, w))
    y = transpose(y, (0, 1, 4, 2, 5, 3))
    return reshape(y, (b, c // (f * f), h * f, w * f))


def upsample_nearest(x, factor: int) -> Tensor:
    x = as_tensor(x)
    f = factor
    out = np.repeat(np.repeat(x.data, f, axis=-2), f, axis=-1)

    def backward(g):
        shape = g.shape[:-2] + (g.shape[-2] // f, f, g.shape[-1] // f, f)
        return (g.reshape(shape).sum(axis=(-3, -1)),)

    return make_result("upsample_nearest", out, (x,), backward)


# ---------------------------------------------------------------- convolution

def conv2d(x, weight, bias=None, stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation with zero padding.

    Computed as one matrix product per kernel tap, accumulated in row-major
    tap order, which avoids materialising a full im2col buffer.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 4 or weight.ndim != 4:
        raise ValueError("conv2d expects input [B,Cin,H,W] and weight [Cout,Cin,kh,kw]")
    b, cin, h, w = x.shape
    cout, wcin, kh, kw = weight.shape
    if wcin != cin:
        raise ValueError(f"conv2d: input has {cin} channels but weight expects {wcin}")
    if stride <= 0:
        raise ValueError("conv2d: stride must be positive")
    if padding < 0:
        raise ValueError("conv2d: padding must be non-negative")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError("conv2d: kernel sizes must be odd")
    if h + 2 * padding < kh or w + 2 * padding < kw:
        raise ValueError("conv2d: kernel larger than padded input")
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
    wd = weight.data
    # [kh, kw, Cout, Cin] so each tap is a contiguous matrix (strided ones miss BLAS)
    taps = np.ascontiguousarray(wd.transpose(2, 3, 0, 1))

    def tap(i, j):
        return (slice(None), slice(None),
                slice(i, i + stride * (ho - 1) + 1, stride),
                slice(j, j + stride * (wo - 1) + 1, stride))

    n = b * ho * wo

    def columns(i, j):
        # [Cin, B * Ho * Wo] for one kernel tap
        return xp[tap(i, j)].transpose(1, 0, 2, 3).reshape(cin, n)

    acc = np.zeros((cout, n), dtype=np.result_type(x.data, wd))
    for i in range(kh):
        for j in range(kw):
            acc += taps[i, j] @ columns(i, j)
    inputs = (x, weight)
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (cout,):
            raise ValueError(f"conv2d: bias shape {bias.shape} != ({cout},)")
        acc += bias.data[:, None]
        inputs = (x, weight, bias)
    out = acc.reshape(cout, b, ho, wo).transpose(1, 0, 2, 3)

    def backward(g):
        g2 = np.ascontiguousarray(g.transpose(1, 0, 2, 3)).reshape(cout, n)
        gx = np.zeros_like(xp) if x.requires_grad else None
        gw = np.zeros_like(taps) if weight.requires_grad else None
        for i in range(kh):
            for j in range(kw):
                if gw is not None:
                    gw[i, j] = g2 @ columns(i, j).T
                if gx is not None:
                    gx[tap(i, j)] += (taps[i, j].T @ g2).reshape(cin, b, ho, wo).transpose(1, 0, 2, 3)
        if gx is not None and padding:
            gx = gx[:, :, padding:padding + h, padding:padding + w]
        if gw is not None:
            gw = np.ascontiguousarray(gw.transpose(2, 3, 0, 1))
        grads = [gx, gw]
        if bias is not None:
            grads.append(g2.sum(axis=1))
        return tuple(grads)

    return make_result("conv2d", out, inputs, backward)


# ---------------------------------------------------------------- normalisation

def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Normalise over the last axis, then scale by ``gamma`` and shift by ``beta``."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    d = x.shape[-1]
    if d < 1 or gamma.shape != (d,) or beta.shape != (d,):
        raise ValueError(f"layer_norm: gamma/beta must have shape ({d},)")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data

    def backward(g):
        lead = tuple(range(g.ndim - 1))
        dxhat = g * gamma.data
        gx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                    - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return make_result("layer_norm", out, (x, gamma, beta), backward)


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    out = np.moveaxis(_softmax(np.moveaxis(x.data, axis, -1)), -1, axis)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return make_result("softmax", out, (x,), backward)


def gather(table, index: np.ndarray) -> Tensor:
    """Row lookup ``table[index]`` for an integer array ``index``."""
    table = as_tensor(table)
    index = np.asarray(index, dtype=np.intp)
    n_rows = table.shape[0]

    def backward(g):
        flat_idx = index.reshape(-1)
        flat_g = g.reshape(flat_idx.size, -1)
        cols = [np.bincount(flat_idx, weights=flat_g[:, c], minlength=n_rows) for c in range(flat_g.shape[1])]
        return (np.stack(cols, axis=1).reshape(table.shape).astype(table.dtype),)

    return make_result("gather", table.data[index], (table,), backward)


# ---------------------------------------------------------------- attention

def attention_probs(q: np.ndarray, k: np.ndarray, scale: float,
                    bias: Optional[np.ndarray] = None, mask: Optional[np.ndarray] = None) -> np.ndarray:
    """Softmax attention weights for ``q, k`` of shape ``[Bw, heads, N, d]``.

    ``mask`` is boolean ``[nW, N, N]`` (True = may attend) and is tiled over
    the batch: window ``i`` of the batch uses ``mask[i % nW]``.
    """
    s = np.matmul(q * scale, np.swapaxes(k, -1, -2))
    if bias is not None:
        s = s + bias
    if mask is not None:
        reps = s.shape[0] // mask.shape[0]
        m = np.tile(mask, (reps, 1, 1))[:, None]
        s = np.where(m, s, -np.inf)
    return _softmax(s)


def _attention_chunk(heads: int, n: int) -> int:
    budget = 1 << 25
    return max(1, budget // max(1, heads * n * n * 8))


def window_attention(q, k, v, bias=None, mask: Optional[np.ndarray] = None,
                     scale: float = 1.0) -> Tensor:
    """Multi-head attention inside windows, fused and chunked over windows.

    ``q, k, v``: ``[Bw, heads, N, d]``; ``bias``: ``[heads, N, N]``. The
    attention matrix is never kept: backward recomputes it chunk by chunk.
    """
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    if not (q.shape == k.shape == v.shape) or q.ndim != 4:
        raise ValueError("window_attention: q, k, v must share a [Bw, heads, N, d] shape")
    bw, heads, n, _ = q.shape
    if mask is not None:
        if mask.shape[1:] != (n, n) or bw % mask.shape[0]:
            raise ValueError("window_attention: mask must be [nW, N, N] with Bw a multiple of nW")
    inputs = (q, k, v) if bias is None else (q, k, v, as_tensor(bias))
    bias_data = None if bias is None else inputs[3].data
    chunk = _attention_chunk(heads, n)
    n_mask = None if mask is None else mask.shape[0]
    if mask is not None and chunk % n_mask:
        chunk = max(n_mask, chunk - chunk % n_mask)

    def chunk_mask(lo, hi):
        return None if mask is None else mask[np.arange(lo, hi) % n_mask]

    out = np.empty_like(q.data)
    for lo in range(0, bw, chunk):
        hi = min(bw, lo + chunk)
        p = attention_probs(q.data[lo:hi], k.data[lo:hi], scale, bias_data, chunk_mask(lo, hi))
        out[lo:hi] = np.matmul(p, v.data[lo:hi])

    def backward(g):
        gq = np.empty_like(q.data)
        gk = np.empty_like(k.data)
        gv = np.empty_like(v.data)
        gb = None if bias is None else np.zeros_like(bias_data)
        for lo in range(0, bw, chunk):
            hi = min(bw, lo + chunk)
            m = chunk_mask(lo, hi)
            qc, kc, vc, gc = q.data[lo:hi], k.data[lo:hi], v.data[lo:hi], g[lo:hi]
            p = attention_probs(qc, kc, scale, bias_data, m)
            gv[lo:hi] = np.matmul(np.swapaxes(p, -1, -2), gc)
            dp = np.matmul(gc, np.swapaxes(vc, -1, -2))
            ds = p * (dp - (dp * p).sum(axis=-1, keepdims=True))
            gq[lo:hi] = np.matmul(ds, kc) * scale
            gk[lo:hi] = np.matmul(np.swapaxes(ds, -1, -2), qc) * scale
            if gb is not None:
                gb += ds.sum(axis=0)
        grads = (gq, gk, gv)
        return grads if gb is None else grads + (gb,)

    return make_result("window_attention", out, inputs, backward)


# ---------------------------------------------------------------- windows

def _window_pad(h: int, w: int, win: int) -> tuple:
    return (-h) % win, (-w) % win


def window_partition(x, win: int, shift: int = 0) -> Tensor:
    """Cyclically shift ``[B, H, W, C]`` by ``-shift`` and cut it into ``win x win`` tiles.

    Returns ``[B * nW, win * win, C]`` with windows in row-major order per
    image. H and W are reflect-padded up to a multiple of ``win`` first.
    """
    if win <= 0:
        raise ValueError("window size must be positive")
    if not 0 <= shift < win:
        raise ValueError(f"shift must lie in [0, {win}), got {shift}")
    x = as_tensor(x)
    b, h, w, c = x.shape
    ph, pw = _window_pad(h, w, win)
    if ph or pw:
        x = pad(x, ((0, 0), (0, ph), (0, pw), (0, 0)), mode="reflect")
    hp, wp = h + ph, w + pw
    if shift:
        x = roll(x, (-shift, -shift), axis=(1, 2))
    x = reshape(x, (b, hp // win, win, wp // win, win, c))
    x = transpose(x, (0, 1, 3, 2, 4, 5))
    return reshape(x, (b * (hp // win) * (wp // win), win * win, c))


def window_merge(windows, win: int, shift: int, h: int, w: int) -> Tensor:
    """Inverse of :func:`window_partition`; crops any padding away."""
    if win <= 0:
        raise ValueError("window size must be positive")
    windows = as_tensor(windows)
    ph, pw = _window_pad(h, w, win)
    hp, wp = h + ph, w + pw
    nh, nw = hp // win, wp // win
    c = windows.shape[-1]
    b = windows.shape[0] // (nh * nw)
    x = reshape(windows, (b, nh, nw, win, win, c))
    x = transpose(x, (0, 1, 3, 2, 4, 5))
    x = reshape(x, (b, hp, wp, c))
    if shift:
        x = roll(x, (shift, shift), axis=(1, 2))
    if ph or pw:
        x = getitem(x, (slice(None), slice(0, h), slice(0, w), slice(None)))
    return x


@functools.lru_cache(maxsize=64)
def shifted_window_mask(h: int, w: int, win: int, shift: int) -> np.ndarray:
    """Boolean ``[nW, N, N]`` mask: True where two tokens came from the same region
    before the cyclic shift wrapped them into a shared window."""
    labels = np.zeros((h, w), dtype=np.int64)
    bands = (slice(0, -win), slice(-win, -shift), slice(-shift, None))
    region = 0
    for hs in bands:
        for ws in bands:
            labels[hs, ws] = region
            region += 1
    tiles = labels.reshape(h // win, win, w // win, win).transpose(0, 2, 1, 3).reshape(-1, win * win)
    mask = tiles[:, :, None] == tiles[:, None, :]
    mask.setflags(write=False)
    return mask
