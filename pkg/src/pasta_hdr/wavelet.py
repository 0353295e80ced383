"""Orthonormal 2-D Haar transform, the K-level pyramid and subband correlation.

For every disjoint 2x2 block ``[a b; c d]`` of every channel::

    ll = ( a + b + c + d) / 2
    lh = (-a - b + c + d) / 2
    hl = (-a + b - c + d) / 2
    hh = ( a - b - c + d) / 2

The block matrix is orthonormal, so synthesis is its transpose and the
transform preserves energy.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .autograd import Tensor, as_tensor
from .autograd import ops
from .autograd.tensor import make_result

__all__ = [
    "SubbandSet", "WaveletPyramid", "dwt2", "idwt2", "build_pyramid",
    "collapse_pyramid", "pcc_matrix", "haar_analysis", "haar_synthesis",
]


def _analysis(x: np.ndarray) -> np.ndarray:
    a = x[..., 0::2, 0::2]
    b = x[..., 0::2, 1::2]
    c = x[..., 1::2, 0::2]
    d = x[..., 1::2, 1::2]
    ll = (a + b + c + d) * 0.5
    lh = (-a - b + c + d) * 0.5
    hl = (-a + b - c + d) * 0.5
    hh = (a - b - c + d) * 0.5
    return np.concatenate([ll, lh, hl, hh], axis=-3)


def _synthesis(y: np.ndarray) -> np.ndarray:
    ll, lh, hl, hh = np.split(y, 4, axis=-3)
    shape = ll.shape[:-2] + (ll.shape[-2] * 2, ll.shape[-1] * 2)
    x = np.empty(shape, dtype=y.dtype)
    x[..., 0::2, 0::2] = (ll - lh - hl + hh) * 0.5
    x[..., 0::2, 1::2] = (ll - lh + hl - hh) * 0.5
    x[..., 1::2, 0::2] = (ll + lh - hl - hh) * 0.5
    x[..., 1::2, 1::2] = (ll + lh + hl + hh) * 0.5
    return x


def haar_analysis(x) -> Tensor:
    """``[B, C, H, W] -> [B, 4C, H/2, W/2]`` with channel blocks ``ll | lh | hl | hh``."""
    x = as_tensor(x)
    if x.ndim != 4:
        raise ValueError(f"expected [B, C, H, W], got shape {x.shape}")
    h, w = x.shape[-2:]
    if h % 2 or w % 2:
        raise ValueError(f"Haar DWT needs even height and width, got {h}x{w}")
    return make_result("haar_analysis", _analysis(x.data), (x,), lambda g: (_synthesis(g),))


def haar_synthesis(y) -> Tensor:
    y = as_tensor(y)
    if y.ndim != 4 or y.shape[1] % 4:
        raise ValueError(f"expected [B, 4C, h, w], got shape {y.shape}")
    return make_result("haar_synthesis", _synthesis(y.data), (y,), lambda g: (_analysis(g),))


@dataclass
class SubbandSet:
    """One decomposition level: low band ``ll`` and detail bands ``lh, hl, hh``."""

    ll: Tensor
    lh: Tensor
    hl: Tensor
    hh: Tensor

    def __post_init__(self):
        shapes = {t.shape for t in self.bands()}
        if len(shapes) != 1:
            raise ValueError(f"subband shapes differ: {sorted(shapes)}")

    def bands(self) -> tuple:
        return self.ll, self.lh, self.hl, self.hh

    @property
    def shape(self) -> tuple:
        return self.ll.shape

    def stacked(self) -> Tensor:
        return ops.concat(self.bands(), axis=1)


def dwt2(x) -> SubbandSet:
    """Single-level Haar analysis applied per channel."""
    y = haar_analysis(x)
    c = y.shape[1] // 4
    return SubbandSet(*(y[:, i * c:(i + 1) * c] for i in range(4)))


def idwt2(s: SubbandSet) -> Tensor:
    """Exact inverse of :func:`dwt2`."""
    if not isinstance(s, SubbandSet):
        s = SubbandSet(*s)
    return haar_synthesis(s.stacked())


@dataclass
class WaveletPyramid:
    """Detail bands for levels ``1..K`` (``levels[k-1]``) plus the coarsest low band.

    ``levels[k-1].ll`` is ``LL_k``; only the deepest one is needed to
    reconstruct, the others are kept for analysis.
    """

    levels: list = field(default_factory=list)
    root_ll: Tensor = None

    @property
    def K(self) -> int:
        return len(self.levels)


def build_pyramid(x, K: int) -> WaveletPyramid:
    if K < 1:
        raise ValueError(f"decomposition depth must be >= 1, got {K}")
    x = as_tensor(x)
    h, w = x.shape[-2:]
    step = 2 ** K
    if h % step or w % step:
        raise ValueError(f"{h}x{w} is not divisible by 2^K = {step}")
    levels = []
    ll = x
    for _ in range(K):
        s = dwt2(ll)
        levels.append(s)
        ll = s.ll
    return WaveletPyramid(levels=levels, root_ll=ll)


def collapse_pyramid(p: WaveletPyramid) -> Tensor:
    if p.root_ll is None or not p.levels or any(lv is None for lv in p.levels):
        raise ValueError("pyramid is missing a level or its root low band")
    ll = p.root_ll
    for s in reversed(p.levels):
        ll = idwt2(SubbandSet(ll, s.lh, s.hl, s.hh))
    return ll


def pcc_matrix(x, y) -> np.ndarray:
    """Pearson correlation between every channel of ``x`` and every channel of ``y``.

    Channels are flattened over batch and space. Entries involving a
    zero-variance channel are set to 0 and a ``RuntimeWarning`` is issued.
    """
    xa = x.data if isinstance(x, Tensor) else np.asarray(x)
    ya = y.data if isinstance(y, Tensor) else np.asarray(y)
    if xa.shape != ya.shape or xa.ndim != 4:
        raise ValueError(f"pcc_matrix needs two equal [B, C, H, W] arrays, got {xa.shape} and {ya.shape}")
    c = xa.shape[1]
    xs = np.moveaxis(xa, 1, 0).reshape(c, -1).astype(np.float64)
    ys = np.moveaxis(ya, 1, 0).reshape(c, -1).astype(np.float64)
    xs -= xs.mean(axis=1, keepdims=True)
    ys -= ys.mean(axis=1, keepdims=True)
    sx = np.sqrt((xs * xs).sum(axis=1))
    sy = np.sqrt((ys * ys).sum(axis=1))
    cov = xs @ ys.T
    denom = np.outer(sx, sy)
    flat = denom == 0
    if flat.any():
        warnings.warn("zero-variance channel in pcc_matrix; its correlations are set to 0",
                      RuntimeWarning, stacklevel=2)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(flat, 0.0, cov / np.where(flat, 1.0, denom))
    return np.clip(r, -1.0, 1.0)
