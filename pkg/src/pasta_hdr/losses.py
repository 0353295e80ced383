"""Training objective in the mu-law domain: L1, a fixed multi-scale proxy
for the perceptual term, and a Charbonnier penalty on Sobel gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autograd import Tensor, as_tensor, ops

SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T.copy()
BINOMIAL = np.array([1.0, 2.0, 1.0]) / 4.0
PYRAMID_LEVELS = 3


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 0.01
    beta: float = 1.0
    eps: float = 1e-3
    mu: float = 5000.0

    def __post_init__(self):
        for name in ("eps", "mu"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("alpha", "beta"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


def _check_pair(pred, target, name: str) -> tuple[Tensor, Tensor]:
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise ValueError(f"{name}: shapes differ ({pred.shape} vs {target.shape})")
    if pred.ndim != 4:
        raise ValueError(f"{name}: expected [B, C, H, W], got {pred.shape}")
    return pred, target


def tonemap(x, mu: float = 5000.0) -> Tensor:
    """Differentiable ``log(1 + mu x) / log(1 + mu)``; inputs are clamped to [0, 1]."""
    x = ops.clamp(as_tensor(x), 0.0, 1.0)
    return ops.mul(ops.log(ops.add(ops.mul(x, mu), 1.0)), 1.0 / float(np.log1p(mu)))


def _per_channel(x: Tensor) -> Tensor:
    b, c, h, w = x.shape
    return ops.reshape(x, (b * c, 1, h, w))


def _filter(x: Tensor, kernel: np.ndarray) -> Tensor:
    """Reflect-padded single-channel correlation of ``[N, 1, H, W]``."""
    r = kernel.shape[0] // 2
    xp = ops.pad(x, ((0, 0), (0, 0), (r, r), (r, r)), mode="reflect")
    return ops.conv2d(xp, kernel[None, None])


def sobel(x) -> tuple[Tensor, Tensor]:
    """Horizontal and vertical Sobel responses, per channel, reflect-padded."""
    x = as_tensor(x)
    b, c, h, w = x.shape
    flat = _per_channel(x)
    gx = ops.reshape(_filter(flat, SOBEL_X), (b, c, h, w))
    gy = ops.reshape(_filter(flat, SOBEL_Y), (b, c, h, w))
    return gx, gy


def l1_loss(pred, target, mu: float = 5000.0) -> Tensor:
    pred, target = _check_pair(pred, target, "l1_loss")
    return ops.mean(ops.abs(ops.sub(tonemap(pred, mu), tonemap(target, mu))))


def edge_loss(pred, target, eps: float = 1e-3, mu: float = 5000.0) -> Tensor:
    """Mean over pixels of ``sqrt(|grad T(target) - grad T(pred)|^2 + eps^2)``."""
    pred, target = _check_pair(pred, target, "edge_loss")
    gx, gy = sobel(ops.sub(tonemap(target, mu), tonemap(pred, mu)))
    sq = ops.add(ops.add(ops.mul(gx, gx), ops.mul(gy, gy)), eps * eps)
    return ops.mean(ops.sqrt(sq))


def laplacian_bands(x, levels: int = PYRAMID_LEVELS) -> list[Tensor]:
    """Band-pass layers of a Laplacian pyramid (the low-pass residual is dropped)."""
    x = as_tensor(x)
    b, c = x.shape[:2]
    g = _per_channel(x)
    kernel = np.outer(BINOMIAL, BINOMIAL)
    bands = []
    for _ in range(levels):
        h, w = g.shape[-2:]
        if min(h, w) < 2:
            raise ValueError(f"image too small for a {levels}-level pyramid")
        down = _filter(g, kernel)[:, :, ::2, ::2]
        up = ops.upsample_nearest(down, 2)[:, :, :h, :w]
        bands.append(ops.reshape(ops.sub(g, up), (b, c, h, w)))
        g = down
    return bands


def perceptual_proxy(pred, target, mu: float = 5000.0, levels: int = PYRAMID_LEVELS) -> Tensor:
    """Sum over pyramid levels of the mean absolute band difference of the tonemapped images."""
    pred, target = _check_pair(pred, target, "perceptual_proxy")
    bands = laplacian_bands(ops.sub(tonemap(pred, mu), tonemap(target, mu)), levels)
    total = None
    for band in bands:
        term = ops.mean(ops.abs(band))
        total = term if total is None else ops.add(total, term)
    return total


@dataclass
class LossTerms:
    l1: Tensor
    lp: Tensor
    le: Tensor
    total: Tensor

    def values(self) -> dict:
        return {k: float(getattr(self, k).item()) for k in ("l1", "lp", "le", "total")}


def loss_terms(pred, target, weights: LossWeights = LossWeights()) -> LossTerms:
    pred, target = _check_pair(pred, target, "total_loss")
    l1 = l1_loss(pred, target, weights.mu)
    lp = perceptual_proxy(pred, target, weights.mu)
    le = edge_loss(pred, target, weights.eps, weights.mu)
    total = ops.add(ops.add(l1, ops.mul(lp, weights.alpha)), ops.mul(le, weights.beta))
    return LossTerms(l1=l1, lp=lp, le=le, total=total)


def total_loss(pred, target, weights: LossWeights = LossWeights()) -> Tensor:
    """``l1 + alpha * perceptual + beta * edge``."""
    return loss_terms(pred, target, weights).total
