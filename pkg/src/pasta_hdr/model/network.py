"""The deghosting network: shallow features, temporal attention, and
coarse-to-fine aggregation over a wavelet hierarchy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autograd import Conv2d, LayerNorm, Linear, Module, Parameter, Tensor, as_tensor, no_record, ops
from ..autograd.nn import trunc_normal
from ..wavelet import build_pyramid, haar_synthesis
from .config import ModelConfig


class IFTA(Module):
    """Inter-frame temporal attention.

    Each frame's features and the reference features are embedded by a 3x3
    conv (one conv shared by all frames, one for the reference). Their
    per-pixel channel inner product, passed through a sigmoid, gates the
    frame's features.
    """

    def __init__(self, channels: int, rng: np.random.Generator):
        self.embed = Conv2d(channels, channels, 3, rng)
        self.embed_ref = Conv2d(channels, channels, 3, rng)

    def similarity(self, feats) -> list[Tensor]:
        ref = self.embed_ref(feats[1])
        return [ops.sum(ops.mul(self.embed(f), ref), axis=1, keepdims=True) for f in feats]

    def gates(self, feats) -> list[Tensor]:
        """Sigmoid gates ``[B, 1, H, W]``, broadcast over channels when applied."""
        return [ops.sigmoid(s) for s in self.similarity(feats)]

    def forward(self, f1, f2, f3) -> Tensor:
        feats = (f1, f2, f3)
        gated = [ops.mul(f, g) for f, g in zip(feats, self.gates(feats))]
        return ops.concat(gated, axis=1)


class ChannelAttention(Module):
    def __init__(self, channels: int, reduction: int, rng: np.random.Generator):
        if channels % reduction:
            raise ValueError(f"{channels} channels not divisible by reduction {reduction}")
        self.down = Conv2d(channels, channels // reduction, 1, rng)
        self.up = Conv2d(channels // reduction, channels, 1, rng)

    @staticmethod
    def pool(x) -> Tensor:
        return ops.mean(x, axis=(2, 3), keepdims=True)

    def weights(self, x) -> Tensor:
        return ops.sigmoid(self.up(ops.relu(self.down(self.pool(x)))))

    def forward(self, x) -> Tensor:
        return ops.mul(x, self.weights(x))


class RCAB(Module):
    """Residual channel attention block: ``x + CA(conv(relu(conv(x))))``."""

    def __init__(self, channels: int, reduction: int, rng: np.random.Generator):
        self.conv1 = Conv2d(channels, channels, 3, rng)
        self.conv2 = Conv2d(channels, channels, 3, rng, zero_init=True)
        self.ca = ChannelAttention(channels, reduction, rng)

    def body(self, x) -> Tensor:
        return self.conv2(ops.relu(self.conv1(x)))

    def forward(self, x) -> Tensor:
        return ops.add(x, self.ca(self.body(x)))


def relative_position_index(window: int) -> np.ndarray:
    coords = np.stack(np.meshgrid(np.arange(window), np.arange(window), indexing="ij")).reshape(2, -1)
    rel = coords[:, :, None] - coords[:, None, :]
    rel = rel.transpose(1, 2, 0) + (window - 1)
    return rel[..., 0] * (2 * window - 1) + rel[..., 1]


class WindowAttention(Module):
    def __init__(self, dim: int, heads: int, window: int, rng: np.random.Generator):
        if dim % heads:
            raise ValueError(f"dim {dim} not divisible by {heads} heads")
        self.heads = heads
        self.window = window
        self.scale = float((dim // heads) ** -0.5)
        self.qkv = Linear(dim, 3 * dim, rng)
        self.proj = Linear(dim, dim, rng)
        self.rel_bias = Parameter(trunc_normal(rng, ((2 * window - 1) ** 2, heads)))
        self._index = relative_position_index(window)

    def bias(self) -> Tensor:
        return ops.transpose(ops.gather(self.rel_bias, self._index), (2, 0, 1))

    def qkv_heads(self, x) -> tuple:
        bw, n, d = x.shape
        t = ops.reshape(self.qkv(x), (bw, n, 3, self.heads, d // self.heads))
        t = ops.transpose(t, (2, 0, 3, 1, 4))
        return t[0], t[1], t[2]

    def forward(self, x, mask=None) -> Tensor:
        bw, n, d = x.shape
        q, k, v = self.qkv_heads(x)
        out = ops.window_attention(q, k, v, self.bias(), mask, self.scale)
        out = ops.reshape(ops.transpose(out, (0, 2, 1, 3)), (bw, n, d))
        return self.proj(out)


class Mlp(Module):
    def __init__(self, dim: int, ratio: float, rng: np.random.Generator):
        hidden = int(dim * ratio)
        self.fc1 = Linear(dim, hidden, rng)
        self.fc2 = Linear(hidden, dim, rng)

    def forward(self, x) -> Tensor:
        return self.fc2(ops.gelu(self.fc1(x)))


class SwinLayer(Module):
    """Pre-norm windowed attention and MLP, each with a residual add. Works on ``[B, H, W, C]``."""

    def __init__(self, dim: int, heads: int, window: int, shift: int, mlp_ratio: float,
                 rng: np.random.Generator):
        self.window = window
        self.shift = shift
        self.norm1 = LayerNorm(dim)
        self.attn = WindowAttention(dim, heads, window, rng)
        self.norm2 = LayerNorm(dim)
        self.mlp = Mlp(dim, mlp_ratio, rng)

    def effective_shift(self, h: int, w: int) -> int:
        return 0 if min(h, w) <= self.window else self.shift

    def forward(self, x) -> Tensor:
        b, h, w, c = x.shape
        win = self.window
        if min(h, w) < win:
            raise ValueError(f"feature map {h}x{w} is smaller than the {win}x{win} window")
        shift = self.effective_shift(h, w)
        y = self.norm1(x)
        windows = ops.window_partition(y, win, shift)
        mask = None
        if shift:
            hp, wp = h + (-h) % win, w + (-w) % win
            mask = ops.shifted_window_mask(hp, wp, win, shift)
        y = self.attn(windows, mask)
        y = ops.window_merge(y, win, shift, h, w)
        x = ops.add(x, y)
        return ops.add(x, self.mlp(self.norm2(x)))


class RSTB(Module):
    """Residual Swin block: ``depth`` layers alternating shift 0 and window/2,
    a 3x3 conv, and a residual connection around the whole block."""

    def __init__(self, dim: int, depth: int, heads: int, window: int, mlp_ratio: float,
                 rng: np.random.Generator):
        if dim % heads:
            raise ValueError(f"dim {dim} not divisible by {heads} heads")
        self.layers = [
            SwinLayer(dim, heads, window, 0 if i % 2 == 0 else window // 2, mlp_ratio, rng)
            for i in range(depth)
        ]
        self.conv = Conv2d(dim, dim, 3, rng, zero_init=True)

    def forward(self, x) -> Tensor:
        t = ops.transpose(x, (0, 2, 3, 1))
        for layer in self.layers:
            t = layer(t)
        return ops.add(x, self.conv(ops.transpose(t, (0, 3, 1, 2))))


class WaveletStage(Module):
    """RCAB over the concatenated subbands, then an RSTB."""

    def __init__(self, channels: int, reduction: int, depth: int, heads: int, window: int,
                 mlp_ratio: float, rng: np.random.Generator):
        self.rcab = RCAB(channels, reduction, rng)
        self.rstb = RSTB(channels, depth, heads, window, mlp_ratio, rng)

    def forward(self, x) -> Tensor:
        return self.rstb(self.rcab(x))


class FinalStage(Module):
    """Full-resolution stage: concat with the skip feature, 1x1 compression, RSTB."""

    def __init__(self, channels: int, depth: int, heads: int, window: int, mlp_ratio: float,
                 rng: np.random.Generator):
        self.compress = Conv2d(2 * channels, channels, 1, rng)
        self.rstb = RSTB(channels, depth, heads, window, mlp_ratio, rng)

    def forward(self, ll0, skip) -> Tensor:
        return self.rstb(self.compress(ops.concat([ll0, skip], axis=1)))


# ------------------------------------------------------------------ samplers
#
# A sampler turns F_t into per-level stage inputs of 4 * 3C channels and maps
# a refined stage output back up one level as 3C channels.

class HaarSampler(Module):
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        self.K = cfg.K

    def decompose(self, f):
        return build_pyramid(f, self.K)

    def stage_input(self, pyramid, k: int, ll) -> Tensor:
        s = pyramid.levels[k - 1]
        low = pyramid.root_ll if ll is None else ll
        return ops.concat([low, s.lh, s.hl, s.hh], axis=1)

    def upsample(self, x) -> Tensor:
        return haar_synthesis(x)


class PixelUnshuffleSampler(Module):
    """Space-to-depth hierarchy. There is no separate low band to recurse on,
    so every level unshuffles the whole previous level and the channel count
    grows by 4 per level; 1x1 convs project each level to the stage width."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        self.K = cfg.K
        c3 = cfg.feature_channels
        self.proj = [
            Conv2d(4 ** k * c3, 4 * c3 if k == cfg.K else 3 * c3, 1, rng)
            for k in range(1, cfg.K + 1)
        ]

    def decompose(self, f):
        levels = [f]
        for _ in range(self.K):
            levels.append(ops.pixel_unshuffle(levels[-1], 2))
        return levels

    def stage_input(self, levels, k: int, ll) -> Tensor:
        z = self.proj[k - 1](levels[k])
        return z if ll is None else ops.concat([ll, z], axis=1)

    def upsample(self, x) -> Tensor:
        return ops.pixel_shuffle(x, 2)


class StridedConvSampler(Module):
    """Learned stride-2 3x3 convs; the first 3C output channels act as the
    low band that the next level recurses on."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        self.K = cfg.K
        self.c3 = cfg.feature_channels
        self.down = [Conv2d(self.c3, 4 * self.c3, 3, rng, stride=2) for _ in range(cfg.K)]

    def decompose(self, f):
        levels = []
        low = f
        for conv in self.down:
            d = conv(low)
            levels.append(d)
            low = d[:, :self.c3]
        return levels

    def stage_input(self, levels, k: int, ll) -> Tensor:
        d = levels[k - 1]
        low = d[:, :self.c3] if ll is None else ll
        return ops.concat([low, d[:, self.c3:]], axis=1)

    def upsample(self, x) -> Tensor:
        return ops.pixel_shuffle(x, 2)


SAMPLERS = {
    "dwt": HaarSampler,
    "pixel_unshuffle": PixelUnshuffleSampler,
    "strided_conv": StridedConvSampler,
}


@dataclass
class StageState:
    """What one wavelet stage saw and produced: ``level`` k works at ``H/2**k``."""

    level: int
    stage_input: Tensor
    refined: Tensor
    ll: Tensor


class PASTANet(Module):
    """Maps three six-channel inputs ``[B, 6, H, W]`` to an HDR image ``[B, 3, H, W]`` in [0, 1].

    Inputs are reflect-padded to a multiple of ``2**K * window`` and the
    output is cropped back.
    """

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        c, c3, wide = cfg.C, cfg.feature_channels, cfg.subband_channels
        self.shallow = [Conv2d(6, c, 3, rng) for _ in range(3)]
        if cfg.variant == "pasta-i":
            self.ifta = IFTA(c, rng)
        else:
            self.skip_conv = Conv2d(c, c3, 3, rng)
        self.sampler = SAMPLERS[cfg.sampling](cfg, rng)
        self.stages = []
        for j in range(cfg.K):
            i = cfg.stage_index(j)
            self.stages.append(WaveletStage(
                wide, cfg.reduction[i], cfg.stl_per_stage[i], cfg.heads_per_stage[i],
                cfg.window, cfg.mlp_ratio, rng,
            ))
        self.final = FinalStage(c3, cfg.stl_per_stage[3], cfg.heads_per_stage[3],
                                cfg.window, cfg.mlp_ratio, rng)
        self.head = Conv2d(c3, 3, 3, rng)

    # -- pieces exposed for tests and analysis
    def shallow_features(self, x1, x2, x3) -> list[Tensor]:
        xs = [as_tensor(x) for x in (x1, x2, x3)]
        for x in xs:
            if x.ndim != 4 or x.shape[1] != 6:
                raise ValueError(f"each input must be [B, 6, H, W], got {x.shape}")
        if len({x.shape for x in xs}) != 1:
            raise ValueError("the three inputs must share one shape")
        return [conv(x) for conv, x in zip(self.shallow, xs)]

    def temporal_features(self, feats) -> tuple[Tensor, Tensor]:
        """Return ``(F_t, skip)`` for the configured variant."""
        if self.cfg.variant == "pasta-i":
            ft = self.ifta(*feats)
            return ft, ft
        return ops.concat(list(feats), axis=1), self.skip_conv(feats[1])

    def check_size(self, h: int, w: int) -> None:
        m = self.cfg.size_multiple
        if h < m or w < m:
            raise ValueError(f"input {h}x{w} is too small; the minimum size is {m}x{m}")

    def _pad(self, x: Tensor) -> Tensor:
        m = self.cfg.size_multiple
        h, w = x.shape[-2:]
        ph, pw = (-h) % m, (-w) % m
        if not (ph or pw):
            return x
        return ops.pad(x, ((0, 0), (0, 0), (0, ph), (0, pw)), mode="reflect")

    def forward(self, x1, x2, x3) -> Tensor:
        return self.forward_with_states(x1, x2, x3)[0]

    def forward_with_states(self, x1, x2, x3) -> tuple[Tensor, list[StageState]]:
        """Forward pass that also returns the coarse-to-fine stage states."""
        xs = [as_tensor(x) for x in (x1, x2, x3)]
        h, w = xs[0].shape[-2:]
        self.check_size(h, w)
        feats = self.shallow_features(*[self._pad(x) for x in xs])
        ft, skip = self.temporal_features(feats)
        hierarchy = self.sampler.decompose(ft)
        states = []
        ll = None
        for j, stage in enumerate(self.stages):
            k = self.cfg.K - j
            stage_in = self.sampler.stage_input(hierarchy, k, ll)
            refined = stage(stage_in)
            ll = self.sampler.upsample(refined)
            states.append(StageState(level=k, stage_input=stage_in, refined=refined, ll=ll))
        out = ops.sigmoid(self.head(self.final(ll, skip)))
        if out.shape[-2:] != (h, w):
            out = out[:, :, :h, :w]
        return out, states

    def predict(self, stacks: np.ndarray) -> np.ndarray:
        """Inference on ``[B, 3, 6, H, W]`` arrays; no gradients are recorded."""
        stacks = np.asarray(stacks, dtype=np.float32)
        if stacks.ndim == 4:
            stacks = stacks[None]
        with no_record():
            out = self.forward(stacks[:, 0], stacks[:, 1], stacks[:, 2])
        return out.data


def count_params(cfg: ModelConfig) -> int:
    """Number of learnable scalars in the network described by ``cfg``."""
    return PASTANet(cfg).num_parameters()
