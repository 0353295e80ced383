"""Patch extraction, dihedral augmentation, Adam and the seeded training loop."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .autograd import Tape
from .datasets import Scene
from .losses import LossWeights, loss_terms
from .model import PASTANet, read_checkpoint, save_checkpoint

LOSS_FIELDS = ("iter", "lr", "l1", "lp", "le", "total")
N_AUGMENT_MODES = 8


@dataclass(frozen=True)
class TrainConfig:
    """Optimisation settings. Defaults are the full-scale protocol; :meth:`desk`
    gives the laptop-sized schedule with the same geometric decay."""

    patch: int = 128
    stride: int = 64
    lr: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch: int = 16
    total_iters: int = 300_000
    halve_every: int = 50_000
    seed: int = 0
    alpha: float = 0.01
    beta: float = 1.0
    eps: float = 1e-3
    mu: float = 5000.0
    checkpoint_every: int = 0

    def __post_init__(self):
        for name in ("patch", "stride", "batch", "total_iters", "halve_every"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")
        if self.lr <= 0 or self.adam_eps <= 0:
            raise ValueError("lr and adam_eps must be positive")

    @classmethod
    def desk(cls, **overrides) -> "TrainConfig":
        base = dict(batch=2, total_iters=2000, halve_every=500, patch=64, stride=32)
        base.update(overrides)
        return cls(**base)

    @property
    def loss_weights(self) -> LossWeights:
        return LossWeights(alpha=self.alpha, beta=self.beta, eps=self.eps, mu=self.mu)

    def to_dict(self) -> dict:
        return asdict(self)

    def replace(self, **changes) -> "TrainConfig":
        return replace(self, **changes)


TRAIN_KEYS = tuple(f.name for f in fields(TrainConfig))


@dataclass
class OptimizerState:
    """Adam moment buffers keyed by parameter path, and the number of steps taken."""

    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0

    def arrays(self) -> dict:
        out = {f"m/{k}": a for k, a in self.m.items()}
        out.update({f"v/{k}": a for k, a in self.v.items()})
        return out

    @classmethod
    def from_arrays(cls, arrays: dict, step: int) -> "OptimizerState":
        m = {k[2:]: np.asarray(a, dtype=np.float32) for k, a in arrays.items() if k.startswith("m/")}
        v = {k[2:]: np.asarray(a, dtype=np.float32) for k, a in arrays.items() if k.startswith("v/")}
        return cls(m=m, v=v, step=int(step))


def lr_at(iteration: int, cfg: TrainConfig) -> float:
    if iteration < 0:
        raise ValueError("iteration must be >= 0")
    return cfg.lr * 0.5 ** (iteration // cfg.halve_every)


def adam_step(params: dict, grads: dict, state: OptimizerState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> OptimizerState:
    """One bias-corrected Adam update, in place on the arrays in ``params``.

    ``params`` maps names to arrays (or objects with a ``data`` array);
    names without a gradient are left alone.
    """
    state.step += 1
    t = state.step
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        arr = p if isinstance(p, np.ndarray) else p.data
        g = np.asarray(g, dtype=arr.dtype)
        if g.shape != arr.shape:
            raise ValueError(f"{name}: gradient shape {g.shape} != parameter shape {arr.shape}")
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(arr)
            v = np.zeros_like(arr)
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * (g * g)
        state.m[name] = m.astype(arr.dtype)
        state.v[name] = v.astype(arr.dtype)
        arr -= (lr * (m / c1) / (np.sqrt(v / c2) + eps)).astype(arr.dtype)
    return state


# ------------------------------------------------------------------ data

def crop_patches(scene, patch: int, stride: int) -> list[tuple]:
    """Aligned crops ``(X1, X2, X3, GT)`` in row-major order; patch ``(i, j)``
    starts at ``(i * stride, j * stride)``."""
    inputs, gt = (scene.inputs, scene.gt) if isinstance(scene, Scene) else scene
    if gt is None:
        raise ValueError("scene has no ground truth")
    h, w = gt.shape[-2:]
    if h < patch or w < patch:
        raise ValueError(f"scene {h}x{w} is smaller than the {patch}x{patch} patch")
    out = []
    for y in range(0, h - patch + 1, stride):
        for x in range(0, w - patch + 1, stride):
            win = (Ellipsis, slice(y, y + patch), slice(x, x + patch))
            out.append((inputs[0][win], inputs[1][win], inputs[2][win], gt[win]))
    return out


def augment(patch_tuple: Sequence[np.ndarray], mode: int) -> tuple:
    """Apply dihedral element ``mode`` to every image: ``mode // 4`` quarter
    turns clockwise, then flip ``mode % 4`` (none, horizontal, vertical, both)."""
    if not 0 <= mode < N_AUGMENT_MODES:
        raise ValueError(f"augment mode must lie in [0, {N_AUGMENT_MODES}), got {mode}")
    rotate, flip = divmod(mode, 4)
    out = []
    for img in patch_tuple:
        if rotate:
            if img.shape[-1] != img.shape[-2]:
                raise ValueError(f"rotation needs square patches, got {img.shape[-2:]}")
            img = np.rot90(img, k=-1, axes=(-2, -1))
        if flip & 1:
            img = img[..., :, ::-1]
        if flip & 2:
            img = img[..., ::-1, :]
        out.append(np.ascontiguousarray(img))
    return tuple(out)


def build_patch_pool(scenes: Sequence, patch: int, stride: int) -> list[tuple]:
    pool = []
    for s in scenes:
        pool.extend(crop_patches(s, patch, stride))
    return pool


def sample_batch(pool: list, batch: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Uniform draws with replacement, each with a uniform augmentation mode.

    Returns ``x [B, 3, 6, p, p]`` and ``gt [B, 3, p, p]``.
    """
    idx = rng.integers(len(pool), size=batch)
    modes = rng.integers(N_AUGMENT_MODES, size=batch)
    items = [augment(pool[i], int(m)) for i, m in zip(idx, modes)]
    x = np.stack([np.stack(it[:3]) for it in items]).astype(np.float32)
    gt = np.stack([it[3] for it in items]).astype(np.float32)
    return x, gt


# ------------------------------------------------------------------ loop

@dataclass
class TrainResult:
    model: PASTANet
    state: OptimizerState
    iteration: int
    history: list
    checkpoint: Optional[Path] = None


def _append_log(path: Path, rows: list[dict], fresh: bool) -> None:
    with path.open("w" if fresh else "a", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=LOSS_FIELDS, lineterminator="\n")
        if fresh:
            writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(row[k]) if isinstance(row[k], float) else row[k] for k in LOSS_FIELDS})


def read_loss_log(path) -> list[dict]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return [{k: (int(v) if k == "iter" else float(v)) for k, v in row.items()}
                for row in csv.DictReader(fh)]


def train_step(model: PASTANet, state: OptimizerState, x: np.ndarray, gt: np.ndarray,
               lr: float, cfg: TrainConfig) -> dict:
    model.zero_grad()
    with Tape() as tape:
        pred = model(x[:, 0], x[:, 1], x[:, 2])
        terms = loss_terms(pred, gt, cfg.loss_weights)
    tape.backward(terms.total)
    grads = {}
    for name, p in model.named_parameters():
        if p.grad is not None:
            if not np.all(np.isfinite(p.grad)):
                raise FloatingPointError(f"non-finite gradient in {name}")
            grads[name] = p.grad
    adam_step(dict(model.named_parameters()), grads, state, lr, cfg.beta1, cfg.beta2, cfg.adam_eps)
    return terms.values()


def train_loop(scenes: Sequence, model: Optional[PASTANet], cfg: TrainConfig,
               out_dir=None, resume=None, model_config=None,
               progress: Optional[Callable[[dict], None]] = None) -> TrainResult:
    """Train until ``cfg.total_iters`` iterations have run in total.

    Iteration ``i`` draws its batch from ``default_rng([seed, i])``, so a
    resumed run follows the same sequence as an uninterrupted one. With
    ``out_dir``, the loss log goes to ``loss.csv`` (one row per iteration)
    and the final state to ``checkpoint.zip``.
    """
    pool = build_patch_pool(scenes, cfg.patch, cfg.stride)
    if not pool:
        raise ValueError("training set is empty")
    start = 0
    if resume is not None:
        ck = read_checkpoint(resume)
        model = PASTANet(ck["config"])
        model.load_state_dict(ck["params"])
        start = int(ck["state"].get("iteration", 0))
        state = OptimizerState.from_arrays(ck["arrays"], ck["state"].get("step", 0))
    else:
        if model is None:
            if model_config is None:
                raise ValueError("pass a model, a model_config or a checkpoint to resume from")
            model = PASTANet(model_config, seed=cfg.seed)
        state = OptimizerState()
    if start >= cfg.total_iters:
        raise ValueError(f"checkpoint is already at iteration {start} of {cfg.total_iters}")

    out = Path(out_dir) if out_dir is not None else None
    log_path = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        log_path = out / "loss.csv"
        _append_log(log_path, [], fresh=resume is None or not log_path.exists())

    history = []
    ck_path = None
    for it in range(start, cfg.total_iters):
        rng = np.random.default_rng([cfg.seed, it])
        x, gt = sample_batch(pool, cfg.batch, rng)
        lr = lr_at(it, cfg)
        try:
            values = train_step(model, state, x, gt, lr, cfg)
        except FloatingPointError as exc:
            raise FloatingPointError(f"training aborted at iteration {it + 1}: {exc}") from exc
        row = {"iter": it + 1, "lr": lr, **values}
        history.append(row)
        if log_path is not None:
            _append_log(log_path, [row], fresh=False)
        if progress is not None:
            progress(row)
        if out is not None and cfg.checkpoint_every and (it + 1) % cfg.checkpoint_every == 0:
            ck_path = _save(out, model, state, it + 1)
    if out is not None:
        ck_path = _save(out, model, state, cfg.total_iters)
    return TrainResult(model=model, state=state, iteration=cfg.total_iters, history=history,
                       checkpoint=ck_path)


def _save(out: Path, model: PASTANet, state: OptimizerState, iteration: int) -> Path:
    return save_checkpoint(out / "checkpoint.zip", model,
                           state={"iteration": iteration, "step": state.step},
                           arrays=state.arrays())
