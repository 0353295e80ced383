"""Synthetic exposure stacks and the on-disk scene layout.

A scene directory holds ``input_1.ppm .. input_3.ppm`` (short to long
exposure), ``exposure.txt`` (one EV per line, ``t = 2**EV``) and, for
training or evaluation, ``gt.pfm``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.ndimage import gaussian_filter, shift as nd_shift

from .hdr_io import (
    EXPOSURE_FILE, FRAME_NAMES, GT_FILE, ExposureStack, load_gt, load_stack, make_inputs,
    write_hdr, write_ppm,
)

DEFAULT_EVS = (-2.0, 0.0, 2.0)


@dataclass
class Scene:
    """A loaded scene: six-channel inputs ``[3, 6, H, W]`` and optional GT ``[3, H, W]``."""

    scene_id: str
    inputs: np.ndarray
    gt: Optional[np.ndarray] = None

    @property
    def shape(self) -> tuple:
        return self.inputs.shape[-2:]


def make_synthetic_scene(height: int = 64, width: int = 64, seed: int = 0,
                         evs=DEFAULT_EVS, gamma: float = 2.2, motion: float = 1.5):
    """Random smooth radiance in [0, 1], three exposures of it and small
    per-frame translations of the non-reference frames.

    Returns ``(ExposureStack, gt)``.
    """
    rng = np.random.default_rng(seed)
    base = rng.random((3, height, width))
    radiance = gaussian_filter(base, sigma=(0, 3, 3))
    radiance = (radiance - radiance.min()) / max(np.ptp(radiance), 1e-12)
    blobs = gaussian_filter((rng.random((1, height, width)) > 0.97).astype(float), sigma=(0, 2, 2))
    gt = np.clip(0.6 * radiance ** 2 + 2.0 * blobs, 0.0, 1.0).astype(np.float32)

    frames = []
    times = [2.0 ** ev for ev in evs]
    for i, t in enumerate(times):
        scene = gt
        if i != 1 and motion:
            dy, dx = rng.uniform(-motion, motion, size=2)
            scene = nd_shift(gt, (0, dy, dx), order=1, mode="nearest")
        ldr = np.clip(scene * t, 0.0, 1.0) ** (1.0 / gamma)
        frames.append(np.round(ldr * 255) / 255)
    return ExposureStack(frames=frames, times=times, gamma=gamma), gt


def write_scene(dir_path, stack: ExposureStack, gt: Optional[np.ndarray] = None, bits: int = 16) -> Path:
    root = Path(dir_path)
    root.mkdir(parents=True, exist_ok=True)
    for name, frame in zip(FRAME_NAMES, stack.frames):
        write_ppm(root / name, frame, bits=bits)
    evs = [np.log2(t) for t in stack.times]
    (root / EXPOSURE_FILE).write_text("".join(f"{ev:g}\n" for ev in evs))
    if gt is not None:
        write_hdr(root / GT_FILE, gt)
    return root


def make_synthetic_dataset(root, n_scenes: int = 2, height: int = 64, width: int = 64,
                           seed: int = 0) -> list[Path]:
    return [
        write_scene(Path(root) / f"scene_{i:03d}", *make_synthetic_scene(height, width, seed + i))
        for i in range(n_scenes)
    ]


def scene_dirs(root) -> list[Path]:
    """Sub-directories of ``root`` that contain frames, sorted by name. ``root``
    itself counts if it is a scene."""
    root = Path(root)
    if (root / FRAME_NAMES[0]).is_file():
        return [root]
    dirs = sorted(p for p in root.iterdir() if p.is_dir() and (p / FRAME_NAMES[0]).is_file())
    if not dirs:
        raise FileNotFoundError(f"{root}: no scene directories found")
    return dirs


def load_scene(dir_path, require_gt: bool = False, gamma: float = 2.2) -> Scene:
    root = Path(dir_path)
    stack = load_stack(root, gamma)
    gt = None
    if (root / GT_FILE).is_file():
        gt = load_gt(root)
    elif require_gt:
        raise FileNotFoundError(f"{root}: missing {GT_FILE}")
    return Scene(scene_id=root.name, inputs=make_inputs(stack).as_array(), gt=gt)


def load_training_set(root, gamma: float = 2.2) -> list[Scene]:
    """Load every scene under ``root``; any scene without GT is an error that lists them all."""
    dirs = scene_dirs(root)
    missing = [d.name for d in dirs if not (d / GT_FILE).is_file()]
    if missing:
        raise FileNotFoundError(f"training scenes without {GT_FILE}: {', '.join(missing)}")
    return [load_scene(d, require_gt=True, gamma=gamma) for d in dirs]
