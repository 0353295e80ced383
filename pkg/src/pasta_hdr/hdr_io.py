"""Exposure stacks, radiometric lifting, the mu-law tonemap and image files.

Images are channel-first float arrays ``[3, H, W]``. LDR frames are stored
as binary PPM (8 or 16 bit), HDR images as little-endian PFM.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "ExposureStack", "HdrStack", "TonemapParams", "gamma_to_hdr", "mu_law",
    "make_inputs", "load_stack", "read_ppm", "write_ppm", "read_hdr", "write_hdr",
    "read_exposures", "FRAME_NAMES", "EXPOSURE_FILE", "GT_FILE",
]

FRAME_NAMES = ("input_1.ppm", "input_2.ppm", "input_3.ppm")
EXPOSURE_FILE = "exposure.txt"
GT_FILE = "gt.pfm"
N_FRAMES = 3
REFERENCE_INDEX = 1


@dataclass
class TonemapParams:
    mu: float = 5000.0

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")


@dataclass
class ExposureStack:
    """Three LDR frames in [0, 1] with increasing exposure times (seconds)."""

    frames: list
    times: Sequence[float]
    gamma: float = 2.2
    reference_index: int = REFERENCE_INDEX

    def __post_init__(self):
        self.frames = [np.asarray(f, dtype=np.float32) for f in self.frames]
        self.times = [float(t) for t in self.times]
        if len(self.frames) != N_FRAMES or len(self.times) != N_FRAMES:
            raise ValueError(f"an exposure stack has exactly {N_FRAMES} frames and times")
        if self.reference_index != REFERENCE_INDEX:
            raise ValueError("the reference frame is the middle exposure (index 1)")
        shapes = {f.shape for f in self.frames}
        if len(shapes) != 1:
            raise ValueError(f"frames differ in resolution: {sorted(shapes)}")
        if self.frames[0].ndim != 3 or self.frames[0].shape[0] != 3:
            raise ValueError(f"frames must be [3, H, W], got {self.frames[0].shape}")
        if any(t <= 0 for t in self.times):
            raise ValueError("exposure times must be positive")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError(f"exposure times must increase with frame order, got {self.times}")

    @property
    def shape(self) -> tuple:
        return self.frames[0].shape


@dataclass
class HdrStack:
    """Lifted frames ``H_i`` and the six-channel network inputs ``X_i = [I_i, H_i]``."""

    lifted: list = field(default_factory=list)
    six_channel: list = field(default_factory=list)

    def as_array(self) -> np.ndarray:
        """``[3, 6, H, W]``"""
        return np.stack(self.six_channel)


def gamma_to_hdr(image, t: float, gamma: float = 2.2) -> np.ndarray:
    """Power-law expansion ``I ** gamma / t`` of a display-referred frame."""
    if not t > 0:
        raise ValueError(f"exposure time must be positive, got {t}")
    if not gamma > 1:
        raise ValueError(f"gamma must exceed 1, got {gamma}")
    img = np.asarray(image, dtype=np.float32)
    if img.size and (img.min() < 0 or img.max() > 1):
        raise ValueError("LDR values must lie in [0, 1]")
    return (np.power(img, np.float32(gamma)) / np.float32(t)).astype(np.float32)


def mu_law(x, mu: float = 5000.0) -> np.ndarray:
    """``log(1 + mu x) / log(1 + mu)``; inputs outside [0, 1] are clamped with a warning."""
    if not mu > 0:
        raise ValueError(f"mu must be positive, got {mu}")
    arr = np.asarray(x, dtype=np.float32)
    if arr.size and (arr.min() < 0 or arr.max() > 1):
        warnings.warn("mu_law input outside [0, 1] was clamped", RuntimeWarning, stacklevel=2)
        arr = np.clip(arr, 0.0, 1.0)
    return (np.log1p(mu * arr.astype(np.float64)) / np.log1p(mu)).astype(np.float32)


def make_inputs(stack: ExposureStack) -> HdrStack:
    lifted = [gamma_to_hdr(f, t, stack.gamma) for f, t in zip(stack.frames, stack.times)]
    six = [np.concatenate([f, h], axis=0) for f, h in zip(stack.frames, lifted)]
    return HdrStack(lifted=lifted, six_channel=six)


# ------------------------------------------------------------------ file formats

def _read_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    while pos < len(buf):
        if buf[pos:pos + 1] == b"#":
            while pos < len(buf) and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif buf[pos:pos + 1].isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < len(buf) and not buf[pos:pos + 1].isspace():
        pos += 1
    if start == pos:
        raise ValueError("truncated header")
    return buf[start:pos], pos


def read_ppm(path) -> np.ndarray:
    """Binary (P6) PPM, 8 or 16 bit, normalised to [0, 1] by the max sample value."""
    buf = Path(path).read_bytes()
    magic, pos = _read_token(buf, 0)
    if magic != b"P6":
        raise ValueError(f"{path}: not a binary PPM (magic {magic!r})")
    width, pos = _read_token(buf, pos)
    height, pos = _read_token(buf, pos)
    maxval, pos = _read_token(buf, pos)
    w, h, maxv = int(width), int(height), int(maxval)
    if not 0 < maxv < 65536:
        raise ValueError(f"{path}: invalid maxval {maxv}")
    dtype = np.dtype(">u2") if maxv > 255 else np.dtype("u1")
    count = w * h * 3
    data = np.frombuffer(buf, dtype=dtype, count=count, offset=pos + 1)
    img = data.reshape(h, w, 3).transpose(2, 0, 1).astype(np.float32) / np.float32(maxv)
    return np.ascontiguousarray(img)


def write_ppm(path, image, bits: int = 8) -> None:
    """Write ``[3, H, W]`` values in [0, 1] as binary PPM."""
    img = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    if img.ndim != 3 or img.shape[0] != 3:
        raise ValueError(f"expected [3, H, W], got {img.shape}")
    maxv = 255 if bits == 8 else 65535
    dtype = np.dtype("u1") if bits == 8 else np.dtype(">u2")
    q = np.round(img * maxv).astype(dtype).transpose(1, 2, 0)
    header = f"P6\n{img.shape[2]} {img.shape[1]}\n{maxv}\n".encode("ascii")
    Path(path).write_bytes(header + q.tobytes())


def write_hdr(path, image) -> None:
    """Write ``[3, H, W]`` float32 as little-endian PFM (rows bottom-up)."""
    img = np.asarray(image, dtype=np.float32)
    if img.ndim != 3 or img.shape[0] != 3:
        raise ValueError(f"expected [3, H, W], got {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ValueError("HDR image contains non-finite values")
    header = f"PF\n{img.shape[2]} {img.shape[1]}\n-1.0\n".encode("ascii")
    payload = img.transpose(1, 2, 0)[::-1].astype("<f4").tobytes()
    Path(path).write_bytes(header + payload)


def read_hdr(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    magic, pos = _read_token(buf, 0)
    if magic not in (b"PF", b"Pf"):
        raise ValueError(f"{path}: not a PFM file")
    width, pos = _read_token(buf, pos)
    height, pos = _read_token(buf, pos)
    scale, pos = _read_token(buf, pos)
    w, h, s = int(width), int(height), float(scale)
    channels = 3 if magic == b"PF" else 1
    dtype = np.dtype("<f4") if s < 0 else np.dtype(">f4")
    data = np.frombuffer(buf, dtype=dtype, count=w * h * channels, offset=pos + 1)
    img = data.reshape(h, w, channels)[::-1].transpose(2, 0, 1).astype(np.float32)
    if channels == 1:
        img = np.repeat(img, 3, axis=0)
    return np.ascontiguousarray(img)


def read_exposures(path) -> list[float]:
    lines = [ln.strip() for ln in Path(path).read_text().splitlines()]
    return [float(ln) for ln in lines if ln and not ln.startswith("#")]


def load_stack(dir_path, gamma: float = 2.2) -> ExposureStack:
    """Load ``input_{1,2,3}.ppm`` and ``exposure.txt`` (EV stops, t = 2**EV)."""
    root = Path(dir_path)
    paths = [root / name for name in FRAME_NAMES]
    missing = [p.name for p in paths + [root / EXPOSURE_FILE] if not p.is_file()]
    if missing:
        raise FileNotFoundError(f"{root}: missing {', '.join(missing)}")
    evs = read_exposures(root / EXPOSURE_FILE)
    if len(evs) != N_FRAMES:
        raise ValueError(f"{root / EXPOSURE_FILE}: expected {N_FRAMES} EV values, found {len(evs)}")
    if any(b <= a for a, b in zip(evs, evs[1:])):
        raise ValueError(f"{root / EXPOSURE_FILE}: EV values must increase, got {evs}")
    frames = [read_ppm(p) for p in paths]
    shapes = {f.shape for f in frames}
    if len(shapes) != 1:
        raise ValueError(f"{root}: frames differ in resolution {sorted(shapes)}")
    return ExposureStack(frames=frames, times=[2.0 ** ev for ev in evs], gamma=gamma)


def load_gt(dir_path) -> np.ndarray:
    """Ground-truth HDR of a scene, clamped to [0, 1] with a warning if needed."""
    img = read_hdr(Path(dir_path) / GT_FILE)
    if img.min() < 0 or img.max() > 1:
        warnings.warn(f"{dir_path}: ground truth outside [0, 1] was clamped", RuntimeWarning, stacklevel=2)
        img = np.clip(img, 0.0, 1.0)
    return img
