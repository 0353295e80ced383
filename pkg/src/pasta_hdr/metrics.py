"""PSNR and SSIM in the linear and mu-law domains, plus the metrics CSV."""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np
from scipy.ndimage import correlate1d

from .hdr_io import mu_law

DOMAINS = ("linear", "mu")
METRIC_FIELDS = ("scene_id", "psnr_l", "psnr_mu", "ssim_l", "ssim_mu", "status")

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _to_domain(x: np.ndarray, domain: str, mu: float) -> np.ndarray:
    if domain == "linear":
        return np.asarray(x, dtype=np.float64)
    if domain == "mu":
        return mu_law(x, mu).astype(np.float64)
    raise ValueError(f"domain must be one of {DOMAINS}, got {domain!r}")


def _pair(pred, target) -> tuple[np.ndarray, np.ndarray]:
    a, b = np.asarray(pred), np.asarray(target)
    if a.shape != b.shape:
        raise ValueError(f"shapes differ: {a.shape} vs {b.shape}")
    return a, b


def psnr(pred, target, domain: str = "linear", mu: float = 5000.0) -> float:
    """``10 log10(1 / MSE)`` with peak 1; identical images give ``inf``."""
    a, b = _pair(pred, target)
    a, b = _to_domain(a, domain, mu), _to_domain(b, domain, mu)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    r = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(r * r) / (2.0 * sigma * sigma))
    return g / g.sum()


def _blur_valid(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    r = len(g) // 2
    y = correlate1d(x, g, axis=-1, mode="constant")[..., r:x.shape[-1] - r]
    return correlate1d(y, g, axis=-2, mode="constant")[..., r:x.shape[-2] - r, :]


def ssim_map(a: np.ndarray, b: np.ndarray, data_range: float = 1.0) -> np.ndarray:
    """Per-pixel SSIM of two ``[..., H, W]`` arrays over valid window positions."""
    g = gaussian_window()
    if min(a.shape[-2:]) < len(g):
        raise ValueError(f"images of size {a.shape[-2:]} are smaller than the {len(g)}x{len(g)} window")
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mu_a, mu_b = _blur_valid(a, g), _blur_valid(b, g)
    var_a = _blur_valid(a * a, g) - mu_a ** 2
    var_b = _blur_valid(b * b, g) - mu_b ** 2
    cov = _blur_valid(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return num / den


def ssim(pred, target, domain: str = "linear", mu: float = 5000.0) -> float:
    """Mean SSIM over channels of ``[C, H, W]`` (or ``[B, C, H, W]``) images."""
    a, b = _pair(pred, target)
    a, b = _to_domain(a, domain, mu), _to_domain(b, domain, mu)
    if a.ndim < 2:
        raise ValueError("ssim needs at least 2-D images")
    return float(np.clip(ssim_map(a, b).mean(), -1.0, 1.0))


def scene_metrics(pred, target, mu: float = 5000.0) -> dict:
    return {
        "psnr_l": psnr(pred, target, "linear", mu),
        "psnr_mu": psnr(pred, target, "mu", mu),
        "ssim_l": ssim(pred, target, "linear", mu),
        "ssim_mu": ssim(pred, target, "mu", mu),
    }


def mean_row(rows: list[dict]) -> dict:
    """Arithmetic mean over rows whose status is ``ok``."""
    done = [r for r in rows if r.get("status", "ok") == "ok"]
    out = {"scene_id": "mean", "status": "ok" if done else "empty"}
    for key in METRIC_FIELDS[1:5]:
        vals = [float(r[key]) for r in done]
        out[key] = float(np.mean(vals)) if vals else math.nan
    return out


def write_metrics_csv(path, rows: list[dict]) -> Path:
    """One row per scene, then the mean row. Skipped scenes keep empty metric cells."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRIC_FIELDS, lineterminator="\n")
        writer.writeheader()
        for row in list(rows) + [mean_row(rows)]:
            writer.writerow({k: _fmt(row.get(k, "")) for k in METRIC_FIELDS})
    return path


def read_metrics_csv(path) -> list[dict]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        for key in METRIC_FIELDS[1:5]:
            row[key] = float(row[key]) if row[key] != "" else None
    return rows


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return value
