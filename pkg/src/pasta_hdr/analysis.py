"""Correlation between the wavelet subbands of the temporal features."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .archive import save_npz
from .model import PASTANet
from .wavelet import build_pyramid, pcc_matrix

BAND_NAMES = ("ll", "lh", "hl", "hh")
PCC_FIELDS = ("level", "channels", "mean_abs_pcc", "mean_abs_pcc_within_band", "mean_abs_pcc_across_bands")


@dataclass
class PccReport:
    """``matrices[(level, a, b)]`` is the channel-by-channel PCC of bands ``a`` and ``b``."""

    matrices: dict
    summary: list

    def npz_payload(self) -> dict:
        return {f"level{k}_{a}_{b}": m for (k, a, b), m in self.matrices.items()}


def temporal_features(model: PASTANet, stack: np.ndarray) -> np.ndarray:
    """``F_t`` (or the plain concatenation for the alignment-free variant) of one ``[3, 6, H, W]`` stack."""
    x = np.asarray(stack, dtype=np.float32)
    if x.ndim == 4:
        x = x[None]
    feats = model.shallow_features(x[:, 0], x[:, 1], x[:, 2])
    ft, _ = model.temporal_features(feats)
    return ft.data


def _off_diagonal_mean(m: np.ndarray) -> float:
    mask = ~np.eye(m.shape[0], dtype=bool)
    return float(np.abs(m[mask]).mean()) if mask.any() else 0.0


def subband_pcc(features: np.ndarray, K: int) -> PccReport:
    """PCC matrices for every ordered band pairing at every level, plus per-level means
    of ``|PCC|`` over the off-diagonal entries of the joint matrix of all four bands."""
    pyramid = build_pyramid(features, K)
    matrices = {}
    summary = []
    for k, level in enumerate(pyramid.levels, start=1):
        bands = dict(zip(BAND_NAMES, (b.data for b in level.bands())))
        for a in BAND_NAMES:
            for b in BAND_NAMES:
                matrices[(k, a, b)] = pcc_matrix(bands[a], bands[b])
        joint = np.block([[matrices[(k, a, b)] for b in BAND_NAMES] for a in BAND_NAMES])
        c = bands["ll"].shape[1]
        within = [_off_diagonal_mean(matrices[(k, a, a)]) for a in BAND_NAMES]
        across = [np.abs(matrices[(k, a, b)]).mean() for a in BAND_NAMES for b in BAND_NAMES if a != b]
        summary.append({
            "level": k,
            "channels": c,
            "mean_abs_pcc": _off_diagonal_mean(joint),
            "mean_abs_pcc_within_band": float(np.mean(within)),
            "mean_abs_pcc_across_bands": float(np.mean(across)),
        })
    return PccReport(matrices=matrices, summary=summary)


def write_pcc(out_dir, report: PccReport) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    npz = out / "pcc_matrices.npz"
    save_npz(npz, report.npz_payload())
    table = out / "pcc_summary.csv"
    with table.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=PCC_FIELDS, lineterminator="\n")
        writer.writeheader()
        for row in report.summary:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return npz, table
