"""Inference latency and peak traced memory across sampling variants and sizes."""

from __future__ import annotations

import csv
import gc
import statistics
import time
import tracemalloc
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .autograd import MemoryCapExceeded, memory_cap
from .model import ModelConfig, PASTANet

BENCH_FIELDS = (
    "variant", "config", "height", "width", "trials", "peak_memory_bytes",
    "mean_wall_time_seconds", "std_wall_time_seconds", "samples", "status",
)
DESK_RESOLUTIONS = ((256, 384), (512, 768))
MIN_TRIALS = 3


@dataclass
class BenchReport:
    variant: str
    config: str
    height: int
    width: int
    trials: int
    peak_memory_bytes: Optional[int] = None
    samples: list = field(default_factory=list)
    status: str = "ok"

    @property
    def mean_wall_time_seconds(self) -> Optional[float]:
        return statistics.fmean(self.samples) if self.samples else None

    @property
    def std_wall_time_seconds(self) -> Optional[float]:
        return statistics.pstdev(self.samples) if self.samples else None

    def row(self) -> dict:
        def cell(v):
            return "" if v is None else (repr(v) if isinstance(v, float) else v)
        return {
            "variant": self.variant, "config": self.config, "height": self.height,
            "width": self.width, "trials": self.trials,
            "peak_memory_bytes": cell(self.peak_memory_bytes),
            "mean_wall_time_seconds": cell(self.mean_wall_time_seconds),
            "std_wall_time_seconds": cell(self.std_wall_time_seconds),
            "samples": ";".join(repr(s) for s in self.samples),
            "status": self.status,
        }


def _stack(height: int, width: int, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).random((1, 3, 6, height, width), dtype=np.float32)


def capped_predict(model: PASTANet, x: np.ndarray, cap: Optional[int] = None) -> tuple[np.ndarray, int]:
    """Run ``model.predict`` under tracing; return the output and the traced
    high-water mark above the starting level (so the weights are excluded).

    Raises :class:`MemoryCapExceeded` as soon as live traced memory passes
    ``cap``, or afterwards if a transient inside an op pushed the peak over.
    """
    gc.collect()
    was_tracing = tracemalloc.is_tracing()
    if not was_tracing:
        tracemalloc.start()
    try:
        tracemalloc.reset_peak()
        base, _ = tracemalloc.get_traced_memory()
        with memory_cap(None if cap is None else base + cap):
            out = model.predict(x)
        _, peak = tracemalloc.get_traced_memory()
    finally:
        if not was_tracing:
            tracemalloc.stop()
    used = peak - base
    if cap is not None and used > cap:
        raise MemoryCapExceeded(f"peak traced memory {used} B exceeds cap {cap} B")
    return out, used


def measure_peak(model: PASTANet, x: np.ndarray, cap: Optional[int] = None) -> int:
    """Traced high-water mark of one forward pass, excluding the weights."""
    return capped_predict(model, x, cap)[1]


def bench_one(cfg: ModelConfig, height: int, width: int, trials: int = MIN_TRIALS,
              mem_cap_bytes: Optional[int] = None, seed: int = 0) -> BenchReport:
    """Warm-up forward under tracing (peak memory, cap enforcement), then
    ``trials`` timed forwards without tracing."""
    if trials < MIN_TRIALS:
        raise ValueError(f"trials must be >= {MIN_TRIALS}")
    report = BenchReport(cfg.sampling, "tiny" if cfg.tiny else "default", height, width, trials)
    model = PASTANet(cfg, seed=seed)
    x = _stack(height, width, seed)
    try:
        report.peak_memory_bytes = measure_peak(model, x, mem_cap_bytes)
    except MemoryError:
        report.status = "OOM"
        return report
    for _ in range(trials):
        t0 = time.perf_counter()
        model.predict(x)
        report.samples.append(time.perf_counter() - t0)
    return report


def run_bench(base: ModelConfig, variants: Iterable[str], resolutions: Sequence[tuple],
              trials: int = MIN_TRIALS, mem_cap_bytes: Optional[int] = None, seed: int = 0,
              progress=None) -> list[BenchReport]:
    reports = []
    for variant in variants:
        cfg = base.replace(sampling=variant)
        for h, w in resolutions:
            rep = bench_one(cfg, h, w, trials, mem_cap_bytes, seed)
            reports.append(rep)
            if progress is not None:
                progress(rep)
    return reports


def write_bench_csv(path, reports: Iterable[BenchReport]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=BENCH_FIELDS, lineterminator="\n")
        writer.writeheader()
        for rep in reports:
            writer.writerow(rep.row())
    return path


def read_bench_csv(path) -> list[dict]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        for key in ("height", "width", "trials"):
            row[key] = int(row[key])
        row["peak_memory_bytes"] = int(row["peak_memory_bytes"]) if row["peak_memory_bytes"] else None
        for key in ("mean_wall_time_seconds", "std_wall_time_seconds"):
            row[key] = float(row[key]) if row[key] else None
        row["samples"] = [float(s) for s in row["samples"].split(";")] if row["samples"] else []
    return rows


def parse_resolutions(text: str) -> list[tuple]:
    """``"256x384,512x768"`` -> ``[(256, 384), (512, 768)]``"""
    out = []
    for item in text.split(","):
        h, _, w = item.strip().lower().partition("x")
        if not w:
            raise ValueError(f"resolution {item!r} is not HxW")
        out.append((int(h), int(w)))
    return out
