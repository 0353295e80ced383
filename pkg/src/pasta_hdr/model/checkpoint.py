"""Checkpoint archive: one little-endian float32 ``.npy`` per parameter path
plus the model config as ``key = value`` text. Archive timestamps are fixed,
so identical weights give byte-identical files."""

from __future__ import annotations

import io
import zipfile
from pathlib import Path
from typing import Optional

import numpy as np

from ..archive import npy_bytes, write_entry
from ..config_io import format_kv, parse_kv
from .config import MODEL_KEYS, ModelConfig
from .network import PASTANet

CONFIG_ENTRY = "config.txt"
STATE_ENTRY = "state.txt"


class ConfigMismatch(ValueError):
    """A checkpoint was built for a different model configuration."""


def save_checkpoint(path, model: PASTANet, state: Optional[dict] = None,
                    arrays: Optional[dict] = None) -> Path:
    """Write ``model`` to ``path``.

    ``state`` holds scalar training state (iteration, step); ``arrays``
    holds extra tensors such as optimizer moments, stored under ``extra/``.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with zipfile.ZipFile(path, "w") as zf:
        write_entry(zf, CONFIG_ENTRY, format_kv(model.cfg.to_dict()).encode())
        for name, p in model.named_parameters():
            write_entry(zf, f"params/{name}.npy", npy_bytes(p.data, "<f4"))
        if state:
            write_entry(zf, STATE_ENTRY, format_kv(state).encode())
        for name in sorted(arrays or {}):
            write_entry(zf, f"extra/{name}.npy", npy_bytes(arrays[name], "<f4"))
    return path


def read_checkpoint(path) -> dict:
    """Return ``{"config", "params", "state", "arrays"}`` without building a model."""
    out = {"params": {}, "arrays": {}, "state": {}}
    with zipfile.ZipFile(path) as zf:
        names = zf.namelist()
        if CONFIG_ENTRY not in names:
            raise ValueError(f"{path}: not a checkpoint (no {CONFIG_ENTRY})")
        out["config"] = ModelConfig.from_dict(parse_kv(zf.read(CONFIG_ENTRY).decode(), MODEL_KEYS))
        if STATE_ENTRY in names:
            out["state"] = parse_kv(zf.read(STATE_ENTRY).decode())
        for name in names:
            for prefix, key in (("params/", "params"), ("extra/", "arrays")):
                if name.startswith(prefix) and name.endswith(".npy"):
                    arr = np.load(io.BytesIO(zf.read(name)), allow_pickle=False)
                    out[key][name[len(prefix):-4]] = arr
    return out


def config_differences(expected: ModelConfig, found: ModelConfig) -> list[str]:
    a, b = expected.to_dict(), found.to_dict()
    return [k for k in a if a[k] != b[k]]


def load_checkpoint(path, expected: Optional[ModelConfig] = None) -> tuple[PASTANet, dict]:
    """Rebuild the network stored at ``path``.

    If ``expected`` is given and differs from the stored config, raise
    :class:`ConfigMismatch` naming each differing field.
    """
    ck = read_checkpoint(path)
    cfg = ck["config"]
    if expected is not None:
        diff = config_differences(expected, cfg)
        if diff:
            detail = ", ".join(f"{k} (expected {expected.to_dict()[k]!r}, checkpoint has {cfg.to_dict()[k]!r})"
                               for k in diff)
            raise ConfigMismatch(f"{path}: config mismatch in {detail}")
    model = PASTANet(cfg)
    model.load_state_dict(ck["params"])
    return model, ck
