"""Flat ``key = value`` text used for config files and checkpoint metadata."""

from __future__ import annotations

import ast
from pathlib import Path
from typing import Iterable, Mapping


def format_kv(values: Mapping) -> str:
    lines = []
    for key, value in values.items():
        if isinstance(value, tuple):
            value = list(value)
        text = repr(value) if not isinstance(value, str) else value
        lines.append(f"{key} = {text}")
    return "\n".join(lines) + "\n"


def _parse_value(text: str):
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def parse_kv(text: str, allowed: Iterable[str] | None = None) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment. Unknown keys raise."""
    allowed = None if allowed is None else set(allowed)
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if allowed is not None and key not in allowed:
            raise ValueError(f"line {lineno}: unknown key {key!r}; allowed keys are {sorted(allowed)}")
        if key in out:
            raise ValueError(f"line {lineno}: duplicate key {key!r}")
        out[key] = _parse_value(value)
    return out


def read_kv(path, allowed: Iterable[str] | None = None) -> dict:
    return parse_kv(Path(path).read_text(encoding="utf-8"), allowed)
