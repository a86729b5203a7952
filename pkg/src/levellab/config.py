"""Run configuration: presets, config files, flag precedence.

Config files are plain text, one ``key = value`` pair per line, with
``#`` comments. Values are coerced by the target field's type. Later
sources win: preset defaults, then the file, then explicit flags.
"""

from __future__ import annotations

from dataclasses import fields
from pathlib import Path

from .driver import DriverConfig

PRESETS = {
    "desk": {
        "total_updates": 1000,
        "hidden_size": 64,
        "workers": 8,
        "horizon": 64,
        "max_steps": 128,
        "lr": 3e-4,
        "eval_subset": 32,
    },
    "full": {
        "total_updates": 27000,
        "hidden_size": 256,
        "workers": 32,
        "horizon": 256,
        "max_steps": 250,
        "lr": 1e-4,
        "eval_subset": 0,
    },
}

DATASET_PRESETS = {
    "desk": {"train_n": 64, "test_n": 200, "size": 9},
    "full": {"train_n": 512, "test_n": 200, "size": 15},
}

_FIELD_TYPES = {f.name: f.type for f in fields(DriverConfig)}


def _coerce(key: str, raw: str):
    """Parse a raw string against the declared field type."""
    text = raw.strip()
    ftype = _FIELD_TYPES[key]
    if "bool" in ftype:
        low = text.lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ValueError(f"config key {key!r}: expected a boolean, got {raw!r}")
    if text.lower() in ("none", "null"):
        if "None" in ftype:
            return None
        raise ValueError(f"config key {key!r} cannot be none")
    try:
        if "int" in ftype:
            return int(text)
        if "float" in ftype:
            return float(text)
    except ValueError:
        raise ValueError(
            f"config key {key!r}: cannot parse {raw!r} as {ftype}") from None
    return text


def parse_config_file(path) -> dict:
    """Read key = value lines; unknown keys fail loudly by name."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    out = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValueError(
                f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in _FIELD_TYPES:
            raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
        out[key] = _coerce(key, raw)
    return out


def build_config(preset: str = "desk", file: str | None = None,
                 flags: dict | None = None) -> DriverConfig:
    """Merge defaults, preset, file, and flags in precedence order."""
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}; "
                         f"choose from {sorted(PRESETS)}")
    merged = dict(PRESETS[preset])
    if file:
        merged.update(parse_config_file(file))
    for key, value in (flags or {}).items():
        if value is None:
            continue
        if key not in _FIELD_TYPES:
            raise ValueError(f"unknown config key {key!r}")
        merged[key] = value
    return DriverConfig(**merged)
