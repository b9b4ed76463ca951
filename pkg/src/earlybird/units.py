"""Duration and size parsing for CLI flags and config files."""
from __future__ import annotations

import re

_DURATION_UNITS = {
    "ns": 1,
    "us": 1_000,
    "µs": 1_000,
    "ms": 1_000_000,
    "s": 1_000_000_000,
}

_SIZE_UNITS = {
    "": 1, "b": 1,
    "k": 1_000, "kb": 1_000, "kib": 1024,
    "m": 1_000_000, "mb": 1_000_000, "mib": 1024**2,
    "g": 1_000_000_000, "gb": 1_000_000_000, "gib": 1024**3,
}

_NUM = r"([0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)"


def parse_duration(text: str) -> float:
    """``"1ms"`` -> 1e6 (nanoseconds). A bare number is taken as ns."""
    m = re.fullmatch(_NUM + r"\s*(ns|us|µs|ms|s)?", str(text).strip())
    if not m:
        raise ValueError(f"bad duration {text!r} (expected e.g. 10us, 1ms)")
    return float(m.group(1)) * _DURATION_UNITS[m.group(2) or "ns"]


def parse_size(text: str) -> float:
    m = re.fullmatch(_NUM + r"\s*([a-zA-Z]*)", str(text).strip())
    if not m or m.group(2).lower() not in _SIZE_UNITS:
        raise ValueError(f"bad size {text!r}")
    return float(m.group(1)) * _SIZE_UNITS[m.group(2).lower()]


def parse_rate(text: str) -> float:
    """Bandwidth in bytes/s: ``"12.5GB/s"``, ``"100Gb/s"`` (bits) or a bare number."""
    s = str(text).strip()
    bits = False
    if s.lower().endswith("/s"):
        s = s[:-2]
        if s.endswith("b") and not s.endswith("B"):
            bits = True
            s = s[:-1]
    value = parse_size(s)
    return value / 8 if bits else value


def format_ms(ns: float) -> str:
    return f"{ns / 1e6:.6f}"
