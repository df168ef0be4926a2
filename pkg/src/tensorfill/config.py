"""Flat key=value run configuration with CLI-flag precedence.

Precedence is strictly: CLI flag > config file > built-in default.  A flag
the user did not pass never shadows a config-file entry.
"""

from __future__ import annotations

from pathlib import Path

from .exceptions import ConfigError

__all__ = ["DEFAULTS", "parse_config_file", "resolve_options"]

DEFAULTS = {
    "model_dir": None,
    "methods": "silrtc,halrtc,fcp,altec,none",
    "ploss": "0.05,0.10,0.15,0.20,0.25,0.30",
    "trials": "100",
    "seed": "0",
    "protocol": "default",
    "scheme": "per-channel-row",
    "rows_per_packet": "1",
    "weights": None,
    "out": None,
    "format": "json",
    "dump_dir": None,
}


def parse_config_file(path) -> dict:
    """Read key = value lines; '#' starts a comment, blank lines are skipped."""
    text = Path(path).read_text(encoding="utf-8")
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, value = stripped.split("=", 1)
        key = key.strip()
        if key not in DEFAULTS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = value.strip()
    return out


def resolve_options(cli_values: dict, file_values: dict | None = None) -> dict:
    """Merge the three layers; CLI entries with value None count as absent."""
    merged = dict(DEFAULTS)
    for key, value in (file_values or {}).items():
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        merged[key] = value
    for key, value in cli_values.items():
        if key not in DEFAULTS:
            raise ConfigError(f"unknown option {key!r}")
        if value is not None:
            merged[key] = value
    return merged
