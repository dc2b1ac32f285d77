"""Flat ``key = value`` run configuration files; CLI flags override."""

from dataclasses import fields
from pathlib import Path
from typing import Dict, Optional

from .errors import ValidationError
from .federation import FederationConfig

# Keys consumed by the harness rather than FederationConfig itself.
_EXTRA_KEYS = {"test_manifest": str}

_BOOL_TRUE = {"1", "true", "yes", "on"}
_BOOL_FALSE = {"0", "false", "no", "off"}


def _coerce(key: str, raw: str, target_type):
    raw = raw.strip()
    if target_type is bool:
        low = raw.lower()
        if low in _BOOL_TRUE:
            return True
        if low in _BOOL_FALSE:
            return False
        raise ValidationError(f"config key {key!r}: {raw!r} is not a boolean")
    try:
        return target_type(raw)
    except ValueError:
        raise ValidationError(
            f"config key {key!r}: cannot parse {raw!r} as {target_type.__name__}"
        ) from None


def parse_config_file(path) -> Dict[str, object]:
    """Parse a flat key = value file into typed values; unknown keys error."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"config file not found: {path}")
    _by_name = {"int": int, "float": float, "bool": bool, "str": str}
    typemap = {
        f.name: _by_name[f.type] if isinstance(f.type, str) else f.type
        for f in fields(FederationConfig)
    }
    typemap.update(_EXTRA_KEYS)
    out: Dict[str, object] = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ValidationError(f"{path}:{lineno}: expected 'key = value'")
        key, raw = stripped.split("=", 1)
        key = key.strip()
        if key not in typemap:
            raise ValidationError(f"{path}:{lineno}: unknown config key {key!r}")
        out[key] = _coerce(key, raw, typemap[key])
    return out


def build_config(
    file_values: Optional[Dict[str, object]] = None,
    overrides: Optional[Dict[str, object]] = None,
) -> FederationConfig:
    """FederationConfig from defaults, then config file, then CLI overrides."""
    merged: Dict[str, object] = {}
    for source in (file_values, overrides):
        if source:
            merged.update(
                {k: v for k, v in source.items() if k not in _EXTRA_KEYS and v is not None}
            )
    cfg = FederationConfig(**merged)
    cfg.validate()
    return cfg
