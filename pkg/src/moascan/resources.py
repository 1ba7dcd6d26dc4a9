"""Locations of the data files shipped inside the package."""

from __future__ import annotations

from pathlib import Path

DATA_DIR = Path(__file__).resolve().parent / "data"
BUILTIN_PREFIX = "builtin:"


def data_path(*parts: str) -> Path:
    return DATA_DIR.joinpath(*parts)


def resolve_builtin(ref: str) -> Path:
    """Map ``builtin:vuldroid`` to the bundled ``data/vuldroid/vuldroid.yaml``; other refs pass through."""
    if ref.startswith(BUILTIN_PREFIX):
        name = ref[len(BUILTIN_PREFIX):]
        return data_path(name, f"{name}.yaml")
    return Path(ref)
