"""Bundled prompt fixtures. Loaded byte-exact; never assembled at runtime."""

from __future__ import annotations

from functools import lru_cache
from importlib import resources


@lru_cache(maxsize=None)
def load(name: str) -> str:
    """Return the exact text of a bundled prompt file, e.g. load("table.txt")."""
    return resources.files(__package__).joinpath(name).read_text(encoding="utf-8")
