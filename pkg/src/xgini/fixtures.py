"""Paths to the bundled synthetic two-year fixture (4 countries x 5 products)."""

from __future__ import annotations

from pathlib import Path

DATA = Path(__file__).parent / "data"


def path(name: str) -> Path:
    return DATA / name


def config_path() -> Path:
    return DATA / "fixture_config.json"
