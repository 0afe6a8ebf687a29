"""Run configuration (JSON file) with strict key checking."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

from .errors import ConfigError
from .ingest import FilterConfig

METHODS = ("eigen", "reflections")


def parse_years(text: str) -> tuple[int, int]:
    """``"1990:2000"`` or ``"1995"`` to an inclusive (first, last) pair."""
    try:
        if ":" in text:
            a, b = text.split(":", 1)
            lo, hi = int(a), int(b)
        else:
            lo = hi = int(text)
    except ValueError:
        raise ConfigError(f"bad year range {text!r}, expected A:B") from None
    if lo > hi:
        raise ConfigError(f"empty year range {text!r}")
    return lo, hi


@dataclass
class Filters:
    min_country_trade: float = 0.0
    min_product_trade: float = 0.0
    country_allowlist: Optional[list[str]] = None
    year_range: Optional[list[int]] = None
    require_gini: bool = False
    require_eci: bool = False

    def to_filter_config(self) -> FilterConfig:
        return FilterConfig(
            min_country_trade=float(self.min_country_trade),
            min_product_trade=float(self.min_product_trade),
            country_allowlist=frozenset(self.country_allowlist) if self.country_allowlist is not None else None,
            year_range=tuple(self.year_range) if self.year_range is not None else None,
            require_gini=self.require_gini,
            require_eci=self.require_eci,
        )


@dataclass
class RunConfig:
    trade: Optional[str] = None
    gini: Optional[str] = None
    sections: Optional[str] = None
    coordinates: Optional[str] = None
    regions: Optional[str] = None
    workspace: Optional[str] = None
    years: Optional[str] = None
    rca_threshold: float = 1.0
    edge_threshold: float = 0.55
    average_years: int = 1
    smoothing: int = 1
    eci_method: str = "eigen"
    eci_tol: Optional[float] = None
    eci_iterations: int = 10_000
    topology_years: Optional[list[int]] = None
    overlays: list[str] = field(default_factory=list)
    treemaps: list[str] = field(default_factory=list)
    filters: Filters = field(default_factory=Filters)

    def __post_init__(self):
        if isinstance(self.filters, dict):
            self.filters = _build(Filters, self.filters, "filters")
        self.validate()

    def validate(self) -> None:
        if self.rca_threshold <= 0:
            raise ConfigError("rca_threshold must be positive")
        if not 0 <= self.edge_threshold <= 1:
            raise ConfigError("edge_threshold must lie in [0, 1]")
        if self.average_years < 1 or self.smoothing < 1:
            raise ConfigError("average_years and smoothing must be >= 1")
        if self.eci_method not in METHODS:
            raise ConfigError(f"eci_method must be one of {METHODS}")
        if self.eci_iterations < 0:
            raise ConfigError("eci_iterations must be >= 0")
        if self.years is not None:
            parse_years(self.years)
        self.filters.to_filter_config()

    def to_dict(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: dict, base: Optional[Path] = None) -> "RunConfig":
        cfg = _build(cls, data, "config")
        if base is not None:
            for name in ("trade", "gini", "sections", "coordinates", "regions", "workspace"):
                v = getattr(cfg, name)
                if v is not None and not Path(v).is_absolute():
                    setattr(cfg, name, str((base / v).resolve()))
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"config file {path}: expected a JSON object")
        return cls.from_dict(data, path.parent.resolve())


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None
