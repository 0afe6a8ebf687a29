"""Loading and validation of the trade, Gini and lookup tables.

All loaders are pure functions of their input files. The trade loader sums
duplicate (year, exporter, product) rows with ``math.fsum`` so the result does
not depend on row order.
"""

from __future__ import annotations

import csv
import logging
import math
import re
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional

from .errors import ConfigError, DuplicateKeyError, EmptySampleError, MalformedInputError

log = logging.getLogger(__name__)

TRADE_HEADER = ["year", "exporter", "product", "value"]
GINI_HEADER = ["country", "year", "gini"]
SECTIONS_HEADER = ["product", "section_name"]

_COUNTRY_RE = re.compile(r"^[A-Z]{3}$")
_PRODUCT_RE = re.compile(r"^[0-9]{1,4}$")


@dataclass(frozen=True)
class FilterConfig:
    min_country_trade: float = 0.0
    min_product_trade: float = 0.0
    country_allowlist: Optional[frozenset] = None
    year_range: Optional[tuple[int, int]] = None
    require_gini: bool = False
    require_eci: bool = False

    def __post_init__(self):
        if self.min_country_trade < 0 or self.min_product_trade < 0:
            raise ConfigError("trade thresholds must be >= 0")
        if self.year_range is not None:
            lo, hi = self.year_range
            if lo > hi:
                raise ConfigError(f"empty year range {lo}:{hi}")
        if self.country_allowlist is not None and not isinstance(self.country_allowlist, frozenset):
            object.__setattr__(self, "country_allowlist", frozenset(self.country_allowlist))


@dataclass(frozen=True)
class TradeRecord:
    year: int
    exporter: str
    product: str
    value: float


@dataclass
class TradeTable:
    """Canonical trade records ordered by (year, exporter, product)."""

    records: list[TradeRecord]
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def years(self) -> list[int]:
        return sorted({r.year for r in self.records})

    def for_years(self, years: Iterable[int]) -> list[TradeRecord]:
        wanted = set(years)
        return [r for r in self.records if r.year in wanted]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRADE_HEADER)
            for r in self.records:
                w.writerow([r.year, r.exporter, r.product, repr(r.value)])


@dataclass
class GiniTable:
    """Gini observations per country, stored on [0, 1].

    ``raw`` keeps the values as supplied (percent scale) so the table can be
    written back out without rounding drift.
    """

    series: dict[str, list[tuple[int, float]]]
    raw: dict[tuple[str, int], float] = field(default_factory=dict, compare=False)

    @property
    def countries(self) -> list[str]:
        return sorted(self.series)

    def get(self, country: str, year: int) -> Optional[float]:
        for y, g in self.series.get(country, ()):
            if y == year:
                return g
        return None

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(GINI_HEADER)
            for c in self.countries:
                for y, g in self.series[c]:
                    w.writerow([c, y, repr(self.raw.get((c, y), g * 100.0))])


def _open_checked(path, header: list[str]):
    path = Path(path)
    if not path.is_file():
        raise MalformedInputError(path, [(0, "file not found")])
    fh = open(path, newline="", encoding="utf-8-sig")
    reader = csv.reader(fh)
    first = next(reader, None)
    got = [h.strip() for h in first] if first else []
    if got != header:
        fh.close()
        raise MalformedInputError(path, [(1, f"expected header {','.join(header)}, got {','.join(got)}")])
    return fh, reader


def _parse_float(text: str) -> float:
    v = float(text)
    if not math.isfinite(v):
        raise ValueError("not finite")
    return v


def normalize_product(code: str) -> str:
    code = code.strip()
    if not _PRODUCT_RE.match(code):
        raise ValueError(f"unparseable product code {code!r}")
    return code.zfill(4)


def normalize_country(code: str) -> str:
    code = code.strip().upper()
    if not _COUNTRY_RE.match(code):
        raise ValueError(f"unparseable country code {code!r}")
    return code


def load_trade(path, config: FilterConfig = FilterConfig(), gini: Optional[GiniTable] = None) -> TradeTable:
    """Load a ``year,exporter,product,value`` CSV into a filtered TradeTable.

    Zero-value rows are dropped, duplicates summed, then the year range,
    allowlist, Gini-availability and per-year trade thresholds are applied
    (countries first, then products).
    """
    if config.require_gini and gini is None:
        raise ConfigError("require_gini set but no Gini table supplied")

    problems: list[tuple[int, str]] = []
    cells: dict[tuple[int, str, str], list[float]] = defaultdict(list)
    diag = dict(rows_read=0, zero_dropped=0)

    fh, reader = _open_checked(path, TRADE_HEADER)
    with fh:
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            diag["rows_read"] += 1
            if len(row) != 4:
                problems.append((lineno, f"expected 4 fields, got {len(row)}"))
                continue
            try:
                year = int(row[0].strip())
            except ValueError:
                problems.append((lineno, f"bad year {row[0]!r}"))
                continue
            try:
                exporter = normalize_country(row[1])
                product = normalize_product(row[2])
            except ValueError as exc:
                problems.append((lineno, str(exc)))
                continue
            try:
                value = _parse_float(row[3])
            except ValueError:
                problems.append((lineno, f"bad value {row[3]!r}"))
                continue
            if value < 0:
                problems.append((lineno, f"negative value {value}"))
                continue
            if value == 0:
                diag["zero_dropped"] += 1
                continue
            cells[(year, exporter, product)].append(value)

    if problems:
        raise MalformedInputError(path, problems)

    diag["duplicates_merged"] = sum(len(v) - 1 for v in cells.values())
    agg = {k: math.fsum(v) for k, v in cells.items()}

    def drop(pred, name):
        nonlocal agg
        before = len(agg)
        agg = {k: v for k, v in agg.items() if not pred(k)}
        diag[name] = before - len(agg)

    if config.year_range is not None:
        lo, hi = config.year_range
        drop(lambda k: not lo <= k[0] <= hi, "dropped_year_range")
    if config.country_allowlist is not None:
        drop(lambda k: k[1] not in config.country_allowlist, "dropped_allowlist")
    if config.require_gini:
        have = set(gini.series)
        drop(lambda k: k[1] not in have, "dropped_no_gini")
    if config.min_country_trade > 0:
        totals = _totals(agg, 1)
        drop(lambda k: totals[(k[0], k[1])] < config.min_country_trade, "dropped_country_threshold")
    if config.min_product_trade > 0:
        totals = _totals(agg, 2)
        drop(lambda k: totals[(k[0], k[2])] < config.min_product_trade, "dropped_product_threshold")

    if not agg:
        raise EmptySampleError(f"{path}: no trade rows left after filtering")

    records = [TradeRecord(y, e, p, agg[(y, e, p)]) for (y, e, p) in sorted(agg)]
    diag["rows_out"] = len(records)
    log.debug("loaded %s: %s", path, diag)
    return TradeTable(records, diag)


def _totals(agg: Mapping[tuple[int, str, str], float], pos: int) -> dict:
    parts: dict[tuple[int, str], list[float]] = defaultdict(list)
    for k, v in agg.items():
        parts[(k[0], k[pos])].append(v)
    return {k: math.fsum(v) for k, v in parts.items()}


def load_gini(path) -> GiniTable:
    """Load a ``country,year,gini`` CSV with Gini on [0, 100]."""
    problems: list[tuple[int, str]] = []
    seen: dict[tuple[str, int], int] = {}
    raw: dict[tuple[str, int], float] = {}

    fh, reader = _open_checked(path, GINI_HEADER)
    with fh:
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                problems.append((lineno, f"expected 3 fields, got {len(row)}"))
                continue
            country = row[0].strip().upper()
            if not country:
                problems.append((lineno, "empty country code"))
                continue
            if not _COUNTRY_RE.match(country):
                log.warning("%s line %d: unrecognised country code %r kept as-is", path, lineno, country)
            try:
                year = int(row[1].strip())
            except ValueError:
                problems.append((lineno, f"bad year {row[1]!r}"))
                continue
            try:
                g = _parse_float(row[2])
            except ValueError:
                problems.append((lineno, f"bad gini {row[2]!r}"))
                continue
            if not 0.0 <= g <= 100.0:
                problems.append((lineno, f"gini {g} outside [0, 100]"))
                continue
            key = (country, year)
            if key in seen:
                raise DuplicateKeyError(
                    f"{path}: duplicate gini for {country} {year} (lines {seen[key]} and {lineno})"
                )
            seen[key] = lineno
            raw[key] = g

    if problems:
        raise MalformedInputError(path, problems)

    series: dict[str, list[tuple[int, float]]] = defaultdict(list)
    for (c, y), g in raw.items():
        series[c].append((y, g / 100.0))
    for c in series:
        series[c].sort()
    return GiniTable(dict(series), raw)


def load_sections(path) -> dict[str, str]:
    """Product code to section name lookup used for treemap grouping."""
    out: dict[str, str] = {}
    problems = []
    fh, reader = _open_checked(path, SECTIONS_HEADER)
    with fh:
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                problems.append((lineno, f"expected 2 fields, got {len(row)}"))
                continue
            try:
                out[normalize_product(row[0])] = row[1].strip()
            except ValueError as exc:
                problems.append((lineno, str(exc)))
    if problems:
        raise MalformedInputError(path, problems)
    return out
