"""Gini interpolation, Product Gini Index, Xgini and regional averages."""

from __future__ import annotations

import csv
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from .errors import ConfigError, InputError
from .ingest import GiniTable

log = logging.getLogger(__name__)

PGI_HEADER = ["year", "product", "pgi", "support"]
XGINI_HEADER = ["year", "country", "xgini", "n_c", "coverage"]
REGIONS_HEADER = ["year", "group", "mean_xgini", "n_members"]

HPAE = ("CHN", "KOR", "SGP", "THA", "MYS", "PHL")
LAC = (
    "MEX", "PAN", "URY", "ARG", "COL", "CRI", "BRA", "SLV", "CHL", "TTO",
    "JAM", "GTM", "PRY", "DOM", "PER", "HND", "BOL", "ECU", "NIC", "VEN",
)
DEFAULT_ROSTERS: dict[str, tuple[str, ...]] = {
    "HPAE": HPAE,
    "LAC": LAC,
    "LAC_EXCL_MEX": tuple(c for c in LAC if c != "MEX"),
}


@dataclass
class InterpolatedGini:
    country: str
    years: list[int]
    values: list[float]
    observed: list[bool]

    def as_dict(self) -> dict[int, float]:
        return dict(zip(self.years, self.values))

    def value(self, year: int) -> Optional[float]:
        if not self.years or not self.years[0] <= year <= self.years[-1]:
            return None
        return self.values[year - self.years[0]]


def interpolate_gini(series: GiniTable, country: str) -> InterpolatedGini:
    """Piecewise-linear Gini for every year between the first and last knot.

    Knot years return the stored value itself, so observations are
    reproduced bit for bit. Nothing is extrapolated past either end.
    """
    knots = series.series.get(country)
    if not knots:
        raise InputError(f"no Gini observations for {country}")
    years, values, observed = [], [], []
    for (y0, g0), (y1, g1) in zip(knots, knots[1:]):
        years.append(y0)
        values.append(g0)
        observed.append(True)
        span = y1 - y0
        for y in range(y0 + 1, y1):
            values.append((g0 * (y1 - y) + g1 * (y - y0)) / span)
            years.append(y)
            observed.append(False)
    years.append(knots[-1][0])
    values.append(knots[-1][1])
    observed.append(True)
    return InterpolatedGini(country, years, values, observed)


def interpolate_all(series: GiniTable) -> dict[str, InterpolatedGini]:
    return {c: interpolate_gini(series, c) for c in series.countries}


def gini_for_year(interp: Mapping[str, InterpolatedGini], year: int) -> dict[str, float]:
    out = {}
    for c, ig in interp.items():
        v = ig.value(year)
        if v is not None:
            out[c] = v
    return out


@dataclass
class PgiTable:
    year: Optional[int]
    pgi: dict[str, float]
    support: dict[str, int]


@dataclass
class XginiTable:
    year: Optional[int]
    xgini: dict[str, float]
    n_c: dict[str, float]
    coverage: dict[str, float]


GiniInput = Union[Mapping[str, float], Sequence[float], np.ndarray]


def _gini_vector(gini: GiniInput, countries: Sequence[str]) -> np.ndarray:
    if isinstance(gini, Mapping):
        return np.array([gini.get(c, np.nan) for c in countries], dtype=float)
    g = np.asarray(gini, dtype=float)
    if g.shape != (len(countries),):
        raise ValueError("gini vector does not match the country index")
    return g


def _labels(labels, n, prefix):
    return list(labels) if labels is not None else [f"{prefix}{i}" for i in range(n)]


def compute_pgi(
    M: np.ndarray,
    S: np.ndarray,
    gini: GiniInput,
    countries: Optional[Sequence[str]] = None,
    products: Optional[Sequence[str]] = None,
    year: Optional[int] = None,
) -> PgiTable:
    """Share-weighted mean Gini of each product's RCA exporters.

    ``PGI_p = sum_c M_cp s_cp gini_c / sum_c M_cp s_cp`` over countries with a
    Gini value. Products with no such exporter are left out.
    """
    M = np.asarray(M)
    S = np.asarray(S, dtype=float)
    countries = _labels(countries, M.shape[0], "c")
    products = _labels(products, M.shape[1], "p")
    g = _gini_vector(gini, countries)
    has = ~np.isnan(g)
    w = (M[has] * S[has]).astype(float)
    num = w.T @ g[has]
    den = w.sum(axis=0)
    support = (M[has] != 0).sum(axis=0)

    pgi, sup = {}, {}
    missing = []
    for j, p in enumerate(products):
        if support[j] == 0 or not den[j] > 0:
            missing.append(p)
            continue
        pgi[p] = float(num[j] / den[j])
        sup[p] = int(support[j])
    if missing:
        log.warning("year %s: no Gini-covered RCA exporter for %d products (%s...)", year, len(missing), ",".join(missing[:5]))
    return PgiTable(year, pgi, sup)


def compute_xgini(
    M: np.ndarray,
    S: np.ndarray,
    pgi: PgiTable,
    countries: Optional[Sequence[str]] = None,
    products: Optional[Sequence[str]] = None,
    year: Optional[int] = None,
) -> XginiTable:
    """Xgini of each country: share-weighted mean PGI over its RCA basket.

    The normalizer ``N_c`` sums ``M_cp s_cp`` over products whose PGI exists.
    ``coverage`` is ``N_c`` divided by the same sum over the full RCA basket.
    """
    M = np.asarray(M)
    S = np.asarray(S, dtype=float)
    countries = _labels(countries, M.shape[0], "c")
    products = _labels(products, M.shape[1], "p")
    if year is None:
        year = pgi.year
    defined = np.array([p in pgi.pgi for p in products])
    pv = np.array([pgi.pgi.get(p, 0.0) for p in products])
    w = (M * S).astype(float)
    w_def = w[:, defined]
    n_c = w_def.sum(axis=1)
    full = w.sum(axis=1)
    num = w_def @ pv[defined]

    xg, nc, cov = {}, {}, {}
    dropped = []
    for i, c in enumerate(countries):
        if not n_c[i] > 0:
            dropped.append(c)
            continue
        xg[c] = float(num[i] / n_c[i])
        nc[c] = float(n_c[i])
        cov[c] = float(n_c[i] / full[i])
    if dropped:
        log.warning("year %s: empty RCA basket with defined PGI for %s; omitted", year, ",".join(dropped))
    return XginiTable(year, xg, nc, cov)


@dataclass(frozen=True)
class RegionPoint:
    year: int
    group: str
    mean_xgini: Optional[float]
    n_members: int


def regional_series(
    xgini_by_year: Mapping[int, Union[XginiTable, Mapping[str, float]]],
    groups: Mapping[str, Iterable[str]],
    exclude: Iterable[str] = (),
    smoothing: int = 1,
) -> list[RegionPoint]:
    """Unweighted mean Xgini of each group's members, per year.

    Members without a value in a year are dropped for that year. A year with
    no member values is a gap (``mean_xgini`` is None), never zero. With
    ``smoothing = k > 1`` each point is the trailing mean of the group's
    available values over the last k years.
    """
    exclude = set(exclude)
    years = sorted(xgini_by_year)
    out = []
    for name in sorted(groups):
        members = [c for c in groups[name] if c not in exclude]
        raw: dict[int, tuple[Optional[float], int]] = {}
        for y in years:
            tab = xgini_by_year[y]
            vals = tab.xgini if isinstance(tab, XginiTable) else tab
            present = [vals[c] for c in members if c in vals]
            raw[y] = (math.fsum(present) / len(present), len(present)) if present else (None, 0)
        for y in years:
            mean, n = raw[y]
            if smoothing > 1 and mean is not None:
                window = [raw[t][0] for t in range(y - smoothing + 1, y + 1) if t in raw and raw[t][0] is not None]
                mean = math.fsum(window) / len(window)
            out.append(RegionPoint(y, name, mean, n))
    return out


_ROSTER_LINE = re.compile(r"^\s*([A-Za-z0-9_\-]+)\s*:\s*(.*)$")


def parse_rosters(text: str) -> dict[str, tuple[str, ...]]:
    """Parse ``GROUP: CODE,CODE,...`` lines. Blank lines and ``#`` comments are skipped."""
    groups: dict[str, tuple[str, ...]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        m = _ROSTER_LINE.match(line)
        if not m:
            raise ConfigError(f"roster line {lineno}: expected 'GROUP: CODE,CODE,...'")
        name = m.group(1)
        if name in groups:
            raise ConfigError(f"roster line {lineno}: group {name} defined twice")
        codes = tuple(c.strip().upper() for c in m.group(2).split(",") if c.strip())
        if not codes:
            raise ConfigError(f"roster line {lineno}: group {name} is empty")
        groups[name] = codes
    return groups


def load_rosters(path) -> dict[str, tuple[str, ...]]:
    return parse_rosters(Path(path).read_text(encoding="utf-8"))


def format_rosters(groups: Mapping[str, Sequence[str]]) -> str:
    return "".join(f"{name}: {','.join(codes)}\n" for name, codes in groups.items())


def _fmt(v: Optional[float]) -> str:
    return "" if v is None else repr(float(v))


def write_pgi(tab: PgiTable, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PGI_HEADER)
        for p in sorted(tab.pgi):
            w.writerow([tab.year, p, _fmt(tab.pgi[p]), tab.support[p]])


def read_pgi(path) -> PgiTable:
    pgi, sup, year = {}, {}, None
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            year = int(row["year"])
            pgi[row["product"]] = float(row["pgi"])
            sup[row["product"]] = int(row["support"])
    return PgiTable(year, pgi, sup)


def write_xgini(tab: XginiTable, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(XGINI_HEADER)
        for c in sorted(tab.xgini):
            w.writerow([tab.year, c, _fmt(tab.xgini[c]), _fmt(tab.n_c[c]), _fmt(tab.coverage[c])])


def read_xgini(path) -> XginiTable:
    xg, nc, cov, year = {}, {}, {}, None
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            year = int(row["year"])
            c = row["country"]
            xg[c], nc[c], cov[c] = float(row["xgini"]), float(row["n_c"]), float(row["coverage"])
    return XginiTable(year, xg, nc, cov)


def write_regions(points: Sequence[RegionPoint], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REGIONS_HEADER)
        for pt in points:
            w.writerow([pt.year, pt.group, _fmt(pt.mean_xgini), pt.n_members])
