"""Presentation tables: ECI ranking blocks, treemaps, product-space overlays
and long-form time series."""

from __future__ import annotations

import csv
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence, Union
from xml.sax.saxutils import escape, quoteattr

import numpy as np

from .complexity import ComplexityScores, rank_by_eci
from .errors import EmptySampleError, InputError
from .ingest import TradeTable
from .inequality import PgiTable
from .matrices import SpecializationMatrices
from .prodspace import ProductSpaceGraph

log = logging.getLogger(__name__)

RANKING_HEADER = ["section", "rank", "country", "name", "eci", "tie"]
TREEMAP_HEADER = ["level", "section", "product", "value", "share"]
TIMESERIES_HEADER = ["year", "entity", "metric", "value"]

FLAT_SECTION = "All products"

# Display names for the economies that appear in the ranking blocks.
COUNTRY_NAMES = {
    "JPN": "Japan", "CHE": "Switzerland", "DEU": "Germany", "SWE": "Sweden",
    "GBR": "United Kingdom", "KOR": "South Korea", "SGP": "Singapore", "CHN": "China",
    "THA": "Thailand", "MYS": "Malaysia", "PHL": "Philippines", "MEX": "Mexico",
    "PAN": "Panama", "URY": "Uruguay", "ARG": "Argentina", "COL": "Colombia",
    "CRI": "Costa Rica", "BRA": "Brazil", "SLV": "El Salvador", "CHL": "Chile",
    "TTO": "Trinidad and Tobago", "JAM": "Jamaica", "GTM": "Guatemala", "PRY": "Paraguay",
    "DOM": "Dominican Republic", "PER": "Peru", "HND": "Honduras", "BOL": "Bolivia",
    "ECU": "Ecuador", "NIC": "Nicaragua", "VEN": "Venezuela", "PNG": "Papua New Guinea",
    "MRT": "Mauritania", "LBY": "Libya", "TKM": "Turkmenistan", "GIN": "Guinea",
}

# Two-colour ramp for PGI: low inequality blue, high inequality red.
LOW_COLOR = (0x21, 0x66, 0xAC)
HIGH_COLOR = (0xB2, 0x18, 0x2B)
NO_DATA_COLOR = "#cccccc"


@dataclass(frozen=True)
class ReportRow:
    section: str
    rank: Optional[int]
    code: str
    name: str
    eci: Optional[float]
    tie: bool = False


def make_ranking_report(
    scores: Union[ComplexityScores, Mapping[str, float]],
    rosters: Mapping[str, Sequence[str]],
    labels: Optional[Mapping[str, str]] = None,
    top: int = 5,
    bottom: int = 5,
) -> list[ReportRow]:
    """Top block, one block per roster (in roster order), bottom block.

    Ranks are the global ranks from ``rank_by_eci``. Roster members without a
    score are listed last in their block with a blank rank.
    """
    labels = {**COUNTRY_NAMES, **(labels or {})}
    ranking = rank_by_eci(scores, labels)
    by_code = {r.code: r for r in ranking}

    def row(section, r):
        return ReportRow(section, r.rank, r.code, r.name, r.score, r.tie)

    out = [row(f"Top {top} countries", r) for r in ranking[:top]]
    for name, members in rosters.items():
        present = sorted((by_code[c] for c in members if c in by_code), key=lambda r: (r.rank, r.code))
        out.extend(row(name, r) for r in present)
        for c in members:
            if c not in by_code:
                log.warning("roster %s: %s has no ECI score", name, c)
                out.append(ReportRow(name, None, c, labels.get(c, c), None))
    out.extend(row(f"Bottom {bottom} countries", r) for r in ranking[max(len(ranking) - bottom, 0):])
    return out


def write_ranking_report(rows: Sequence[ReportRow], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RANKING_HEADER)
        for r in rows:
            w.writerow([
                r.section, "" if r.rank is None else r.rank, r.code, r.name,
                "" if r.eci is None else f"{r.eci:.3f}", int(r.tie),
            ])


@dataclass(frozen=True)
class TreemapLeaf:
    section: str
    product: str
    value: float
    share: float


@dataclass(frozen=True)
class TreemapGroup:
    section: str
    value: float
    share: float


@dataclass
class TreemapSpec:
    scope: tuple[str, ...]
    year: int
    total: float
    groups: list[TreemapGroup]
    leaves: list[TreemapLeaf]
    note: str = ""


def make_treemap(
    trade: TradeTable,
    scope: Iterable[str],
    year: int,
    sections: Optional[Mapping[str, str]] = None,
    note: str = "",
) -> TreemapSpec:
    """Export composition of a set of exporters, grouped by section then product.

    Without a sections lookup every product falls in one flat group. Partner
    filtering (e.g. exports to one region) is done upstream by supplying a
    pre-filtered trade file; ``note`` records that.
    """
    scope = tuple(sorted(set(scope)))
    wanted = set(scope)
    parts: dict[str, list[float]] = defaultdict(list)
    for r in trade.for_years([year]):
        if r.exporter in wanted:
            parts[r.product].append(r.value)
    if not parts:
        raise EmptySampleError(f"no exports for scope {','.join(scope)} in {year}")

    leaf_val = {p: math.fsum(v) for p, v in parts.items()}
    total = math.fsum(leaf_val.values())
    sec_of = (lambda p: sections.get(p, "Unclassified")) if sections else (lambda p: FLAT_SECTION)
    leaves = sorted(
        (TreemapLeaf(sec_of(p), p, v, v / total) for p, v in leaf_val.items()),
        key=lambda l: (l.section, l.product),
    )
    by_sec: dict[str, list[float]] = defaultdict(list)
    for l in leaves:
        by_sec[l.section].append(l.value)
    groups = [TreemapGroup(s, math.fsum(v), math.fsum(v) / total) for s, v in sorted(by_sec.items())]
    return TreemapSpec(scope, year, total, groups, leaves, note)


def write_treemap(spec: TreemapSpec, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TREEMAP_HEADER)
        for g in spec.groups:
            w.writerow(["section", g.section, "", repr(g.value), repr(g.share)])
        for l in spec.leaves:
            w.writerow(["product", l.section, l.product, repr(l.value), repr(l.share)])


@dataclass
class OverlayFrame:
    year: Optional[int]
    entity: str
    products: list[str]
    size: dict[str, float]
    rca: dict[str, bool]
    pgi: dict[str, Optional[float]]
    color: dict[str, str]
    color_range: tuple[Optional[float], Optional[float]] = (None, None)

    def node_attrs(self) -> dict[str, dict]:
        return {
            p: {"share": self.size[p], "rca": self.rca[p], "pgi": self.pgi[p], "color": self.color[p]}
            for p in self.products
        }


def pgi_color(v: Optional[float], lo: Optional[float], hi: Optional[float]) -> str:
    """Linear ramp from LOW_COLOR at ``lo`` to HIGH_COLOR at ``hi``."""
    if v is None or lo is None:
        return NO_DATA_COLOR
    t = 0.5 if hi == lo else min(max((v - lo) / (hi - lo), 0.0), 1.0)
    rgb = (round(a + (b - a) * t) for a, b in zip(LOW_COLOR, HIGH_COLOR))
    return "#" + "".join(f"{c:02x}" for c in rgb)


def make_overlay(
    graph: ProductSpaceGraph,
    mats: SpecializationMatrices,
    pgi: PgiTable,
    entity: Union[str, Sequence[str]],
    X: Optional[np.ndarray] = None,
    name: Optional[str] = None,
) -> OverlayFrame:
    """Per-product overlay values for one country or a group of countries.

    For a single country the size is its export share ``s_cp`` and the flag
    is ``M_cp``. For a group, export values ``X`` (aligned with ``mats``) are
    summed over members and the group's own share and Balassa RCA are used.
    Products the entity does not export have size 0.
    """
    members = [entity] if isinstance(entity, str) else list(entity)
    label = name or (entity if isinstance(entity, str) else "+".join(members))
    ci = mats.country_index()
    pj = mats.product_index()
    rows = [ci[c] for c in members if c in ci]
    if not rows:
        log.warning("overlay %s: no member present in %s", label, mats.year)

    share = np.zeros(len(mats.products))
    flag = np.zeros(len(mats.products), dtype=bool)
    if len(members) == 1 and rows:
        share = mats.S[rows[0]]
        flag = mats.M[rows[0]] != 0
    elif rows:
        if X is None:
            raise ValueError("group overlays need the export value matrix X")
        x = X[rows].sum(axis=0)
        share = x / x.sum()
        world = X.sum(axis=0) / X.sum()
        flag = share / world >= mats.threshold

    vals = list(pgi.pgi.values())
    lo, hi = (min(vals), max(vals)) if vals else (None, None)
    size, rca, pv, color = {}, {}, {}, {}
    for p in graph.products:
        j = pj.get(p)
        size[p] = float(share[j]) if j is not None else 0.0
        rca[p] = bool(flag[j]) if j is not None else False
        pv[p] = pgi.pgi.get(p)
        color[p] = pgi_color(pv[p], lo, hi)
    return OverlayFrame(mats.year, label, list(graph.products), size, rca, pv, color, (lo, hi))


def overlay_svg(
    frame: OverlayFrame,
    graph: ProductSpaceGraph,
    coords: Mapping[str, tuple[float, float]],
    width: int = 800,
    height: int = 600,
    margin: float = 20.0,
    min_radius: float = 2.0,
    max_radius: float = 14.0,
) -> bytes:
    """SVG 1.1 rendering of an overlay on precomputed node coordinates.

    Circle area grows with export share (radius ``min_radius`` at zero share);
    RCA products get a black ring; fill is the PGI colour.
    """
    missing = [p for p in graph.products if p not in coords]
    if missing:
        raise InputError(f"no coordinates for products {missing[:10]}")
    xs = [coords[p][0] for p in graph.products]
    ys = [coords[p][1] for p in graph.products]
    x0, x1, y0, y1 = min(xs), max(xs), min(ys), max(ys)
    sx = (width - 2 * margin) / (x1 - x0) if x1 > x0 else 0.0
    sy = (height - 2 * margin) / (y1 - y0) if y1 > y0 else 0.0

    def pos(p):
        x, y = coords[p]
        px = margin + (x - x0) * sx if sx else width / 2
        py = margin + (y1 - y) * sy if sy else height / 2
        return px, py

    smax = max(frame.size.values(), default=0.0)
    lo, hi = frame.color_range
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f"<title>{escape(f'{frame.entity} {frame.year}')}</title>",
        "<metadata>"
        f"pgi color scale: linear {pgi_color(lo, lo, hi)} at {_num(lo)} to {pgi_color(hi, lo, hi)} at {_num(hi)}; "
        f"no-data {NO_DATA_COLOR}"
        "</metadata>",
        '<g id="edges" stroke="#999999" stroke-width="0.5">',
    ]
    for e in graph.edges:
        (ax, ay), (bx, by) = pos(e.p), pos(e.q)
        lines.append(f'<line x1="{ax:.3f}" y1="{ay:.3f}" x2="{bx:.3f}" y2="{by:.3f}"/>')
    lines.append("</g>")
    lines.append('<g id="nodes">')
    for p in graph.products:
        x, y = pos(p)
        s = frame.size[p]
        r = min_radius + (max_radius - min_radius) * math.sqrt(s / smax) if smax > 0 else min_radius
        stroke = 'stroke="#000000" stroke-width="1.5"' if frame.rca[p] else 'stroke="none"'
        lines.append(
            f'<circle id={quoteattr("n" + p)} cx="{x:.3f}" cy="{y:.3f}" r="{r:.3f}" '
            f'fill="{frame.color[p]}" {stroke}/>'
        )
    lines.append("</g>")
    lines.append("</svg>")
    return ("\n".join(lines) + "\n").encode("utf-8")


def _num(v):
    return "NA" if v is None else f"{v:.6f}"


def make_timeseries(
    tables: Mapping[str, Mapping[int, Mapping[str, float]]],
    entities: Optional[Iterable[str]] = None,
) -> list[tuple[int, str, str, float]]:
    """Long-form ``(year, entity, metric, value)`` rows.

    ``tables`` maps metric name to ``{year: {entity: value}}``. Missing
    entity-years simply have no row. Requested entities absent everywhere are
    skipped with a warning.
    """
    seen = {e for per_year in tables.values() for vals in per_year.values() for e in vals}
    if entities is None:
        wanted = sorted(seen)
    else:
        wanted = []
        for e in entities:
            if e in seen:
                wanted.append(e)
            else:
                log.warning("time series: unknown entity %s skipped", e)
        wanted = sorted(set(wanted))
    rows = []
    for metric in sorted(tables):
        for year in sorted(tables[metric]):
            vals = tables[metric][year]
            for e in wanted:
                v = vals.get(e)
                if v is not None and not (isinstance(v, float) and math.isnan(v)):
                    rows.append((year, e, metric, float(v)))
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    return rows


def write_timeseries(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TIMESERIES_HEADER)
        for year, entity, metric, value in rows:
            w.writerow([year, entity, metric, repr(value)])
