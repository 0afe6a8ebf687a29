"""Per-year export matrices: shares, Balassa RCA, binary M and its marginals."""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import MalformedInputError, YearAbsentError
from .ingest import TradeTable

MATRIX_HEADER = ["year", "country", "product", "share", "rca", "m"]


@dataclass(frozen=True)
class YearSlice:
    year: int
    countries: list[str]
    products: list[str]
    X: np.ndarray


@dataclass(frozen=True)
class SpecializationMatrices:
    year: int
    countries: list[str]
    products: list[str]
    S: np.ndarray
    R: np.ndarray
    M: np.ndarray
    diversity: np.ndarray
    ubiquity: np.ndarray
    threshold: float = 1.0

    def country_index(self) -> dict[str, int]:
        return {c: i for i, c in enumerate(self.countries)}

    def product_index(self) -> dict[str, int]:
        return {p: j for j, p in enumerate(self.products)}


def build_year_slice(trade: TradeTable, year: int, average_years: int = 1) -> YearSlice:
    """Dense country x product export matrix for one year.

    With ``average_years = k > 1`` the cell values are averaged over the
    years ``year .. year + k - 1`` that are present in the table, which is how
    decade labels such as "the 1970s" are realised.
    """
    available = set(trade.years)
    if year not in available:
        raise YearAbsentError(f"year {year} absent from trade table (have {min(available)}..{max(available)})")
    window = [y for y in range(year, year + max(1, average_years)) if y in available]

    cells: dict[tuple[str, str], list[float]] = defaultdict(list)
    for r in trade.for_years(window):
        cells[(r.exporter, r.product)].append(r.value)

    countries = sorted({c for c, _ in cells})
    products = sorted({p for _, p in cells})
    ci = {c: i for i, c in enumerate(countries)}
    pj = {p: j for j, p in enumerate(products)}
    X = np.zeros((len(countries), len(products)))
    for (c, p), vals in cells.items():
        X[ci[c], pj[p]] = math.fsum(vals) / len(window)
    return prune(YearSlice(year, countries, products, X))


def prune(sl: YearSlice) -> YearSlice:
    """Drop countries and products whose totals are zero."""
    rows = sl.X.sum(axis=1) > 0
    cols = sl.X.sum(axis=0) > 0
    if rows.all() and cols.all():
        return sl
    X = sl.X[np.ix_(rows, cols)]
    return YearSlice(
        sl.year,
        [c for c, k in zip(sl.countries, rows) if k],
        [p for p, k in zip(sl.products, cols) if k],
        X,
    )


def compute_shares(sl: YearSlice) -> np.ndarray:
    """Share of each product in each country's total exports (rows sum to 1)."""
    totals = sl.X.sum(axis=1, keepdims=True)
    return sl.X / totals


def compute_rca(sl: YearSlice, threshold: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Balassa RCA and the binary specialization matrix ``M = RCA >= threshold``."""
    X = sl.X
    world = X.sum()
    product_share = X.sum(axis=0, keepdims=True) / world
    R = compute_shares(sl) / product_share
    M = (R >= threshold).astype(np.int64)
    return R, M


def diversity_ubiquity(M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    M = np.asarray(M)
    return M.sum(axis=1).astype(np.int64), M.sum(axis=0).astype(np.int64)


def specialize(sl: YearSlice, threshold: float = 1.0) -> SpecializationMatrices:
    S = compute_shares(sl)
    R, M = compute_rca(sl, threshold)
    k_c, k_p = diversity_ubiquity(M)
    return SpecializationMatrices(sl.year, list(sl.countries), list(sl.products), S, R, M, k_c, k_p, threshold)


def pooled_m(mats: Sequence[SpecializationMatrices]) -> tuple[list[str], list[str], np.ndarray]:
    """Union of M over several years on the union of their indices."""
    countries = sorted({c for m in mats for c in m.countries})
    products = sorted({p for m in mats for p in m.products})
    ci = {c: i for i, c in enumerate(countries)}
    pj = {p: j for j, p in enumerate(products)}
    out = np.zeros((len(countries), len(products)), dtype=np.int64)
    for m in mats:
        rows = [ci[c] for c in m.countries]
        cols = [pj[p] for p in m.products]
        out[np.ix_(rows, cols)] |= m.M
    return countries, products, out


def write_matrices(mats: SpecializationMatrices, path) -> None:
    """Dump every cell with positive share as ``year,country,product,share,rca,m``.

    Zero-share cells have zero RCA and M, so the sparse dump is lossless.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MATRIX_HEADER)
        rows, cols = np.nonzero(mats.S > 0)
        for i, j in zip(rows, cols):
            w.writerow([
                mats.year, mats.countries[i], mats.products[j],
                repr(float(mats.S[i, j])), repr(float(mats.R[i, j])), int(mats.M[i, j]),
            ])


def read_matrices(path, threshold: float = 1.0) -> SpecializationMatrices:
    entries = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != MATRIX_HEADER:
            raise MalformedInputError(path, [(1, f"expected header {','.join(MATRIX_HEADER)}")])
        for row in reader:
            entries.append((int(row[0]), row[1], row[2], float(row[3]), float(row[4]), int(row[5])))
    if not entries:
        raise MalformedInputError(path, [(2, "no rows")])
    years = {e[0] for e in entries}
    if len(years) != 1:
        raise MalformedInputError(path, [(2, f"expected a single year, got {sorted(years)}")])
    countries = sorted({e[1] for e in entries})
    products = sorted({e[2] for e in entries})
    ci = {c: i for i, c in enumerate(countries)}
    pj = {p: j for j, p in enumerate(products)}
    shape = (len(countries), len(products))
    S, R, M = np.zeros(shape), np.zeros(shape), np.zeros(shape, dtype=np.int64)
    for _, c, p, s, r, m in entries:
        S[ci[c], pj[p]] = s
        R[ci[c], pj[p]] = r
        M[ci[c], pj[p]] = m
    k_c, k_p = diversity_ubiquity(M)
    return SpecializationMatrices(years.pop(), countries, products, S, R, M, k_c, k_p, threshold)


def restrict_countries(mats: SpecializationMatrices, keep: Iterable[str]) -> SpecializationMatrices:
    """Sub-matrices for a subset of countries. Shares and RCA are not recomputed."""
    keep = set(keep)
    rows = [i for i, c in enumerate(mats.countries) if c in keep]
    M = mats.M[rows]
    k_c, k_p = diversity_ubiquity(M)
    return SpecializationMatrices(
        mats.year, [mats.countries[i] for i in rows], list(mats.products),
        mats.S[rows], mats.R[rows], M, k_c, k_p, mats.threshold,
    )
