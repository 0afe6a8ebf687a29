"""Economic and product complexity indices.

Two independent routes to the same country scores:

* ``compute_eci_eigen`` finds the second eigenvector of the country-country
  transition matrix ``W = D^-1 M U^-1 M^T`` by deflated power iteration.
* ``compute_eci_reflections`` runs the method of reflections, alternating
  averages of diversity and ubiquity.

Scores are z-scored with the population standard deviation and signed so
that ECI correlates non-negatively with diversity and PCI with minus
ubiquity.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import DegenerateSpectrumError, DisconnectedError, NonConvergenceError

SCORES_HEADER = ["year", "entity_kind", "entity", "score", "rank"]

EIGEN_TOL = 1e-12
EIGEN_MAX_ITER = 10_000
DEGENERACY_TOL = 1e-9
TIE_TOL = 1e-9


@dataclass
class ComplexityScores:
    year: Optional[int]
    countries: list[str]
    products: list[str]
    eci: np.ndarray
    pci: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def eci_map(self) -> dict[str, float]:
        return {c: float(v) for c, v in zip(self.countries, self.eci)}

    def pci_map(self) -> dict[str, float]:
        return {p: float(v) for p, v in zip(self.products, self.pci)}


def transition_matrix(M: np.ndarray) -> np.ndarray:
    """Country-country matrix ``W[c, c'] = sum_p M[c,p] M[c',p] / (k_c k_p)``."""
    M = np.asarray(M, dtype=float)
    k_c = M.sum(axis=1)
    k_p = M.sum(axis=0)
    return (M / k_c[:, None] / k_p[None, :]) @ M.T


def product_transition_matrix(M: np.ndarray) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    k_c = M.sum(axis=1)
    k_p = M.sum(axis=0)
    return (M.T / k_p[:, None] / k_c[None, :]) @ M


def zscore(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    centered = v - v.mean()
    sd = np.sqrt(np.mean(centered**2))
    if not sd > 0:
        raise DegenerateSpectrumError("degenerate spectrum: scores have zero variance")
    return centered / sd


def _labels(labels, n, prefix):
    return list(labels) if labels is not None else [f"{prefix}{i}" for i in range(n)]


def _check_input(M: np.ndarray, countries: Sequence[str], products: Sequence[str]) -> np.ndarray:
    M = np.asarray(M)
    if M.ndim != 2 or M.size == 0:
        raise ValueError("M must be a non-empty 2-D matrix")
    if not np.isin(M, (0, 1)).all():
        raise ValueError("M must be binary")
    k_c = M.sum(axis=1)
    k_p = M.sum(axis=0)
    if (k_c == 0).any():
        bad = [countries[i] for i in np.flatnonzero(k_c == 0)]
        raise ValueError(f"M has countries with no products: {bad}")
    if (k_p == 0).any():
        bad = [products[j] for j in np.flatnonzero(k_p == 0)]
        raise ValueError(f"M has products with no exporters: {bad}")
    return M.astype(float)


def components(M: np.ndarray, countries: Sequence[str]) -> list[list[str]]:
    """Country groups of the connected components of the bipartite graph of M."""
    n_c, n_p = M.shape
    adj = np.zeros((n_c + n_p, n_c + n_p), dtype=np.int8)
    adj[:n_c, n_c:] = M != 0
    n, lab = connected_components(csr_matrix(adj), directed=False)
    groups: dict[int, list[str]] = {}
    for i in range(n_c):
        groups.setdefault(lab[i], []).append(countries[i])
    return sorted(groups.values())


def _check_connected(M, countries):
    comps = components(M, countries)
    if len(comps) > 1:
        raise DisconnectedError(comps)


def _fix_sign(v: np.ndarray, reference: np.ndarray) -> np.ndarray:
    ref = reference - reference.mean()
    if np.dot(v - v.mean(), ref) < 0:
        return -v
    return v


def _pci_from_eci(M: np.ndarray, eci: np.ndarray) -> np.ndarray:
    # product eigenvector of U^-1 M^T D^-1 M via the reflection relation
    k_p = M.sum(axis=0)
    q = (M.T @ eci) / k_p
    return _fix_sign(zscore(q), -k_p)


def compute_eci_eigen(
    M: np.ndarray,
    countries: Optional[Sequence[str]] = None,
    products: Optional[Sequence[str]] = None,
    year: Optional[int] = None,
    tol: float = EIGEN_TOL,
    max_iter: int = EIGEN_MAX_ITER,
) -> ComplexityScores:
    """ECI/PCI from the second eigenvector of the transition matrix.

    Works on the symmetric similar matrix ``A = D^-1/2 M U^-1 M^T D^-1/2``
    whose leading eigenvector ``sqrt(k_c)`` is known in closed form and is
    projected out before power iteration.
    """
    countries = _labels(countries, np.shape(M)[0], "c")
    products = _labels(products, np.shape(M)[1], "p")
    M = _check_input(M, countries, products)
    _check_connected(M, countries)

    k_c = M.sum(axis=1)
    k_p = M.sum(axis=0)
    B = M / np.sqrt(k_c)[:, None] / np.sqrt(k_p)[None, :]
    A = B @ B.T
    u1 = np.sqrt(k_c / k_c.sum())
    A2 = A - np.outer(u1, u1)

    spectrum = np.sort(np.linalg.eigvalsh(A2))[::-1]
    lam2 = spectrum[0]
    if lam2 <= DEGENERACY_TOL:
        raise DegenerateSpectrumError(
            "degenerate spectrum: second eigenvalue is zero, all countries are equivalent"
        )
    if len(spectrum) > 1 and lam2 - spectrum[1] <= DEGENERACY_TOL:
        raise DegenerateSpectrumError(
            f"degenerate spectrum: second eigenvalue {lam2:.12g} is repeated"
        )

    n = len(k_c)
    # deterministic start with generic components along every eigenvector
    x = np.sqrt(k_c) * (k_c - k_c.mean()) + 1e-3 * np.sin(np.arange(1, n + 1))
    x -= np.dot(x, u1) * u1
    x /= np.linalg.norm(x)
    delta = np.inf
    it = 0
    while it < max_iter:
        it += 1
        y = A2 @ x
        y -= np.dot(y, u1) * u1
        y /= np.linalg.norm(y)
        delta = np.max(np.abs(y - x))
        x = y
        if delta < tol:
            break
    else:
        raise NonConvergenceError(it, float(delta))

    eigval = float(x @ A2 @ x)
    eci = _fix_sign(zscore(x / np.sqrt(k_c)), k_c)
    pci = _pci_from_eci(M, eci)
    return ComplexityScores(
        year, countries, products, eci, pci,
        {"method": "eigen", "iterations": it, "last_delta": float(delta), "eigenvalue": eigval},
    )


def compute_eci_reflections(
    M: np.ndarray,
    countries: Optional[Sequence[str]] = None,
    products: Optional[Sequence[str]] = None,
    year: Optional[int] = None,
    iterations: int = EIGEN_MAX_ITER,
    tol: float = 1e-10,
) -> ComplexityScores:
    """ECI/PCI by the method of reflections.

    Starting from diversity and ubiquity, each round averages ubiquity over a
    country's products and then diversity over a product's exporters. The
    even (country) iterates are z-scored after every round; z-scoring commutes
    with the averaging up to an additive constant, so this is the plain
    iteration without its loss of precision. Stops when consecutive z-scored
    country vectors differ by less than ``tol`` in max norm.
    """
    countries = _labels(countries, np.shape(M)[0], "c")
    products = _labels(products, np.shape(M)[1], "p")
    M = _check_input(M, countries, products)
    _check_connected(M, countries)

    k_c0 = M.sum(axis=1)
    k_p0 = M.sum(axis=0)
    kc = zscore(k_c0)
    delta = np.inf
    for it in range(1, iterations + 1):
        kp = (M.T @ kc) / k_p0
        nxt = (M @ kp) / k_c0
        nxt = nxt - nxt.mean()
        sd = np.sqrt(np.mean(nxt**2))
        if not sd > 1e-13:
            raise DegenerateSpectrumError("degenerate spectrum: reflections collapse to a constant vector")
        nxt /= sd
        delta = float(np.max(np.abs(nxt - kc)))
        kc = nxt
        if delta < tol:
            break
    else:
        raise NonConvergenceError(iterations, float(delta))

    eci = _fix_sign(kc, k_c0)
    pci = _pci_from_eci(M, eci)
    return ComplexityScores(
        year, countries, products, eci, pci,
        {"method": "reflections", "iterations": it, "last_delta": delta, "tol": tol},
    )


@dataclass(frozen=True)
class RankRow:
    rank: int
    code: str
    name: str
    score: float
    tie: bool


def dense_ranks(codes: Sequence[str], values: Sequence[float], tie_tol: float = TIE_TOL) -> list[tuple[str, float, int, bool]]:
    """Descending dense ranks; near-equal values share a rank, ordered by code."""
    order = sorted(zip(codes, values), key=lambda cv: (-cv[1], cv[0]))
    groups: list[list[tuple[str, float]]] = []
    for code, v in order:
        if groups and abs(groups[-1][0][1] - v) <= tie_tol:
            groups[-1].append((code, v))
        else:
            groups.append([(code, v)])
    out = []
    for rank, g in enumerate(groups, start=1):
        for code, v in sorted(g):
            out.append((code, v, rank, len(g) > 1))
    return out


def rank_by_eci(scores, labels: Optional[Mapping[str, str]] = None) -> list[RankRow]:
    """Ranking table from ComplexityScores or a plain ``{code: eci}`` mapping."""
    eci = scores.eci_map() if isinstance(scores, ComplexityScores) else dict(scores)
    labels = labels or {}
    return [
        RankRow(rank, code, labels.get(code, code), float(v), tie)
        for code, v, rank, tie in dense_ranks(list(eci), list(eci.values()))
    ]


def write_scores(scores: ComplexityScores, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCORES_HEADER)
        for kind, codes, vals in (("country", scores.countries, scores.eci), ("product", scores.products, scores.pci)):
            for code, v, rank, _ in dense_ranks(codes, [float(x) for x in vals]):
                w.writerow([scores.year, kind, code, repr(v), rank])


def read_scores(path) -> ComplexityScores:
    eci: dict[str, float] = {}
    pci: dict[str, float] = {}
    year = None
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            year = int(row["year"])
            target = eci if row["entity_kind"] == "country" else pci
            target[row["entity"]] = float(row["score"])
    countries = sorted(eci)
    products = sorted(pci)
    return ComplexityScores(
        year, countries, products,
        np.array([eci[c] for c in countries]), np.array([pci[p] for p in products]),
    )
