"""Product proximity and the product-space graph.

Proximity is the minimum of the two conditional probabilities of joint
export with RCA: ``phi[p, q] = sum_c M[c,p] M[c,q] / max(k_p, k_q)``.
The displayed graph is the maximum spanning tree of phi (the backbone)
plus every pair with phi at or above ``edge_threshold``.
"""

from __future__ import annotations

import csv
import logging
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import MalformedInputError
from .ingest import normalize_product

log = logging.getLogger(__name__)

EDGE_HEADER = ["p", "q", "phi", "backbone"]
PROXIMITY_HEADER = ["p", "q", "phi"]
COORDS_HEADER = ["product", "x", "y"]
GRAPHML_NS = "http://graphml.graphdrawing.org/xmlns"


@dataclass
class ProximityMatrix:
    products: list[str]
    phi: np.ndarray
    ubiquity: Optional[np.ndarray] = None


@dataclass(frozen=True)
class Edge:
    p: str
    q: str
    phi: float
    backbone: bool


@dataclass
class ProductSpaceGraph:
    products: list[str]
    edges: list[Edge]
    node_attrs: dict[str, dict] = field(default_factory=dict)
    edge_threshold: float = 0.55
    with_mst: bool = True

    def backbone(self) -> list[Edge]:
        return [e for e in self.edges if e.backbone]


def compute_proximity(M: np.ndarray, products: Optional[Sequence[str]] = None) -> ProximityMatrix:
    M = np.asarray(M, dtype=np.int64)
    products = list(products) if products is not None else [f"p{j}" for j in range(M.shape[1])]
    k_p = M.sum(axis=0)
    if (k_p == 0).any():
        bad = [products[j] for j in np.flatnonzero(k_p == 0)]
        raise ValueError(f"products with zero ubiquity: {bad}")
    co = M.T @ M
    phi = co / np.maximum.outer(k_p, k_p)
    np.fill_diagonal(phi, 1.0)
    return ProximityMatrix(products, phi, k_p)


def maximum_spanning_tree(products: Sequence[str], phi: np.ndarray) -> list[tuple[int, int]]:
    """Kruskal on positive-phi pairs, scanned by descending phi then (p, q).

    Returns index pairs ``(i, j)`` with ``products[i] < products[j]``. If the
    positive-phi graph is disconnected the result is a spanning forest.
    """
    n = len(products)
    order = sorted(range(n), key=lambda i: products[i])
    cand = []
    for a in range(n):
        for b in range(a + 1, n):
            i, j = order[a], order[b]
            w = float(phi[i, j])
            if w > 0:
                cand.append((-w, products[i], products[j], i, j))
    cand.sort()

    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    tree = []
    for _, _, _, i, j in cand:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
            tree.append((i, j))
            if len(tree) == n - 1:
                break
    return tree


def build_product_space(
    prox: ProximityMatrix,
    edge_threshold: float = 0.55,
    with_mst: bool = True,
    pci: Optional[Mapping[str, float]] = None,
) -> ProductSpaceGraph:
    products = prox.products
    n = len(products)
    if n < 2:
        raise ValueError("product space needs at least 2 products")
    phi = prox.phi

    chosen: dict[tuple[int, int], bool] = {}
    if with_mst:
        for i, j in maximum_spanning_tree(products, phi):
            chosen[(i, j)] = True
    order = sorted(range(n), key=lambda i: products[i])
    for a in range(n):
        for b in range(a + 1, n):
            i, j = order[a], order[b]
            w = float(phi[i, j])
            if w > 0 and w >= edge_threshold and (i, j) not in chosen:
                chosen[(i, j)] = False

    edges = sorted(
        (Edge(products[i], products[j], float(phi[i, j]), bb) for (i, j), bb in chosen.items()),
        key=lambda e: (e.p, e.q),
    )
    attrs: dict[str, dict] = {p: {} for p in products}
    if prox.ubiquity is not None:
        for p, k in zip(products, prox.ubiquity):
            attrs[p]["ubiquity"] = int(k)
    if pci:
        for p in products:
            if p in pci:
                attrs[p]["pci"] = float(pci[p])
    return ProductSpaceGraph(sorted(products), edges, attrs, edge_threshold, with_mst)


def _graphml_type(v) -> str:
    if isinstance(v, bool):
        return "boolean"
    if isinstance(v, (int, np.integer)):
        return "long"
    if isinstance(v, (float, np.floating)):
        return "double"
    return "string"


def _graphml_text(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def graphml_bytes(
    graph: ProductSpaceGraph,
    node_attrs: Optional[Mapping[str, Mapping[str, object]]] = None,
    coords: Optional[Mapping[str, tuple[float, float]]] = None,
) -> bytes:
    """Serialize the graph to GraphML 1.0.

    Node attributes come from the graph itself, then ``node_attrs`` (the
    overlay table keyed by product), then ``coords``. A node lacking an
    attribute that other nodes have gets no ``<data>`` element, which GraphML
    reads as null.
    """
    per_node: dict[str, dict] = {p: dict(graph.node_attrs.get(p, {})) for p in graph.products}
    node_attrs = node_attrs or {}
    overlay_keys = sorted({k for a in node_attrs.values() for k in a})
    for p in graph.products:
        if p in node_attrs:
            per_node[p].update(node_attrs[p])
        missing = [k for k in overlay_keys if per_node[p].get(k) is None]
        if missing:
            log.warning("product %s lacks %s; emitted as null", p, ",".join(missing))
        if coords is not None:
            if p in coords:
                per_node[p]["x"], per_node[p]["y"] = (float(c) for c in coords[p])
            else:
                log.warning("no coordinates for product %s", p)

    key_types: dict[str, str] = {}
    for a in per_node.values():
        for k, v in a.items():
            if v is not None:
                key_types.setdefault(k, _graphml_type(v))

    root = ET.Element("graphml", {"xmlns": GRAPHML_NS})
    for k in sorted(key_types):
        ET.SubElement(root, "key", {"id": f"n_{k}", "for": "node", "attr.name": k, "attr.type": key_types[k]})
    ET.SubElement(root, "key", {"id": "e_phi", "for": "edge", "attr.name": "phi", "attr.type": "double"})
    ET.SubElement(root, "key", {"id": "e_backbone", "for": "edge", "attr.name": "backbone", "attr.type": "boolean"})
    g = ET.SubElement(root, "graph", {"id": "product_space", "edgedefault": "undirected"})
    for p in graph.products:
        node = ET.SubElement(g, "node", {"id": p})
        for k in sorted(key_types):
            v = per_node[p].get(k)
            if v is not None:
                ET.SubElement(node, "data", {"key": f"n_{k}"}).text = _graphml_text(v)
    for i, e in enumerate(graph.edges):
        edge = ET.SubElement(g, "edge", {"id": f"e{i}", "source": e.p, "target": e.q})
        ET.SubElement(edge, "data", {"key": "e_phi"}).text = _graphml_text(e.phi)
        ET.SubElement(edge, "data", {"key": "e_backbone"}).text = _graphml_text(e.backbone)
    ET.indent(root)
    return b'<?xml version="1.0" encoding="UTF-8"?>\n' + ET.tostring(root, encoding="unicode").encode("utf-8") + b"\n"


def export_graphml(graph, path, node_attrs=None, coords=None) -> None:
    with open(path, "wb") as fh:
        fh.write(graphml_bytes(graph, node_attrs, coords))


def write_edges(graph: ProductSpaceGraph, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EDGE_HEADER)
        for e in graph.edges:
            w.writerow([e.p, e.q, repr(e.phi), int(e.backbone)])


def read_edges(path, products: Sequence[str]) -> ProductSpaceGraph:
    edges = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            edges.append(Edge(row["p"], row["q"], float(row["phi"]), row["backbone"] == "1"))
    return ProductSpaceGraph(sorted(products), edges)


def write_proximity(prox: ProximityMatrix, path) -> None:
    """Upper-triangle long form including the unit diagonal, positive phi only."""
    order = sorted(range(len(prox.products)), key=lambda i: prox.products[i])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PROXIMITY_HEADER)
        for a, i in enumerate(order):
            for j in order[a:]:
                v = float(prox.phi[i, j])
                if v > 0:
                    w.writerow([prox.products[i], prox.products[j], repr(v)])


def read_proximity(path) -> ProximityMatrix:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != PROXIMITY_HEADER:
            raise MalformedInputError(path, [(1, f"expected header {','.join(PROXIMITY_HEADER)}")])
        for row in reader:
            rows.append((row[0], row[1], float(row[2])))
    products = sorted({p for p, q, _ in rows if p == q})
    idx = {p: i for i, p in enumerate(products)}
    phi = np.zeros((len(products), len(products)))
    for p, q, v in rows:
        phi[idx[p], idx[q]] = phi[idx[q], idx[p]] = v
    return ProximityMatrix(products, phi)


def load_coordinates(path) -> dict[str, tuple[float, float]]:
    out = {}
    problems = []
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        if [h.strip() for h in next(reader, [])] != COORDS_HEADER:
            raise MalformedInputError(path, [(1, f"expected header {','.join(COORDS_HEADER)}")])
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                out[normalize_product(row[0])] = (float(row[1]), float(row[2]))
            except (ValueError, IndexError) as exc:
                problems.append((lineno, str(exc)))
    if problems:
        raise MalformedInputError(path, problems)
    return out
