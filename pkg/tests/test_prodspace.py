import itertools
import logging
from fractions import Fraction

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from oracles import proximity_by_sets
from xgini.prodspace import (
    ProximityMatrix,
    build_product_space,
    compute_proximity,
    export_graphml,
    graphml_bytes,
    maximum_spanning_tree,
    read_edges,
    read_proximity,
    write_edges,
    write_proximity,
)

P3 = ["p1", "p2", "p3"]


def random_phi(rng, n, levels=None):
    A = rng.random((n, n))
    if levels:
        A = np.ceil(A * levels) / levels
    phi = np.triu(A, 1)
    phi = phi + phi.T
    np.fill_diagonal(phi, 1.0)
    return ProximityMatrix([f"{j:04d}" for j in range(n)], phi)


def is_spanning_tree(products, edges):
    g = nx.Graph()
    g.add_nodes_from(products)
    g.add_edges_from((e.p, e.q) for e in edges)
    return len(edges) == len(products) - 1 and nx.is_tree(g)


def test_nested_proximity(nested):
    phi = compute_proximity(nested, P3).phi
    assert Fraction(phi[0, 1]).limit_denominator(100) == Fraction(2, 3)
    assert phi[0, 1] == 2 / 3 and phi[0, 2] == 1 / 3 and phi[1, 2] == 1 / 2
    assert (np.diag(phi) == 1).all()


def test_identical_and_disjoint_columns():
    M = np.array([[1, 1, 0], [1, 1, 0], [0, 0, 1]])
    phi = compute_proximity(M).phi
    assert phi[0, 1] == 1.0
    assert phi[0, 2] == 0.0 and phi[1, 2] == 0.0


def test_zero_ubiquity_rejected():
    with pytest.raises(ValueError):
        compute_proximity(np.array([[1, 0], [1, 0]]))


def _all_binary(n_c, n_p):
    for bits in itertools.product((0, 1), repeat=n_c * n_p):
        M = np.array(bits).reshape(n_c, n_p)
        if M.sum(axis=0).min() > 0:
            yield M


def test_matches_set_enumeration_small_exhaustive():
    # every matrix without empty columns up to 3x3
    for n_c in range(1, 4):
        for n_p in range(1, 4):
            for M in _all_binary(n_c, n_p):
                phi = compute_proximity(M).phi
                assert [[Fraction(v) for v in row] for row in phi.tolist()] == [
                    [Fraction(float(v)) for v in row] for row in proximity_by_sets(M.tolist())
                ]


@settings(max_examples=300, deadline=None)
@given(M=arrays(np.int64, st.tuples(st.integers(1, 5), st.integers(1, 6)), elements=st.integers(0, 1)))
def test_matches_set_enumeration_up_to_5x6(M):
    if M.sum(axis=0).min() == 0:
        M = M.copy()
        M[0, M.sum(axis=0) == 0] = 1
    phi = compute_proximity(M).phi
    exact = proximity_by_sets(M.tolist())
    n = M.shape[1]
    for p in range(n):
        for q in range(n):
            # same IEEE value as correctly rounding the exact rational
            assert phi[p, q] == float(exact[p][q])
            assert phi[p, q] == phi[q, p]
            assert 0 <= phi[p, q] <= 1


def test_nested_graph(nested):
    g = build_product_space(compute_proximity(nested, P3))
    assert [(e.p, e.q, e.backbone) for e in g.edges] == [("p1", "p2", True), ("p2", "p3", True)]


def test_threshold_zero_is_complete_on_positive_pairs():
    M = np.array([[1, 1, 0, 0], [1, 0, 1, 0], [0, 0, 0, 1]])
    prox = compute_proximity(M, ["a", "b", "c", "d"])
    g = build_product_space(prox, edge_threshold=0)
    assert {(e.p, e.q) for e in g.edges} == {("a", "b"), ("a", "c")}
    # d has no positive phi: a spanning forest, d isolated
    assert "d" in g.products


def test_equal_phi_tie_break():
    n = 5
    phi = np.full((n, n), 0.3)
    np.fill_diagonal(phi, 1)
    names = ["e", "d", "c", "b", "a"]
    tree = maximum_spanning_tree(names, phi)
    # Kruskal scans (a,b), (a,c), ... first-come wins: a star at "a"
    assert sorted(tuple(sorted((names[i], names[j]))) for i, j in tree) == [("a", "b"), ("a", "c"), ("a", "d"), ("a", "e")]
    g1 = graphml_bytes(build_product_space(ProximityMatrix(names, phi)))
    g2 = graphml_bytes(build_product_space(ProximityMatrix(names, phi.copy())))
    assert g1 == g2


def test_mst_weight_matches_networkx(rng):
    for _ in range(20):
        prox = random_phi(rng, int(rng.integers(3, 25)))
        tree = maximum_spanning_tree(prox.products, prox.phi)
        ours = sum(prox.phi[i, j] for i, j in tree)
        g = nx.Graph()
        n = len(prox.products)
        for i in range(n):
            for j in range(i + 1, n):
                g.add_edge(i, j, weight=prox.phi[i, j])
        ref = nx.maximum_spanning_tree(g).size(weight="weight")
        assert abs(ours - ref) < 1e-12


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 30), t1=st.floats(0, 1), dt=st.floats(0, 1))
def test_structure_properties(seed, n, t1, dt):
    prox = random_phi(np.random.default_rng(seed), n, levels=10)
    lo = build_product_space(prox, t1)
    hi = build_product_space(prox, t1 + dt)
    assert is_spanning_tree(prox.products, lo.backbone())
    assert lo.backbone() == hi.backbone()
    assert {(e.p, e.q) for e in hi.edges if not e.backbone} <= {(e.p, e.q) for e in lo.edges if not e.backbone}
    assert all(e.phi >= t1 for e in lo.edges if not e.backbone)


def test_without_mst():
    prox = random_phi(np.random.default_rng(1), 8)
    g = build_product_space(prox, 0.9, with_mst=False)
    assert not g.backbone()
    assert all(e.phi >= 0.9 for e in g.edges)


def test_too_few_products():
    with pytest.raises(ValueError):
        build_product_space(ProximityMatrix(["a"], np.ones((1, 1))))


def test_graphml_three_nodes(nested, tmp_path):
    g = build_product_space(compute_proximity(nested, P3))
    attrs = {p: {"share": 0.5, "pgi": 0.4, "rca": True} for p in P3}
    export_graphml(g, tmp_path / "g.graphml", attrs)
    parsed = nx.read_graphml(tmp_path / "g.graphml")
    assert sorted(parsed.nodes) == P3
    assert parsed.number_of_edges() == 2
    assert parsed.edges["p1", "p2"]["phi"] == 2 / 3
    assert parsed.edges["p2", "p3"]["phi"] == 1 / 2
    assert parsed.edges["p1", "p2"]["backbone"] is True
    assert parsed.nodes["p1"]["pgi"] == 0.4 and parsed.nodes["p1"]["ubiquity"] == 3
    # byte-identical re-export
    export_graphml(g, tmp_path / "h.graphml", attrs)
    assert (tmp_path / "g.graphml").read_bytes() == (tmp_path / "h.graphml").read_bytes()


def test_graphml_bare_topology(nested):
    prox = ProximityMatrix(P3, compute_proximity(nested).phi)
    text = graphml_bytes(build_product_space(prox)).decode()
    assert 'for="node"' not in text
    assert text.count("<node ") == 3 and text.count("<edge ") == 2


def test_graphml_missing_attribute_is_null(nested, caplog):
    g = build_product_space(compute_proximity(nested, P3))
    with caplog.at_level(logging.WARNING):
        data = graphml_bytes(g, {"p1": {"pgi": 0.4}, "p2": {"pgi": 0.5}})
    assert "p3" in caplog.text
    parsed = nx.parse_graphml(data.decode())
    assert "pgi" not in parsed.nodes["p3"]


def test_graphml_coordinates(nested):
    g = build_product_space(compute_proximity(nested, P3))
    parsed = nx.parse_graphml(graphml_bytes(g, coords={"p1": (0, 1), "p2": (2, 3), "p3": (4, 5)}).decode())
    assert parsed.nodes["p2"]["x"] == 2.0 and parsed.nodes["p2"]["y"] == 3.0


def test_edge_and_proximity_files_round_trip(tmp_path, rng):
    prox = random_phi(rng, 7, levels=4)
    g = build_product_space(prox, 0.5)
    write_edges(g, tmp_path / "e.csv")
    back = read_edges(tmp_path / "e.csv", prox.products)
    assert back.edges == g.edges
    write_proximity(prox, tmp_path / "p.csv")
    again = read_proximity(tmp_path / "p.csv")
    assert again.products == prox.products and (again.phi == prox.phi).all()
