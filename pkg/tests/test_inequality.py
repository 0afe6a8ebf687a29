import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import pgi_double_loop, random_fixture, xgini_double_loop
from xgini.errors import ConfigError, InputError
from xgini.ingest import GiniTable
from xgini.inequality import (
    DEFAULT_ROSTERS,
    PgiTable,
    XginiTable,
    compute_pgi,
    compute_xgini,
    format_rosters,
    gini_for_year,
    interpolate_all,
    interpolate_gini,
    parse_rosters,
    read_pgi,
    read_xgini,
    regional_series,
    write_pgi,
    write_regions,
    write_xgini,
)


def table(**series):
    return GiniTable({c: sorted(k) for c, k in series.items()})


def test_linear_midpoint_is_exact():
    ig = interpolate_gini(table(A=[(2000, 0.40), (2004, 0.48)]), "A")
    assert ig.value(2002) == 0.44
    assert ig.value(2000) == 0.40 and ig.value(2004) == 0.48
    assert ig.observed == [True, False, False, False, True]


def test_three_knots():
    ig = interpolate_gini(table(A=[(1990, 0.50), (1992, 0.44), (1996, 0.52)]), "A")
    assert ig.value(1991) == pytest.approx(0.47, abs=1e-15)
    assert ig.value(1994) == pytest.approx(0.48, abs=1e-15)
    assert ig.years == list(range(1990, 1997))


def test_no_extrapolation():
    ig = interpolate_gini(table(A=[(2000, 0.40), (2004, 0.48)]), "A")
    assert ig.value(1999) is None and ig.value(2005) is None
    single = interpolate_gini(table(A=[(2001, 0.3)]), "A")
    assert single.as_dict() == {2001: 0.3}


def test_no_observations():
    with pytest.raises(InputError):
        interpolate_gini(table(A=[(2000, 0.4)]), "B")


@settings(max_examples=100, deadline=None)
@given(knots=st.dictionaries(st.integers(1960, 2015), st.floats(0, 1), min_size=1, max_size=8))
def test_interpolation_properties(knots):
    ig = interpolate_gini(table(A=list(knots.items())), "A")
    ks = sorted(knots)
    assert ig.years == list(range(ks[0], ks[-1] + 1))
    for y, g in knots.items():
        assert ig.value(y) == g
    for y0, y1 in zip(ks, ks[1:]):
        lo, hi = sorted((knots[y0], knots[y1]))
        for y in range(y0 + 1, y1):
            assert lo - 1e-15 <= ig.value(y) <= hi + 1e-15


def test_gini_for_year():
    interp = interpolate_all(table(A=[(2000, 0.4), (2004, 0.48)], B=[(2003, 0.3)]))
    assert gini_for_year(interp, 2002) == {"A": 0.44}
    assert gini_for_year(interp, 2003) == {"A": pytest.approx(0.46), "B": 0.3}


def test_pgi_hand_value():
    M = np.array([[1], [1]])
    S = np.array([[0.5], [0.25]])
    tab = compute_pgi(M, S, {"A": 0.40, "B": 0.60}, ["A", "B"], ["p"])
    assert tab.pgi["p"] == pytest.approx(0.35 / 0.75, abs=1e-15)
    assert round(tab.pgi["p"], 4) == 0.4667
    assert tab.support == {"p": 2}


def test_pgi_single_exporter_and_omission(caplog):
    M = np.array([[1, 0], [0, 0]])
    S = np.array([[0.1, 0.9], [0.5, 0.5]])
    with caplog.at_level(logging.WARNING):
        tab = compute_pgi(M, S, {"A": 0.37, "B": 0.5}, ["A", "B"], ["p", "q"])
    assert tab.pgi == {"p": pytest.approx(0.37, abs=1e-15)}
    assert "q" not in tab.support
    assert "1 products" in caplog.text


def test_pgi_ignores_countries_without_gini():
    M = np.array([[1], [1]])
    S = np.array([[0.5], [0.5]])
    tab = compute_pgi(M, S, {"A": 0.3}, ["A", "B"], ["p"])
    assert tab.pgi == {"p": 0.3} and tab.support == {"p": 1}


def test_xgini_hand_value():
    M = np.array([[1, 1, 0]])
    S = np.array([[0.6, 0.2, 0.2]])
    pgi = PgiTable(2000, {"p1": 0.5, "p2": 0.3, "p3": 0.9}, {"p1": 1, "p2": 1, "p3": 1})
    tab = compute_xgini(M, S, pgi, ["A"], ["p1", "p2", "p3"])
    assert tab.xgini["A"] == pytest.approx(0.45, abs=1e-15)
    assert tab.n_c["A"] == pytest.approx(0.8)
    assert tab.coverage["A"] == 1.0
    assert tab.year == 2000


def test_xgini_coverage_and_omission(caplog):
    M = np.array([[1, 1], [0, 1]])
    S = np.array([[0.75, 0.25], [0.5, 0.5]])
    pgi = PgiTable(2000, {"p1": 0.4}, {"p1": 1})
    with caplog.at_level(logging.WARNING):
        tab = compute_xgini(M, S, pgi, ["A", "B"], ["p1", "p2"])
    assert tab.xgini == {"A": pytest.approx(0.4, abs=1e-15)}
    assert tab.coverage["A"] == 0.75
    assert "B" in caplog.text


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n_c=st.integers(1, 6), n_p=st.integers(1, 7))
def test_eq_against_loops(seed, n_c, n_p):
    rng = np.random.default_rng(seed)
    M, S = random_fixture(rng, n_c, n_p)
    gini = [None if rng.random() < 0.2 else float(rng.random()) for _ in range(n_c)]
    countries = [f"c{i}" for i in range(n_c)]
    products = [f"p{j}" for j in range(n_p)]
    gmap = {c: g for c, g in zip(countries, gini) if g is not None}
    pgi = compute_pgi(M, S, gmap, countries, products)
    ref = pgi_double_loop(M.tolist(), S.tolist(), gini)
    assert set(pgi.pgi) == {products[j] for j in ref}
    for j, v in ref.items():
        assert abs(pgi.pgi[products[j]] - v) < 1e-12
    pvec = [pgi.pgi.get(p) for p in products]
    xg = compute_xgini(M, S, pgi, countries, products)
    xref = xgini_double_loop(M.tolist(), S.tolist(), pvec)
    assert set(xg.xgini) == {countries[i] for i in xref}
    for i, v in xref.items():
        assert abs(xg.xgini[countries[i]] - v) < 1e-12
        assert 0 < xg.n_c[countries[i]] <= 1 + 1e-12
        assert 0 < xg.coverage[countries[i]] <= 1 + 1e-12
    if gmap:
        lo, hi = min(gmap.values()), max(gmap.values())
        assert all(lo - 1e-12 <= v <= hi + 1e-12 for v in list(pgi.pgi.values()) + list(xg.xgini.values()))


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), g=st.floats(0, 1))
def test_fixed_point(seed, g):
    M, S = random_fixture(np.random.default_rng(seed))
    pgi = compute_pgi(M, S, [g] * 4)
    xg = compute_xgini(M, S, pgi)
    assert all(abs(v - g) < 1e-12 for v in pgi.pgi.values())
    assert all(abs(v - g) < 1e-12 for v in xg.xgini.values())


def test_share_scale_coherence():
    # scaling one country's exports leaves its shares and, with M held, every index unchanged
    X = np.array([[10.0, 30.0, 5.0], [20.0, 1.0, 9.0], [3.0, 3.0, 30.0]])
    M = np.array([[1, 1, 0], [1, 0, 1], [0, 1, 1]])
    gini = [0.3, 0.5, 0.6]

    def run(X):
        S = X / X.sum(axis=1, keepdims=True)
        pgi = compute_pgi(M, S, gini)
        return pgi.pgi, compute_xgini(M, S, pgi).xgini

    X2 = X.copy()
    X2[1] *= 7.0
    a, b = run(X), run(X2)
    for x, y in zip(a, b):
        assert x.keys() == y.keys()
        assert all(abs(x[k] - y[k]) < 1e-15 for k in x)


def test_regional_series():
    years = {
        2000: {"A": 0.40, "B": 0.50, "C": 0.9},
        2001: {"A": 0.42, "B": 0.52},
        2002: {"C": 0.7},
    }
    pts = regional_series(years, {"G": ["A", "B", "C"], "H": ["A", "B"], "S": ["A"]}, exclude=["C"])
    got = {(p.group, p.year): (p.mean_xgini, p.n_members) for p in pts}
    assert got[("H", 2000)] == (pytest.approx(0.45), 2)
    assert got[("S", 2001)] == (0.42, 1)
    assert got[("G", 2000)] == (pytest.approx(0.45), 2)
    assert got[("G", 2002)] == (None, 0)


def test_regional_drop_missing_member():
    pts = regional_series({2000: {"A": 0.4, "B": 0.5}}, {"G": ["A", "B", "C"]})
    assert (pts[0].mean_xgini, pts[0].n_members) == (pytest.approx(0.45), 2)


def test_regional_smoothing():
    years = {y: {"A": v} for y, v in zip(range(2000, 2004), (0.1, 0.3, 0.5, 0.7))}
    pts = regional_series(years, {"G": ["A"]}, smoothing=2)
    assert [p.mean_xgini for p in pts] == [0.1, pytest.approx(0.2), pytest.approx(0.4), pytest.approx(0.6)]


def test_regional_accepts_tables():
    tab = XginiTable(2000, {"A": 0.4}, {"A": 1.0}, {"A": 1.0})
    assert regional_series({2000: tab}, {"G": ["A"]})[0].mean_xgini == 0.4


def test_rosters():
    text = "# comment\nHPAE: chn, KOR\n\nLAC: BRA,PER  # trailing\n"
    groups = parse_rosters(text)
    assert groups == {"HPAE": ("CHN", "KOR"), "LAC": ("BRA", "PER")}
    assert parse_rosters(format_rosters(groups)) == groups
    assert "MEX" not in DEFAULT_ROSTERS["LAC_EXCL_MEX"] and "MEX" in DEFAULT_ROSTERS["LAC"]
    assert len(DEFAULT_ROSTERS["LAC"]) == 20 and len(DEFAULT_ROSTERS["HPAE"]) == 6
    for bad in ("HPAE CHN", "HPAE:", "A: X\nA: Y"):
        with pytest.raises(ConfigError):
            parse_rosters(bad)


def test_table_files_round_trip(tmp_path):
    pgi = PgiTable(2000, {"p2": 0.3, "p1": 0.1 + 0.2}, {"p1": 2, "p2": 1})
    write_pgi(pgi, tmp_path / "pgi.csv")
    assert read_pgi(tmp_path / "pgi.csv") == pgi
    xg = XginiTable(2000, {"A": 0.45}, {"A": 0.8}, {"A": 1.0})
    write_xgini(xg, tmp_path / "x.csv")
    assert read_xgini(tmp_path / "x.csv") == xg
    write_regions(regional_series({2000: {}}, {"G": ["A"]}), tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_text() == "year,group,mean_xgini,n_members\n2000,G,,0\n"
