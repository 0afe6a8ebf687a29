import logging
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from xgini.complexity import rank_by_eci
from xgini.errors import EmptySampleError, InputError
from xgini.inequality import PgiTable
from xgini.ingest import load_trade
from xgini.matrices import YearSlice, specialize
from xgini.prodspace import build_product_space, compute_proximity
from xgini.report import (
    FLAT_SECTION,
    NO_DATA_COLOR,
    make_overlay,
    make_ranking_report,
    make_timeseries,
    make_treemap,
    overlay_svg,
    pgi_color,
    write_ranking_report,
    write_timeseries,
    write_treemap,
)

SVG = "{http://www.w3.org/2000/svg}"
P3 = ["p1", "p2", "p3"]


def test_ranking_blocks_cover_every_country_once():
    eci = {"AAA": 1.0, "BBB": 0.0, "CCC": -1.0}
    rows = make_ranking_report(eci, {"G1": ["AAA", "CCC"], "G2": ["BBB"]}, top=2, bottom=2)
    blocks = {}
    for r in rows:
        blocks.setdefault(r.section, []).append(r.code)
    assert blocks == {
        "Top 2 countries": ["AAA", "BBB"],
        "G1": ["AAA", "CCC"],
        "G2": ["BBB"],
        "Bottom 2 countries": ["BBB", "CCC"],
    }
    ranks = {r.code: r.rank for r in rank_by_eci(eci)}
    assert all(r.rank == ranks[r.code] for r in rows)


def test_ranking_unknown_roster_code(caplog, tmp_path):
    with caplog.at_level(logging.WARNING):
        rows = make_ranking_report({"JPN": 2.292, "MEX": 0.95}, {"LAC": ["MEX", "XXX"]})
    lac = [r for r in rows if r.section == "LAC"]
    assert [(r.code, r.rank) for r in lac] == [("MEX", 2), ("XXX", None)]
    assert lac[0].name == "Mexico"
    assert "XXX" in caplog.text
    write_ranking_report(rows, tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "section,rank,country,name,eci,tie"
    assert "LAC,,XXX,XXX,,0" in lines
    assert "Top 5 countries,1,JPN,Japan,2.292,0" in lines


def trade(write_csv, text):
    return load_trade(write_csv("t.csv", "year,exporter,product,value\n" + text))


def test_treemap_shares(write_csv, tmp_path):
    spec = make_treemap(trade(write_csv, "2000,AAA,0001,30\n2000,AAA,0002,10\n2000,BBB,0001,99\n"), ["AAA"], 2000)
    assert [(l.product, l.share) for l in spec.leaves] == [("0001", 0.75), ("0002", 0.25)]
    assert spec.groups[0].section == FLAT_SECTION and spec.total == 40
    write_treemap(spec, tmp_path / "t.csv")
    assert (tmp_path / "t.csv").read_text().splitlines()[1] == "section,All products,,40.0,1.0"


def test_treemap_sections_conserve(write_csv):
    text = "2000,AAA,0001,30\n2000,AAA,0002,10\n2000,BBB,0003,5\n2000,BBB,0001,7\n"
    spec = make_treemap(trade(write_csv, text), ["AAA", "BBB"], 2000, {"0001": "Food", "0002": "Food", "0003": "Fuel"})
    assert {g.section: g.value for g in spec.groups} == {"Food": 47.0, "Fuel": 5.0}
    for g in spec.groups:
        assert g.value == sum(l.value for l in spec.leaves if l.section == g.section)
    assert sum(l.value for l in spec.leaves) == spec.total == 52


def test_treemap_empty_scope(write_csv):
    with pytest.raises(EmptySampleError):
        make_treemap(trade(write_csv, "2000,AAA,0001,30\n"), ["ZZZ"], 2000)


def overlay_fixture(gini=(0.2, 0.5, 0.8)):
    # country A exports only p1; B and C are the nested pattern's other rows
    X = np.array([[10.0, 0.0, 0.0], [5.0, 5.0, 0.0], [1.0, 1.0, 1.0]])
    mats = specialize(YearSlice(2000, ["A", "B", "C"], P3, X))
    M = np.array([[1, 1, 1], [1, 1, 0], [1, 0, 0]])
    graph = build_product_space(compute_proximity(M, P3))
    pgi = {p: v for p, v in zip(P3, gini)}
    return X, mats, graph, PgiTable(2000, pgi, {p: 1 for p in P3})


def test_overlay_single_product_exporter():
    X, mats, graph, pgi = overlay_fixture()
    frame = make_overlay(graph, mats, pgi, "A")
    assert frame.size == {"p1": 1.0, "p2": 0.0, "p3": 0.0}
    assert [p for p in P3 if frame.rca[p]] == ["p1"]
    assert len(set(frame.color.values())) == 3 and NO_DATA_COLOR not in frame.color.values()
    assert frame.color["p1"] == "#2166ac" and frame.color["p3"] == "#b2182b"


def test_overlay_uniform_gini_single_color():
    X, mats, graph, pgi = overlay_fixture((0.43, 0.43, 0.43))
    frame = make_overlay(graph, mats, pgi, "B")
    assert len(set(frame.color.values())) == 1


def test_overlay_group_uses_own_rca():
    X, mats, graph, pgi = overlay_fixture()
    frame = make_overlay(graph, mats, pgi, ["A", "B"], X=X, name="G")
    assert frame.entity == "G"
    assert frame.size == {"p1": 0.75, "p2": 0.25, "p3": 0.0}
    # world shares 16/23, 6/23, 1/23
    assert frame.rca == {"p1": True, "p2": False, "p3": False}


def test_overlay_svg_counts_and_determinism():
    X, mats, graph, pgi = overlay_fixture()
    frame = make_overlay(graph, mats, pgi, "A")
    coords = {"p1": (0, 0), "p2": (1, 0), "p3": (0.5, 1)}
    svg = overlay_svg(frame, graph, coords)
    root = ET.fromstring(svg)
    assert len(root.findall(f".//{SVG}circle")) == 3
    assert len(root.findall(f".//{SVG}line")) == 2
    assert svg == overlay_svg(make_overlay(graph, mats, pgi, "A"), graph, dict(coords))


def test_overlay_svg_needs_coordinates():
    X, mats, graph, pgi = overlay_fixture()
    with pytest.raises(InputError):
        overlay_svg(make_overlay(graph, mats, pgi, "A"), graph, {"p1": (0, 0)})


def test_pgi_color_ramp():
    assert pgi_color(None, 0, 1) == NO_DATA_COLOR
    assert pgi_color(0.0, 0.0, 1.0) == "#2166ac"
    assert pgi_color(1.0, 0.0, 1.0) == "#b2182b"
    assert pgi_color(0.5, 0.5, 0.5) == pgi_color(0.2, 0.2, 0.2)


def test_timeseries(caplog, tmp_path):
    tables = {"xgini": {2000: {"A": 0.4}, 2001: {"A": 0.41}, 2002: {"B": 0.3}}}
    assert make_timeseries(tables, ["A"]) == [(2000, "A", "xgini", 0.4), (2001, "A", "xgini", 0.41)]
    gaps = make_timeseries({"eci": {2000: {"A": 1.0, "B": 0.0}, 2001: {"B": 0.1}}}, ["A", "B"])
    assert [(y, e) for y, e, _, _ in gaps] == [(2000, "A"), (2000, "B"), (2001, "B")]
    with caplog.at_level(logging.WARNING):
        rows = make_timeseries(tables, ["A", "ZZZ"])
    assert "ZZZ" in caplog.text and {e for _, e, _, _ in rows} == {"A"}
    write_timeseries(rows, tmp_path / "ts.csv")
    assert (tmp_path / "ts.csv").read_text() == "year,entity,metric,value\n2000,A,xgini,0.4\n2001,A,xgini,0.41\n"


def test_timeseries_uniform_gini_is_constant():
    tables = {"xgini": {y: {"A": 0.43} for y in (2000, 2001, 2002)}}
    assert {v for _, _, _, v in make_timeseries(tables)} == {0.43}
