"""Stage graph for workspace runs.

Per-year stages run in a process pool; every stage is skipped when the
content digests of its inputs and its slice of the configuration match the
manifest and its recorded outputs are intact.
"""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import complexity, inequality, matrices, prodspace, report
from .config import RunConfig, parse_years
from .errors import ConfigError, PrerequisiteError, XginiError
from .ingest import TradeTable, load_gini, load_sections, load_trade
from .workspace import StageSpec, Workspace, atomic_path, write_bytes_atomic

log = logging.getLogger(__name__)

TRADE_OUT = "ingest/trade.csv"
GINI_OUT = "ingest/gini.csv"
SINGLE_STAGES = ("ingest", "rca", "eci", "proximity", "product-space", "pgi", "xgini", "report")


class StageFailure(XginiError):
    """A stage failed. ``report`` is the machine-readable error record."""

    def __init__(self, report: dict):
        self.report = report
        self.exit_code = report["exit_code"]
        super().__init__(f"stage {report['stage']} failed: {report['error']}: {report['message']}")


def _failure(stage: str, exc: BaseException) -> dict:
    code = exc.exit_code if isinstance(exc, XginiError) else 5
    return {"stage": stage, "error": type(exc).__name__, "message": str(exc), "exit_code": code}


def ydir(year: int) -> str:
    return f"years/{year}"


def _entity_slug(entity: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in entity)


def read_trade_canonical(path) -> TradeTable:
    return load_trade(path)


@dataclass
class Pipeline:
    cfg: RunConfig
    root: Path

    def __post_init__(self):
        self.root = Path(self.root)
        self.ws = Workspace(self.root)
        self.statuses: dict[str, str] = {}

    # ---- stage definitions -------------------------------------------------

    def _p(self, rel: str) -> Path:
        return self.root / rel

    def stage_ingest_gini(self) -> StageSpec:
        if not self.cfg.gini:
            raise ConfigError("config has no 'gini' input path")

        def run():
            tab = load_gini(self.cfg.gini)
            with atomic_path(self._p(GINI_OUT)) as tmp:
                tab.write_csv(tmp)

        return StageSpec("ingest:gini", {"gini": Path(self.cfg.gini)}, {}, [GINI_OUT], run)

    def stage_ingest_trade(self) -> StageSpec:
        if not self.cfg.trade:
            raise ConfigError("config has no 'trade' input path")
        filters = self.cfg.filters.to_filter_config()
        inputs = {"trade": Path(self.cfg.trade)}
        if filters.require_gini:
            inputs["gini"] = self._p(GINI_OUT)

        def run():
            gini = load_gini(self._p(GINI_OUT)) if filters.require_gini else None
            tab = load_trade(self.cfg.trade, filters, gini)
            with atomic_path(self._p(TRADE_OUT)) as tmp:
                tab.write_csv(tmp)

        conf = {k: v for k, v in self.cfg.filters.__dict__.items() if k != "require_eci"}
        return StageSpec("ingest:trade", inputs, conf, [TRADE_OUT], run, {"gini": "ingest"})

    def stage_rca(self, year: int) -> StageSpec:
        out = f"{ydir(year)}/matrices.csv"

        def run():
            trade = read_trade_canonical(self._p(TRADE_OUT))
            sl = matrices.build_year_slice(trade, year, self.cfg.average_years)
            mats = matrices.specialize(sl, self.cfg.rca_threshold)
            with atomic_path(self._p(out)) as tmp:
                matrices.write_matrices(mats, tmp)

        return StageSpec(
            f"rca:{year}", {"trade": self._p(TRADE_OUT)},
            {"rca_threshold": self.cfg.rca_threshold, "average_years": self.cfg.average_years},
            [out], run, {"trade": "ingest"},
        )

    def _matrices(self, year: int) -> matrices.SpecializationMatrices:
        return matrices.read_matrices(self._p(f"{ydir(year)}/matrices.csv"), self.cfg.rca_threshold)

    def stage_eci(self, year: int) -> StageSpec:
        d = ydir(year)
        outs = [f"{d}/scores.csv", f"{d}/eci_diagnostics.json"]

        def run():
            mats = self._matrices(year)
            M, countries, products = _nonempty(mats)
            if self.cfg.eci_method == "eigen":
                tol = self.cfg.eci_tol if self.cfg.eci_tol is not None else complexity.EIGEN_TOL
                scores = complexity.compute_eci_eigen(M, countries, products, year, tol=tol, max_iter=self.cfg.eci_iterations)
            else:
                tol = self.cfg.eci_tol if self.cfg.eci_tol is not None else 1e-10
                scores = complexity.compute_eci_reflections(M, countries, products, year, iterations=self.cfg.eci_iterations, tol=tol)
            with atomic_path(self._p(outs[0])) as tmp:
                complexity.write_scores(scores, tmp)
            diag = dict(scores.diagnostics, year=year, countries=len(countries), products=len(products))
            write_bytes_atomic(self._p(outs[1]), (json.dumps(diag, indent=2, sort_keys=True) + "\n").encode())

        conf = {"method": self.cfg.eci_method, "tol": self.cfg.eci_tol, "iterations": self.cfg.eci_iterations}
        return StageSpec(f"eci:{year}", {"matrices": self._p(f"{d}/matrices.csv")}, conf, outs, run, {"matrices": "rca"})

    def stage_proximity(self, year: int) -> StageSpec:
        out = f"{ydir(year)}/proximity.csv"
        pool = self.cfg.topology_years
        src_years = sorted(pool) if pool else [year]
        inputs = {f"matrices:{y}": self._p(f"{ydir(y)}/matrices.csv") for y in src_years}

        def run():
            mats = [self._matrices(y) for y in src_years]
            if len(mats) == 1:
                _, products, M = mats[0].countries, mats[0].products, mats[0].M
            else:
                _, products, M = matrices.pooled_m(mats)
            keep = M.sum(axis=0) > 0
            prox = prodspace.compute_proximity(M[:, keep], [p for p, k in zip(products, keep) if k])
            with atomic_path(self._p(out)) as tmp:
                prodspace.write_proximity(prox, tmp)

        return StageSpec(f"proximity:{year}", inputs, {"topology_years": pool}, [out], run,
                         {k: "rca" for k in inputs})

    def stage_product_space(self, year: int) -> StageSpec:
        d = ydir(year)
        outs = [f"{d}/product_space_edges.csv", f"{d}/product_space.graphml"]

        def run():
            prox = prodspace.read_proximity(self._p(f"{d}/proximity.csv"))
            mats = self._matrices(year)
            k = dict(zip(mats.products, mats.ubiquity))
            prox.ubiquity = np.array([int(k.get(p, 0)) for p in prox.products])
            graph = prodspace.build_product_space(prox, self.cfg.edge_threshold)
            with atomic_path(self._p(outs[0])) as tmp:
                prodspace.write_edges(graph, tmp)
            write_bytes_atomic(self._p(outs[1]), prodspace.graphml_bytes(graph))

        inputs = {"proximity": self._p(f"{d}/proximity.csv"), "matrices": self._p(f"{d}/matrices.csv")}
        return StageSpec(f"product-space:{year}", inputs, {"edge_threshold": self.cfg.edge_threshold}, outs, run,
                         {"proximity": "proximity", "matrices": "rca"})

    def stage_pgi(self, year: int) -> StageSpec:
        d = ydir(year)
        out = f"{d}/pgi.csv"
        require_eci = self.cfg.filters.require_eci
        inputs = {"matrices": self._p(f"{d}/matrices.csv"), "gini": self._p(GINI_OUT)}
        producers = {"matrices": "rca", "gini": "ingest"}
        if require_eci:
            inputs["scores"] = self._p(f"{d}/scores.csv")
            producers["scores"] = "eci"

        def run():
            mats = self._eligible(year)
            g = inequality.gini_for_year(inequality.interpolate_all(load_gini(self._p(GINI_OUT))), year)
            tab = inequality.compute_pgi(mats.M, mats.S, g, mats.countries, mats.products, year)
            with atomic_path(self._p(out)) as tmp:
                inequality.write_pgi(tab, tmp)

        return StageSpec(f"pgi:{year}", inputs, {"require_eci": require_eci}, [out], run, producers)

    def _eligible(self, year: int) -> matrices.SpecializationMatrices:
        mats = self._matrices(year)
        if self.cfg.filters.require_eci:
            scored = complexity.read_scores(self._p(f"{ydir(year)}/scores.csv")).countries
            mats = matrices.restrict_countries(mats, scored)
        return mats

    def stage_xgini(self, year: int) -> StageSpec:
        d = ydir(year)
        out = f"{d}/xgini.csv"
        require_eci = self.cfg.filters.require_eci
        inputs = {"matrices": self._p(f"{d}/matrices.csv"), "pgi": self._p(f"{d}/pgi.csv")}
        producers = {"matrices": "rca", "pgi": "pgi"}
        if require_eci:
            inputs["scores"] = self._p(f"{d}/scores.csv")
            producers["scores"] = "eci"

        def run():
            mats = self._eligible(year)
            pgi = inequality.read_pgi(self._p(f"{d}/pgi.csv"))
            tab = inequality.compute_xgini(mats.M, mats.S, pgi, mats.countries, mats.products, year)
            with atomic_path(self._p(out)) as tmp:
                inequality.write_xgini(tab, tmp)

        return StageSpec(f"xgini:{year}", inputs, {"require_eci": require_eci}, [out], run, producers)

    def rosters(self) -> dict[str, tuple[str, ...]]:
        if self.cfg.regions:
            return inequality.load_rosters(self.cfg.regions)
        return dict(inequality.DEFAULT_ROSTERS)

    def stage_report(self, years: Sequence[int]) -> StageSpec:
        inputs: dict[str, Path] = {"gini": self._p(GINI_OUT), "trade": self._p(TRADE_OUT)}
        producers = {"gini": "ingest", "trade": "ingest"}
        for y in years:
            d = ydir(y)
            for name, stage in (("matrices", "rca"), ("scores", "eci"), ("pgi", "pgi"), ("xgini", "xgini"),
                                ("product_space_edges", "product-space"), ("proximity", "proximity")):
                inputs[f"{name}:{y}"] = self._p(f"{d}/{name}.csv")
                producers[f"{name}:{y}"] = stage
        for name in ("regions", "sections", "coordinates"):
            v = getattr(self.cfg, name)
            if v:
                inputs[name] = Path(v)

        outs = ["reports/regions.csv", "reports/timeseries.csv"]
        outs += [f"reports/ranking_{y}.csv" for y in years]
        for ent in self.cfg.overlays:
            for y in years:
                outs.append(f"reports/overlays/{_entity_slug(ent)}_{y}.graphml")
                if self.cfg.coordinates:
                    outs.append(f"reports/overlays/{_entity_slug(ent)}_{y}.svg")
        for ent in self.cfg.treemaps:
            outs += [f"reports/treemaps/{_entity_slug(ent)}_{y}.csv" for y in years]

        def run():
            self._run_report(years, self.rosters())

        conf = {"overlays": self.cfg.overlays, "treemaps": self.cfg.treemaps, "smoothing": self.cfg.smoothing,
                "rca_threshold": self.cfg.rca_threshold, "average_years": self.cfg.average_years,
                "years": list(years), "rosters_default": not self.cfg.regions}
        return StageSpec("report", inputs, conf, outs, run, producers)

    @staticmethod
    def _members(entity: str, rosters) -> list[str]:
        return list(rosters[entity]) if entity in rosters else [entity]

    def _run_report(self, years: Sequence[int], rosters) -> None:
        gini_tab = load_gini(self._p(GINI_OUT))
        interp = inequality.interpolate_all(gini_tab)
        sections = load_sections(self.cfg.sections) if self.cfg.sections else None
        coords = prodspace.load_coordinates(self.cfg.coordinates) if self.cfg.coordinates else None
        trade = read_trade_canonical(self._p(TRADE_OUT)) if (self.cfg.overlays or self.cfg.treemaps) else None

        eci_ts, gini_ts, xgini_ts = {}, {}, {}
        for y in years:
            d = ydir(y)
            scores = complexity.read_scores(self._p(f"{d}/scores.csv"))
            rows = report.make_ranking_report(scores, rosters)
            with atomic_path(self._p(f"reports/ranking_{y}.csv")) as tmp:
                report.write_ranking_report(rows, tmp)
            eci_ts[y] = scores.eci_map()
            gini_ts[y] = inequality.gini_for_year(interp, y)
            xgini_ts[y] = inequality.read_xgini(self._p(f"{d}/xgini.csv"))

            if self.cfg.overlays:
                mats = self._matrices(y)
                pgi = inequality.read_pgi(self._p(f"{d}/pgi.csv"))
                graph = prodspace.read_edges(self._p(f"{d}/product_space_edges.csv"),
                                             prodspace.read_proximity(self._p(f"{d}/proximity.csv")).products)
                sl = matrices.build_year_slice(trade, y, self.cfg.average_years)
                X = _align(sl, mats)
                pci = scores.pci_map()
                for p in graph.products:
                    if p in pci:
                        graph.node_attrs.setdefault(p, {})["pci"] = pci[p]
                for ent in self.cfg.overlays:
                    members = self._members(ent, rosters)
                    frame = report.make_overlay(graph, mats, pgi, members if ent in rosters else ent, X, name=ent)
                    base = f"reports/overlays/{_entity_slug(ent)}_{y}"
                    write_bytes_atomic(self._p(base + ".graphml"), prodspace.graphml_bytes(graph, frame.node_attrs(), coords))
                    if coords is not None:
                        write_bytes_atomic(self._p(base + ".svg"), report.overlay_svg(frame, graph, coords))

            for ent in self.cfg.treemaps:
                spec = report.make_treemap(trade, self._members(ent, rosters), y, sections, note=ent)
                with atomic_path(self._p(f"reports/treemaps/{_entity_slug(ent)}_{y}.csv")) as tmp:
                    report.write_treemap(spec, tmp)

        points = inequality.regional_series(xgini_ts, rosters, smoothing=self.cfg.smoothing)
        with atomic_path(self._p("reports/regions.csv")) as tmp:
            inequality.write_regions(points, tmp)
        entities = sorted({c for members in rosters.values() for c in members})
        ts = report.make_timeseries(
            {"eci": eci_ts, "gini": gini_ts, "xgini": {y: t.xgini for y, t in xgini_ts.items()}}, entities
        )
        with atomic_path(self._p("reports/timeseries.csv")) as tmp:
            report.write_timeseries(ts, tmp)

    # ---- execution ---------------------------------------------------------

    def run_stage(self, spec: StageSpec, force: bool = False) -> str:
        try:
            record = self.ws.record_for(spec)
            if record is None:
                missing = next(n for n, p in sorted(spec.inputs.items()) if not Path(p).is_file())
                producer = spec.producers.get(missing)
                if producer is None:
                    raise PrerequisiteError("input", f"input file {spec.inputs[missing]}")
                raise PrerequisiteError(producer, f"{missing} ({spec.inputs[missing]})")
            if not force and self.ws.is_cached(spec, record):
                status = "cached"
            else:
                spec.run()
                self.ws.finish(spec, record)
                status = "ran"
        except StageFailure:
            raise
        except Exception as exc:
            raise StageFailure(_failure(spec.key, exc)) from exc
        log.info("stage %s: %s", spec.key, status)
        self.statuses[spec.key] = status
        return status

    def trade_years(self) -> list[int]:
        path = self._p(TRADE_OUT)
        if not path.is_file():
            raise StageFailure(_failure("rca", PrerequisiteError("ingest", TRADE_OUT)))
        years = read_trade_canonical(path).years
        if self.cfg.years:
            lo, hi = parse_years(self.cfg.years)
            years = [y for y in years if lo <= y <= hi]
        if not years:
            raise StageFailure(_failure("ingest:trade", ConfigError(f"no trade data in years {self.cfg.years}")))
        return years

    def run_years(self, stage_names: Sequence[str], years: Sequence[int], jobs: int = 1, force: bool = False) -> None:
        """Run per-year stages, in order, for every year (in parallel across years)."""
        if jobs <= 1 or len(years) <= 1:
            for y in years:
                for name in stage_names:
                    self.run_stage(self.year_stage(name, y), force)
            return
        snapshot = self.ws.stages
        args = [(self.cfg.to_dict(), str(self.root), y, list(stage_names), snapshot, force) for y in years]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_year_worker, args))
        failure = None
        for res in results:
            for key, status, record in res["done"]:
                self.ws.stages[key] = record
                self.statuses[key] = status
            if res["failure"] and failure is None:
                failure = res["failure"]
        if failure:
            raise StageFailure(failure)

    def year_stage(self, name: str, year: int) -> StageSpec:
        builders = {
            "rca": self.stage_rca, "eci": self.stage_eci, "proximity": self.stage_proximity,
            "product-space": self.stage_product_space, "pgi": self.stage_pgi, "xgini": self.stage_xgini,
        }
        return builders[name](year)

    def run_pipeline(self, jobs: int = 1) -> dict[str, str]:
        try:
            self.run_stage(self.stage_ingest_gini())
            self.run_stage(self.stage_ingest_trade())
            years = self.trade_years()
            if self.cfg.topology_years:
                missing = sorted(set(self.cfg.topology_years) - set(years))
                if missing:
                    raise StageFailure(_failure("proximity", ConfigError(f"topology years {missing} not processed")))
            self.run_years(["rca"], years, jobs)
            self.run_years(["eci", "proximity", "product-space", "pgi", "xgini"], years, jobs)
            self.run_stage(self.stage_report(years))
        except StageFailure as exc:
            self.ws.save(self.cfg.to_dict())
            self.ws.mark_partial(exc.report)
            raise
        self.ws.save(self.cfg.to_dict())
        self.ws.clear_partial()
        write_bytes_atomic(self._p("config.json"), self.cfg.dumps().encode())
        return dict(self.statuses)

    def run_single(self, stage: str, years: Optional[Sequence[int]] = None, jobs: int = 1) -> dict[str, str]:
        if stage not in SINGLE_STAGES:
            raise ConfigError(f"unknown stage {stage}")
        try:
            if stage == "ingest":
                self.run_stage(self.stage_ingest_gini(), force=True)
                self.run_stage(self.stage_ingest_trade(), force=True)
            else:
                years = list(years) if years else self.trade_years()
                if stage == "report":
                    self.run_stage(self.stage_report(years), force=True)
                else:
                    self.run_years([stage], years, jobs, force=True)
        except StageFailure as exc:
            self.ws.save(self.cfg.to_dict())
            self.ws.mark_partial(exc.report)
            raise
        self.ws.save(self.cfg.to_dict())
        write_bytes_atomic(self._p("config.json"), self.cfg.dumps().encode())
        return dict(self.statuses)


def _year_worker(args) -> dict:
    cfg_dict, root, year, names, snapshot, force = args
    pipe = Pipeline(RunConfig.from_dict(cfg_dict), Path(root))
    pipe.ws.stages = dict(snapshot)
    done = []
    for name in names:
        spec = pipe.year_stage(name, year)
        try:
            status = pipe.run_stage(spec, force)
        except StageFailure as exc:
            return {"done": done, "failure": exc.report}
        done.append((spec.key, status, pipe.ws.stages[spec.key]))
    return {"done": done, "failure": None}


def _nonempty(mats: matrices.SpecializationMatrices):
    """M with all-zero rows and columns removed, plus the surviving labels."""
    M = mats.M
    rows = M.sum(axis=1) > 0
    cols = M.sum(axis=0) > 0
    if not rows.all() or not cols.all():
        log.info("year %s: %d countries and %d products without RCA entries left out of ECI",
                 mats.year, int((~rows).sum()), int((~cols).sum()))
    return (
        M[np.ix_(rows, cols)],
        [c for c, k in zip(mats.countries, rows) if k],
        [p for p, k in zip(mats.products, cols) if k],
    )


def _align(sl: matrices.YearSlice, mats: matrices.SpecializationMatrices) -> np.ndarray:
    ci = {c: i for i, c in enumerate(sl.countries)}
    pj = {p: j for j, p in enumerate(sl.products)}
    return sl.X[np.ix_([ci[c] for c in mats.countries], [pj[p] for p in mats.products])]


def default_jobs() -> int:
    return os.cpu_count() or 1
