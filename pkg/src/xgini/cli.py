"""Command-line entry point.

    xgini pipeline --config run.json
    xgini eci --workspace ws --method reflections --tol 1e-10
    xgini treemap --workspace ws --scope CHN --year 2013

Exit codes: 0 success, 2 config error, 3 input error, 4 numerical error,
5 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .config import RunConfig, parse_years
from .errors import ConfigError, XginiError
from .ingest import load_sections, load_trade
from .pipeline import SINGLE_STAGES, TRADE_OUT, Pipeline, StageFailure, _entity_slug, default_jobs
from .report import make_treemap, write_treemap
from .workspace import atomic_path

log = logging.getLogger("xgini")

DEFAULT_WORKSPACE = "xgini-workspace"


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", type=Path, help="run configuration (JSON)")
    p.add_argument("--workspace", type=Path, help="workspace directory (default $XGINI_WORKSPACE)")
    p.add_argument("--years", help="inclusive year range A:B")
    p.add_argument("--rca-threshold", type=float)
    p.add_argument("--edge-threshold", type=float)
    p.add_argument("--method", choices=["eigen", "reflections"])
    p.add_argument("--tol", type=float, help="ECI convergence tolerance")
    p.add_argument("--iterations", type=int, help="ECI iteration cap")
    p.add_argument("--regions", type=Path, help="region roster file (GROUP: CODE,CODE,...)")
    p.add_argument("--jobs", type=int, help="worker processes across years (default: all cores)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xgini", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"xgini {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common()
    sub.add_parser("pipeline", parents=[common], help="run every stage, reusing cached outputs")
    for name in SINGLE_STAGES:
        sub.add_parser(name, parents=[common], help=f"run only the {name} stage")
    tm = sub.add_parser("treemap", parents=[common], help="export composition of a country or group")
    tm.add_argument("--scope", required=True, help="country code, comma-separated codes, or roster group name")
    tm.add_argument("--year", type=int, required=True)
    tm.add_argument("--sections", type=Path, help="product,section_name lookup CSV")
    tm.add_argument("--trade", type=Path, help="trade CSV to use instead of the workspace table (e.g. bilateral-filtered)")
    tm.add_argument("--out", type=Path, help="output CSV (default reports/treemaps/<scope>_<year>.csv)")
    return parser


def resolve_config(args, workspace: Path) -> RunConfig:
    if args.config is not None:
        cfg = RunConfig.load(args.config)
    elif (workspace / "config.json").is_file():
        cfg = RunConfig.load(workspace / "config.json")
    else:
        cfg = RunConfig()
    overrides = {
        "years": args.years,
        "rca_threshold": args.rca_threshold,
        "edge_threshold": args.edge_threshold,
        "eci_method": args.method,
        "eci_tol": args.tol,
        "eci_iterations": args.iterations,
        "regions": str(args.regions.resolve()) if args.regions else None,
    }
    for k, v in overrides.items():
        if v is not None:
            setattr(cfg, k, v)
    cfg.validate()
    return cfg


def resolve_workspace(args) -> Path:
    if args.workspace is not None:
        return args.workspace
    env = os.environ.get("XGINI_WORKSPACE")
    if env:
        return Path(env)
    if args.config is not None:
        cfg = RunConfig.load(args.config)
        if cfg.workspace:
            return Path(cfg.workspace)
    return Path(DEFAULT_WORKSPACE)


def _treemap(args, pipe: Pipeline) -> None:
    trade_path = args.trade or pipe.root / TRADE_OUT
    if not Path(trade_path).is_file():
        raise StageFailure({"stage": "treemap", "error": "PrerequisiteError",
                            "message": f"missing {trade_path}; run the 'ingest' stage first", "exit_code": 3})
    trade = load_trade(trade_path)
    rosters = pipe.rosters()
    if args.scope in rosters:
        scope = list(rosters[args.scope])
    else:
        scope = [c.strip().upper() for c in args.scope.split(",") if c.strip()]
    sections_path = args.sections or (Path(pipe.cfg.sections) if pipe.cfg.sections else None)
    sections = load_sections(sections_path) if sections_path else None
    note = args.scope + (f" (from {Path(args.trade).name})" if args.trade else "")
    spec = make_treemap(trade, scope, args.year, sections, note=note)
    out = args.out or pipe.root / f"reports/treemaps/{_entity_slug(args.scope)}_{args.year}.csv"
    with atomic_path(out) as tmp:
        write_treemap(spec, tmp)
    print(out)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        workspace = resolve_workspace(args)
        cfg = resolve_config(args, workspace)
        pipe = Pipeline(cfg, workspace)
        jobs = args.jobs if args.jobs is not None else default_jobs()
        if args.command == "pipeline":
            statuses = pipe.run_pipeline(jobs)
        elif args.command == "treemap":
            _treemap(args, pipe)
            return 0
        else:
            years = None
            if args.years:
                lo, hi = parse_years(args.years)
                years = [y for y in pipe.trade_years() if lo <= y <= hi] if args.command != "ingest" else None
            statuses = pipe.run_single(args.command, years, jobs)
        for key, status in statuses.items():
            print(f"{key}\t{status}")
        return 0
    except StageFailure as exc:
        print(json.dumps(exc.report, sort_keys=True), file=sys.stderr)
        return exc.exit_code
    except XginiError as exc:
        print(json.dumps({"stage": args.command, "error": type(exc).__name__, "message": str(exc),
                          "exit_code": exc.exit_code}, sort_keys=True), file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(json.dumps({"stage": args.command, "error": type(exc).__name__, "message": str(exc),
                          "exit_code": 5}, sort_keys=True), file=sys.stderr)
        return 5


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
