"""Command-line experiment runner.

    bisac <experiment> <scenario> --out <dir> [--seed N] [--sweep key=a:b:step] [--jobs N]

Experiments: ``solve``, ``convergence-trace``, ``beampattern``,
``power-sweep`` and ``detection-roc``.  ``<scenario>`` is a TOML file or
``default``.  Every run writes ``manifest.json``; failures write
``error.json`` and exit with 2 (parse), 3 (validation), 4 (infeasible) or
5 (solver failure).
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import json
import logging
import os
import sys
import tempfile

from . import __version__
from . import experiments as ex
from .errors import InfeasibleScenarioError, SolverFailure
from .scenario import (
    ScenarioParseError,
    ScenarioValidationError,
    load_scenario,
    parse_sweep,
)

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_VALIDATION = 3
EXIT_INFEASIBLE = 4
EXIT_SOLVER = 5

EXPERIMENTS = ("solve", "convergence-trace", "beampattern", "power-sweep", "detection-roc")

log = logging.getLogger("bisac")


def _atomic_write(path: str, data: str):
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(rows, columns) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n",
                       restval="", extrasaction="ignore")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


class _Outputs:
    def __init__(self, out_dir):
        self.out_dir = out_dir
        self.files = []

    def write(self, name, text):
        _atomic_write(os.path.join(self.out_dir, name), text)
        self.files.append(name)

    def csv(self, name, rows, columns):
        self.write(name, _csv_text(rows, columns))

    def json(self, name, obj):
        self.write(name, _json_text(obj))


def _execute(experiment, sc, out: _Outputs, sweep=None, jobs=1):
    """Run one experiment; returns the exit status."""
    if sweep is not None and experiment != "power-sweep":
        raise ScenarioValidationError("--sweep only applies to power-sweep")
    if experiment == "solve":
        rep = ex.solve_scenario(sc)
        out.json("solution.json", ex.solution_dict(rep, sc))
        out.csv("trace.csv", ex.trace_rows(rep), ex.TRACE_COLUMNS)
    elif experiment == "convergence-trace":
        rep = ex.solve_scenario(sc)
        out.csv("trace.csv", ex.trace_rows(rep), ex.TRACE_COLUMNS)
        rows = ex.sca_trace_rows(rep)
        out.csv("sca_trace.csv", rows, ("outer",) + ex.TRACE_COLUMNS
                + ("delta", "solver_iterations"))
    elif experiment == "beampattern":
        rep = ex.solve_scenario(sc)
        grid = ex.beampattern_grid(sc.beampattern_step_deg)
        out.csv("beampattern.csv", ex.emit_beampattern(rep.W, grid), ex.BEAM_COLUMNS)
    elif experiment == "power-sweep":
        key, values = sweep if sweep is not None else ("p_t_dbm", None)
        rows = ex.power_sweep(sc, key, values, jobs)
        out.csv("sweep.csv", rows, (key,) + ex.SWEEP_METRICS)
        failed = [r for r in rows if r["status"] not in ("converged", "max-iterations")]
        if any(r["status"] == SolverFailure.__name__ for r in failed):
            return EXIT_SOLVER
        if failed:
            return EXIT_INFEASIBLE
    elif experiment == "detection-roc":
        rows, _ = ex.detection_roc(sc)
        out.csv("roc.csv", rows, ex.ROC_COLUMNS)
    else:
        raise ScenarioValidationError(f"unknown experiment {experiment!r}")
    return EXIT_OK


def _manifest(experiment, sc, out: _Outputs, status):
    return {
        "experiment": experiment,
        "scenario_hash": sc.content_hash() if sc is not None else None,
        "code_version": __version__,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "seed": sc.seed if sc is not None else None,
        "assumptions": {k: getattr(sc, k) for k in sc.assumed} if sc is not None else {},
        "exit_status": status,
        "files": sorted(set(out.files)) + ["manifest.json"],
    }


def run(experiment: str, scenario_path: str, out_dir: str, seed_override=None,
        sweep: str | None = None, jobs: int = 1) -> int:
    """Run ``experiment`` on a scenario file and write artifacts to ``out_dir``.

    Returns the process exit status.
    """
    os.makedirs(out_dir, exist_ok=True)
    out = _Outputs(out_dir)
    sc = None
    try:
        sc = load_scenario(scenario_path)
        if seed_override is not None:
            sc = sc.with_values(seed=int(seed_override))
        sweep_arg = parse_sweep(sweep) if sweep is not None else None
        status = _execute(experiment, sc, out, sweep_arg, jobs)
        error = None
    except ScenarioParseError as exc:
        status, error = EXIT_PARSE, {"error": "ParseError", "message": str(exc)}
    except ScenarioValidationError as exc:
        status, error = EXIT_VALIDATION, {"error": "ValidationError", "message": str(exc)}
    except InfeasibleScenarioError as exc:
        status, error = EXIT_INFEASIBLE, exc.to_dict()
    except SolverFailure as exc:
        status, error = EXIT_SOLVER, exc.to_dict()
    if error is not None:
        error["exit_status"] = status
        out.json("error.json", error)
        print(_json_text(error), file=sys.stderr, end="")
    out.json("manifest.json", _manifest(experiment, sc, out, status))
    out.files.pop()
    return status


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bisac", description=__doc__.split("\n\n")[0])
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("scenario", help="scenario TOML file, or 'default'")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.add_argument("--sweep", default=None, metavar="KEY=A:B:STEP",
                   help="sweep a scenario key (power-sweep only); endpoints inclusive")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return run(args.experiment, args.scenario, args.out, args.seed, args.sweep,
               max(1, args.jobs))


if __name__ == "__main__":
    sys.exit(main())
