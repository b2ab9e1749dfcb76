"""Experiment bodies behind the command line.

Each function takes a :class:`~bisac.scenario.Scenario` and returns plain
rows or dictionaries; file handling lives in :mod:`bisac.cli`.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict

import numpy as np

from .detection import run_detection
from .errors import BisacError
from .model import BeamformingMatrix, steering_vector
from .optimizer import alternating_solve
from .scenario import Scenario, ScenarioValidationError
from .units import linear_to_db

TRACE_COLUMNS = ("iteration", "y", "F", "rate", "gamma_t", "gamma_ap", "power")
BEAM_COLUMNS = ("theta_deg", "overall_dbm", "comm_dbm", "tag_dbm", "probe_dbm")
SWEEP_METRICS = ("status", "rate", "gamma_u", "gamma_t", "gamma_ap", "power", "p_d",
                 "outer_iterations", "error")
ROC_COLUMNS = ("p_f", "eta", "p_d_empirical", "p_d_halfwidth", "p_f_empirical",
               "p_f_halfwidth", "p_d_closed_form", "p_d_predicted")


def solve_scenario(sc: Scenario):
    cfg, ch = sc.system_config(), sc.channels()
    return alternating_solve(sc.stopping_rule(), ch, cfg)[2]


def solution_dict(report, sc: Scenario) -> dict:
    W = report.W.matrix
    return {
        "status": report.status,
        "outer_iterations": report.outer_iterations,
        "rate": report.rate,
        "gamma_u": report.gamma_u,
        "gamma_t": report.gamma_t,
        "gamma_ap": report.gamma_ap,
        "gamma_u_db": float(linear_to_db(report.gamma_u)),
        "gamma_t_db": float(linear_to_db(report.gamma_t)),
        "gamma_ap_db": float(linear_to_db(report.gamma_ap)),
        "power_mw": report.power,
        "p_t_mw": sc.system_config().p_t,
        "p_d": report.p_d,
        "y": report.trace[-1].y if len(report.trace) else None,
        "feasibility": report.feasibility.as_dict(),
        "W_real": W.real.tolist(),
        "W_imag": W.imag.tolist(),
    }


def trace_rows(report):
    return [{"iteration": r.iteration, "y": r.y, "F": r.objective, "rate": r.rate,
             "gamma_t": r.gamma_t, "gamma_ap": r.gamma_ap, "power": r.power}
            for r in report.trace]


def sca_trace_rows(report):
    rows = []
    for k, inner in enumerate(report.inner_traces, start=1):
        for r in inner:
            rows.append({"outer": k, "iteration": r.iteration, "y": r.y, "F": r.objective,
                         "rate": r.rate, "gamma_t": r.gamma_t, "gamma_ap": r.gamma_ap,
                         "power": r.power, "delta": r.delta,
                         "solver_iterations": r.solver_iterations})
    return rows


def beampattern_components(W: BeamformingMatrix, thetas) -> dict:
    """Linear (mW) beampatterns of the overall signal and its three parts."""
    A = np.stack([np.asarray(steering_vector(t, W.n_t)) for t in thetas], axis=1)
    comm = np.abs(A.conj().T @ W.w_u) ** 2
    tag = np.abs(A.conj().T @ W.w_t) ** 2
    probe = np.sum(np.abs(A.conj().T @ W.W_s) ** 2, axis=1)
    R = W.matrix @ W.matrix.conj().T
    overall = np.real(np.einsum("ik,ij,jk->k", A.conj(), R, A))
    return {"overall": overall, "comm": comm, "tag": tag, "probe": probe}


def _dbm(p):
    # exact nulls would give -inf, which CSV consumers handle poorly
    return float(linear_to_db(max(float(p), 1e-300)))


def emit_beampattern(W: BeamformingMatrix, grid_deg) -> list:
    """Beampattern rows in dBm over ``grid_deg`` (degrees)."""
    grid_deg = np.asarray(grid_deg, dtype=float)
    comp = beampattern_components(W, np.radians(grid_deg))
    return [{"theta_deg": float(t), "overall_dbm": _dbm(comp["overall"][i]),
             "comm_dbm": _dbm(comp["comm"][i]), "tag_dbm": _dbm(comp["tag"][i]),
             "probe_dbm": _dbm(comp["probe"][i])}
            for i, t in enumerate(grid_deg)]


def beampattern_grid(step_deg: float = 1.0) -> np.ndarray:
    n = int(math.floor(180.0 / step_deg + 1e-9))
    return np.round(-90.0 + step_deg * np.arange(n + 1), 12)


def orthogonal_beam_baseline(n_t: int, p_t: float) -> BeamformingMatrix:
    """Power split evenly over ``n_t`` orthogonal probing beams.

    The covariance is a scaled identity, so the beampattern is flat.
    """
    return BeamformingMatrix(np.zeros(n_t, complex), np.zeros(n_t, complex),
                             np.sqrt(p_t / n_t) * np.eye(n_t, dtype=complex))


def _sweep_point(args):
    sc, key, value = args
    row = {key: value}
    try:
        rep = solve_scenario(sc)
    except BisacError as exc:
        row.update({"status": type(exc).__name__, "error": str(exc)})
        return row
    row.update({"status": rep.status, "rate": rep.rate, "gamma_u": rep.gamma_u,
                "gamma_t": rep.gamma_t, "gamma_ap": rep.gamma_ap, "power": rep.power,
                "p_d": rep.p_d, "outer_iterations": rep.outer_iterations, "error": ""})
    return row


def sweep_scenarios(sc: Scenario, key: str, values):
    fields = sc.to_dict()
    if key not in fields or isinstance(fields[key], tuple):
        raise ScenarioValidationError(f"cannot sweep over {key!r}")
    cast = int if isinstance(fields[key], int) else float
    out = []
    for v in values:
        if cast is int and not float(v).is_integer():
            raise ScenarioValidationError(f"{key} needs integer sweep values")
        out.append(sc.with_values(**{key: cast(v)}))
    return out


def power_sweep(sc: Scenario, key: str = "p_t_dbm", values=None, jobs: int = 1) -> list:
    """Solve once per sweep value; rows come back in sweep order."""
    if values is None:
        values = sc.p_t_dbm_sweep
    scenarios = sweep_scenarios(sc, key, values)
    tasks = [(s, key, getattr(s, key)) for s in scenarios]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_sweep_point, tasks))
    return [_sweep_point(t) for t in tasks]


def detection_roc(sc: Scenario, report=None):
    cfg, ch = sc.system_config(), sc.channels()
    if report is None:
        report = solve_scenario(sc)
    exp = run_detection(report.W, ch, cfg, sc.roc_p_f, sc.n_trials, sc.seed)
    rows = []
    for p in exp.points:
        d = asdict(p)
        rows.append({"p_f": d["p_f"], "eta": d["eta"], "p_d_empirical": d["p_d"],
                     "p_d_halfwidth": d["p_d_halfwidth"], "p_f_empirical": d["p_f_empirical"],
                     "p_f_halfwidth": d["p_f_halfwidth"], "p_d_closed_form": d["p_d_analytic"],
                     "p_d_predicted": d["p_d_predicted"]})
    return rows, report

