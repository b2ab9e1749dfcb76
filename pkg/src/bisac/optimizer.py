"""Rate maximization under tag/AP SINR and power constraints.

The UE SINR ratio is handled with the quadratic transform

    F(W, y) = 2 y Re{h_u w_u} - y^2 D(W)

where ``D(W)`` is the UE interference-plus-noise power.  For fixed ``W`` the
best ``y`` is ``Re{h_u w_u} / D(W)``; for fixed ``y`` the beamformer is found
by successive convex approximation of the AP SINR constraint.  Alternating
the two blocks gives a monotone rate sequence.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np
from scipy.linalg import null_space

from . import socp
from .errors import InfeasibleScenarioError, SolverFailure
from .model import (
    BeamformingMatrix,
    ChannelSet,
    SystemConfig,
    detection_probability,
    equal_gain_combiner,
    rate,
    sinr_ap,
    sinr_tag,
    sinr_ue,
    ue_denominator_terms,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class StoppingRule:
    """Iteration limits for the inner SCA loop and the outer alternation.

    ``delta_th`` is relative to ``||h_f W||^2 + sigma_t^2`` and ``eps_th``
    relative to ``|y|``; the raw quantities carry units and are not
    comparable across scenarios.
    """

    delta_th: float = 1e-4
    i_max: int = 50
    eps_th: float = 1e-5
    k_max: int = 30
    solver_tol: float = 1e-10
    solver_max_iter: int = 100

    def __post_init__(self):
        if not (self.delta_th > 0 and self.eps_th > 0 and self.solver_tol > 0):
            raise ValueError("thresholds must be positive")
        if self.i_max < 1 or self.k_max < 1 or self.solver_max_iter < 1:
            raise ValueError("iteration caps must be >= 1")


@dataclass
class IterationRecord:
    iteration: int
    y: float
    objective: float
    rate: float
    gamma_t: float
    gamma_ap: float
    power: float
    inner_iterations: int = 0
    delta: float = float("nan")
    epsilon: float = float("nan")
    objective_before: float = float("nan")
    solver_iterations: int = 0


@dataclass
class IterationTrace:
    records: list = field(default_factory=list)

    def append(self, rec: IterationRecord):
        self.records.append(rec)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    def as_rows(self):
        return [asdict(r) for r in self.records]


@dataclass(frozen=True)
class FeasibilityReport:
    """Signed constraint residuals; a constraint holds when its residual >= 0."""

    tag_sinr: float
    ap_sinr: float
    power: float
    tol: float = 1e-8

    @property
    def feasible(self) -> bool:
        return min(self.tag_sinr, self.ap_sinr, self.power) >= -self.tol

    def binding(self) -> str:
        return min(("tag_sinr", self.tag_sinr), ("ap_sinr", self.ap_sinr),
                   ("power", self.power), key=lambda kv: kv[1])[0]

    def as_dict(self):
        return {"tag_sinr": self.tag_sinr, "ap_sinr": self.ap_sinr, "power": self.power}


@dataclass
class SolveReport:
    W: BeamformingMatrix
    status: str
    trace: IterationTrace
    inner_traces: list
    rate: float
    gamma_u: float
    gamma_t: float
    gamma_ap: float
    power: float
    p_d: float
    feasibility: FeasibilityReport

    @property
    def outer_iterations(self) -> int:
        return len(self.trace)


def ue_denominator(W: BeamformingMatrix, ch: ChannelSet, cfg: SystemConfig) -> float:
    return float(sum(v for _, v in ue_denominator_terms(W, ch, cfg)) + cfg.sigma2_u)


def objective_F(W: BeamformingMatrix, y: float, ch: ChannelSet, cfg: SystemConfig) -> float:
    """Quadratic-transform surrogate ``2y Re{h_u w_u} - y^2 D(W)``."""
    return float(2.0 * y * np.real(ch.h_u @ W.w_u) - y * y * ue_denominator(W, ch, cfg))


def optimal_y(W: BeamformingMatrix, ch: ChannelSet, cfg: SystemConfig) -> float:
    """Maximizer of ``objective_F`` in ``y`` for fixed ``W``."""
    return float(np.real(ch.h_u @ W.w_u) / ue_denominator(W, ch, cfg))


def _dephase(z: complex) -> complex:
    return np.exp(-1j * np.angle(z)) if z != 0 else 1.0


def rotate_phases(W: BeamformingMatrix, ch: ChannelSet) -> BeamformingMatrix:
    """Rotate ``w_t`` and ``w_u`` so that ``h_f w_t`` and ``h_u w_u`` are real >= 0.

    Every SINR depends on these columns only through magnitudes, so the
    metrics are unchanged.
    """
    return BeamformingMatrix(W.w_u * _dephase(ch.h_u @ W.w_u),
                             W.w_t * _dephase(ch.h_f @ W.w_t), W.W_s)


def check_feasibility(W: BeamformingMatrix, ch: ChannelSet, cfg: SystemConfig,
                      tol: float = 1e-8, w_r=None) -> FeasibilityReport:
    return FeasibilityReport(
        tag_sinr=sinr_tag(W, ch, cfg).value - cfg.gamma_tth,
        ap_sinr=sinr_ap(W, ch, cfg, w_r).value - cfg.gamma_apth,
        power=cfg.p_t - W.power(),
        tol=tol,
    )


def initialize_W(ch: ChannelSet, cfg: SystemConfig, tol: float = 1e-8) -> BeamformingMatrix:
    """Deterministic feasible starting beamformer.

    The tag beam is maximum-ratio toward ``h_f`` with a 3 dB margin over the
    larger of the two SINR requirements (less if the budget does not allow
    it).  The UE beam is ``h_u^H`` with its component along ``h_f^H``
    removed, and the probing beams span the orthogonal complement of both.
    If the point is infeasible the UE share of the leftover power is halved
    up to 30 times.
    """
    ch.check(cfg)
    hf_norm2 = float(np.real(np.vdot(ch.h_f, ch.h_f)))
    g_b = float(np.real(np.vdot(ch.h_b, ch.h_b)))
    if hf_norm2 == 0:
        raise InfeasibleScenarioError("tag channel is zero", binding="tag_sinr",
                                      stage="initialization")
    p_tag = cfg.gamma_tth * cfg.sigma2_t / hf_norm2
    if cfg.alpha > 0 and g_b > 0:
        ap_floor = cfg.gamma_apth * (cfg.alpha * g_b * cfg.sigma2_t + cfg.sigma2_ap)
        p_ap = ap_floor / (cfg.alpha * g_b) / hf_norm2
    else:
        p_ap = np.inf
    need = max(p_tag, p_ap)
    if not need < cfg.p_t:
        binding = "tag_sinr" if p_tag >= p_ap else "ap_sinr"
        raise InfeasibleScenarioError(
            f"tag beam needs {need:.4g} mW but the budget is {cfg.p_t:.4g} mW",
            binding=binding, stage="initialization")
    p_t_beam = min(2.0 * need, 0.5 * (need + cfg.p_t))
    leftover = cfg.p_t - p_t_beam

    f_dir = ch.h_f.conj() / np.sqrt(hf_norm2)
    w_t = np.sqrt(p_t_beam) * f_dir
    u = ch.h_u.conj() - f_dir * np.vdot(f_dir, ch.h_u.conj())
    if np.linalg.norm(u) <= 1e-9 * np.linalg.norm(ch.h_u):
        u = ch.h_u.conj()
    u_norm = np.linalg.norm(u)
    u_dir = u / u_norm if u_norm > 0 else np.zeros(cfg.n_t, dtype=complex)
    basis = null_space(np.vstack([u_dir.conj(), f_dir.conj()]))
    k = basis.shape[1]

    frac = 0.9
    report = None
    for _ in range(31):
        W_s = np.zeros((cfg.n_t, cfg.n_t), dtype=complex)
        p_u = frac * leftover if k > 0 else leftover
        if k > 0:
            W_s[:, :k] = np.sqrt((1.0 - frac) * leftover / k) * basis
        W = rotate_phases(BeamformingMatrix(np.sqrt(p_u) * u_dir, w_t, W_s), ch)
        report = check_feasibility(W, ch, cfg, tol)
        if report.feasible:
            return W
        frac *= 0.5
    raise InfeasibleScenarioError("no feasible starting point found",
                                  binding=report.binding(), stage="initialization")


def _record(k, W, y, ch, cfg, **extra) -> IterationRecord:
    return IterationRecord(
        iteration=k, y=y, objective=objective_F(W, y, ch, cfg),
        rate=rate(sinr_ue(W, ch, cfg).value), gamma_t=sinr_tag(W, ch, cfg).value,
        gamma_ap=sinr_ap(W, ch, cfg).value, power=W.power(), **extra)


def sca_delta(W: BeamformingMatrix, W_anchor: BeamformingMatrix, ch: ChannelSet) -> float:
    """``|Tr[W^H F (W - W') + W^T F^T (W - W')^*]|`` with ``F = h_f^H h_f``."""
    a = ch.h_f @ W.matrix
    b = ch.h_f @ (W.matrix - W_anchor.matrix)
    return float(abs(2.0 * np.real(np.vdot(a, b))))


def sca_solve(y: float, W_init: BeamformingMatrix, rule: StoppingRule, ch: ChannelSet,
              cfg: SystemConfig):
    """Inner SCA loop for fixed ``y``. Returns ``(W, IterationTrace)``."""
    W = W_init
    trace = IterationTrace()
    for i in range(1, rule.i_max + 1):
        anchor = W
        data = socp.build_subproblem(anchor, y, ch, cfg)
        W_new, status = socp.solve(data, rule.solver_tol, rule.solver_max_iter, W0=anchor)
        if status.state in (socp.INFEASIBLE, socp.NUMERICAL_FAILURE):
            raise SolverFailure(f"SCA iteration {i}: subproblem {status.state} "
                                f"({status.message})", status=status, stage=f"sca:{i}")
        if status.state != socp.OPTIMAL:
            log.warning("SCA iteration %d: solver stopped with %s, kkt=%s",
                        i, status.state, status.kkt_residuals)
        W = W_new
        delta = sca_delta(W, anchor, ch)
        hfW2 = float(np.sum(np.abs(ch.h_f @ W.matrix) ** 2))
        trace.append(_record(i, W, y, ch, cfg, delta=delta,
                             solver_iterations=status.iterations))
        if delta < rule.delta_th * (hfW2 + cfg.sigma2_t):
            break
    return W, trace


def alternating_solve(rule: StoppingRule, ch: ChannelSet, cfg: SystemConfig,
                      W_init: Optional[BeamformingMatrix] = None):
    """Alternate closed-form ``y`` updates with SCA beamformer updates.

    Returns ``(W, IterationTrace, SolveReport)``.
    """
    W = initialize_W(ch, cfg) if W_init is None else W_init
    y_prev = 0.0
    trace = IterationTrace()
    inner_traces = []
    status = "max-iterations"
    for k in range(1, rule.k_max + 1):
        W = rotate_phases(W, ch)
        y = optimal_y(W, ch, cfg)
        before = objective_F(W, y, ch, cfg)
        try:
            W, inner = sca_solve(y, W, rule, ch, cfg)
        except SolverFailure as exc:
            exc.stage = f"outer:{k}/{exc.stage}"
            raise
        inner_traces.append(inner)
        eps = y - y_prev
        trace.append(_record(k, W, y, ch, cfg, inner_iterations=len(inner), epsilon=eps,
                             objective_before=before))
        y_prev = y
        if abs(eps) < rule.eps_th * abs(y):
            status = "converged"
            break
    W = rotate_phases(W, ch)
    g_u, g_t, g_ap = sinr_ue(W, ch, cfg).value, sinr_tag(W, ch, cfg).value, sinr_ap(W, ch, cfg).value
    report = SolveReport(
        W=W, status=status, trace=trace, inner_traces=inner_traces, rate=rate(g_u),
        gamma_u=g_u, gamma_t=g_t, gamma_ap=g_ap, power=W.power(),
        p_d=detection_probability(g_ap, cfg.p_f),
        feasibility=check_feasibility(W, ch, cfg, 1e-6),
    )
    return W, trace, report
