"""Dense interior-point solver for the per-iteration beamforming subproblem.

The subproblem maximizes a concave quadratic of the beamformer subject to
one second-order cone (tag SINR), one affine inequality (linearized AP SINR)
and the total-power ball.  It is solved on the real lift of ``vec(W)``:

    x = [Re vec(W); Im vec(W)]

with ``vec`` stacking columns, and Hermitian forms lifted as
``[[Re Q, -Im Q], [Im Q, Re Q]]`` so that ``w^H Q w = x^T lift(Q) x``.
This is the only lift used in the package.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg as sla

from .model import BeamformingMatrix, ChannelSet, SystemConfig, equal_gain_combiner

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
MAX_ITERATIONS = "max-iterations"
NUMERICAL_FAILURE = "numerical-failure"


# -- real lift ---------------------------------------------------------------

def vec(W: BeamformingMatrix) -> np.ndarray:
    """Lifted real vector of a beamformer."""
    w = W.matrix.reshape(-1, order="F")
    return np.concatenate([w.real, w.imag])


def unvec(x: np.ndarray, n_t: int) -> BeamformingMatrix:
    n = x.size // 2
    w = x[:n] + 1j * x[n:]
    return BeamformingMatrix.from_matrix(w.reshape(n_t, n_t + 2, order="F"))


def lift_hermitian(Q: np.ndarray) -> np.ndarray:
    return np.block([[Q.real, -Q.imag], [Q.imag, Q.real]])


def lift_row_real(g: np.ndarray) -> np.ndarray:
    """Row ``r`` with ``r @ x == Re(g @ w)``."""
    return np.concatenate([g.real, -g.imag])


def lift_row_imag(g: np.ndarray) -> np.ndarray:
    """Row ``r`` with ``r @ x == Im(g @ w)``."""
    return np.concatenate([g.imag, g.real])


def _column_functional(h: np.ndarray, col: int, n_cols: int) -> np.ndarray:
    n_t = h.size
    g = np.zeros(n_t * n_cols, dtype=complex)
    g[col * n_t:(col + 1) * n_t] = h
    return g


# -- subproblem data ---------------------------------------------------------

@dataclass(frozen=True)
class SubproblemData:
    """Concave QP with one SOC, one affine row and a power ball (real lift).

    maximize    lin @ x - x @ quad @ x - const
    subject to  soc_c @ x >= || soc_A @ x + soc_b ||
                aff_a @ x >= aff_b
                x @ x     <= radius2
    """

    lin: np.ndarray
    quad: np.ndarray
    const: float
    soc_A: np.ndarray
    soc_b: np.ndarray
    soc_c: np.ndarray
    aff_a: np.ndarray
    aff_b: float
    radius2: float
    n_t: Optional[int] = None

    def __post_init__(self):
        if not self.radius2 > 0:
            raise ValueError("power ball radius must be positive")
        if not np.all(np.isfinite(self.aff_a)) or not np.isfinite(self.aff_b):
            raise ValueError("affine row must be finite")

    @property
    def dim(self) -> int:
        return self.lin.size

    def objective(self, x) -> float:
        return float(self.lin @ x - x @ self.quad @ x - self.const)

    def soc_residual(self, x) -> float:
        return float(self.soc_c @ x - np.linalg.norm(self.soc_A @ x + self.soc_b))

    def affine_residual(self, x) -> float:
        return float(self.aff_a @ x - self.aff_b)

    def ball_residual(self, x) -> float:
        return float(self.radius2 - x @ x)


def build_subproblem(W_anchor: BeamformingMatrix, y: float, ch: ChannelSet,
                     cfg: SystemConfig, w_r=None) -> SubproblemData:
    """Assemble the convex subproblem for fixed ``y`` around ``W_anchor``.

    The AP-SINR constraint ``kappa * ||h_f W||^2 >= rhs`` is replaced by its
    first-order minorant at the anchor,
    ``kappa * (||h_f W'||^2 + 2 Re Tr[W'^H F (W - W')]) >= rhs`` with
    ``F = h_f^H h_f``, which is affine in ``W``.
    """
    n_t = cfg.n_t
    n_cols = n_t + 2
    if w_r is None:
        w_r = equal_gain_combiner(ch.h_b)
    x_anchor = vec(W_anchor)
    if not np.all(np.isfinite(x_anchor)) or not np.isfinite(y):
        raise ValueError("anchor and y must be finite")

    c_tu = cfg.alpha * abs(ch.h_tu) ** 2
    Fu = np.outer(ch.h_u.conj(), ch.h_u)
    Ff = np.outer(ch.h_f.conj(), ch.h_f)
    mask = np.ones(n_cols)
    mask[0] = 0.0  # |h_u w_u|^2 is signal, not interference
    Q = np.kron(np.diag(mask), Fu) + c_tu * np.kron(np.eye(n_cols), Ff)
    quad = y * y * lift_hermitian(Q)
    lin = 2.0 * y * lift_row_real(_column_functional(ch.h_u, 0, n_cols))
    const = y * y * (c_tu * cfg.sigma2_t + cfg.sigma2_u)

    rows = []
    for col in [0] + list(range(2, n_cols)):
        g = _column_functional(ch.h_f, col, n_cols)
        rows += [lift_row_real(g), lift_row_imag(g)]
    soc_A = np.vstack(rows + [np.zeros(2 * n_t * n_cols)])
    soc_b = np.zeros(soc_A.shape[0])
    soc_b[-1] = np.sqrt(cfg.sigma2_t)
    soc_c = lift_row_real(_column_functional(ch.h_f, 1, n_cols)) / np.sqrt(cfg.gamma_tth)

    g_b = abs(np.ravel(w_r) @ ch.h_b) ** 2
    kappa = cfg.alpha * g_b / cfg.gamma_apth
    rhs = cfg.alpha * g_b * cfg.sigma2_t + np.real(np.vdot(w_r, w_r)) * cfg.sigma2_ap
    Phi = lift_hermitian(np.kron(np.eye(n_cols), Ff))
    Phi_x = Phi @ x_anchor
    aff_a = 2.0 * kappa * Phi_x
    aff_b = float(rhs + kappa * (x_anchor @ Phi_x))

    return SubproblemData(lin=lin, quad=quad, const=float(const), soc_A=soc_A,
                          soc_b=soc_b, soc_c=soc_c, aff_a=aff_a, aff_b=aff_b,
                          radius2=float(cfg.p_t), n_t=n_t)


# -- solver ------------------------------------------------------------------

@dataclass
class SolverStatus:
    state: str
    kkt_residuals: tuple = (np.inf, np.inf, np.inf)  # (primal, dual, gap)
    iterations: int = 0
    gap_history: list = field(default_factory=list)
    message: str = ""

    @property
    def optimal(self) -> bool:
        return self.state == OPTIMAL


_MARGIN = 1e-2


class _Ball:
    def __init__(self, r2):
        self.r2 = r2

    def value(self, x):
        return (x @ x - self.r2) / self.r2

    def grad(self, x):
        return 2.0 * x / self.r2

    def hess(self, x):
        return np.eye(x.size) * (2.0 / self.r2)


class _NormCone:
    """``||A x + b|| - c @ x <= 0``; defined everywhere, used for phase I."""

    def __init__(self, A, b, c, scale):
        self.A, self.b, self.c, self.s = A, b, c, scale

    def _v(self, x):
        v = self.A @ x + self.b
        return v, max(np.linalg.norm(v), 1e-300)

    def value(self, x):
        v, nv = self._v(x)
        return (nv - self.c @ x) / self.s

    def grad(self, x):
        v, nv = self._v(x)
        return (self.A.T @ (v / nv) - self.c) / self.s

    def hess(self, x):
        v, nv = self._v(x)
        # The norm is not twice differentiable at v = 0; a floored curvature
        # keeps the Newton system finite there and is exact elsewhere.
        nv = max(nv, 1e-10 * self.s)
        u = self.A.T @ v
        return (self.A.T @ self.A / nv - np.outer(u, u) / nv ** 3) / self.s


class _Cone:
    """``||A x + b|| <= c @ x`` as ``||v||^2 / u - u <= 0`` with ``u = c @ x > 0``.

    The quadratic-over-linear form is smooth on its domain, unlike the norm,
    whose kink at ``v = 0`` can trap the barrier iterates (the analytic
    center may sit exactly there).  The domain ``u > 0`` is enforced
    separately by :class:`_Domain`.
    """

    def __init__(self, A, b, c, scale):
        self.A, self.b, self.c, self.s = A, b, c, scale

    def value(self, x):
        u = self.c @ x
        if not u > 0:
            return np.inf
        v = self.A @ x + self.b
        return (v @ v / u - u) / self.s

    def grad(self, x):
        u = self.c @ x
        v = self.A @ x + self.b
        return (2.0 * self.A.T @ v / u - (v @ v / u ** 2 + 1.0) * self.c) / self.s

    def hess(self, x):
        u = self.c @ x
        B = self.A - np.outer(self.A @ x + self.b, self.c) / u
        return 2.0 * B.T @ B / (u * self.s)


class _Domain:
    """Strict positivity ``c @ x > 0`` of the cone's scalar side."""

    def __init__(self, c, scale):
        self.c, self.s = c, scale

    def value(self, x):
        return -(self.c @ x) / self.s

    def grad(self, x):
        return -self.c / self.s

    def hess(self, x):
        return np.zeros((x.size, x.size))


class _Halfspace:
    def __init__(self, a, b, scale):
        self.a, self.b, self.s = a, b, scale

    def value(self, x):
        return (self.b - self.a @ x) / self.s

    def grad(self, x):
        return -self.a / self.s

    def hess(self, x):
        return np.zeros((x.size, x.size))


class _Lifted:
    """Phase-I version ``f(x) - s`` of a constraint over ``z = (x, s)``."""

    def __init__(self, con):
        self.con = con

    def value(self, z):
        return self.con.value(z[:-1]) - z[-1]

    def grad(self, z):
        return np.append(self.con.grad(z[:-1]), -1.0)

    def hess(self, z):
        H = np.zeros((z.size, z.size))
        H[:-1, :-1] = self.con.hess(z[:-1])
        return H


def _solve_pd(H, g):
    try:
        return sla.cho_solve(sla.cho_factor(H, check_finite=False), g, check_finite=False)
    except (np.linalg.LinAlgError, ValueError):
        return np.linalg.lstsq(H, g, rcond=None)[0]


class InteriorPointSolver:
    """Primal-dual interior-point method for smooth convex inequality forms.

    Follows the standard primal-dual search direction with the surrogate
    duality gap ``eta = -f(x) @ lam`` driving the barrier parameter.  Holds
    per-solve workspace; use one instance per thread.
    """

    mu = 10.0
    ls_alpha = 0.01
    ls_beta = 0.5

    def __init__(self, tol: float = 1e-8, max_iter: int = 100):
        self.tol = tol
        self.max_iter = max_iter

    def minimize(self, x, obj_grad, obj_hess, cons, stop_early=None):
        """Run from a strictly feasible ``x``.

        Returns ``(x, lam, state, (primal, dual, gap), iterations, gaps)``.
        """
        m = len(cons)
        f = np.array([c.value(x) for c in cons])
        lam = 1.0 / -f
        gaps = []
        state = MAX_ITERATIONS
        it = 0

        def residuals(x, lam, t):
            f = np.array([c.value(x) for c in cons])
            Df = np.array([c.grad(x) for c in cons])
            r_dual = obj_grad(x) + Df.T @ lam
            r_cent = -lam * f - 1.0 / t
            return f, Df, r_dual, r_cent

        for it in range(1, self.max_iter + 1):
            eta = float(-f @ lam)
            t = self.mu * m / eta
            f, Df, r_dual, r_cent = residuals(x, lam, t)
            gaps.append(eta)
            g0 = obj_grad(x)
            if stop_early is not None and stop_early(x):
                state = OPTIMAL
                break
            if (eta <= self.tol
                    and np.linalg.norm(r_dual) <= self.tol * max(1.0, np.linalg.norm(g0))):
                state = OPTIMAL
                break

            H = obj_hess(x) + sum(l * c.hess(x) for l, c in zip(lam, cons))
            H = H + Df.T @ ((lam / -f)[:, None] * Df)
            rhs = -(g0 + Df.T @ (1.0 / (t * -f)))
            dx = _solve_pd(H, rhs)
            dlam = (r_cent - lam * (Df @ dx)) / f
            if not (np.all(np.isfinite(dx)) and np.all(np.isfinite(dlam))):
                state = NUMERICAL_FAILURE
                break

            neg = dlam < 0
            s = min(1.0, float(np.min(-lam[neg] / dlam[neg]))) if np.any(neg) else 1.0
            s *= 0.99
            while np.any([c.value(x + s * dx) >= 0 for c in cons]) and s > 1e-16:
                s *= self.ls_beta
            r0 = np.linalg.norm(np.concatenate([r_dual, r_cent]))
            while s > 1e-16:
                _, _, rd, rc = residuals(x + s * dx, lam + s * dlam, t)
                if np.linalg.norm(np.concatenate([rd, rc])) <= (1 - self.ls_alpha * s) * r0:
                    break
                s *= self.ls_beta
            if s <= 1e-16:
                state = NUMERICAL_FAILURE
                break
            x = x + s * dx
            lam = lam + s * dlam
            f = np.array([c.value(x) for c in cons])

        eta = float(-f @ lam)
        r_dual = obj_grad(x) + np.array([c.grad(x) for c in cons]).T @ lam
        primal = float(max(0.0, np.max(f)))
        dual = float(np.linalg.norm(r_dual) / max(1.0, np.linalg.norm(obj_grad(x))))
        return x, lam, state, (primal, dual, eta), it, gaps

    def center(self, x, cons, max_iter=100):
        """Analytic center of ``{f_i < 0}`` by damped Newton on the log barrier."""
        def phi(x):
            f = np.array([c.value(x) for c in cons])
            return np.inf if np.any(f >= 0) else -np.sum(np.log(-f))

        it = 0
        for it in range(1, max_iter + 1):
            f = np.array([c.value(x) for c in cons])
            Df = np.array([c.grad(x) for c in cons])
            g = Df.T @ (1.0 / -f)
            H = sum(c.hess(x) / -fi for c, fi in zip(cons, f))
            H = H + Df.T @ ((1.0 / f ** 2)[:, None] * Df)
            dx = _solve_pd(H, -g)
            dec2 = float(-g @ dx)
            if dec2 / 2.0 <= 1e-14:
                break
            s, p0 = 1.0, phi(x)
            while phi(x + s * dx) > p0 - self.ls_alpha * s * dec2 and s > 1e-16:
                s *= self.ls_beta
            x = x + s * dx
        return x, it


def _constraints(data: SubproblemData, smooth: bool = True):
    """Normalized constraints ``f_i(x) < 0``.

    ``smooth=False`` gives the norm form of the cone, which is defined on
    all of space and is what phase I needs.
    """
    r = np.sqrt(data.radius2)
    cone_scale = (np.linalg.norm(data.soc_c) + np.linalg.norm(data.soc_A, 2)) * r \
        + np.linalg.norm(data.soc_b)
    cone_scale = cone_scale if cone_scale > 0 else 1.0
    aff_scale = np.linalg.norm(data.aff_a) * r + abs(data.aff_b)
    cons = [_Ball(data.radius2),
            _Halfspace(data.aff_a, data.aff_b, aff_scale if aff_scale > 0 else 1.0)]
    if not smooth:
        return cons + [_NormCone(data.soc_A, data.soc_b, data.soc_c, cone_scale)]
    c_scale = np.linalg.norm(data.soc_c) * r
    return cons + [_Cone(data.soc_A, data.soc_b, data.soc_c, cone_scale),
                   _Domain(data.soc_c, c_scale if c_scale > 0 else 1.0)]


def find_interior_point(data: SubproblemData, x0=None, tol: float = 1e-8, max_iter: int = 100):
    """Phase I: minimize ``s`` subject to ``f_i(x) <= s``.

    Returns ``(x, s, status)``; ``s < 0`` certifies strict feasibility.  A
    converged ``s >= 0`` proves that no strictly feasible point exists.
    """
    cons = _constraints(data, smooth=False)
    x0 = np.zeros(data.dim) if x0 is None else np.asarray(x0, dtype=float)
    f0 = max(c.value(x0) for c in cons)
    # A start on the boundary (e.g. a full-power anchor) is useless to the
    # barrier methods, so demand the same margin phase I stops at.
    if f0 < -_MARGIN:
        return x0, f0, SolverStatus(OPTIMAL, (0.0, 0.0, 0.0), 0)
    z = np.append(x0, f0 + 1.0)
    lifted = [_Lifted(c) for c in cons]
    e = np.zeros(z.size)
    e[-1] = 1.0
    zero = np.zeros((z.size, z.size))
    ipm = InteriorPointSolver(tol, max_iter)
    # Stop as soon as every constraint has a comfortable margin.
    z, lam, state, kkt, it, gaps = ipm.minimize(
        z, lambda z: e, lambda z: zero, lifted,
        stop_early=lambda z: max(c.value(z[:-1]) for c in cons) < -_MARGIN,
    )
    x = z[:-1]
    s = max(c.value(x) for c in cons)
    return x, s, SolverStatus(state, kkt, it, gaps)


def solve_lifted(data: SubproblemData, tol: float = 1e-8, max_iter: int = 100, x0=None):
    """Solve on the real lift. Returns ``(x, SolverStatus)``."""
    cons = _constraints(data)
    x, s, st1 = find_interior_point(data, x0, tol, max_iter)
    if not s < 0:
        # s - gap bounds the phase-I optimum from below
        _, dual, gap = st1.kkt_residuals
        certified = st1.state == OPTIMAL or (s - gap > 0 and dual <= 1e-6)
        if certified:
            msg = f"phase I bound {s - gap:.3e} >= 0: no strictly feasible point"
            return x, SolverStatus(INFEASIBLE, st1.kkt_residuals, st1.iterations,
                                   st1.gap_history, msg)
        return x, SolverStatus(st1.state, st1.kkt_residuals, st1.iterations,
                               st1.gap_history, "phase I did not find a feasible point")

    lin_norm = np.linalg.norm(data.lin)
    quad_norm = np.linalg.norm(data.quad, 2)
    r = np.sqrt(data.radius2)
    if lin_norm == 0 and quad_norm == 0:
        # Constant objective: every feasible point is optimal; return the
        # analytic center so the answer is deterministic.
        x, it = InteriorPointSolver(tol, max_iter).center(x, cons)
        return x, SolverStatus(OPTIMAL, (0.0, 0.0, 0.0), st1.iterations + it, [],
                               "constant objective: analytic center")

    ipm = InteriorPointSolver(tol, max_iter)
    # Warm starts near the boundary stall the primal-dual iteration; start
    # from the analytic center instead.
    x, it_c = ipm.center(x, cons)
    scale = lin_norm * r + abs(data.const) if lin_norm > 0 else quad_norm * data.radius2
    lin = data.lin / scale
    H0 = 2.0 * data.quad / scale
    x, lam, state, kkt, it, gaps = ipm.minimize(
        x, lambda x: H0 @ x - lin, lambda x: H0, cons)
    status = SolverStatus(state, kkt, st1.iterations + it_c + it, gaps)
    if state == OPTIMAL and max(kkt) > tol:
        status.state = MAX_ITERATIONS
    return x, status


def solve(data: SubproblemData, tol: float = 1e-8, max_iter: int = 100,
          W0: Optional[BeamformingMatrix] = None):
    """Solve the subproblem. Returns ``(BeamformingMatrix, SolverStatus)``."""
    if data.n_t is None:
        raise ValueError("subproblem has no beamformer shape; use solve_lifted")
    x0 = None if W0 is None else vec(W0)
    x, status = solve_lifted(data, tol, max_iter, x0)
    if status.state != OPTIMAL:
        log.debug("subproblem solve ended in state %s: %s", status.state, status.message)
    return unvec(x, data.n_t), status
