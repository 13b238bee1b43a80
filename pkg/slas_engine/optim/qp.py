"""
ADMM solver for the convex QP relaxations explored by branch-and-bound.

    minimise    1/2 x'Px + q'x + c
    subject to  l <= Ax <= u,   lb <= x <= ub

Variables whose bounds coincide are substituted out before each solve, so a
node's fixings are exact rather than approximated through bound rows. The
reduced problem is equilibrated (Ruiz scaling of the KKT matrix plus a cost
scale) because big-M disjunction rows and unit-scale lane rows differ by
orders of magnitude. The iteration is the operator-splitting scheme with a
sparse quasi-definite KKT factorisation and an adaptive step size; once the
residuals are small an active-set polish solves the reduced KKT system
directly and its result is accepted only if it passes the optimality check on
the unscaled data. When the iteration stalls, small problems are handed to
SLSQP on the dense data.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
from pydantic import BaseModel, Field
from scipy import sparse
from scipy.optimize import minimize
from scipy.sparse import linalg as spla

logger = logging.getLogger(__name__)

_RHO_MIN = 1e-6
_RHO_MAX = 1e6
_SCALE_MIN = 1e-4
_SCALE_MAX = 1e4


class QPStatus(str, Enum):
    SOLVED = "solved"
    INFEASIBLE = "infeasible"
    NUMERICAL_FAILURE = "numerical_failure"
    TIME_LIMIT = "time_limit"


class ADMMSettings(BaseModel):
    """Step sizes and tolerances of the relaxation solver."""

    rho: float = Field(0.1, gt=0)
    eq_rho_scale: float = Field(1e3, ge=1)
    sigma: float = Field(1e-6, gt=0)
    alpha: float = Field(1.6, gt=0, lt=2)
    eps_abs: float = Field(1e-6, gt=0, description="Absolute tolerance on unscaled residuals")
    eps_rel: float = Field(1e-6, ge=0)
    scaling_iter: int = Field(10, ge=0)
    adaptive_rho: bool = True
    adapt_every: int = Field(5, ge=1, description="Residual checks between step-size updates")
    adapt_ratio: float = Field(5.0, gt=1)
    polish_from: float = Field(1e-2, gt=0, description="Relative residual that starts polishing")
    kkt_tol: float = Field(1e-7, gt=0, description="Relative stationarity tolerance of a polish")
    feas_tol: float = Field(1e-7, gt=0, description="Relative row violation tolerance")
    eps_pinf: float = Field(1e-6, gt=0)
    delta: float = Field(1e-9, gt=0)
    refine_iter: int = Field(5, ge=0)
    max_iter: int = Field(4000, ge=1)
    check_every: int = Field(10, ge=1)
    dense_fallback_vars: int = Field(
        400, ge=0, description="Largest reduced problem handed to SLSQP after a stall"
    )


@dataclass
class QPRelaxationResult:
    status: QPStatus
    solution: Optional[np.ndarray]  # full-length assignment, fixed values included
    objective: float
    kkt_residual: float
    iterations: int = 0
    polished: bool = False

    @property
    def solved(self) -> bool:
        return self.status is QPStatus.SOLVED

    @property
    def summary(self) -> str:
        if self.solved:
            tag = "polished" if self.polished else "admm"
            return (
                f"{self.status.value} ({tag}) obj={self.objective:.6f} "
                f"kkt={self.kkt_residual:.1e}"
            )
        return f"{self.status.value} after {self.iterations} iterations"


@dataclass
class ADMMState:
    """Iterates in full-problem coordinates, reusable as a warm start."""

    x: np.ndarray
    z_rows: np.ndarray
    y_rows: np.ndarray
    y_bounds: np.ndarray


@dataclass
class _Scaled:
    """Reduced problem in original and equilibrated form: x = D xs, zs = E z, ys = c y / E."""

    P: sparse.csc_matrix
    q: np.ndarray
    A: sparse.csc_matrix
    l: np.ndarray
    u: np.ndarray
    D: np.ndarray
    E: np.ndarray
    c: float
    Ps: sparse.csc_matrix
    qs: np.ndarray
    As: sparse.csc_matrix
    ls: np.ndarray
    us: np.ndarray


class RelaxationSolver:
    """
    QP data shared by every node of one branch-and-bound tree.

    Example:
        >>> solver = RelaxationSolver(P, q, A, l, u)
        >>> result, state = solver.solve(lb, ub)
        >>> child, _ = solver.solve(lb_child, ub_child, warm=state, time_limit=0.05)
    """

    def __init__(
        self,
        P: np.ndarray | sparse.spmatrix,
        q: np.ndarray,
        A: sparse.spmatrix,
        l: np.ndarray,
        u: np.ndarray,
        constant: float = 0.0,
        settings: Optional[ADMMSettings] = None,
    ) -> None:
        self.P = sparse.csc_matrix(P)
        self.q = np.asarray(q, dtype=float)
        self.A = sparse.csc_matrix(A)
        self.l = np.asarray(l, dtype=float)
        self.u = np.asarray(u, dtype=float)
        self.constant = float(constant)
        self.settings = settings or ADMMSettings()
        self.n = self.P.shape[0]
        self.m = self.A.shape[0]

    # ─── Public ───────────────────────────────────────────────────────────────

    def solve(
        self,
        lb: np.ndarray,
        ub: np.ndarray,
        warm: Optional[ADMMState] = None,
        time_limit: Optional[float] = None,
    ) -> tuple[QPRelaxationResult, ADMMState]:
        """Solve with the given variable bounds; ``time_limit`` is a wall-clock cap in seconds."""
        s = self.settings
        deadline = None if time_limit is None else time.perf_counter() + max(time_limit, 0.0)
        fixed = lb == ub
        free = np.flatnonzero(~fixed)
        fixed_idx = np.flatnonzero(fixed)
        xf = lb[fixed_idx]

        # objective restricted to the free variables
        P_rr = self.P[free][:, free]
        P_rf = self.P[free][:, fixed_idx]
        P_ff = self.P[fixed_idx][:, fixed_idx]
        q_r = self.q[free] + P_rf @ xf
        const = self.constant + 0.5 * xf @ (P_ff @ xf) + self.q[fixed_idx] @ xf

        # rows with the fixed part moved to the bounds
        A_r = self.A[:, free].tocsr()
        shift = self.A[:, fixed_idx] @ xf
        l_r = self.l - shift
        u_r = self.u - shift
        has_free = np.diff(A_r.indptr) > 0
        slack = s.feas_tol * (1.0 + np.abs(shift))
        dead = ~has_free
        if np.any(dead & ((l_r > slack) | (u_r < -slack))):
            x_full = self._assemble(free, fixed_idx, np.zeros(free.size), xf)
            return (
                QPRelaxationResult(QPStatus.INFEASIBLE, None, math.inf, math.inf),
                self._state(x_full, warm),
            )
        if free.size == 0:
            x_full = self._assemble(free, fixed_idx, np.zeros(0), xf)
            return (
                QPRelaxationResult(QPStatus.SOLVED, x_full, float(const), 0.0, polished=True),
                self._state(x_full, warm),
            )
        # rows unbounded on both sides carry no information
        rows = np.flatnonzero(has_free & (np.isfinite(l_r) | np.isfinite(u_r)))

        lb_r, ub_r = lb[free], ub[free]
        bounded = np.flatnonzero(np.isfinite(lb_r) | np.isfinite(ub_r))
        eye = sparse.identity(free.size, format="csr")[bounded]
        A_red = sparse.vstack([A_r[rows], eye], format="csc")
        l_red = np.concatenate([l_r[rows], lb_r[bounded]])
        u_red = np.concatenate([u_r[rows], ub_r[bounded]])

        x0, z0, y0 = self._warm_iterates(warm, free, rows, bounded, A_red, l_red, u_red)
        problem = _scale(sparse.csc_matrix(P_rr), q_r, A_red, l_red, u_red, s.scaling_iter)
        result_r, x_r, z_r, y_r = self._admm(problem, x0, z0, y0, deadline)
        if result_r.status is QPStatus.NUMERICAL_FAILURE and free.size <= s.dense_fallback_vars:
            dense = self._dense_fallback(problem, x_r, deadline)
            if dense is not None:
                result_r, x_r = dense
                z_r = problem.A @ x_r

        x_full = self._assemble(free, fixed_idx, x_r, xf)
        state = self._state(x_full, warm)
        n_rows = rows.size
        state.z_rows[rows] = z_r[:n_rows]
        state.y_rows[rows] = y_r[:n_rows]
        state.y_bounds[free[bounded]] = y_r[n_rows:]

        if result_r.status is not QPStatus.SOLVED:
            result_r.objective = math.inf
            return result_r, state
        result_r.solution = x_full
        result_r.objective = float(result_r.objective + const)
        return result_r, state

    # ─── ADMM core ────────────────────────────────────────────────────────────

    def _admm(
        self,
        pr: _Scaled,
        x: np.ndarray,
        z: np.ndarray,
        y: np.ndarray,
        deadline: Optional[float],
    ) -> tuple[QPRelaxationResult, np.ndarray, np.ndarray, np.ndarray]:
        """Iterate on the scaled problem; iterates in and out are unscaled."""
        s = self.settings
        P, q, A, l, u = pr.Ps, pr.qs, pr.As, pr.ls, pr.us
        n, m = A.shape[1], A.shape[0]
        xs = x / pr.D
        zs = np.clip(pr.E * z, l, u)
        ys = pr.c * y / pr.E
        eq = l == u
        free_row = np.isinf(l) & np.isinf(u)

        def rho_vector(base: float) -> np.ndarray:
            rho = np.where(eq, base * s.eq_rho_scale, base)
            return np.clip(np.where(free_row, _RHO_MIN, rho), _RHO_MIN, _RHO_MAX)

        def factorise(rho: np.ndarray) -> Optional[spla.SuperLU]:
            kkt = sparse.vstack(
                [
                    sparse.hstack([P + s.sigma * sparse.identity(n), A.T]),
                    sparse.hstack([A, -sparse.diags(1.0 / rho)]),
                ],
                format="csc",
            )
            try:
                return spla.splu(kkt)
            except RuntimeError:
                return None

        base = s.rho
        rho = rho_vector(base)
        lu = factorise(rho)
        if lu is None:
            logger.warning("KKT factorisation failed for a %dx%d relaxation", n, m)
            return _failure(QPStatus.NUMERICAL_FAILURE, 0), x, z, y

        AT = A.T.tocsr()
        AT_orig = pr.A.T.tocsr()
        Acsr = A.tocsr()
        next_polish = s.polish_from
        checks = 0
        for it in range(1, s.max_iter + 1):
            rho_inv = 1.0 / rho
            sol = lu.solve(np.concatenate([s.sigma * xs - q, zs - rho_inv * ys]))
            x_t = sol[:n]
            z_t = zs + rho_inv * (sol[n:] - ys)
            xs = s.alpha * x_t + (1.0 - s.alpha) * xs
            z_hat = s.alpha * z_t + (1.0 - s.alpha) * zs
            z_new = np.clip(z_hat + rho_inv * ys, l, u)
            y_new = ys + rho * (z_hat - z_new)
            delta_y = y_new - ys
            zs, ys = z_new, y_new

            if it % s.check_every:
                continue
            checks += 1
            Ax = Acsr @ xs
            Px = P @ xs
            ATy = AT @ ys
            # residuals on the original scale
            r_prim = _inf_norm((Ax - zs) / pr.E)
            r_dual = _inf_norm((Px + q + ATy) / pr.D) / pr.c
            prim_ref = max(_inf_norm(Ax / pr.E), _inf_norm(zs / pr.E))
            dual_ref = max(
                _inf_norm(Px / pr.D), _inf_norm(ATy / pr.D), _inf_norm(q / pr.D)
            ) / pr.c
            eps_p = s.eps_abs + s.eps_rel * prim_ref
            eps_d = s.eps_abs + s.eps_rel * dual_ref
            level = max(r_prim / (1.0 + prim_ref), r_dual / (1.0 + dual_ref))

            if level < next_polish:
                # retry only after another decade of progress
                next_polish = 0.1 * level
                polished = self._polish(pr, zs, ys)
                if polished is not None:
                    return _polished(pr, polished, it)
            if r_prim <= eps_p and r_dual <= eps_d:
                polished = self._polish(pr, zs, ys)
                if polished is not None:
                    return _polished(pr, polished, it)
                x_out = pr.D * xs
                obj = 0.5 * x_out @ (pr.P @ x_out) + pr.q @ x_out
                res = QPRelaxationResult(QPStatus.SOLVED, None, float(obj), max(r_prim, r_dual), it)
                return res, x_out, zs / pr.E, pr.E * ys / pr.c
            if self._primal_infeasible(pr.E * delta_y, AT_orig, pr.l, pr.u):
                return _failure(QPStatus.INFEASIBLE, it), pr.D * xs, zs / pr.E, pr.E * ys / pr.c
            if deadline is not None and time.perf_counter() >= deadline:
                return _failure(QPStatus.TIME_LIMIT, it), pr.D * xs, zs / pr.E, pr.E * ys / pr.c

            if s.adaptive_rho and checks % s.adapt_every == 0:
                scaled_p = _inf_norm(Ax - zs) / max(_inf_norm(Ax), _inf_norm(zs), 1e-12)
                scaled_d = _inf_norm(Px + q + ATy) / max(
                    _inf_norm(Px), _inf_norm(ATy), _inf_norm(q), 1e-12
                )
                proposal = base * math.sqrt(scaled_p / max(scaled_d, 1e-12))
                proposal = min(max(proposal, _RHO_MIN), _RHO_MAX)
                if proposal > s.adapt_ratio * base or proposal < base / s.adapt_ratio:
                    new_lu = factorise(rho_vector(proposal))
                    if new_lu is not None:
                        base, rho, lu = proposal, rho_vector(proposal), new_lu

        logger.debug("ADMM hit the iteration cap (%d) on a %dx%d relaxation", s.max_iter, n, m)
        return (
            _failure(QPStatus.NUMERICAL_FAILURE, s.max_iter),
            pr.D * xs,
            zs / pr.E,
            pr.E * ys / pr.c,
        )

    def _primal_infeasible(
        self, delta_y: np.ndarray, AT: sparse.csr_matrix, l: np.ndarray, u: np.ndarray
    ) -> bool:
        eps = self.settings.eps_pinf
        norm = _inf_norm(delta_y)
        if norm <= eps:
            return False
        dy = delta_y / norm
        pos = np.maximum(dy, 0.0)
        neg = np.minimum(dy, 0.0)
        if np.any(pos[np.isinf(u)] > eps) or np.any(neg[np.isinf(l)] < -eps):
            return False
        support = float(np.sum(np.where(np.isfinite(u), u, 0.0) * pos)) + float(
            np.sum(np.where(np.isfinite(l), l, 0.0) * neg)
        )
        return support < -eps and _inf_norm(AT @ dy) < eps

    def _polish(
        self, pr: _Scaled, z: np.ndarray, y: np.ndarray
    ) -> Optional[tuple[np.ndarray, np.ndarray, float]]:
        """
        Solve the KKT system of the guessed active set.

        The guess comes from the scaled iterates; the answer is checked on the
        original data and returned unscaled, or None if it fails the check.
        """
        s = self.settings
        P, q, A, l, u = pr.Ps, pr.qs, pr.As, pr.ls, pr.us
        n = A.shape[1]
        eq = l == u
        low = np.flatnonzero(eq | (z - l < -y))
        upp = np.flatnonzero(~eq & (u - z < y) & ~(z - l < -y))
        idx = np.concatenate([low, upp])
        b = np.concatenate([l[low], u[upp]])
        A_act = A.tocsr()[idx]
        k = idx.size

        K0 = sparse.vstack(
            [
                sparse.hstack([P, A_act.T]),
                sparse.hstack([A_act, sparse.csr_matrix((k, k))]),
            ],
            format="csc",
        )
        reg = sparse.block_diag(
            [s.delta * sparse.identity(n), -s.delta * sparse.identity(k)], format="csc"
        )
        try:
            lu = spla.splu((K0 + reg).tocsc())
        except RuntimeError:
            return None
        rhs = np.concatenate([-q, b])
        sol = lu.solve(rhs)
        for _ in range(s.refine_iter):
            sol = sol + lu.solve(rhs - K0 @ sol)
        if not np.all(np.isfinite(sol)):
            return None

        ys = np.zeros(A.shape[0])
        ys[idx] = sol[n:]
        x_p = pr.D * sol[:n]
        y_p = pr.E * ys / pr.c

        Ax = pr.A @ x_p
        scale = 1.0 + np.where(np.isfinite(pr.l), np.abs(pr.l), 0.0)
        scale = scale + np.where(np.isfinite(pr.u), np.abs(pr.u), 0.0)
        prim = 0.0
        if A.shape[0]:
            prim = float(np.max(np.maximum(np.maximum(pr.l - Ax, Ax - pr.u), 0.0) / scale))
        Px = pr.P @ x_p
        ATy = pr.A.T @ y_p
        dual_ref = 1.0 + max(_inf_norm(Px), _inf_norm(ATy), _inf_norm(pr.q))
        dual = _inf_norm(Px + pr.q + ATy) / dual_ref
        lower_only = np.setdiff1d(low, np.flatnonzero(eq))
        sign = max(
            float(np.max(y_p[lower_only], initial=0.0)),
            float(np.max(-y_p[upp], initial=0.0)),
        ) / (1.0 + _inf_norm(y_p))
        if prim > s.feas_tol or dual > s.kkt_tol or sign > s.kkt_tol:
            return None
        return x_p, y_p, max(prim, dual, sign)

    def _dense_fallback(
        self, pr: _Scaled, x0: np.ndarray, deadline: Optional[float]
    ) -> Optional[tuple[QPRelaxationResult, np.ndarray]]:
        """SLSQP on the reduced problem; accepted only when it meets the row tolerance."""
        s = self.settings
        if deadline is not None and time.perf_counter() >= deadline:
            return None
        P = pr.P.toarray()
        A = pr.A.toarray()
        eq = pr.l == pr.u
        lo = ~eq & np.isfinite(pr.l)
        hi = ~eq & np.isfinite(pr.u)
        G = np.vstack([A[lo], -A[hi]])
        h = np.concatenate([pr.l[lo], -pr.u[hi]])
        constraints = []
        if np.any(eq):
            A_eq, b_eq = A[eq], pr.l[eq]
            constraints.append(
                {"type": "eq", "fun": lambda v: A_eq @ v - b_eq, "jac": lambda v: A_eq}
            )
        if G.shape[0]:
            constraints.append({"type": "ineq", "fun": lambda v: G @ v - h, "jac": lambda v: G})
        start = x0 if np.all(np.isfinite(x0)) else np.zeros_like(x0)
        res = minimize(
            lambda v: 0.5 * v @ P @ v + pr.q @ v,
            start,
            jac=lambda v: P @ v + pr.q,
            method="SLSQP",
            constraints=constraints,
            options={"ftol": 1e-12, "maxiter": 500},
        )
        x = res.x
        Ax = A @ x
        scale = 1.0 + np.where(np.isfinite(pr.l), np.abs(pr.l), 0.0)
        scale = scale + np.where(np.isfinite(pr.u), np.abs(pr.u), 0.0)
        viol = float(np.max(np.maximum(np.maximum(pr.l - Ax, Ax - pr.u), 0.0) / scale, initial=0.0))
        if not res.success or viol > s.feas_tol:
            logger.debug("dense fallback rejected: %s (violation %.1e)", res.message, viol)
            return None
        obj = float(0.5 * x @ P @ x + pr.q @ x)
        return QPRelaxationResult(QPStatus.SOLVED, None, obj, viol, int(res.nit)), x

    # ─── Bookkeeping ──────────────────────────────────────────────────────────

    def _assemble(
        self, free: np.ndarray, fixed_idx: np.ndarray, x_r: np.ndarray, xf: np.ndarray
    ) -> np.ndarray:
        x = np.empty(self.n)
        x[free] = x_r
        x[fixed_idx] = xf
        return x

    def _state(self, x_full: np.ndarray, warm: Optional[ADMMState]) -> ADMMState:
        if warm is None:
            return ADMMState(x_full, np.zeros(self.m), np.zeros(self.m), np.zeros(self.n))
        return ADMMState(
            x_full,
            _fit(warm.z_rows, self.m),
            _fit(warm.y_rows, self.m),
            warm.y_bounds.copy(),
        )

    def _warm_iterates(
        self,
        warm: Optional[ADMMState],
        free: np.ndarray,
        rows: np.ndarray,
        bounded: np.ndarray,
        A_red: sparse.csc_matrix,
        l_red: np.ndarray,
        u_red: np.ndarray,
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if warm is None:
            x = np.zeros(free.size)
            y = np.zeros(A_red.shape[0])
        else:
            x = warm.x[free].copy()
            y = np.concatenate(
                [_fit(warm.y_rows, self.m)[rows], warm.y_bounds[free][bounded]]
            )
        z = np.clip(A_red @ x, l_red, u_red)
        return x, z, y


# ─── Scaling ──────────────────────────────────────────────────────────────────


def _scale(
    P: sparse.csc_matrix,
    q: np.ndarray,
    A: sparse.csc_matrix,
    l: np.ndarray,
    u: np.ndarray,
    iterations: int,
) -> _Scaled:
    """Ruiz equilibration of [[P, A'], [A, 0]] in the infinity norm, then a cost scale."""
    n, m = A.shape[1], A.shape[0]
    D = np.ones(n)
    E = np.ones(m)
    Ps, As = P.copy(), A.copy()
    for _ in range(iterations):
        col_x = np.maximum(_col_max(Ps), _col_max(As))
        col_z = _col_max(As.T.tocsc())
        dx = _ruiz_step(col_x)
        ez = _ruiz_step(col_z)
        Ps = sparse.diags(dx) @ Ps @ sparse.diags(dx)
        As = sparse.diags(ez) @ As @ sparse.diags(dx)
        D *= dx
        E *= ez
    D = np.clip(D, _SCALE_MIN, _SCALE_MAX)
    E = np.clip(E, _SCALE_MIN, _SCALE_MAX)
    Ps = (sparse.diags(D) @ P @ sparse.diags(D)).tocsc()
    As = (sparse.diags(E) @ A @ sparse.diags(D)).tocsc()
    qs = D * q
    norm = max(float(np.mean(_col_max(Ps))) if n else 0.0, _inf_norm(qs))
    c = 1.0 if norm < _SCALE_MIN else min(max(1.0 / norm, _SCALE_MIN), _SCALE_MAX)
    return _Scaled(
        P=P,
        q=q,
        A=A,
        l=l,
        u=u,
        D=D,
        E=E,
        c=c,
        Ps=(c * Ps).tocsc(),
        qs=c * qs,
        As=As,
        ls=E * l,
        us=E * u,
    )


def _col_max(M: sparse.spmatrix) -> np.ndarray:
    if M.shape[0] == 0 or M.nnz == 0:
        return np.zeros(M.shape[1])
    return np.asarray(abs(M).max(axis=0).todense()).ravel()


def _ruiz_step(norms: np.ndarray) -> np.ndarray:
    out = np.ones_like(norms)
    ok = norms > _SCALE_MIN
    out[ok] = 1.0 / np.sqrt(norms[ok])
    return out


# ─── Helpers ──────────────────────────────────────────────────────────────────


def _failure(status: QPStatus, iterations: int) -> QPRelaxationResult:
    return QPRelaxationResult(status, None, math.inf, math.inf, iterations)


def _polished(
    pr: _Scaled, polished: tuple[np.ndarray, np.ndarray, float], iterations: int
) -> tuple[QPRelaxationResult, np.ndarray, np.ndarray, np.ndarray]:
    x_p, y_p, kkt_res = polished
    obj = 0.5 * x_p @ (pr.P @ x_p) + pr.q @ x_p
    result = QPRelaxationResult(QPStatus.SOLVED, None, float(obj), kkt_res, iterations, True)
    return result, x_p, pr.A @ x_p, y_p


def _inf_norm(v: np.ndarray) -> float:
    return float(np.max(np.abs(v))) if v.size else 0.0


def _fit(v: np.ndarray, m: int) -> np.ndarray:
    """Pad (rows appended by lazy cuts) or copy a row-indexed iterate to length m."""
    if v.size >= m:
        return v[:m].copy()
    return np.concatenate([v, np.zeros(m - v.size)])
