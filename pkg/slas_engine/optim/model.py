"""
Mixed-binary QP model — variables, affine expressions, constraint rows and the
convex quadratic objective ``1/2 x'Px + q'x + c``.

Models are produced by the builders in ``optim.formulation`` and consumed by
the branch-and-bound solver; they carry enough index metadata to decode a
solution into a speed/lane plan and to complete a partial plan into a full
assignment.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Optional, Union

import numpy as np
from scipy import sparse

from slas_engine.core.highway import lane_indicator, step_longitudinal
from slas_engine.models import Formulation

# ─── Variables and expressions ────────────────────────────────────────────────


class VarKind(str, Enum):
    CONTINUOUS = "continuous"
    BINARY = "binary"
    INTEGER = "integer"


class VarRole(str, Enum):
    SPEED = "speed"
    DISPLACEMENT = "displacement"
    LANE = "lane"  # target-lane decision (one-hot selector or integer lane)
    FLOOR = "floor"  # physical lane l(j) of the integer formulation
    MEMBERSHIP = "membership"  # phi(i, j) of the integer formulation
    SELECTOR = "selector"  # front/rear disjunction c
    AUX = "aux"


@dataclass(frozen=True)
class Variable:
    index: int
    name: str
    kind: VarKind
    lb: float
    ub: float
    role: VarRole = VarRole.AUX
    step: int = 0
    lane: int = -1

    @property
    def is_discrete(self) -> bool:
        return self.kind is not VarKind.CONTINUOUS


Number = Union[int, float]


@dataclass
class LinExpr:
    """Affine expression ``sum(coeffs[i] * x[i]) + const``."""

    coeffs: dict[int, float] = field(default_factory=dict)
    const: float = 0.0

    @classmethod
    def var(cls, index: int, coef: float = 1.0) -> LinExpr:
        return cls({index: coef}, 0.0)

    @classmethod
    def constant(cls, value: float) -> LinExpr:
        return cls({}, float(value))

    @classmethod
    def total(cls, terms: Iterable[LinExpr]) -> LinExpr:
        out = cls()
        for t in terms:
            out = out + t
        return out

    def _coerce(self, other: LinExpr | Number) -> LinExpr:
        return other if isinstance(other, LinExpr) else LinExpr.constant(other)

    def __add__(self, other: LinExpr | Number) -> LinExpr:
        o = self._coerce(other)
        coeffs = dict(self.coeffs)
        for i, c in o.coeffs.items():
            coeffs[i] = coeffs.get(i, 0.0) + c
        return LinExpr(coeffs, self.const + o.const)

    __radd__ = __add__

    def __neg__(self) -> LinExpr:
        return LinExpr({i: -c for i, c in self.coeffs.items()}, -self.const)

    def __sub__(self, other: LinExpr | Number) -> LinExpr:
        return self + (-self._coerce(other))

    def __rsub__(self, other: LinExpr | Number) -> LinExpr:
        return self._coerce(other) - self

    def __mul__(self, k: Number) -> LinExpr:
        return LinExpr({i: c * k for i, c in self.coeffs.items()}, self.const * k)

    __rmul__ = __mul__

    def value(self, x: np.ndarray) -> float:
        return self.const + sum(c * float(x[i]) for i, c in self.coeffs.items())

    def pruned(self) -> LinExpr:
        return LinExpr({i: c for i, c in self.coeffs.items() if c != 0.0}, self.const)


@dataclass(frozen=True)
class LinearRow:
    """Constraint ``lo <= a'x <= hi``; the expression constant is folded into the bounds."""

    coeffs: tuple[tuple[int, float], ...]
    lo: float
    hi: float
    name: str
    lazy: bool = False

    @classmethod
    def from_expr(
        cls, expr: LinExpr, lo: float, hi: float, name: str, lazy: bool = False
    ) -> LinearRow:
        e = expr.pruned()
        return cls(
            coeffs=tuple(sorted(e.coeffs.items())),
            lo=lo - e.const,
            hi=hi - e.const,
            name=name,
            lazy=lazy,
        )

    def activity(self, x: np.ndarray) -> float:
        return sum(c * float(x[i]) for i, c in self.coeffs)

    def violation(self, x: np.ndarray) -> float:
        a = self.activity(x)
        return max(self.lo - a, a - self.hi, 0.0)

    @property
    def is_equality(self) -> bool:
        return self.lo == self.hi


@dataclass(frozen=True)
class PlanHint:
    """Speed and target-lane plan offered to the solver as a starting point."""

    speeds: tuple[float, ...]
    lanes: tuple[int, ...]

    def __len__(self) -> int:
        return min(len(self.speeds), len(self.lanes))


@dataclass(frozen=True)
class SafetyPair:
    """One vehicle/step disjunction: relative predicted position and its binaries."""

    vehicle_id: int
    step: int
    lane: int
    s_hat: float  # predicted position relative to the ego's current s
    selector: int
    gate: Optional[int]  # None when the pair is enforced unconditionally


# ─── Model ────────────────────────────────────────────────────────────────────


@dataclass
class OptimizationModel:
    """A built planning instance in one of the two formulations."""

    formulation: Formulation
    variables: list[Variable]
    P: np.ndarray
    q: np.ndarray
    objective_constant: float
    rows: list[LinearRow]
    H: int
    lanes: tuple[int, ...]
    v0: float
    l0: int
    prev_target: int
    target_history: tuple[int, ...]
    N: int
    T_s: float
    A_min: float
    A_max: float
    v_max: float
    epsilon: float
    big_M: float
    speed_idx: list[int]
    disp_idx: list[int]
    lane_idx: np.ndarray  # binary: [lane, step-1] selectors; integer: [step-1] lane vars
    floor_idx: list[int] = field(default_factory=list)
    member_idx: Optional[np.ndarray] = None
    pairs: list[SafetyPair] = field(default_factory=list)
    warm_start: Optional[np.ndarray] = None

    # ─── Shape ────────────────────────────────────────────────────────────────

    @property
    def n(self) -> int:
        return len(self.variables)

    @cached_property
    def discrete_indices(self) -> np.ndarray:
        return np.array([v.index for v in self.variables if v.is_discrete], dtype=int)

    @cached_property
    def lower(self) -> np.ndarray:
        return np.array([v.lb for v in self.variables], dtype=float)

    @cached_property
    def upper(self) -> np.ndarray:
        return np.array([v.ub for v in self.variables], dtype=float)

    @property
    def eager_rows(self) -> list[LinearRow]:
        return [r for r in self.rows if not r.lazy]

    @property
    def lazy_rows(self) -> list[LinearRow]:
        return [r for r in self.rows if r.lazy]

    def branch_priority(self, index: int) -> tuple[int, int, int]:
        """Lane decisions, then derived lane variables, then disjunctions; earliest step first."""
        var = self.variables[index]
        if var.role is VarRole.LANE:
            group = 0
        elif var.role in (VarRole.FLOOR, VarRole.MEMBERSHIP):
            group = 1
        else:
            group = 2
        return (group, var.step, max(var.lane, 0))

    # ─── Evaluation ───────────────────────────────────────────────────────────

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.P @ x + self.q @ x + self.objective_constant)

    def violations(
        self, x: np.ndarray, rows: Optional[Sequence[LinearRow]] = None
    ) -> list[LinearRow]:
        rows = self.rows if rows is None else rows
        A, lo, hi = compile_rows(rows, self.n)
        ax = A @ x if A.shape[0] else np.zeros(0)
        bad = np.flatnonzero((lo - ax > 1e-6) | (ax - hi > 1e-6))
        return [rows[i] for i in bad]

    def is_feasible(self, x: np.ndarray, tol: float = 1e-6, include_lazy: bool = True) -> bool:
        if np.any(x < self.lower - tol) or np.any(x > self.upper + tol):
            return False
        disc = self.discrete_indices
        if disc.size and np.any(np.abs(x[disc] - np.round(x[disc])) > tol):
            return False
        rows = self.rows if include_lazy else self.eager_rows
        return not self.violations(x, rows)

    # ─── Decoding ─────────────────────────────────────────────────────────────

    def speed_plan(self, x: np.ndarray) -> tuple[float, ...]:
        return tuple(float(x[i]) for i in self.speed_idx)

    def lane_plan(self, x: np.ndarray) -> tuple[int, ...]:
        if self.formulation is Formulation.BINARY:
            picks = np.argmax(x[self.lane_idx], axis=0)
            return tuple(int(self.lanes[i]) for i in picks)
        return tuple(int(round(float(x[i]))) for i in self.lane_idx)

    # ─── Completion ───────────────────────────────────────────────────────────

    def complete(self, speeds: Sequence[float], lanes: Sequence[int]) -> np.ndarray:
        """
        Full assignment from a speed/lane plan.

        Speeds are projected onto the speed and acceleration box in order,
        lanes are clipped to the lane set, and every derived variable
        (displacements, physical lanes, memberships, disjunction selectors)
        is filled in from them. The result is not guaranteed feasible.
        """
        if len(speeds) < self.H or len(lanes) < self.H:
            covered = min(len(speeds), len(lanes))
            raise ValueError(f"plan covers {covered} steps, model needs {self.H}")
        x = np.zeros(self.n)
        v_prev = self.v0
        s_prev = 0.0
        for j in range(self.H):
            lo = max(0.0, v_prev + self.A_min * self.T_s)
            hi = min(self.v_max, v_prev + self.A_max * self.T_s)
            v = min(max(float(speeds[j]), lo), hi) if lo <= hi else hi
            s = step_longitudinal(s_prev, v_prev, v, self.T_s)
            x[self.speed_idx[j]] = v
            x[self.disp_idx[j]] = s
            v_prev, s_prev = v, s

        lo_lane, hi_lane = min(self.lanes), max(self.lanes)
        plan = [min(max(int(l), lo_lane), hi_lane) for l in lanes[: self.H]]
        if self.formulation is Formulation.BINARY:
            for j, lane in enumerate(plan):
                x[self.lane_idx[self.lanes.index(lane), j]] = 1.0
        else:
            history = [self.l0] * (self.N - 1)
            for j, lane in enumerate(plan):
                x[self.lane_idx[j]] = lane
                window = (history + plan[: j + 1])[-self.N :]
                physical = lane_indicator(window)
                x[self.floor_idx[j]] = physical
                assert self.member_idx is not None
                x[self.member_idx[self.lanes.index(physical), j]] = 1.0

        for pair in self.pairs:
            s_ego = x[self.disp_idx[pair.step - 1]]
            x[pair.selector] = 1.0 if pair.s_hat - s_ego >= 0 else 0.0
        return x

    # ─── Export ───────────────────────────────────────────────────────────────

    def to_lp_text(self) -> str:
        """Human-readable LP-format dump for cross-checking with other solvers."""

        def term(c: float, name: str, first: bool) -> str:
            sign = "-" if c < 0 else ("" if first else "+")
            mag = abs(c)
            coef = "" if math.isclose(mag, 1.0) else f"{mag:.12g} "
            return f"{sign} {coef}{name}".strip()

        names = [v.name for v in self.variables]
        lines = [f"\\ formulation: {self.formulation.value}", "Minimize", " obj:"]
        nonzero = [(i, float(c)) for i, c in enumerate(self.q) if c]
        lin = [term(c, names[i], k == 0) for k, (i, c) in enumerate(nonzero)]
        quad = []
        rows_p, cols_p = np.nonzero(np.triu(self.P))
        for i, j in zip(rows_p, cols_p):
            c = self.P[i, j] if i == j else 2 * self.P[i, j]
            prod = f"{names[i]} ^ 2" if i == j else f"{names[i]} * {names[j]}"
            quad.append(term(c, prod, not quad))
        body = " ".join(lin)
        if quad:
            body += " + [ " + " ".join(quad) + " ] / 2"
        lines.append(f"  {body}")
        lines.append(f"\\ objective constant: {self.objective_constant:.12g}")

        lines.append("Subject To")
        lazy = []
        for r in self.rows:
            expr = " ".join(term(c, names[i], k == 0) for k, (i, c) in enumerate(r.coeffs))
            target = lazy if r.lazy else lines
            if r.is_equality:
                target.append(f" {r.name}: {expr} = {r.lo:.12g}")
                continue
            if math.isfinite(r.lo):
                target.append(f" {r.name}_lo: {expr} >= {r.lo:.12g}")
            if math.isfinite(r.hi):
                target.append(f" {r.name}_hi: {expr} <= {r.hi:.12g}")
        if lazy:
            lines.append("Lazy Constraints")
            lines.extend(lazy)

        lines.append("Bounds")
        for v in self.variables:
            lb = "-inf" if not math.isfinite(v.lb) else f"{v.lb:.12g}"
            ub = "+inf" if not math.isfinite(v.ub) else f"{v.ub:.12g}"
            lines.append(f" {lb} <= {v.name} <= {ub}")
        for label, kind in (("Binaries", VarKind.BINARY), ("Generals", VarKind.INTEGER)):
            group = [v.name for v in self.variables if v.kind is kind]
            if group:
                lines.append(label)
                lines.append(" " + " ".join(group))
        lines.append("End")
        return "\n".join(lines) + "\n"


def compile_rows(
    rows: Sequence[LinearRow], n: int
) -> tuple[sparse.csr_matrix, np.ndarray, np.ndarray]:
    """Stack rows into a CSR matrix with bound vectors."""
    data: list[float] = []
    ri: list[int] = []
    ci: list[int] = []
    for k, r in enumerate(rows):
        for i, c in r.coeffs:
            ri.append(k)
            ci.append(i)
            data.append(c)
    A = sparse.csr_matrix((data, (ri, ci)), shape=(len(rows), n))
    lo = np.array([r.lo for r in rows], dtype=float)
    hi = np.array([r.hi for r in rows], dtype=float)
    return A, lo, hi


# ─── Builder ──────────────────────────────────────────────────────────────────


class ModelBuilder:
    """Accumulates variables, rows and objective terms for an ``OptimizationModel``."""

    def __init__(self) -> None:
        self.variables: list[Variable] = []
        self.rows: list[LinearRow] = []
        self._quad: dict[tuple[int, int], float] = {}
        self._lin: dict[int, float] = {}
        self.objective_constant = 0.0

    def add_var(
        self,
        name: str,
        kind: VarKind = VarKind.CONTINUOUS,
        lb: float = -math.inf,
        ub: float = math.inf,
        role: VarRole = VarRole.AUX,
        step: int = 0,
        lane: int = -1,
    ) -> int:
        if kind is VarKind.BINARY:
            lb, ub = max(lb, 0.0), min(ub, 1.0)
        if lb > ub:
            raise ValueError(f"variable {name}: empty domain [{lb}, {ub}]")
        index = len(self.variables)
        self.variables.append(Variable(index, name, kind, lb, ub, role, step, lane))
        return index

    def add_row(
        self,
        expr: LinExpr,
        lo: float = -math.inf,
        hi: float = math.inf,
        name: str = "",
        lazy: bool = False,
    ) -> LinearRow:
        for i in expr.coeffs:
            if not 0 <= i < len(self.variables):
                raise ValueError(f"row {name!r} references undeclared variable {i}")
        row = LinearRow.from_expr(expr, lo, hi, name or f"r{len(self.rows)}", lazy)
        self.rows.append(row)
        return row

    def add_linear(self, expr: LinExpr, weight: float = 1.0) -> None:
        for i, c in expr.coeffs.items():
            self._lin[i] = self._lin.get(i, 0.0) + weight * c
        self.objective_constant += weight * expr.const

    def add_square(self, expr: LinExpr, weight: float = 1.0) -> None:
        """Add ``weight * expr^2`` to the objective."""
        if weight == 0.0:
            return
        items = list(expr.pruned().coeffs.items())
        for i, a in items:
            for j, b in items:
                self._quad[(i, j)] = self._quad.get((i, j), 0.0) + 2.0 * weight * a * b
            self._lin[i] = self._lin.get(i, 0.0) + 2.0 * weight * a * expr.const
        self.objective_constant += weight * expr.const**2

    def objective_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        n = len(self.variables)
        P = np.zeros((n, n))
        for (i, j), c in self._quad.items():
            P[i, j] += c
        q = np.zeros(n)
        for i, c in self._lin.items():
            q[i] += c
        return P, q
