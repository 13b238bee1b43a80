"""
Branch-and-bound for mixed-binary convex QPs with lazy rows and plan hints.

Search order: the keep-lane witness and the hint (if any) are completed and
tested first, then the root relaxation is solved and rounded into a
candidate, then the tree is dived depth-first towards a first incumbent and
finally explored best-first until optimality is proven or the budget runs
out. A relaxation that fails to converge never ends the search: the node is
split without a bound instead. Lazy rows are checked on every
integer-feasible candidate and promoted to the relaxation when violated.
"""

from __future__ import annotations

import heapq
import logging
import math
import threading
import time
from collections.abc import Callable, Mapping
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import IO, Optional

import numpy as np
from pydantic import BaseModel, Field

from slas_engine.models import Formulation
from slas_engine.optim.model import (
    LinearRow,
    OptimizationModel,
    PlanHint,
    compile_rows,
)
from slas_engine.optim.qp import (
    ADMMSettings,
    ADMMState,
    QPRelaxationResult,
    QPStatus,
    RelaxationSolver,
)

logger = logging.getLogger(__name__)


class SolverInputError(ValueError):
    """The model handed to the solver is malformed."""


class SolveStatus(str, Enum):
    OPTIMAL = "optimal"
    FEASIBLE_TIMEOUT = "feasible_timeout"
    INFEASIBLE = "infeasible"
    ERROR = "error"


class SolverOptions(BaseModel):
    time_limit: float = Field(0.2, gt=0)
    node_limit: Optional[int] = Field(None, ge=1)
    workers: int = Field(1, ge=1)
    abs_gap: float = Field(1e-7, ge=0)
    int_tol: float = Field(1e-6, gt=0)
    trace_path: Optional[Path] = None
    admm: ADMMSettings = Field(default_factory=ADMMSettings)


@dataclass
class SolveResult:
    status: SolveStatus
    incumbent: Optional[np.ndarray]
    objective: float
    first_incumbent_time: Optional[float]
    total_time: float
    nodes_explored: int
    lazy_cuts_added: int
    best_bound: float = -math.inf
    hint_used: bool = False
    witness_used: bool = False
    speeds: tuple[float, ...] = ()
    lanes: tuple[int, ...] = ()
    message: str = ""

    @property
    def has_incumbent(self) -> bool:
        return self.status in (SolveStatus.OPTIMAL, SolveStatus.FEASIBLE_TIMEOUT)

    @property
    def summary(self) -> str:
        if not self.has_incumbent:
            return f"{self.status.value} after {self.nodes_explored} nodes ({self.message})"
        return (
            f"{self.status.value}: obj={self.objective:.6f} bound={self.best_bound:.6f} "
            f"nodes={self.nodes_explored} cuts={self.lazy_cuts_added} "
            f"first={self.first_incumbent_time:.4f}s total={self.total_time:.4f}s"
        )


@dataclass(order=True)
class BBNode:
    """Open node; ordered by (bound, id) so ties resolve by creation order."""

    bound: float
    node_id: int
    depth: int = field(compare=False)
    lb: np.ndarray = field(compare=False, repr=False)
    ub: np.ndarray = field(compare=False, repr=False)
    warm: Optional[ADMMState] = field(compare=False, default=None, repr=False)
    relaxation: Optional[QPRelaxationResult] = field(compare=False, default=None, repr=False)


@dataclass
class BBStats:
    nodes_explored: int = 0
    nodes_pruned: int = 0
    nodes_infeasible: int = 0
    numerical_failures: int = 0
    lazy_cuts: int = 0
    heuristic_solutions: int = 0


# ─── Stand-alone operations ───────────────────────────────────────────────────


def solve_qp_relaxation(
    model: OptimizationModel,
    fixings: Optional[Mapping[int, float]] = None,
    settings: Optional[ADMMSettings] = None,
    include_lazy: bool = False,
) -> QPRelaxationResult:
    """Continuous relaxation of ``model`` with the given variables fixed."""
    rows = model.rows if include_lazy else model.eager_rows
    A, lo, hi = compile_rows(rows, model.n)
    solver = RelaxationSolver(model.P, model.q, A, lo, hi, model.objective_constant, settings)
    lb, ub = model.lower.copy(), model.upper.copy()
    for i, value in (fixings or {}).items():
        if not lb[i] <= value <= ub[i]:
            return QPRelaxationResult(QPStatus.INFEASIBLE, None, math.inf, math.inf)
        lb[i] = ub[i] = value
    result, _ = solver.solve(lb, ub)
    return result


def check_lazy(
    model: OptimizationModel, candidate: np.ndarray, rows: Optional[list[LinearRow]] = None
) -> list[LinearRow]:
    """Lazy rows violated by an integer-feasible candidate."""
    lazy = model.lazy_rows if rows is None else rows
    if not lazy:
        return []
    return model.violations(candidate, lazy)


def fractional_candidates(
    model: OptimizationModel,
    x: np.ndarray,
    lb: np.ndarray,
    ub: np.ndarray,
    int_tol: float = 1e-6,
) -> list[int]:
    """Discrete variables with fractional values, in branching order."""
    idle = _idle_selectors(model, lb, ub)
    disc = model.discrete_indices
    frac = disc[np.abs(x[disc] - np.round(x[disc])) > int_tol]
    out = [int(i) for i in frac if int(i) not in idle]
    return sorted(out, key=lambda i: (model.branch_priority(i), i))


def branch(
    node: BBNode, x: np.ndarray, model: OptimizationModel, next_id: int, int_tol: float = 1e-6
) -> tuple[BBNode, BBNode, int]:
    """
    Split ``node`` on its first fractional variable (earliest step, then lane).

    Returns the down child, the up child and the branching variable index.
    """
    frac = fractional_candidates(model, x, node.lb, node.ub, int_tol)
    if not frac:
        raise ValueError("node has no fractional discrete variable; treat it as integer-feasible")
    i = frac[0]
    down_lb, down_ub = node.lb.copy(), node.ub.copy()
    up_lb, up_ub = node.lb.copy(), node.ub.copy()
    down_ub[i] = math.floor(x[i])
    up_lb[i] = math.ceil(x[i])
    bound = node.bound if node.relaxation is None else node.relaxation.objective
    down = BBNode(bound, next_id, node.depth + 1, down_lb, down_ub, node.warm)
    up = BBNode(bound, next_id + 1, node.depth + 1, up_lb, up_ub, node.warm)
    return down, up, i


def _idle_selectors(model: OptimizationModel, lb: np.ndarray, ub: np.ndarray) -> set[int]:
    """Disjunction selectors whose gate is fixed off; their value is irrelevant."""
    return {
        pair.selector
        for pair in model.pairs
        if pair.gate is not None and ub[pair.gate] == 0.0
    }


# ─── Solver ───────────────────────────────────────────────────────────────────


class BranchAndBound:
    """
    One solve of one model.

    Example:
        >>> bb = BranchAndBound(model, SolverOptions(time_limit=0.2))
        >>> result = bb.solve(hint)
        >>> result.status, result.objective
    """

    def __init__(
        self,
        model: OptimizationModel,
        options: Optional[SolverOptions] = None,
        clock: Callable[[], float] = time.perf_counter,
    ) -> None:
        self._validate(model)
        self.model = model
        self.options = options or SolverOptions()
        self.clock = clock
        self.stats = BBStats()

        self._rows: list[LinearRow] = list(model.eager_rows)
        self._pending_lazy: list[LinearRow] = list(model.lazy_rows)
        self._relax = self._make_relaxation()
        self._lock = threading.RLock()
        self._next_id = 0
        self._heap: list[BBNode] = []
        self._start = 0.0
        self._incumbent: Optional[np.ndarray] = None
        self._inc_obj = math.inf
        self._first_time: Optional[float] = None
        self._hint_x: Optional[np.ndarray] = None
        self._witness_used = False
        self._incomplete = False
        self._trace: Optional[IO[str]] = None

    # ─── Setup ────────────────────────────────────────────────────────────────

    @staticmethod
    def _validate(model: OptimizationModel) -> None:
        n = model.n
        if model.P.shape != (n, n) or model.q.shape != (n,):
            raise SolverInputError(
                f"objective shape {model.P.shape}/{model.q.shape} does not match {n} variables"
            )
        if not (np.all(np.isfinite(model.P)) and np.all(np.isfinite(model.q))):
            raise SolverInputError("objective contains non-finite coefficients")
        if not np.allclose(model.P, model.P.T, atol=1e-9):
            raise SolverInputError("quadratic form is not symmetric")
        for row in model.rows:
            for i, c in row.coeffs:
                if not 0 <= i < n or not math.isfinite(c):
                    raise SolverInputError(
                        f"row {row.name} references variable {i} with coefficient {c}"
                    )
        if np.any(model.lower > model.upper):
            raise SolverInputError("variable with an empty domain")

    def _make_relaxation(self) -> RelaxationSolver:
        A, lo, hi = compile_rows(self._rows, self.model.n)
        return RelaxationSolver(
            self.model.P, self.model.q, A, lo, hi, self.model.objective_constant, self.options.admm
        )

    # ─── Public ───────────────────────────────────────────────────────────────

    def solve(
        self, hint: Optional[PlanHint] = None, witness: Optional[PlanHint] = None
    ) -> SolveResult:
        """
        Search for the optimum within the budget.

        ``witness`` is a plan known to be safe (keep the lane, follow the
        leader); it only seeds the incumbent. ``hint`` is the shifted previous
        plan; it seeds the incumbent and steers the branching direction.
        """
        self._start = self.clock()
        trace_path = self.options.trace_path
        self._trace = trace_path.open("a") if trace_path is not None else None
        try:
            return self._solve(hint, witness)
        finally:
            if self._trace is not None:
                self._trace.close()
                self._trace = None

    def _solve(self, hint: Optional[PlanHint], witness: Optional[PlanHint]) -> SolveResult:
        model = self.model
        if witness is not None and len(witness) >= model.H:
            self._witness_used = self._try_witness(witness)
        hint_used = False
        if hint is not None and len(hint) >= model.H and not self._out_of_budget():
            hint_used = self._try_hint(hint)

        root = BBNode(-math.inf, self._new_id(), 0, model.lower.copy(), model.upper.copy())
        if self._out_of_budget():
            return self._stop(False, hint_used, "budget exhausted before the root relaxation")
        root_res = self._relax_node(root)
        self._log_node(root, "root")
        if root_res.status is QPStatus.INFEASIBLE and self._incumbent is None:
            return self._result(SolveStatus.INFEASIBLE, hint_used, "root relaxation infeasible")
        if not root_res.solved:
            logger.debug("root relaxation %s; searching without it", root_res.summary)

        if not self._out_of_budget():
            seed = root_res.solution if root_res.solved else self._hint_x
            self._round_and_fix(seed)

        if self.options.workers > 1:
            finished = self._parallel_search(root)
        else:
            finished = self._serial_search(root)
        return self._stop(finished, hint_used, "")

    def _stop(self, finished: bool, hint_used: bool, message: str) -> SolveResult:
        finished = finished and not self._incomplete
        if self._incumbent is None:
            if finished:
                return self._result(SolveStatus.INFEASIBLE, hint_used, "search exhausted")
            return self._result(
                SolveStatus.ERROR, hint_used, message or "budget exhausted before a first incumbent"
            )
        status = SolveStatus.OPTIMAL if finished else SolveStatus.FEASIBLE_TIMEOUT
        return self._result(status, hint_used, message)

    # ─── Search loops ─────────────────────────────────────────────────────────

    def _serial_search(self, root: BBNode) -> bool:
        """Dive until a first incumbent, then best-first. True when the tree is exhausted."""
        current: Optional[BBNode] = root
        while True:
            if current is None:
                if not self._heap:
                    return True
                current = heapq.heappop(self._heap)
            if self._out_of_budget():
                heapq.heappush(self._heap, current)
                return False
            children = self._process(current)
            current = None
            if not children:
                continue
            if self._incumbent is None:
                current = children[0]
                children = children[1:]
            for child in children:
                heapq.heappush(self._heap, child)

    def _parallel_search(self, root: BBNode) -> bool:
        """Best-first with several workers sharing the heap and the incumbent."""
        with self._lock:
            self._heap.append(root)
        cond = threading.Condition(self._lock)
        busy = [0]
        stopped = [False]

        def worker() -> None:
            while True:
                with cond:
                    while not self._heap and busy[0] > 0 and not stopped[0]:
                        cond.wait(timeout=0.01)
                    if stopped[0] or (not self._heap and busy[0] == 0):
                        cond.notify_all()
                        return
                    if self._out_of_budget():
                        stopped[0] = True
                        cond.notify_all()
                        return
                    node = heapq.heappop(self._heap)
                    busy[0] += 1
                children: list[BBNode] = []
                try:
                    children = self._process(node)
                finally:
                    with cond:
                        busy[0] -= 1
                        for child in children:
                            heapq.heappush(self._heap, child)
                        cond.notify_all()

        with ThreadPoolExecutor(max_workers=self.options.workers) as pool:
            for f in [pool.submit(worker) for _ in range(self.options.workers)]:
                f.result()
        return not stopped[0] and not self._heap

    # ─── Node processing ──────────────────────────────────────────────────────

    def _process(self, node: BBNode) -> list[BBNode]:
        """Bound, prune, accept or branch one node. Returns children (preferred first)."""
        if node.bound >= self._cutoff():
            self._count("nodes_pruned")
            self._log_node(node, "pruned_by_parent")
            return []

        res = node.relaxation if node.relaxation is not None else self._relax_node(node)
        node.relaxation = None
        if res.status is QPStatus.INFEASIBLE:
            self._count("nodes_infeasible")
            self._log_node(node, "infeasible")
            return []
        if not res.solved or res.solution is None:
            # no bound from this node; split it anyway so the search keeps moving
            self._count("numerical_failures")
            return self._branch_blind(node, res.status)
        if res.objective >= self._cutoff():
            self._count("nodes_pruned")
            self._log_node(node, "pruned")
            return []

        x = res.solution
        frac = fractional_candidates(self.model, x, node.lb, node.ub, self.options.int_tol)
        if not frac:
            return self._integer_leaf(node, x)

        with self._lock:
            next_id = self._next_id
            self._next_id += 2
        down, up, i = branch(node, x, self.model, next_id, self.options.int_tol)
        self._log_node(node, f"branch x{i}={x[i]:.4f}")
        if self._hint_x is not None:
            prefer_up = bool(self._hint_x[i] >= up.lb[i])
        else:
            prefer_up = x[i] - math.floor(x[i]) >= 0.5
        return [up, down] if prefer_up else [down, up]

    def _branch_blind(self, node: BBNode, status: QPStatus) -> list[BBNode]:
        """Split on the first unfixed discrete variable when the relaxation gave no answer."""
        model = self.model
        open_vars = [int(i) for i in model.discrete_indices if node.lb[i] < node.ub[i]]
        self._log_node(node, status.value)
        if not open_vars:
            # every discrete is fixed and the leaf QP did not converge; no proof past here
            with self._lock:
                self._incomplete = True
            return []
        i = min(open_vars, key=lambda k: (model.branch_priority(k), k))
        mid = math.floor(0.5 * (node.lb[i] + node.ub[i]))
        with self._lock:
            next_id = self._next_id
            self._next_id += 2
        depth = node.depth + 1
        down = BBNode(node.bound, next_id, depth, node.lb.copy(), node.ub.copy(), node.warm)
        up = BBNode(node.bound, next_id + 1, depth, node.lb.copy(), node.ub.copy(), node.warm)
        down.ub[i] = mid
        up.lb[i] = mid + 1
        return [down, up]

    def _integer_leaf(self, node: BBNode, x: np.ndarray) -> list[BBNode]:
        x_int = x.copy()
        disc = self.model.discrete_indices
        x_int[disc] = np.round(x[disc])
        violated = check_lazy(self.model, x_int, self._pending_lazy)
        if violated:
            self._add_cuts(violated)
            self._log_node(node, f"lazy_cuts {len(violated)}")
            # re-enter the same subtree with the tightened relaxation
            with self._lock:
                retry_id = self._next_id
                self._next_id += 1
            return [BBNode(node.bound, retry_id, node.depth, node.lb, node.ub, node.warm)]
        self._try_candidate(x_int, "leaf")
        self._log_node(node, "integer")
        return []

    # ─── Candidates and heuristics ────────────────────────────────────────────

    def _try_hint(self, hint: PlanHint) -> bool:
        x = self.model.complete(hint.speeds, hint.lanes)
        self._hint_x = x
        if not self.model.is_feasible(x):
            logger.debug("hint infeasible after repair; used for branching order only")
            return False
        self._offer(x, "hint")
        self._try_candidate(x, "hint_polish")
        return True

    def _try_witness(self, witness: PlanHint) -> bool:
        """Offer the keep-lane plan as is, then with its speeds re-optimised."""
        x = self.model.complete(witness.speeds, witness.lanes)
        offered = self.model.is_feasible(x) and self._offer(x, "witness")
        improved = self._try_candidate(x, "witness_polish")
        return offered or improved

    def _round_and_fix(self, x_relaxed: Optional[np.ndarray]) -> None:
        """Round a relaxed or hinted plan to an admissible path and solve its leaf QP."""
        model = self.model
        if x_relaxed is None:
            speeds: tuple[float, ...] = (model.v0,) * model.H
            paths = [[model.l0] * model.H]
        else:
            speeds = model.speed_plan(x_relaxed)
            paths = [self._nearest_lane_path(x_relaxed), [model.l0] * model.H]
        for lanes in paths:
            if self._out_of_budget():
                return
            x = model.complete(speeds, lanes)
            if self._try_candidate(x, "rounding"):
                self._count("heuristic_solutions")
                return

    def _nearest_lane_path(self, x: np.ndarray) -> list[int]:
        """Admissible lane path closest to the relaxed lane values (dynamic programming)."""
        model = self.model
        lanes = model.lanes
        H = model.H
        if model.formulation is Formulation.BINARY:
            score = [[-float(x[model.lane_idx[k, j]]) for k in range(len(lanes))] for j in range(H)]
            allowed_first = [model.upper[model.lane_idx[k, 0]] > 0 for k in range(len(lanes))]
        else:
            score = [[abs(lane - float(x[model.lane_idx[j]])) for lane in lanes] for j in range(H)]
            first = model.variables[int(model.lane_idx[0])]
            allowed_first = [first.lb <= lane <= first.ub for lane in lanes]

        cost = [score[0][k] if allowed_first[k] else math.inf for k in range(len(lanes))]
        back: list[list[int]] = []
        for j in range(1, H):
            new_cost, ptr = [], []
            for k, lane in enumerate(lanes):
                best_k = min(
                    (kp for kp, prev in enumerate(lanes) if abs(prev - lane) <= 1),
                    key=lambda kp: (cost[kp], kp),
                )
                new_cost.append(cost[best_k] + score[j][k])
                ptr.append(best_k)
            cost = new_cost
            back.append(ptr)
        k = min(range(len(lanes)), key=lambda kk: (cost[kk], kk))
        path = [k]
        for ptr in reversed(back):
            k = ptr[k]
            path.append(k)
        return [lanes[k] for k in reversed(path)]

    def _try_candidate(self, x_disc: np.ndarray, source: str) -> bool:
        """Fix the discrete part of ``x_disc``, solve the leaf QP and offer the result."""
        model = self.model
        disc = model.discrete_indices
        values = np.round(x_disc[disc])
        lb, ub = model.lower.copy(), model.upper.copy()
        if np.any(values < lb[disc]) or np.any(values > ub[disc]):
            return False
        x_fixed = x_disc.copy()
        x_fixed[disc] = values
        if check_lazy(model, x_fixed, self._pending_lazy):
            return False
        left = self._time_left()
        if left <= 0.0:
            return False
        lb[disc] = values
        ub[disc] = values
        res, _ = self._relax.solve(lb, ub, time_limit=left)
        if not res.solved or res.solution is None:
            return False
        x = res.solution
        if not model.is_feasible(x):
            # recompute the displacements exactly from the leaf speeds
            x = model.complete(model.speed_plan(x), model.lane_plan(x))
            x[disc] = values
            if not model.is_feasible(x):
                return False
        return self._offer(x, source)

    def _offer(self, x: np.ndarray, source: str) -> bool:
        obj = self.model.objective(x)
        with self._lock:
            if obj >= self._inc_obj - 1e-12:
                return False
            self._incumbent = x.copy()
            self._inc_obj = obj
            if self._first_time is None:
                self._first_time = self.clock() - self._start
        logger.debug("new incumbent %.6f from %s", obj, source)
        return True

    def _add_cuts(self, rows: list[LinearRow]) -> None:
        with self._lock:
            added = [r for r in rows if r in self._pending_lazy]
            if not added:
                return
            self._pending_lazy = [r for r in self._pending_lazy if r not in added]
            self._rows.extend(added)
            self.stats.lazy_cuts += len(added)
            self._relax = self._make_relaxation()

    # ─── Helpers ──────────────────────────────────────────────────────────────

    def _relax_node(self, node: BBNode) -> QPRelaxationResult:
        relax = self._relax
        res, state = relax.solve(node.lb, node.ub, node.warm, time_limit=self._time_left())
        node.warm = state
        self._count("nodes_explored")
        if res.solved:
            node.bound = max(node.bound, res.objective)
        node.relaxation = res
        return res

    def _cutoff(self) -> float:
        inc = self._inc_obj
        if not math.isfinite(inc):
            return math.inf
        return inc - self.options.abs_gap - 1e-9 * abs(inc)

    def _count(self, counter: str, k: int = 1) -> None:
        with self._lock:
            setattr(self.stats, counter, getattr(self.stats, counter) + k)

    def _time_left(self) -> float:
        return self.options.time_limit - (self.clock() - self._start)

    def _new_id(self) -> int:
        with self._lock:
            nid = self._next_id
            self._next_id += 1
        return nid

    def _out_of_budget(self) -> bool:
        if self.clock() - self._start >= self.options.time_limit:
            return True
        limit = self.options.node_limit
        return limit is not None and self.stats.nodes_explored >= limit

    def _log_node(self, node: BBNode, action: str) -> None:
        if self._trace is None:
            return
        with self._lock:
            self._trace.write(f"{node.node_id} {node.depth} {node.bound:.9g} {action}\n")

    def _result(self, status: SolveStatus, hint_used: bool, message: str) -> SolveResult:
        total = self.clock() - self._start
        x = self._incumbent
        open_bounds = [n.bound for n in self._heap if n.bound < math.inf]
        if status is SolveStatus.OPTIMAL:
            best_bound = self._inc_obj
        else:
            best_bound = min(open_bounds) if open_bounds else -math.inf
        result = SolveResult(
            status=status,
            incumbent=None if x is None else x.copy(),
            objective=self._inc_obj,
            first_incumbent_time=self._first_time,
            total_time=total,
            nodes_explored=self.stats.nodes_explored,
            lazy_cuts_added=self.stats.lazy_cuts,
            best_bound=best_bound,
            hint_used=hint_used,
            witness_used=self._witness_used,
            speeds=() if x is None else self.model.speed_plan(x),
            lanes=() if x is None else self.model.lane_plan(x),
            message=message,
        )
        failed = status in (SolveStatus.INFEASIBLE, SolveStatus.ERROR)
        log = logger.warning if failed else logger.debug
        log("solve %s", result.summary)
        return result


def solve(
    model: OptimizationModel,
    hint: Optional[PlanHint] = None,
    budget: float = 0.2,
    options: Optional[SolverOptions] = None,
    witness: Optional[PlanHint] = None,
) -> SolveResult:
    """Solve ``model`` within ``budget`` seconds of wall-clock time."""
    if budget <= 0:
        raise SolverInputError("budget must be positive")
    opts = (options or SolverOptions()).model_copy(update={"time_limit": budget})
    return BranchAndBound(model, opts).solve(hint, witness)


__all__ = [
    "BBNode",
    "BBStats",
    "BranchAndBound",
    "SolveResult",
    "SolveStatus",
    "SolverInputError",
    "SolverOptions",
    "branch",
    "check_lazy",
    "fractional_candidates",
    "solve",
    "solve_qp_relaxation",
]
