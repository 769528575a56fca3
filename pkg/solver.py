# solver.py
"""
Incremental loading with Newton's method on the assembled block system.

Loads are scaled by t = i/N; increment i starts from the converged state of
increment i-1. Each Newton iteration solves J dw = -r with a sparse LU or
with ILU-preconditioned restarted GMRES.
"""
from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, NamedTuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, gmres, spilu, splu

from assembly import BlockSystem, DiscreteState, Problem, assemble_jacobian, face_eta
from errors import (ConvergenceError, InvalidArgumentError, InvalidStateError,
                    NumericError, SingularSystemError)

log = logging.getLogger(__name__)

# ─────────────────────────── tunables ─────────────────────────────
NEWTON_RTOL = 1e-10
NEWTON_MAX_ITER = 8
RESIDUAL_FLOOR = 1e-13          # absolute norm treated as converged
NEWTON_ATOL = 0.0
STALL_RTOL = 1e-6               # relative drop below which a stagnating iteration is accepted
STALL_RATIO = 0.1               # stagnating: one step reduced |r| by less than this factor
KRYLOV_RTOL = 1e-8
KRYLOV_RESTART = 60
KRYLOV_MAXITER = 20             # restart cycles
ILU_DROP_TOL = 1e-5
ILU_FILL = 20
DIRECT_FALLBACK_LIMIT = 400_000  # unknowns; larger Krylov failures are not retried with LU
LINEAR_SOLVERS = ("direct", "krylov")
ETA_POLICIES = ("per-increment", "per-iteration")
STATE_POLICIES = ("fail", "report")
# ──────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class LoadingPath:
    """Uniform path t_i = i / N, i = 1..N."""
    increments: int = 1
    index: int = 0

    def __post_init__(self) -> None:
        if self.increments < 1:
            raise InvalidArgumentError(f"need at least one increment, got {self.increments}")
        if not 0 <= self.index <= self.increments:
            raise InvalidArgumentError(f"increment index {self.index} outside 0..{self.increments}")

    def fraction(self, i: int | None = None) -> float:
        i = self.index if i is None else i
        return i / self.increments

    def fractions(self) -> list[float]:
        return [self.fraction(i) for i in range(1, self.increments + 1)]

    def advance(self) -> "LoadingPath":
        return LoadingPath(self.increments, self.index + 1)

    @property
    def finished(self) -> bool:
        return self.index == self.increments


@dataclass(frozen=True)
class NewtonSettings:
    rtol: float = NEWTON_RTOL
    max_iterations: int = NEWTON_MAX_ITER
    atol: float = NEWTON_ATOL
    stall_rtol: float = STALL_RTOL
    invalid_state: str = "report"
    linear_solver: str = "direct"
    krylov_rtol: float = KRYLOV_RTOL
    recompute_eta: str = "per-increment"
    split_on_failure: bool = False
    max_splits: int = 4

    def __post_init__(self) -> None:
        if not self.rtol > 0.0 or not self.krylov_rtol > 0.0:
            raise InvalidArgumentError("Newton and Krylov tolerances must be positive")
        if self.atol < 0.0 or not 0.0 <= self.stall_rtol < 1.0:
            raise InvalidArgumentError("atol must be >= 0 and stall_rtol in [0, 1)")
        if self.max_iterations < 1:
            raise InvalidArgumentError("max_iterations must be >= 1")
        if self.invalid_state not in STATE_POLICIES:
            raise InvalidArgumentError(f"invalid_state must be one of {STATE_POLICIES}")
        if self.linear_solver not in LINEAR_SOLVERS:
            raise InvalidArgumentError(f"linear_solver must be one of {LINEAR_SOLVERS}")
        if self.recompute_eta not in ETA_POLICIES:
            raise InvalidArgumentError(f"recompute_eta must be one of {ETA_POLICIES}")
        if self.max_splits < 0:
            raise InvalidArgumentError("max_splits must be >= 0")


@dataclass
class IncrementRecord:
    index: int
    fraction: float
    iterations: int = 0
    residuals: list[float] = field(default_factory=list)
    linear_iterations: list[int] = field(default_factory=list)
    eta_min: float = 0.0
    eta_mean: float = 0.0
    eta_max: float = 0.0
    wall_time: float = 0.0
    converged: bool = False
    message: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SolveReport:
    increments: list[IncrementRecord] = field(default_factory=list)
    converged: bool = True
    failure: str | None = None
    failed_increment: int | None = None
    failed_fraction: float | None = None
    reached_fraction: float = 0.0

    @property
    def total_iterations(self) -> int:
        return sum(r.iterations for r in self.increments)

    def summary(self) -> str:
        if self.converged:
            return (f"converged: {len(self.increments)} increments, "
                    f"{self.total_iterations} Newton iterations")
        return (f"fails to converge when reaching {100.0 * (self.failed_fraction or 0.0):.0f}% "
                f"of the loading path (increment {self.failed_increment}): {self.failure}")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["total_iterations"] = self.total_iterations
        return out


class LinearResult(NamedTuple):
    x: np.ndarray
    iterations: int
    mode: str


# ─────────────────────────── linear solves ────────────────────────
def _singular(A: sp.spmatrix, system: BlockSystem | None) -> SingularSystemError:
    A = sp.csr_matrix(A)
    empty = np.flatnonzero(np.diff(A.indptr) == 0)
    if not len(empty):
        empty = np.flatnonzero(np.diff(A.tocsc().indptr) == 0)
    row = int(empty[0]) if len(empty) else None
    block = None
    if row is not None and system is not None:
        name, owner = system.dofmap.locate(row)
        block = f"{name}[{owner}]"
    where = f" (zero pivot at row {row}{', ' + block if block else ''})" if row is not None else ""
    return SingularSystemError(f"singular Jacobian{where}", row, block)


def _direct(A: sp.spmatrix, b: np.ndarray, system: BlockSystem | None) -> LinearResult:
    try:
        lu = splu(sp.csc_matrix(A))
    except RuntimeError as exc:
        raise _singular(A, system) from exc
    x = lu.solve(b)
    if not np.all(np.isfinite(x)):
        raise _singular(A, system)
    return LinearResult(x, 1, "direct")


def _krylov(A: sp.spmatrix, b: np.ndarray, rtol: float) -> LinearResult | None:
    A = sp.csc_matrix(A)
    try:
        ilu = spilu(A, drop_tol=ILU_DROP_TOL, fill_factor=ILU_FILL)
    except RuntimeError as exc:
        log.warning("ILU factorization failed (%s)", exc)
        return None
    M = LinearOperator(A.shape, matvec=ilu.solve, dtype=A.dtype)
    count = [0]

    def callback(_: float) -> None:
        count[0] += 1

    x, info = gmres(A, b, rtol=rtol, atol=0.0, restart=KRYLOV_RESTART,
                    maxiter=KRYLOV_MAXITER, M=M, callback=callback, callback_type="pr_norm")
    if info != 0 or not np.all(np.isfinite(x)):
        log.warning("GMRES stopped after %d iterations (info=%d)", count[0], info)
        return None
    return LinearResult(x, count[0], "krylov")


def linear_solve(system: BlockSystem | sp.spmatrix, rhs: np.ndarray | None = None,
                 mode: str = "direct", *, rtol: float = KRYLOV_RTOL) -> LinearResult:
    """
    Solve A x = rhs. For a BlockSystem the right-hand side defaults to the
    negative residual, giving the Newton update.
    """
    if mode not in LINEAR_SOLVERS:
        raise InvalidArgumentError(f"unknown linear solver {mode!r}")
    if isinstance(system, BlockSystem):
        A, blocks = system.matrix, system
        b = -system.residual if rhs is None else rhs
    else:
        A, blocks = system, None
        if rhs is None:
            raise InvalidArgumentError("a right-hand side is required for a bare matrix")
        b = rhs
    b = np.asarray(b, dtype=float)
    if A.shape[0] == 0:
        return LinearResult(np.zeros(0), 0, mode)
    if mode == "direct":
        return _direct(A, b, blocks)
    result = _krylov(A, b, rtol)
    if result is not None:
        return result
    if A.shape[0] > DIRECT_FALLBACK_LIMIT:
        raise NumericError(f"GMRES did not reach rtol={rtol:g} and the system "
                           f"({A.shape[0]} unknowns) is too large for the direct fallback")
    log.warning("falling back to sparse LU")
    return _direct(A, b, blocks)


# ─────────────────────────── Newton ───────────────────────────────
def newton_converged(norm: float, r0: float, prev: float | None,
                     settings: NewtonSettings = NewtonSettings()) -> bool:
    """
    Stopping test for one Newton iterate. Besides the relative drop
    |r| <= rtol |r0| and the absolute bound |r| <= atol, an iterate is
    accepted once it is below stall_rtol |r0| and the last step no longer
    reduced the residual by STALL_RATIO: the iteration has reached round-off.
    """
    if norm <= max(RESIDUAL_FLOOR, settings.atol) or norm <= settings.rtol * r0:
        return True
    return prev is not None and norm <= settings.stall_rtol * r0 and norm > STALL_RATIO * prev


def newton_step(problem: Problem, state: DiscreteState, system: BlockSystem,
                settings: NewtonSettings = NewtonSettings()) -> tuple[DiscreteState, LinearResult]:
    """Full Newton update w <- w + dw with J dw = -r (no line search)."""
    result = linear_solve(system, mode=settings.linear_solver, rtol=settings.krylov_rtol)
    w = state.vector(problem.dofmap) + result.x
    return DiscreteState.from_vector(w, problem.dofmap), result


def _solve_increment(problem: Problem, state: DiscreteState, t: float,
                     settings: NewtonSettings, record: IncrementRecord) -> DiscreteState:
    start = time.perf_counter()
    eta = face_eta(problem, state, t)
    r0 = prev = None
    try:
        for it in range(settings.max_iterations + 1):
            if it and settings.recompute_eta == "per-iteration":
                eta = face_eta(problem, state, t)
            system = assemble_jacobian(problem, state, t, eta)
            norm = float(np.linalg.norm(system.residual))
            record.residuals.append(norm)
            r0 = norm if r0 is None else r0
            log.debug("  t=%.4f it=%d |r|=%.3e", t, it, norm)
            if newton_converged(norm, r0, prev, settings):
                record.converged = True
                return state
            prev = norm
            if it == settings.max_iterations:
                break
            state, lin = newton_step(problem, state, system, settings)
            record.iterations += 1
            record.linear_iterations.append(lin.iterations)
        raise ConvergenceError(
            f"residual dropped by {norm / r0:.2e} only after {settings.max_iterations} iterations",
            record.index, t)
    finally:
        if len(eta):
            record.eta_min, record.eta_mean, record.eta_max = \
                float(eta.min()), float(eta.mean()), float(eta.max())
        record.wall_time = time.perf_counter() - start


_RECOVERABLE = (ConvergenceError, InvalidStateError, SingularSystemError)


def _advance(problem: Problem, state: DiscreteState, t_from: float, t_to: float, index: int,
             settings: NewtonSettings, report: SolveReport, depth: int = 0) -> DiscreteState:
    record = IncrementRecord(index, t_to)
    report.increments.append(record)
    try:
        return _solve_increment(problem, state.copy(), t_to, settings, record)
    except _RECOVERABLE as exc:
        record.message = str(exc)
        if not settings.split_on_failure or depth >= settings.max_splits:
            raise
        mid = 0.5 * (t_from + t_to)
        log.warning("increment %d failed at t=%.4f (%s); splitting at t=%.4f", index, t_to, exc, mid)
        state = _advance(problem, state, t_from, mid, index, settings, report, depth + 1)
        return _advance(problem, state, mid, t_to, index, settings, report, depth + 1)


def incremental_solve(problem: Problem, path: LoadingPath | int = 1,
                      settings: NewtonSettings = NewtonSettings(),
                      state: DiscreteState | None = None,
                      on_increment: Callable[[IncrementRecord, DiscreteState], None] | None = None,
                      max_increments: int | None = None,
                      ) -> tuple[DiscreteState, SolveReport]:
    """
    Run the loading path from `state` (zero by default). Returns the last
    converged state and the report; with invalid_state="fail" a failed
    increment raises ConvergenceError instead. `max_increments` stops the
    path early (smoke runs).
    """
    if isinstance(path, int):
        path = LoadingPath(path)
    state = DiscreteState.zeros(problem.dofmap) if state is None else state
    report = SolveReport()
    log.info("%s, k=%d: %d unknowns, %d increments", problem.law.name, problem.degree,
             problem.dofmap.size, path.increments)
    t_prev = path.fraction()
    while not path.finished:
        path = path.advance()
        t = path.fraction()
        try:
            state = _advance(problem, state, t_prev, t, path.index, settings, report)
        except _RECOVERABLE as exc:
            report.converged = False
            report.failure = str(exc)
            report.failed_increment = path.index
            report.failed_fraction = t
            log.warning(report.summary())
            if settings.invalid_state == "fail":
                raise ConvergenceError(report.summary(), path.index, t) from exc
            break
        report.reached_fraction = t_prev = t
        if on_increment is not None:
            on_increment(report.increments[-1], state)
        last = report.increments[-1]
        log.info("increment %d/%d (t=%.3f): %d Newton iterations, |r| %.2e -> %.2e",
                 path.index, path.increments, t, last.iterations,
                 last.residuals[0], last.residuals[-1])
        if max_increments is not None and path.index >= max_increments:
            break
    return state, report
