# verification.py
"""
Manufactured solutions, forcing synthesis, error norms and convergence rates.

Two displacement fields are provided on the unit cube (or square):

  * compressible: u = (1/lam + alpha) X + alpha sin(pi Y),
                  v = -(1/lam + kappa) Y,  kappa = (alpha+gamma+alpha gamma)/(1+alpha+gamma+alpha gamma),
                  w = (1/lam + gamma) Z + gamma sin(pi X);
  * isochoric:    u = (a^2 - 1) X + b/2 sin^2 Y + c/2 sin^2 Z,
                  v = w = (1/a - 1) Y, Z   (2-D: v = (1/a^2 - 1) Y).

The forcing rho f = -Div P(F(u), p) is obtained by complex-step
differentiation of the closed-form stress field.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from assembly import DiscreteState, Load, Problem
from errors import InvalidArgumentError, NumericError
from hyperelastic import Kinematics, LameParams, MaterialLaw, first_piola, second_piola
from mesh import BoundaryRegion, build_cartesian_mesh, classify_boundary
from solver import NewtonSettings, incremental_solve
from stabilization import StabilizationParams

log = logging.getLogger(__name__)

# ─────────────────────────── constants ────────────────────────────
COMPLEX_STEP = 1e-30
CENTRAL_STEP = 1e-3
NEUMANN_AXIS = 0                  # the face X = 1 carries the exact traction
CASE_NAMES = ("nhk-c", "svk-c", "nhk-i", "svk-i")
CSV_COLUMNS = ("cards", "error_u", "rate_u", "error_gradu", "rate_gradu", "error_p", "rate_p")
# Nitsche loading-path length for k = 1 on 4 cells per axis; grows with refinement and degree
NITSCHE_INCREMENTS = {"nhk-c": 30, "svk-c": 60, "nhk-i": 60, "svk-i": 60}
LAGRANGE_INCREMENTS = 3
# ──────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class ManufacturedCase:
    law: MaterialLaw
    params: LameParams = field(default_factory=lambda: LameParams(1.0, 10.0))
    dim: int = 3
    alpha: float = 0.1
    gamma: float = 0.1
    a: float = 1.1
    b: float = 1.0
    c: float = 1.0

    def __post_init__(self) -> None:
        if self.dim not in (2, 3):
            raise InvalidArgumentError(f"manufactured cases exist in 2-D and 3-D, got {self.dim}")
        if self.law.tag == "nhk-cav":
            raise InvalidArgumentError("no manufactured case for NHK-CAV")
        if not self.incompressible and self.params.lam == 0.0:
            raise InvalidArgumentError("the compressible field needs lam != 0")

    @classmethod
    def named(cls, name: str, dim: int = 3, mu: float = 1.0, lam: float = 10.0) -> "ManufacturedCase":
        key = name.strip().lower()
        if key not in CASE_NAMES:
            raise InvalidArgumentError(f"unknown manufactured case {name!r}, expected one of {CASE_NAMES}")
        return cls(MaterialLaw.parse(key), LameParams(mu, lam), dim)

    @property
    def incompressible(self) -> bool:
        return self.law.incompressible

    @property
    def kappa(self) -> float:
        ag = self.alpha + self.gamma + self.alpha * self.gamma
        return ag / (1.0 + ag)


def _points(X: np.ndarray, dim: int) -> tuple[np.ndarray, bool]:
    X = np.asarray(X)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[-1] != dim:
        raise InvalidArgumentError(f"expected points with {dim} coordinates, got {X.shape[-1]}")
    return X, single


# ─────────────────────────── exact fields ─────────────────────────
def exact_displacement(case: ManufacturedCase, X: np.ndarray) -> np.ndarray:
    X, single = _points(X, case.dim)
    x, y = X[:, 0], X[:, 1]
    out = np.zeros(X.shape, dtype=X.dtype if np.iscomplexobj(X) else float)
    if case.incompressible:
        a, b, c = case.a, case.b, case.c
        out[:, 0] = (a * a - 1.0) * x + 0.5 * b * np.sin(y) ** 2
        if case.dim == 3:
            z = X[:, 2]
            out[:, 0] += 0.5 * c * np.sin(z) ** 2
            out[:, 1] = (1.0 / a - 1.0) * y
            out[:, 2] = (1.0 / a - 1.0) * z
        else:
            out[:, 1] = (1.0 / (a * a) - 1.0) * y
    else:
        il, al, ga = 1.0 / case.params.lam, case.alpha, case.gamma
        out[:, 0] = (il + al) * x + al * np.sin(math.pi * y)
        out[:, 1] = -(il + case.kappa) * y
        if case.dim == 3:
            out[:, 2] = (il + ga) * X[:, 2] + ga * np.sin(math.pi * x)
    return out[0] if single else out


def exact_gradient(case: ManufacturedCase, X: np.ndarray) -> np.ndarray:
    """grad(u)_ab = du_a / dX_b, shape (n, d, d)."""
    X, single = _points(X, case.dim)
    x, y = X[:, 0], X[:, 1]
    G = np.zeros(X.shape + (case.dim,), dtype=X.dtype if np.iscomplexobj(X) else float)
    if case.incompressible:
        a = case.a
        G[:, 0, 0] = a * a - 1.0
        G[:, 0, 1] = case.b * np.sin(y) * np.cos(y)
        if case.dim == 3:
            z = X[:, 2]
            G[:, 0, 2] = case.c * np.sin(z) * np.cos(z)
            G[:, 1, 1] = G[:, 2, 2] = 1.0 / a - 1.0
        else:
            G[:, 1, 1] = 1.0 / (a * a) - 1.0
    else:
        il, al, ga = 1.0 / case.params.lam, case.alpha, case.gamma
        G[:, 0, 0] = il + al
        G[:, 0, 1] = al * math.pi * np.cos(math.pi * y)
        G[:, 1, 1] = -(il + case.kappa)
        if case.dim == 3:
            G[:, 2, 0] = ga * math.pi * np.cos(math.pi * x)
            G[:, 2, 2] = il + ga
    return G[0] if single else G


def exact_pressure(case: ManufacturedCase, X: np.ndarray) -> np.ndarray:
    """p = tr(sigma) / d with sigma = J^-1 F S F^T, from the exact deformation."""
    if not case.incompressible:
        raise InvalidArgumentError("exact pressure is only defined for the incompressible cases")
    X, single = _points(X, case.dim)
    kin = Kinematics(np.eye(case.dim) + exact_gradient(case, X))
    S = second_piola(case.law, case.params, kin)
    sigma = np.einsum("nik,nkl,njl->nij", kin.F, S, kin.F) / kin.J[:, None, None]
    p = np.trace(sigma, axis1=-2, axis2=-1) / case.dim
    return p[0] if single else p


def pressure_closed_form(case: ManufacturedCase, X: np.ndarray) -> np.ndarray:
    """Published closed forms of the 3-D isochoric pressure (NHK-I and SVK-I)."""
    if not case.incompressible or case.dim != 3:
        raise InvalidArgumentError("closed forms exist for the 3-D isochoric case only")
    X, single = _points(X, 3)
    mu, lam = case.params.mu, case.params.lam
    a, b, c = case.a, case.b, case.c
    sy, cy = np.sin(X[:, 1]), np.cos(X[:, 1])
    sz, cz = np.sin(X[:, 2]), np.cos(X[:, 2])
    if case.law.tag == "nhk-i":
        p = (c * c * cz**2 * sz**2 * mu + b * b * cy**2 * sy**2 * mu + a**4 * mu + 2.0 * mu / a**2) / 3.0
    else:
        yy, zz = cy**2 * sy**2, cz**2 * sz**2
        p = (mu / 6.0) * (2 * zz**2 + (4 * yy + 6) * zz + 2 * yy**2 + 6 * yy) \
            + (lam / 6.0) * (zz**2 + (2 * yy + 3) * zz + yy**2 + 3 * yy)
    return p[0] if single else p


def exact_stress(case: ManufacturedCase, X: np.ndarray) -> np.ndarray:
    """First Piola-Kirchhoff stress of the exact solution (n, d, d)."""
    X, _ = _points(X, case.dim)
    kin = Kinematics(np.eye(case.dim) + exact_gradient(case, X))
    p = exact_pressure(case, X) if case.incompressible else 0.0
    return first_piola(case.law, case.params, kin, p)


def manufactured_forcing(case: ManufacturedCase, X: np.ndarray,
                         method: str = "complex-step") -> np.ndarray:
    """rho f = -Div P(F(u), p) at points X: complex step, or a 4th-order central stencil."""
    X, single = _points(np.asarray(X, dtype=float), case.dim)
    div = np.zeros(X.shape)
    for b in range(case.dim):
        e = np.zeros(case.dim)
        e[b] = 1.0
        if method == "complex-step":
            P = exact_stress(case, X + 1j * COMPLEX_STEP * e)
            div += np.imag(P[:, :, b]) / COMPLEX_STEP
        elif method == "central":
            h = CENTRAL_STEP
            step = h * e
            Pb = [exact_stress(case, X + s * step)[:, :, b] for s in (2, 1, -1, -2)]
            div += (-Pb[0] + 8.0 * Pb[1] - 8.0 * Pb[2] + Pb[3]) / (12.0 * h)
        else:
            raise InvalidArgumentError(f"unknown differentiation method {method!r}")
    f = -div
    return f[0] if single else f


def exact_traction(case: ManufacturedCase, X: np.ndarray, normal: Sequence[float]) -> np.ndarray:
    return np.einsum("nab,b->na", exact_stress(case, X), np.asarray(normal, dtype=float))


# ─────────────────────────── problem setup ────────────────────────
def manufactured_problem(case: ManufacturedCase, cells_per_axis: int, degree: int = 1, *,
                         dirichlet: str = "nitsche", simplicial: bool = False,
                         stabilization: StabilizationParams | None = None,
                         quad_degree: int | None = None) -> Problem:
    """
    Unit cube with exact Dirichlet data on every face except X = 1, which
    carries the exact traction; the forcing makes u_exact the solution.
    """
    if dirichlet not in ("nitsche", "lagrange"):
        raise InvalidArgumentError(f"dirichlet must be 'nitsche' or 'lagrange', got {dirichlet!r}")
    mesh = build_cartesian_mesh(case.dim, cells_per_axis, simplicial=simplicial)
    normal = np.zeros(case.dim)
    normal[NEUMANN_AXIS] = 1.0
    on_neumann = lambda c: np.isclose(c[:, NEUMANN_AXIS], 1.0)
    regions = [
        BoundaryRegion("traction", "neumann", where=on_neumann,
                       value=Load(lambda X: exact_traction(case, X, normal))),
        BoundaryRegion("clamp", f"dirichlet_{dirichlet}", where=lambda c: ~on_neumann(c),
                       value=Load(lambda X: exact_displacement(case, X))),
    ]
    partition = classify_boundary(mesh, regions)
    stab = stabilization or StabilizationParams(beta=1.0, epsilon=0.0, eta_lbb=1.0, eta_lambda=1.0)
    return Problem(mesh, partition, case.law, case.params, degree, stab,
                   body_force=Load(lambda X: manufactured_forcing(case, X)),
                   quad_degree=quad_degree)


def project_state(problem: Problem, case: ManufacturedCase) -> DiscreteState:
    """Element-wise L2 projection of the exact displacement (and pressure)."""
    ops, d = problem.ops, problem.mesh.dim
    psi = ops.psi[..., :ops.nk]
    mass = np.einsum("eq,eqi,eqj->eij", ops.weights, psi, psi)
    pts = ops.points.reshape(-1, d)
    u = exact_displacement(case, pts).reshape(ops.points.shape)
    state = DiscreteState.zeros(problem.dofmap)
    try:
        state.u = np.transpose(np.linalg.solve(mass, np.einsum("eq,eqi,eqa->eia", ops.weights, psi, u)),
                               (0, 2, 1))
        if case.incompressible:
            p = exact_pressure(case, pts).reshape(ops.weights.shape)
            state.p = np.linalg.solve(mass, np.einsum("eq,eqi,eq->ei", ops.weights, psi, p)[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise NumericError("singular element mass matrix") from exc
    return state


# ─────────────────────────── errors and rates ─────────────────────
class ErrorNorms(NamedTuple):
    u: float
    grad_u: float
    p: float | None


def error_norms(problem: Problem, state: DiscreteState, case: ManufacturedCase,
                quad_degree: int | None = None) -> ErrorNorms:
    """L2 errors of u, its broken gradient and p, integrated at degree 2k+4."""
    mesh, ops = problem.mesh, problem.ops
    qd = quad_degree if quad_degree is not None else 2 * problem.degree + 4
    cq = mesh.cell_quadrature(qd)
    d, nk = mesh.dim, ops.nk
    psi = ops.basis.values(cq.points)[..., :nk]
    dpsi = ops.basis.gradients(cq.points)[..., :nk, :]
    pts = cq.points.reshape(-1, d)
    eu = np.einsum("eqj,eaj->eqa", psi, state.u) - exact_displacement(case, pts).reshape(cq.points.shape)
    eg = np.einsum("eqjb,eaj->eqab", dpsi, state.u) - \
        exact_gradient(case, pts).reshape(cq.points.shape + (d,))
    err_u = math.sqrt(float(np.einsum("eq,eqa,eqa->", cq.weights, eu, eu)))
    err_g = math.sqrt(float(np.einsum("eq,eqab,eqab->", cq.weights, eg, eg)))
    err_p = None
    if case.incompressible:
        ep = np.einsum("eqj,ej->eq", psi, state.p) - exact_pressure(case, pts).reshape(cq.weights.shape)
        err_p = math.sqrt(float(np.einsum("eq,eq,eq->", cq.weights, ep, ep)))
    return ErrorNorms(err_u, err_g, err_p)


def convergence_rates(errors: Sequence[float], hs: Sequence[float]) -> list[float]:
    """log(e_i / e_{i+1}) / log(h_i / h_{i+1}); nan where an error vanishes."""
    if len(errors) != len(hs):
        raise InvalidArgumentError("errors and mesh sizes differ in length")
    if len(errors) < 2:
        raise InvalidArgumentError("rates need at least two mesh levels")
    rates = []
    for (e0, e1), (h0, h1) in zip(zip(errors, errors[1:]), zip(hs, hs[1:])):
        if e0 <= 0.0 or e1 <= 0.0:
            rates.append(float("nan"))
        else:
            rates.append(math.log(e0 / e1) / math.log(h0 / h1))
    return rates


@dataclass
class ConvergenceRow:
    cards: int
    h: float
    error_u: float
    error_gradu: float
    error_p: float | None = None
    rate_u: float | None = None
    rate_gradu: float | None = None
    rate_p: float | None = None
    iterations: int = 0
    increments: int = 0


def default_increments(case: ManufacturedCase, cells_per_axis: int, degree: int = 1,
                       dirichlet: str = "nitsche") -> int:
    """
    Loading-path length for one level. With Nitsche conditions the lifted
    boundary jump of the first Newton iterate grows as h shrinks and k
    grows, so the path lengthens with both; multiplier conditions need a
    fixed, short path.
    """
    if dirichlet == "lagrange":
        return LAGRANGE_INCREMENTS
    base = NITSCHE_INCREMENTS[case.law.name.lower()]
    return math.ceil(base * degree * (max(cells_per_axis, 4) / 4.0) ** (2.0 / 3.0))


def convergence_study(case: ManufacturedCase, levels: Sequence[int], degree: int = 1, *,
                      dirichlet: str = "nitsche", increments: int | None = None,
                      settings: NewtonSettings | None = None,
                      stabilization: StabilizationParams | None = None,
                      quad_degree: int | None = None) -> list[ConvergenceRow]:
    """
    Solve the manufactured case on each level (cells per axis) and tabulate
    errors. `increments=None` takes the path length of each level from
    `default_increments`; by default failed increments are bisected.
    """
    settings = settings or NewtonSettings(invalid_state="fail", split_on_failure=True)
    rows: list[ConvergenceRow] = []
    for n in levels:
        problem = manufactured_problem(case, n, degree, dirichlet=dirichlet,
                                       stabilization=stabilization, quad_degree=quad_degree)
        steps = increments if increments is not None else default_increments(case, n, degree, dirichlet)
        state, report = incremental_solve(problem, steps, settings)
        err = error_norms(problem, state, case)
        rows.append(ConvergenceRow(problem.mesh.n_cells, problem.mesh.h, err.u, err.grad_u, err.p,
                                   iterations=report.total_iterations,
                                   increments=sum(r.converged for r in report.increments)))
        log.info("%s k=%d, %d cells: |u-uh|=%.3e |grad|=%.3e%s", case.law.name, degree,
                 problem.mesh.n_cells, err.u, err.grad_u,
                 "" if err.p is None else f" |p-ph|={err.p:.3e}")
    if len(rows) > 1:
        hs = [r.h for r in rows]
        for name in ("u", "gradu", "p"):
            errs = [getattr(r, f"error_{name}") for r in rows]
            if errs[0] is None:
                continue
            for row, rate in zip(rows[1:], convergence_rates(errs, hs)):
                setattr(row, f"rate_{name}", rate)
    return rows


def write_convergence_csv(rows: Sequence[ConvergenceRow], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in rows:
            writer.writerow([r.cards] + [_fmt(getattr(r, c)) for c in CSV_COLUMNS[1:]])
    return path


def _fmt(value: float | None) -> str:
    if value is None:
        return "-"
    if math.isnan(value):
        return "undefined"
    return f"{value:.4e}"
