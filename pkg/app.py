# app.py
"""
Run driver: turns a RunConfig into a mesh and a Problem, walks the loading
path and writes the artifacts of the run under <output>/<name>/:

    <name>_0001.vtk ...   deformed configuration per increment
    report.json           configuration, per-increment records, outcome
    increments.csv        one row per Newton increment
    convergence_k<k>.csv  manufactured runs only
"""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from assembly import Load, Problem, face_eta
from config import ManufacturedConfig, MaterialConfig, MeshConfig, RunConfig, validate_config
from errors import ConfigurationError
from hyperelastic import MaterialLaw
from mesh import BoundaryRegion, Mesh, build_cartesian_mesh, build_hollow_cylinder_mesh, classify_boundary
from mesh_io import read_mesh
from solver import IncrementRecord, NewtonSettings, SolveReport, incremental_solve
from stabilization import StabilizationParams
from utils import VectorExpression, parse_expression, parse_vector
from verification import (CASE_NAMES, ConvergenceRow, ManufacturedCase, convergence_study,
                          write_convergence_csv)
from vtk_writer import export_vtk

log = logging.getLogger(__name__)

# ─────────────────────────── constants ────────────────────────────
INCREMENT_COLUMNS = ("increment", "fraction", "iterations", "residual_initial", "residual_final",
                     "linear_iterations", "eta_min", "eta_mean", "eta_max", "wall_time", "converged")
# ──────────────────────────────────────────────────────────────────


@dataclass
class RunResult:
    name: str
    directory: Path
    report: SolveReport | None = None
    convergence: dict[int, list[ConvergenceRow]] = field(default_factory=dict)
    files: list[Path] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.report is None or self.report.converged


# ─────────────────────────── config -> objects ────────────────────
def _load(texts: list[str] | None) -> Load | None:
    if texts is None:
        return None
    vec: VectorExpression = parse_vector(texts)
    return Load(vec, explicit_t=vec.uses_t)


def build_mesh(cfg: RunConfig) -> Mesh:
    m = cfg.mesh
    if m.file is not None:
        return read_mesh(m.file)
    if m.generator == "hollow-cylinder":
        return build_hollow_cylinder_mesh(m.inner, m.outer, m.height, m.counts)
    keep = parse_expression(m.keep) if m.keep else None
    return build_cartesian_mesh(m.dim, m.cells, m.box, simplicial=m.simplicial,
                                cell_filter=(lambda c: keep(c)) if keep else None)


def build_regions(cfg: RunConfig) -> list[BoundaryRegion]:
    regions = []
    for b in cfg.boundaries:
        where = None
        if b.where is not None:
            expr = parse_expression(b.where)
            where = lambda c, e=expr: e(c)
        regions.append(BoundaryRegion(b.name, b.kind, where=where, tag=b.tag, value=_load(b.value)))
    return regions


def stabilization_params(cfg: RunConfig) -> StabilizationParams:
    return StabilizationParams(**dataclasses.asdict(cfg.stabilization))


def build_problem(cfg: RunConfig, mesh: Mesh | None = None) -> Problem:
    mesh = mesh if mesh is not None else build_mesh(cfg)
    if mesh.dim != cfg.dim:
        raise ConfigurationError(f"mesh is {mesh.dim}-D but the configuration is {cfg.dim}-D",
                                 field="mesh.dim")
    partition = classify_boundary(mesh, build_regions(cfg), patch_angle=cfg.solver.patch_angle)
    return Problem(mesh, partition, cfg.material.material_law(), cfg.material.lame(),
                   degree=cfg.degree, stabilization=stabilization_params(cfg),
                   body_force=_load(cfg.body_force), density=cfg.material.density,
                   quad_degree=cfg.solver.quad_degree)


def newton_settings(cfg: RunConfig) -> NewtonSettings:
    sv = cfg.solver
    return NewtonSettings(rtol=sv.newton_tol, atol=sv.newton_atol, stall_rtol=sv.newton_stall_tol,
                          max_iterations=sv.newton_max_iter,
                          invalid_state=sv.invalid_state, linear_solver=sv.linear_solver,
                          recompute_eta=sv.recompute_eta, split_on_failure=sv.split_on_failure,
                          max_splits=sv.max_splits)


# ─────────────────────────── overrides ────────────────────────────
_OVERRIDES = {
    "mesh": ("mesh", "file"),
    "increments": ("loading", "increments"),
    "newton_tol": ("solver", "newton_tol"),
    "newton_atol": ("solver", "newton_atol"),
    "newton_max_iter": ("solver", "newton_max_iter"),
    "linear_solver": ("solver", "linear_solver"),
    "split_on_failure": ("solver", "split_on_failure"),
    "quad_degree": ("solver", "quad_degree"),
    "beta": ("stabilization", "beta"),
    "epsilon": ("stabilization", "epsilon"),
    "eta_lbb": ("stabilization", "eta_lbb"),
    "eta_lambda": ("stabilization", "eta_lambda"),
    "output": ("output", "directory"),
}


def apply_overrides(cfg: RunConfig, **overrides: Any) -> RunConfig:
    """Copy of `cfg` with the non-None command-line values patched in."""
    out = cfg.copy()
    for key, value in overrides.items():
        if value is None:
            continue
        if key not in _OVERRIDES:
            raise ConfigurationError(f"unknown override {key!r}")
        section, attr = _OVERRIDES[key]
        if key == "increments" and out.manufactured is not None:
            section = "manufactured"        # per-level count of a convergence study
        setattr(getattr(out, section), attr, value)
    validate_config(out)
    return out


# ─────────────────────────── outputs ──────────────────────────────
def _write_json(path: Path, payload: dict) -> Path:
    path.write_text(json.dumps(payload, indent=2, default=str))
    return path


def write_increments_csv(report: SolveReport, path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(INCREMENT_COLUMNS)
        for r in report.increments:
            writer.writerow([r.index, f"{r.fraction:.6g}", r.iterations,
                             f"{r.residuals[0]:.4e}" if r.residuals else "-",
                             f"{r.residuals[-1]:.4e}" if r.residuals else "-",
                             sum(r.linear_iterations), f"{r.eta_min:.4e}", f"{r.eta_mean:.4e}",
                             f"{r.eta_max:.4e}", f"{r.wall_time:.3f}", int(r.converged)])
    return path


def _header(cfg: RunConfig) -> dict[str, Any]:
    return {"name": cfg.name, "description": cfg.description, "desk_scaling": cfg.desk_scaling,
            "config": cfg.to_dict()}


# ─────────────────────────── runs ─────────────────────────────────
def run_config(cfg: RunConfig, *, smoke: bool = False) -> RunResult:
    """
    Execute a configuration. Manufactured configurations run a convergence
    study per degree; everything else walks the loading path once. With
    `smoke` only the first increment (or the first mesh level) is solved.
    """
    validate_config(cfg)
    directory = Path(cfg.output.directory) / cfg.name
    directory.mkdir(parents=True, exist_ok=True)
    result = RunResult(cfg.name, directory)
    if cfg.manufactured is not None:
        _run_manufactured(cfg, result, smoke)
    else:
        _run_path(cfg, result, smoke)
    return result


def _run_path(cfg: RunConfig, result: RunResult, smoke: bool) -> None:
    problem = build_problem(cfg)
    log.info("%s: %d %s cells, %d unknowns", cfg.name, problem.mesh.n_cells,
             problem.mesh.cell_type, problem.dofmap.size)
    directory = result.directory
    every = cfg.output.every
    last = cfg.loading.increments

    def on_increment(record: IncrementRecord, state) -> None:
        if not cfg.output.vtk or (record.index % every and record.index != last):
            return
        eta = face_eta(problem, state, record.fraction)
        path = directory / f"{cfg.name}_{record.index:04d}.vtk"
        result.files.append(export_vtk(path, problem, state, record.fraction, eta))

    _, report = incremental_solve(problem, cfg.loading.increments, newton_settings(cfg),
                                  on_increment=on_increment, max_increments=1 if smoke else None)
    result.report = report
    result.files.append(_write_json(directory / "report.json",
                                    {**_header(cfg), "summary": report.summary(), **report.to_dict()}))
    result.files.append(write_increments_csv(report, directory / "increments.csv"))


def _run_manufactured(cfg: RunConfig, result: RunResult, smoke: bool) -> None:
    mc = cfg.manufactured
    case = ManufacturedCase.named(mc.case, dim=cfg.mesh.dim, mu=mc.mu, lam=mc.lam)
    settings = dataclasses.replace(newton_settings(cfg), invalid_state="fail", split_on_failure=True)
    levels = mc.levels[:1] if smoke else mc.levels
    for k in mc.degrees:
        rows = convergence_study(case, levels, k, dirichlet=mc.dirichlet,
                                 increments=mc.increments, settings=settings,
                                 stabilization=stabilization_params(cfg),
                                 quad_degree=cfg.solver.quad_degree)
        result.convergence[k] = rows
        result.files.append(write_convergence_csv(rows, result.directory / f"convergence_k{k}.csv"))
    payload = {k: [dataclasses.asdict(r) for r in rows] for k, rows in result.convergence.items()}
    result.files.append(_write_json(result.directory / "report.json",
                                    {**_header(cfg), "convergence": payload}))


def convergence_config(family: str, levels: list[int], degrees: list[int], *,
                       dirichlet: str = "nitsche", dim: int = 3,
                       increments: int | None = None) -> RunConfig:
    """A manufactured run for one of the verification families (nhk-c, svk-c, nhk-i, svk-i)."""
    family = family.lower()
    if family not in CASE_NAMES:
        raise ConfigurationError(f"unknown family {family!r}; expected one of {CASE_NAMES}")
    law = MaterialLaw.parse(family)
    cfg = RunConfig(
        name=f"convergence-{family}",
        description=f"{law.name} manufactured solution, {dirichlet} Dirichlet conditions",
        mesh=MeshConfig(dim=dim, cells=[levels[0]] * dim),
        material=MaterialConfig(law=family.upper(), mu=1.0, lam=10.0),
        manufactured=ManufacturedConfig(case=family, levels=list(levels), degrees=list(degrees),
                                        dirichlet=dirichlet, increments=increments),
    )
    validate_config(cfg)
    return cfg
