# vtk_writer.py
"""
Legacy ASCII VTK output of a discrete state on the deformed configuration.

Each cell gets its own copy of its vertices (the displacement is
discontinuous), moved to x = X + u_h(X). Point data: displacement and
pressure traces; cell data: von Mises stress, the largest eta_F over the
cell's faces and the mean smallest eigenvalue of the elasticity tensor.
"""
from __future__ import annotations

import logging
from pathlib import Path

import meshio
import numpy as np

from assembly import DiscreteState, Problem
from dg_core import def_grad_volume
from errors import DGHyperError
from hyperelastic import Kinematics, cauchy_stress, elasticity_tensor, von_mises
from stabilization import tensor_min_eigenvalue

log = logging.getLogger(__name__)

MESHIO_CELLS = {"triangle": "triangle", "quadrilateral": "quad",
                "tetrahedron": "tetra", "hexahedron": "hexahedron"}


def vertex_values(problem: Problem, coeffs: np.ndarray) -> np.ndarray:
    """DG field evaluated at every cell's own vertices: (ne, nvc, ...)."""
    mesh, ops = problem.mesh, problem.ops
    psi = ops.basis.values(mesh.points[mesh.cells])[..., :ops.nk]
    return np.einsum("evj,e...j->ev...", psi, coeffs)


def cell_fields(problem: Problem, state: DiscreteState, t: float = 1.0,
                eta: np.ndarray | None = None) -> dict[str, np.ndarray]:
    ops, law, params = problem.ops, problem.law, problem.params
    lift = ops.dirichlet_lift(problem.nitsche_data(t))
    F = def_grad_volume(ops, state.u, lift)
    kin = Kinematics(F)
    p = np.einsum("eqj,ej->eq", ops.psi[..., :ops.nk], state.p) if problem.incompressible else 0.0
    vol = ops.weights.sum(axis=1)
    out: dict[str, np.ndarray] = {"min_jacobian": kin.J.min(axis=1)}
    try:
        vm = von_mises(cauchy_stress(law, params, kin, p))
        out["von_mises"] = np.einsum("eq,eq->e", ops.weights, vm) / vol
        lam_min = tensor_min_eigenvalue(elasticity_tensor(law, params, kin, p))
        out["min_eigenvalue"] = np.einsum("eq,eq->e", ops.weights, lam_min) / vol
    except DGHyperError as exc:
        log.warning("stress fields skipped: %s", exc)
    eta_cell = np.zeros(problem.mesh.n_cells)
    if eta is not None and len(eta):
        np.maximum.at(eta_cell, ops.fcells[:, 0], eta)
        inner = ops.is_internal
        np.maximum.at(eta_cell, ops.fcells[inner, 1], eta[inner])
    out["eta_max"] = eta_cell
    return out


def export_vtk(path: str | Path, problem: Problem, state: DiscreteState, t: float = 1.0,
               eta: np.ndarray | None = None) -> Path:
    """Write the deformed mesh with point and cell fields; returns the path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mesh = problem.mesh
    ne, nvc = mesh.cells.shape
    X = mesh.points[mesh.cells]                                          # (ne, nvc, d)
    u = vertex_values(problem, state.u)                                  # (ne, nvc, d)
    x = (X + u).reshape(-1, mesh.dim)
    pad = np.zeros((len(x), 3 - mesh.dim))
    disp = u.reshape(-1, mesh.dim)
    point_data = {"displacement": np.hstack([disp, pad])}
    if problem.incompressible:
        point_data["pressure"] = vertex_values(problem, state.p).reshape(-1)
    cells = [(MESHIO_CELLS[mesh.cell_type], np.arange(ne * nvc).reshape(ne, nvc))]
    cell_data = {k: [v] for k, v in cell_fields(problem, state, t, eta).items()}
    out = meshio.Mesh(np.hstack([x, pad]), cells, point_data=point_data, cell_data=cell_data)
    try:
        meshio.write(path, out, file_format="vtk", binary=False)
    except OSError as exc:
        raise DGHyperError(f"cannot write {path}: {exc}") from exc
    log.debug("wrote %s", path)
    return path
