# conftest.py
from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from assembly import Load, Problem  # noqa: E402
from hyperelastic import LameParams, MaterialLaw  # noqa: E402
from mesh import BoundaryRegion, build_cartesian_mesh, classify_boundary  # noqa: E402
from stabilization import StabilizationParams  # noqa: E402

TOL = 1e-9


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


def strip_regions(dirichlet: str = "nitsche", pull: float = 0.05,
                  clamp: Load | None = None) -> list[BoundaryRegion]:
    """[0, 2] x [0, 1]: left side clamped, right side pulled along x, top and bottom free."""
    clamp = clamp or Load(lambda X: np.column_stack([0.0 * X[:, 0], 0.02 * X[:, 1]]))
    return [
        BoundaryRegion("left", f"dirichlet_{dirichlet}", where=lambda c: c[:, 0] < TOL, value=clamp),
        BoundaryRegion("right", "neumann", where=lambda c: c[:, 0] > 2.0 - TOL, value=[pull, 0.0]),
        BoundaryRegion("free", "neumann", where=lambda c: (c[:, 0] > TOL) & (c[:, 0] < 2.0 - TOL)),
    ]


@pytest.fixture
def strip_problem():
    """Factory for small 2-D problems on the [0, 2] x [0, 1] strip."""
    def build(law: str = "NHK-C", *, cells=(2, 1), dirichlet: str = "nitsche", degree: int = 1,
              simplicial: bool = False, pull: float = 0.05, beta: float = 1.0, epsilon: float = 0.5,
              mu: float = 1.0, lam: float = 10.0, clamp: Load | None = None,
              body_force: Load | None = None) -> Problem:
        mesh = build_cartesian_mesh(2, list(cells), [(0.0, 2.0), (0.0, 1.0)], simplicial=simplicial)
        partition = classify_boundary(mesh, strip_regions(dirichlet, pull, clamp))
        return Problem(mesh, partition, MaterialLaw.parse(law), LameParams(mu, lam), degree,
                       StabilizationParams(beta=beta, epsilon=epsilon), body_force=body_force)
    return build


def project_field(ops, fn) -> np.ndarray:
    """Cell-wise L2 projection of a vector field onto the degree-k displacement basis."""
    psi = ops.psi[..., :ops.nk]
    pts = ops.points
    values = fn(pts.reshape(-1, pts.shape[-1])).reshape(pts.shape[:2] + (-1,))
    mass = np.einsum("eq,eqi,eqj->eij", ops.weights, psi, psi)
    rhs = np.einsum("eq,eqi,eqa->eia", ops.weights, psi, values)
    return np.transpose(np.linalg.solve(mass, rhs), (0, 2, 1))
