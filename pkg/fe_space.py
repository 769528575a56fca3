# fe_space.py
"""
Broken polynomial spaces.

Bases are monomials in physical coordinates, centred on the entity and
scaled by its diameter, then orthonormalized against the entity quadrature
(Cholesky of the Gram matrix). The Cholesky factor is lower triangular and
monomials are ordered by total degree, so the first dim P^k functions of a
degree-(k+1) basis are the degree-k basis.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from math import comb

import numpy as np

from errors import InvalidArgumentError, NumericError
from mesh import Mesh

log = logging.getLogger(__name__)


def poly_dim(dim: int, degree: int) -> int:
    return comb(degree + dim, dim)


def monomial_exponents(dim: int, degree: int) -> np.ndarray:
    """Exponent table (n, dim), ordered by total degree."""
    if degree < 0:
        raise InvalidArgumentError(f"polynomial degree must be >= 0, got {degree}")
    out: list[tuple[int, ...]] = []
    for total in range(degree + 1):
        out.extend(_compositions(total, dim))
    return np.array(out, dtype=np.int64).reshape(-1, dim)


def _compositions(total: int, parts: int) -> list[tuple[int, ...]]:
    if parts == 0:
        return [()] if total == 0 else []
    if parts == 1:
        return [(total,)]
    return [(first, *rest) for first in range(total, -1, -1)
            for rest in _compositions(total - first, parts - 1)]


# ───────────────────────── orthonormal basis ──────────────────────
@dataclass(frozen=True, eq=False)
class OrthonormalBasis:
    """
    psi_i(x) = sum_j coeffs[i, j] * m_j((x - origin) @ frame / scale)
    for a batch of entities (cells or faces).
    """
    degree: int
    exponents: np.ndarray   # (nm, dl)
    origin: np.ndarray      # (n, d)
    frame: np.ndarray       # (n, d, dl) orthonormal columns
    scale: np.ndarray       # (n,)
    coeffs: np.ndarray      # (n, nm, nm) lower triangular

    @property
    def size(self) -> int:
        return len(self.exponents)

    @classmethod
    def build(cls, degree: int, points: np.ndarray, weights: np.ndarray,
              origin: np.ndarray, frame: np.ndarray, scale: np.ndarray) -> "OrthonormalBasis":
        exps = monomial_exponents(frame.shape[-1], degree)
        raw = cls(degree, exps, origin, frame, scale,
                  np.broadcast_to(np.eye(len(exps)), (len(origin), len(exps), len(exps))))
        m = raw.values(points)
        gram = np.einsum("nq,nqi,nqj->nij", weights, m, m)
        try:
            chol = np.linalg.cholesky(gram)
        except np.linalg.LinAlgError as exc:
            raise NumericError("singular local mass matrix (degenerate entity map?)") from exc
        if log.isEnabledFor(logging.DEBUG) and len(gram):
            log.debug("degree %d monomial Gram: max condition number %.2e",
                      degree, float(np.linalg.cond(gram).max()))
        coeffs = np.linalg.inv(chol)
        return cls(degree, exps, origin, frame, scale, coeffs)

    def _local(self, points: np.ndarray, rows: np.ndarray | None) -> tuple[np.ndarray, ...]:
        sl = slice(None) if rows is None else rows
        xi = np.einsum("nqd,ndk->nqk", points - self.origin[sl][:, None, :], self.frame[sl])
        return xi / self.scale[sl][:, None, None], sl

    def values(self, points: np.ndarray, rows: np.ndarray | None = None) -> np.ndarray:
        """(n, nq, nm) basis values at physical points (n, nq, d)."""
        xi, sl = self._local(points, rows)
        mono = np.prod(xi[:, :, None, :] ** self.exponents[None, None], axis=-1)
        return np.einsum("nij,nqj->nqi", self.coeffs[sl], mono)

    def gradients(self, points: np.ndarray, rows: np.ndarray | None = None) -> np.ndarray:
        """(n, nq, nm, d) physical gradients."""
        xi, sl = self._local(points, rows)
        e = self.exponents
        dl = e.shape[1]
        dmono = np.empty(xi.shape[:2] + (len(e), dl))
        for k in range(dl):
            lowered = e.copy()
            lowered[:, k] = np.maximum(e[:, k] - 1, 0)
            dmono[..., k] = e[None, None, :, k] * np.prod(xi[:, :, None, :] ** lowered[None, None], axis=-1)
        dref = np.einsum("nij,nqjk->nqik", self.coeffs[sl], dmono)
        return np.einsum("nqik,ndk->nqid", dref, self.frame[sl]) / self.scale[sl][:, None, None, None]


def cell_basis(mesh: Mesh, degree: int, quad_degree: int | None = None,
               cells: np.ndarray | None = None) -> OrthonormalBasis:
    qd = max(2 * degree, quad_degree or 0)
    cq = mesh.cell_quadrature(qd)
    sl = slice(None) if cells is None else np.asarray(cells)
    pts, wts = cq.points[sl], cq.weights[sl]
    n = len(pts)
    frame = np.broadcast_to(np.eye(mesh.dim), (n, mesh.dim, mesh.dim))
    return OrthonormalBasis.build(degree, pts, wts, mesh.cell_centroids[sl],
                                  frame, mesh.cell_diameters[sl])


def face_frames(mesh: Mesh, faces: np.ndarray) -> np.ndarray:
    """Orthonormal tangent frames (n, d, d-1) for the given faces."""
    normals = mesh.face_normals()[faces]
    if mesh.dim == 2:
        return np.stack([-normals[:, 1], normals[:, 0]], axis=-1)[:, :, None]
    verts = mesh.points[mesh.face_vertices[faces]]
    t1 = verts[:, 1] - verts[:, 0]
    t1 -= np.einsum("nd,nd->n", t1, normals)[:, None] * normals
    t1 /= np.linalg.norm(t1, axis=1)[:, None]
    t2 = np.cross(normals, t1)
    return np.stack([t1, t2], axis=-1)


def face_basis(mesh: Mesh, faces: np.ndarray, degree: int,
               quad_degree: int | None = None) -> OrthonormalBasis:
    faces = np.asarray(faces, dtype=np.int64)
    fq = mesh.face_quadrature(max(2 * degree, quad_degree or 0), faces)
    return OrthonormalBasis.build(degree, fq.points, fq.weights, mesh.face_centroids[faces],
                                  face_frames(mesh, faces), mesh.face_diameters[faces])


# ─────────────────────────── spaces ───────────────────────────────
class BrokenSpace:
    """P^k(T_h)^ncomp with one orthonormal basis per cell."""

    def __init__(self, mesh: Mesh, degree: int, ncomp: int = 1,
                 quad_degree: int | None = None) -> None:
        if degree < 0:
            raise InvalidArgumentError(f"polynomial degree must be >= 0, got {degree}")
        self.mesh, self.degree, self.ncomp = mesh, degree, ncomp
        self.quad_degree = quad_degree if quad_degree is not None else 2 * degree + 2
        self.basis = cell_basis(mesh, degree, self.quad_degree)

    @property
    def local_dim(self) -> int:
        return poly_dim(self.mesh.dim, self.degree)

    @property
    def size(self) -> int:
        return self.mesh.n_cells * self.ncomp * self.local_dim

    def quadrature(self, degree: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        cq = self.mesh.cell_quadrature(degree if degree is not None else self.quad_degree)
        return cq.points, cq.weights

    def evaluate(self, coeffs: np.ndarray, points: np.ndarray,
                 rows: np.ndarray | None = None) -> np.ndarray:
        """Field values at points (n, nq, d): (n, nq) scalar or (n, nq, ncomp)."""
        psi = self.basis.values(points, rows)
        c = coeffs if rows is None else coeffs[rows]
        if self.ncomp == 1 and c.ndim == 2:
            return np.einsum("nqj,nj->nq", psi, c)
        return np.einsum("nqj,naj->nqa", psi, c)

    def gradient(self, coeffs: np.ndarray, points: np.ndarray,
                 rows: np.ndarray | None = None) -> np.ndarray:
        """Broken gradient (n, nq, ncomp, d) of a vector field."""
        dpsi = self.basis.gradients(points, rows)
        c = coeffs if rows is None else coeffs[rows]
        return np.einsum("nqjb,naj->nqab", dpsi, c)


class FaceSpace:
    """P^k(F)^d on a set of faces (the multiplier region)."""

    def __init__(self, mesh: Mesh, faces: np.ndarray, degree: int,
                 quad_degree: int | None = None) -> None:
        self.mesh, self.degree = mesh, degree
        self.faces = np.asarray(faces, dtype=np.int64)
        self.ncomp = mesh.dim
        self.quad_degree = quad_degree if quad_degree is not None else 2 * degree + 2
        self.basis = face_basis(mesh, self.faces, degree, self.quad_degree) if len(self.faces) else None

    @property
    def local_dim(self) -> int:
        return self.ncomp * poly_dim(self.mesh.dim - 1, self.degree)

    @property
    def size(self) -> int:
        return len(self.faces) * self.local_dim

    def quadrature(self, degree: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        fq = self.mesh.face_quadrature(degree if degree is not None else self.quad_degree, self.faces)
        return fq.points, fq.weights


@dataclass(frozen=True)
class ElementBasis:
    """Basis of P^degree on one element, tabulated at its quadrature points."""
    element: int
    degree: int
    points: np.ndarray      # (nq, d)
    weights: np.ndarray     # (nq,)
    values: np.ndarray      # (nq, nk)
    gradients: np.ndarray   # (nq, nk, d)
    basis: OrthonormalBasis

    def at(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        pts = np.asarray(points, dtype=float)[None]
        return self.basis.values(pts)[0], self.basis.gradients(pts)[0]

    @property
    def gram(self) -> np.ndarray:
        return np.einsum("q,qi,qj->ij", self.weights, self.values, self.values)


def element_basis(mesh: Mesh, element: int, degree: int,
                  quad_degree: int | None = None) -> ElementBasis:
    if degree < 0:
        raise InvalidArgumentError(f"polynomial degree must be >= 0, got {degree}")
    qd = quad_degree if quad_degree is not None else 2 * degree + 2
    basis = cell_basis(mesh, degree, qd, cells=np.array([element]))
    cq = mesh.cell_quadrature(max(2 * degree, qd))
    pts = cq.points[element][None]
    return ElementBasis(element, degree, pts[0], cq.weights[element],
                        basis.values(pts)[0], basis.gradients(pts)[0], basis)


# ─────────────────────────── projection ───────────────────────────
def l2_project(target, space: BrokenSpace | FaceSpace,
               quad_degree: int | None = None) -> np.ndarray:
    """
    Element-wise (face-wise) L2 projection of `target(points (n, d))`.

    Returns coefficients (n, ncomp, nk), or (n, nk) for a scalar BrokenSpace.
    """
    qd = quad_degree if quad_degree is not None else space.quad_degree
    pts, wts = space.quadrature(qd)
    n, nq, d = pts.shape
    vals = np.asarray(target(pts.reshape(-1, d)), dtype=float)
    scalar = vals.ndim == 1
    vals = vals.reshape(n, nq, -1)
    if vals.shape[-1] != space.ncomp:
        raise InvalidArgumentError(
            f"target has {vals.shape[-1]} components, space has {space.ncomp}")
    if isinstance(space, FaceSpace) and space.basis is None:
        return np.zeros((0, space.ncomp, 1))
    psi = space.basis.values(pts)
    mass = np.einsum("nq,nqi,nqj->nij", wts, psi, psi)
    rhs = np.einsum("nq,nqi,nqa->nia", wts, psi, vals)
    try:
        coeffs = np.linalg.solve(mass, rhs)
    except np.linalg.LinAlgError as exc:
        raise NumericError("singular local mass matrix in L2 projection") from exc
    coeffs = np.transpose(coeffs, (0, 2, 1))
    if scalar and isinstance(space, BrokenSpace) and space.ncomp == 1:
        return coeffs[:, 0, :]
    return coeffs
