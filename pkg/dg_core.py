# dg_core.py
"""
BR2 building blocks: face jumps and averages, jump liftings, the local
discrete gradient and the two discrete deformation gradients.

Everything linear in u is precomputed once per (mesh, partition, degree) as
dense operator tables, so the nonlinear sweep in `assembly` is a handful of
einsums. Conventions:

  * gradients are grad(u)_ab = du_a / dX_b, so F = I + grad(u);
  * the lifting of a face jump phi from side T is the polynomial R with
    int_T R : tau = 1/2 int_F (phi (x) n_TF) : tau for all tau;
  * "active" faces are the internal and Nitsche faces, the only ones
    carrying jumps. Side 0 is the face owner; on Nitsche faces side 1 is a
    dummy cell with index n_cells whose data are all zero.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from errors import ConfigurationError, InvalidArgumentError
from fe_space import OrthonormalBasis, cell_basis, face_basis, poly_dim
from mesh import BoundaryPartition, FaceKind, Mesh

log = logging.getLogger(__name__)

_SIGMA_INTERNAL = np.array([[1.0, -1.0], [-1.0, 1.0]])
_SIGMA_NITSCHE = np.array([[2.0, 0.0], [0.0, 0.0]])
_SIDE_SIGN = np.array([1.0, -1.0])


@dataclass(frozen=True, eq=False)
class FaceBlock:
    """Quadrature data for a set of boundary faces seen from their owner cell."""
    faces: np.ndarray       # (n,) mesh face ids
    cells: np.ndarray       # (n,) owner cells
    points: np.ndarray      # (n, nq, d)
    weights: np.ndarray     # (n, nq)
    normals: np.ndarray     # (n, nq, d)
    psi: np.ndarray         # (n, nq, nk) owner basis traces


@dataclass(frozen=True, eq=False)
class EdgeBlock:
    """Internal edges of the multiplier region, one row per pair of faces."""
    faces: np.ndarray       # (nE, 2) local multiplier-face ids
    weights: np.ndarray     # (nE, nqe)
    h: np.ndarray           # (nE,)
    chi: np.ndarray         # (nE, 2, nqe, nfk) face basis traces on the edge


@dataclass(frozen=True, eq=False)
class DirichletLift:
    """Affine parts of the BR2 operators coming from Nitsche data g_D."""
    volume: np.ndarray      # (ne, nq, d, d) added to the element discrete gradient
    face: np.ndarray        # (na, nqf, d, d) added to the owner-side face gradient
    penalty: np.ndarray     # (na, nqf, d, d) added to the averaged penalty lifting


@dataclass(frozen=True)
class LiftedTensor:
    element: int
    degree: int
    coeffs: np.ndarray      # (d, d, dim P^degree)
    basis: OrthonormalBasis

    def __call__(self, points: np.ndarray) -> np.ndarray:
        """Tensor values (nq, d, d) at physical points (nq, d)."""
        psi = self.basis.values(np.asarray(points)[None], np.array([0]))[0][:, :self.coeffs.shape[-1]]
        return np.einsum("qi,abi->qab", psi, self.coeffs)


class BR2Operators:
    """Precomputed BR2 operator tables for one mesh, boundary partition and degree k."""

    def __init__(self, mesh: Mesh, partition: BoundaryPartition, degree: int,
                 quad_degree: int | None = None) -> None:
        if degree < 1:
            raise InvalidArgumentError(f"BR2 needs degree k >= 1, got {degree}")
        self.mesh, self.partition = mesh, partition
        self.k = degree
        self.quad_degree = quad_degree if quad_degree is not None else 2 * degree + 2
        self.dim = d = mesh.dim
        self.nk = poly_dim(d, degree)
        self.nk1 = poly_dim(d, degree + 1)
        self.nfk = poly_dim(d - 1, degree)
        ne = mesh.n_cells
        qd = self.quad_degree

        # ---------- element data ----------
        self.basis = cell_basis(mesh, degree + 1, qd)
        cq = mesh.cell_quadrature(max(qd, 2 * degree + 2))
        self.points, self.weights = cq.points, cq.weights
        self.psi = self.basis.values(cq.points)
        self.dpsi = self.basis.gradients(cq.points)

        # ---------- active faces ----------
        kind = partition.kind
        self.faces = np.flatnonzero((kind == FaceKind.INTERNAL) | (kind == FaceKind.NITSCHE))
        na = len(self.faces)
        self.is_nitsche = kind[self.faces] == FaceKind.NITSCHE
        self.is_internal = ~self.is_nitsche
        fq = mesh.face_quadrature(qd, self.faces)
        self.fpoints, self.fweights, self.fnormals = fq.points, fq.weights, fq.normals
        self.fcells = mesh.face_cells[self.faces].copy()
        self.fcells[self.is_nitsche, 1] = ne
        nqf = self.fweights.shape[1]
        self.fpsi = np.zeros((na, 2, nqf, self.nk1))
        self.fdpsi = np.zeros((na, 2, nqf, self.nk1, d))
        owner = self.fcells[:, 0]
        self.fpsi[:, 0] = self.basis.values(self.fpoints, owner)
        self.fdpsi[:, 0] = self.basis.gradients(self.fpoints, owner)
        inner = np.flatnonzero(self.is_internal)
        if len(inner):
            self.fpsi[inner, 1] = self.basis.values(self.fpoints[inner], self.fcells[inner, 1])
            self.fdpsi[inner, 1] = self.basis.gradients(self.fpoints[inner], self.fcells[inner, 1])
        self.sigma = np.where(self.is_nitsche[:, None, None], _SIGMA_NITSCHE, _SIGMA_INTERNAL)
        self.avgw = np.where(self.is_nitsche[:, None], [1.0, 0.0], [0.5, 0.5])
        self.h_face = mesh.face_diameters[self.faces]

        # K[f, s, t, b, i, j] = 1/2 sigma_st int_F n^s_b psi^s_i psi^t_j
        nk = self.nk
        self.K = 0.5 * np.einsum("fst,fq,s,fqb,fsqi,ftqj->fstbij", self.sigma, self.fweights,
                                 _SIDE_SIGN, self.fnormals, self.fpsi, self.fpsi[..., :nk], optimize=True)

        # ---------- cell <-> active face maps ----------
        local = np.full(mesh.n_faces, -1, dtype=np.int64)
        local[self.faces] = np.arange(na)
        self.cell_active = local[mesh.cell_faces]                  # (ne, nfc)
        self.cell_side = mesh.cell_face_side.astype(np.int64)
        nfc = self.cell_active.shape[1]
        self.nbr = np.full((ne, nfc + 1), ne, dtype=np.int64)
        self.nbr[:, 0] = np.arange(ne)

        # g[e, slot, q, b, j]: element discrete gradient G^k acting on the slot's dofs
        nq = self.weights.shape[1]
        g = np.zeros((ne, nfc + 1, nq, d, nk))
        g[:, 0] = np.transpose(self.dpsi[..., :nk, :], (0, 1, 3, 2))
        psik = self.psi[..., :nk]
        for m in range(nfc):
            sel = np.flatnonzero(self.cell_active[:, m] >= 0)
            if not len(sel):
                continue
            a, s = self.cell_active[sel, m], self.cell_side[sel, m]
            Kself = self.K[a, s, s][:, :, :nk, :]
            Kother = self.K[a, s, 1 - s][:, :, :nk, :]
            g[sel, 0] -= np.einsum("eqi,ebij->eqbj", psik[sel], Kself)
            g[sel, 1 + m] = -np.einsum("eqi,ebij->eqbj", psik[sel], Kother)
            self.nbr[sel, 1 + m] = self.fcells[a, 1 - s]
        self.g = g

        # h[f, r, t, q, b, j]: face gradient F^{k+1} on side r acting on side t's dofs
        h = -np.einsum("frqi,frtbij->frtqbj", self.fpsi, self.K)
        for r in range(2):
            h[:, r, r] += np.transpose(self.fdpsi[:, r, :, :nk, :], (0, 1, 3, 2))
        self.h = h

        # LF[f, t, q, b, j]: averaged degree-k penalty lifting at face points
        self.LF = np.einsum("fr,frqi,frtbij->ftqbj", self.avgw, self.fpsi[..., :nk],
                            self.K[:, :, :, :, :nk, :])

        log.debug("BR2 operators: k=%d, %d cells, %d active faces (%d Nitsche)",
                  degree, ne, na, int(self.is_nitsche.sum()))

    # ---------- boundary blocks ----------
    def _face_block(self, faces: np.ndarray) -> FaceBlock:
        fq = self.mesh.face_quadrature(self.quad_degree, faces)
        cells = self.mesh.face_cells[faces, 0]
        psi = self.basis.values(fq.points, cells)[..., :self.nk] if len(faces) else \
            np.zeros((0, fq.points.shape[1], self.nk))
        return FaceBlock(faces, cells, fq.points, fq.weights, fq.normals, psi)

    @cached_property
    def neumann(self) -> FaceBlock:
        return self._face_block(self.partition.neumann)

    @cached_property
    def lagrange(self) -> FaceBlock:
        return self._face_block(self.partition.lagrange_faces)

    @cached_property
    def multiplier_basis(self) -> OrthonormalBasis | None:
        faces = self.partition.lagrange_faces
        return face_basis(self.mesh, faces, self.k, self.quad_degree) if len(faces) else None

    @cached_property
    def chi(self) -> np.ndarray:
        """Multiplier basis at the multiplier-face quadrature points (nL, nq, nfk)."""
        if self.multiplier_basis is None:
            return np.zeros((0, 1, self.nfk))
        return self.multiplier_basis.values(self.lagrange.points)

    @cached_property
    def edges(self) -> EdgeBlock:
        part = self.partition
        n = len(part.edge_pairs)
        rows_w, rows_chi, hs = [], [], []
        for pair, verts in zip(part.edge_pairs, part.edge_vertices):
            pts, w, hE = self.mesh.edge_quadrature(tuple(int(v) for v in verts if v >= 0),
                                                   self.quad_degree)
            chi = np.stack([self.multiplier_basis.values(pts[None], np.array([f]))[0]
                            for f in pair])
            rows_w.append(w)
            rows_chi.append(chi)
            hs.append(hE)
        if not n:
            return EdgeBlock(np.zeros((0, 2), dtype=np.int64), np.zeros((0, 1)),
                             np.zeros(0), np.zeros((0, 2, 1, self.nfk)))
        return EdgeBlock(part.edge_pairs, np.array(rows_w), np.array(hs), np.array(rows_chi))

    # ---------- Dirichlet data ----------
    def dirichlet_lift(self, g_face: np.ndarray | None) -> DirichletLift:
        """
        Affine offsets for Nitsche data `g_face` (na, nqf, d), zero on internal
        faces. The Nitsche jump is 2(u - g_D), so the liftings gain +R(2 g_D).
        """
        ne, nq = self.weights.shape
        na, nqf = self.fweights.shape
        d, nk = self.dim, self.nk
        if g_face is None or not self.is_nitsche.any():
            return DirichletLift(np.zeros((ne, nq, d, d)), np.zeros((na, nqf, d, d)),
                                 np.zeros((na, nqf, d, d)))
        g_face = np.where(self.is_nitsche[:, None, None], g_face, 0.0)
        L = np.einsum("fq,fqa,fqb,fqi->fabi", self.fweights, g_face, self.fnormals, self.fpsi[:, 0])
        Lpad = np.concatenate([L, np.zeros((1,) + L.shape[1:])])
        volume = np.einsum("eqi,emabi->eqab", self.psi[..., :nk], Lpad[self.cell_active][..., :nk])
        face = np.einsum("fqi,fabi->fqab", self.fpsi[:, 0], L)
        penalty = -self.avgw[:, 0, None, None, None] * \
            np.einsum("fqi,fabi->fqab", self.fpsi[:, 0, :, :nk], L[..., :nk])
        return DirichletLift(volume, face, penalty)

    # ---------- helpers on coefficient arrays ----------
    def padded(self, u: np.ndarray) -> np.ndarray:
        """Append the zero dummy cell to a (ne, ..., nk) coefficient array."""
        return np.concatenate([u, np.zeros((1,) + u.shape[1:], dtype=u.dtype)])

    def face_traces(self, coeffs: np.ndarray) -> np.ndarray:
        """Values on both sides of every active face: (na, 2, nqf, ...)."""
        up = self.padded(coeffs)[self.fcells]                        # (na, 2, ..., nk)
        psi = self.fpsi[..., :coeffs.shape[-1]]
        return np.einsum("fsqj,fs...j->fsq...", psi, up)


def _active_index(ops: BR2Operators, face: int) -> int:
    idx = np.flatnonzero(ops.faces == face)
    if not len(idx):
        raise InvalidArgumentError(f"face {face} is not an internal or Nitsche face")
    return int(idx[0])


def _side_of(ops: BR2Operators, a: int, element: int) -> int:
    sides = np.flatnonzero(ops.fcells[a] == element)
    if not len(sides):
        raise InvalidArgumentError(f"element {element} does not touch face {ops.faces[a]}")
    return int(sides[0])


# ─────────────────────────── jumps / averages ─────────────────────
def face_jump(ops: BR2Operators, u: np.ndarray, face: int, side: int = 0,
              dirichlet: np.ndarray | None = None) -> np.ndarray:
    """
    [[u]]_TF at the face quadrature points seen from `side`:
    u_T - u_T' on internal faces, 2(u_T - g_D) on Nitsche faces.
    """
    a = _active_index(ops, face)
    tr = ops.face_traces(u)[a]                                       # (2, nqf, d)
    if ops.is_nitsche[a]:
        if dirichlet is None:
            raise ConfigurationError(f"Nitsche face {face} needs Dirichlet data")
        return 2.0 * (tr[0] - np.asarray(dirichlet))
    return tr[side] - tr[1 - side]


def face_average(ops: BR2Operators, values: np.ndarray, face: int) -> np.ndarray:
    """
    {phi}_F from a per-cell coefficient array (ne, ..., nk): the mean of both
    traces on internal faces, the owner trace on boundary faces.
    """
    if face in set(ops.faces.tolist()):
        a = _active_index(ops, face)
        tr = ops.face_traces(values)[a]
        return tr[0] if ops.is_nitsche[a] else 0.5 * (tr[0] + tr[1])
    fq = ops.mesh.face_quadrature(ops.quad_degree, np.array([face]))
    owner = ops.mesh.face_cells[face, 0]
    psi = ops.basis.values(fq.points, np.array([owner]))[0][:, :values.shape[-1]]
    return np.einsum("qj,...j->q...", psi, values[owner])


def lift_jump(ops: BR2Operators, face: int, element: int, phi: np.ndarray,
              degree: int) -> LiftedTensor:
    """R^degree_FT(phi) for face-point values phi (nqf, d)."""
    if degree < 0:
        raise InvalidArgumentError(f"lifting degree must be >= 0, got {degree}")
    a = _active_index(ops, face)
    s = _side_of(ops, a, element)
    n = _SIDE_SIGN[s] * ops.fnormals[a]
    w = ops.fweights[a]
    if degree <= ops.k + 1:
        basis = _single(ops.basis, element)
        psi = ops.fpsi[a, s, :, :poly_dim(ops.dim, degree)]
    else:
        basis = cell_basis(ops.mesh, degree, ops.quad_degree, cells=np.array([element]))
        psi = basis.values(ops.fpoints[a][None])[0]
    coeffs = 0.5 * np.einsum("q,qa,qb,qi->abi", w, np.asarray(phi), n, psi)
    return LiftedTensor(element, degree, coeffs, basis)


def _single(basis: OrthonormalBasis, e: int) -> OrthonormalBasis:
    sl = slice(e, e + 1)
    return OrthonormalBasis(basis.degree, basis.exponents, basis.origin[sl], basis.frame[sl],
                            basis.scale[sl], basis.coeffs[sl])


# ─────────────────────────── discrete gradients ───────────────────
def discrete_gradients(ops: BR2Operators, u: np.ndarray,
                       lift: DirichletLift | None = None) -> np.ndarray:
    """G^k_T(u) for every cell at its quadrature points: (ne, nq, d, d)."""
    up = ops.padded(u)[ops.nbr]                                      # (ne, slots, d, nk)
    G = np.einsum("espbj,esaj->epab", ops.g, up)
    return G if lift is None else G + lift.volume


def discrete_gradient(ops: BR2Operators, u: np.ndarray, element: int,
                      lift: DirichletLift | None = None) -> np.ndarray:
    up = ops.padded(u)[ops.nbr[element]]
    G = np.einsum("spbj,saj->pab", ops.g[element], up)
    return G if lift is None else G + lift.volume[element]


def def_grad_volume(ops: BR2Operators, u: np.ndarray,
                    lift: DirichletLift | None = None) -> np.ndarray:
    """F^k_T = I + G^k_T(u) at cell quadrature points (ne, nq, d, d)."""
    return np.eye(ops.dim) + discrete_gradients(ops, u, lift)


def def_grad_faces(ops: BR2Operators, u: np.ndarray,
                   lift: DirichletLift | None = None) -> np.ndarray:
    """F^{k+1}_TF = I + grad u|_T - R^{k+1}_FT([[u]]) on both sides: (na, 2, nqf, d, d)."""
    up = ops.padded(u)[ops.fcells]                                   # (na, 2, d, nk)
    F = np.einsum("frtqbj,ftaj->frqab", ops.h, up) + np.eye(ops.dim)
    if lift is not None:
        F[:, 0] += lift.face
    return F


def def_grad_face(ops: BR2Operators, u: np.ndarray, face: int, element: int,
                  lift: DirichletLift | None = None) -> np.ndarray:
    a = _active_index(ops, face)
    s = _side_of(ops, a, element)
    up = ops.padded(u)[ops.fcells[a]]
    F = np.einsum("tqbj,taj->qab", ops.h[a, s], up) + np.eye(ops.dim)
    if lift is not None and s == 0:
        F = F + lift.face[a]
    return F


def penalty_lifting(ops: BR2Operators, u: np.ndarray,
                    lift: DirichletLift | None = None) -> np.ndarray:
    """{R^k_F([[u]])} at active-face quadrature points: (na, nqf, d, d)."""
    up = ops.padded(u)[ops.fcells]
    R = np.einsum("ftqbj,ftaj->fqab", ops.LF, up)
    return R if lift is None else R + lift.penalty
