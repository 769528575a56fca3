# assembly.py
"""
Residuals and Jacobian of the BR2 hyperelasticity problem.

Unknowns are laid out block by block: displacement coefficients u (ne, d, nk),
pressure p (ne, nk) in the incompressible regime, multipliers (nL, d, nfk)
on the Lagrange-Dirichlet faces. Residual and Jacobian come out of the same
element/face sweep so the constitutive evaluations are shared.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterator

import numpy as np
import scipy.sparse as sp

from dg_core import BR2Operators, DirichletLift, def_grad_faces, def_grad_volume, penalty_lifting
from errors import InvalidArgumentError, InvalidStateError, UnsupportedFeatureError
from hyperelastic import Kinematics, LameParams, MaterialLaw, elasticity_tensor, first_piola
from mesh import BoundaryPartition, FaceKind, Mesh
from stabilization import StabilizationParams, eta_face, face_lambda

log = logging.getLogger(__name__)

# ─────────────────────────── tunables ─────────────────────────────
CHUNK = 256                 # cells / faces per vectorized Jacobian batch
_SIDE_SIGN = np.array([1.0, -1.0])
_SIGMA_INTERNAL = np.array([[1.0, -1.0], [-1.0, 1.0]])
# ──────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class Load:
    """
    Vector field applied along the loading path. Fields that do not depend
    on the loading fraction t are scaled by t; `explicit_t` fields receive t.
    """
    fn: Callable[..., np.ndarray]
    explicit_t: bool = False

    def __call__(self, X: np.ndarray, t: float) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if self.explicit_t:
            val = self.fn(X, t)
        else:
            val = t * np.asarray(self.fn(X), dtype=float)
        return np.broadcast_to(np.asarray(val, dtype=float), X.shape)

    @classmethod
    def constant(cls, value) -> "Load":
        vec = np.asarray(value, dtype=float)
        return cls(lambda X: np.broadcast_to(vec, X.shape))


@dataclass
class Problem:
    mesh: Mesh
    partition: BoundaryPartition
    law: MaterialLaw
    params: LameParams
    degree: int = 1
    stabilization: StabilizationParams = field(default_factory=StabilizationParams)
    body_force: Load | None = None          # rho f, per unit reference volume
    density: float = 1.0
    quad_degree: int | None = None

    def __post_init__(self) -> None:
        if self.degree < 1:
            raise InvalidArgumentError(f"degree must be >= 1, got {self.degree}")
        kinds = set(np.unique(self.partition.kind).tolist())
        if self.incompressible and not kinds & {FaceKind.NEUMANN, FaceKind.LAGRANGE}:
            raise UnsupportedFeatureError(
                "incompressible problem with Nitsche Dirichlet data on the whole boundary: "
                "the pressure is only determined up to a constant")

    @property
    def incompressible(self) -> bool:
        return self.law.incompressible

    @cached_property
    def ops(self) -> BR2Operators:
        return BR2Operators(self.mesh, self.partition, self.degree, self.quad_degree)

    @cached_property
    def dofmap(self) -> "DofMap":
        ops = self.ops
        return DofMap(self.mesh.n_cells, self.mesh.dim, ops.nk,
                      len(self.partition.lagrange_faces), ops.nfk, self.incompressible)

    def boundary_values(self, faces: np.ndarray, points: np.ndarray, t: float) -> np.ndarray:
        """Region data (Dirichlet value or traction) at face points (n, nq, d)."""
        out = np.zeros(points.shape)
        groups = self.partition.group[faces]
        for g in np.unique(groups):
            if g < 0:
                continue
            load = self.partition.regions[g].value
            if load is None:
                continue
            if not callable(load):
                load = Load.constant(load)
            sel = groups == g
            pts = points[sel]
            out[sel] = load(pts.reshape(-1, pts.shape[-1]), t).reshape(pts.shape)
        return out

    def nitsche_data(self, t: float) -> np.ndarray:
        ops = self.ops
        return self.boundary_values(ops.faces, ops.fpoints, t) * ops.is_nitsche[:, None, None]


@dataclass(frozen=True)
class DofMap:
    n_cells: int
    dim: int
    nk: int
    n_lagrange: int
    nfk: int
    incompressible: bool

    @property
    def n_u(self) -> int:
        return self.n_cells * self.dim * self.nk

    @property
    def n_p(self) -> int:
        return self.n_cells * self.nk if self.incompressible else 0

    @property
    def n_lam(self) -> int:
        return self.n_lagrange * self.dim * self.nfk

    @property
    def size(self) -> int:
        return self.n_u + self.n_p + self.n_lam

    @property
    def offsets(self) -> dict[str, int]:
        return {"u": 0, "p": self.n_u, "lam": self.n_u + self.n_p}

    def slice(self, block: str) -> slice:
        start = self.offsets[block]
        return slice(start, start + {"u": self.n_u, "p": self.n_p, "lam": self.n_lam}[block])

    def u_dofs(self, cell: int) -> np.ndarray:
        n = self.dim * self.nk
        return np.arange(cell * n, (cell + 1) * n)

    def p_dofs(self, cell: int) -> np.ndarray:
        return self.n_u + np.arange(cell * self.nk, (cell + 1) * self.nk)

    def lam_dofs(self, local_face: int) -> np.ndarray:
        n = self.dim * self.nfk
        return self.offsets["lam"] + np.arange(local_face * n, (local_face + 1) * n)

    def locate(self, row: int) -> tuple[str, int]:
        """(block, cell or multiplier face) owning a global row."""
        if row < self.n_u:
            return "u", row // (self.dim * self.nk)
        if row < self.n_u + self.n_p:
            return "p", (row - self.n_u) // self.nk
        return "lam", (row - self.n_u - self.n_p) // (self.dim * self.nfk)


@dataclass
class DiscreteState:
    u: np.ndarray                   # (ne, d, nk)
    p: np.ndarray                   # (ne, nk), zeros when compressible
    lam: np.ndarray                 # (nL, d, nfk)

    @classmethod
    def zeros(cls, dofmap: DofMap) -> "DiscreteState":
        return cls(np.zeros((dofmap.n_cells, dofmap.dim, dofmap.nk)),
                   np.zeros((dofmap.n_cells, dofmap.nk)),
                   np.zeros((dofmap.n_lagrange, dofmap.dim, dofmap.nfk)))

    def vector(self, dofmap: DofMap) -> np.ndarray:
        parts = [self.u.ravel()]
        if dofmap.incompressible:
            parts.append(self.p.ravel())
        parts.append(self.lam.ravel())
        return np.concatenate(parts)

    @classmethod
    def from_vector(cls, vec: np.ndarray, dofmap: DofMap) -> "DiscreteState":
        u = vec[dofmap.slice("u")].reshape(dofmap.n_cells, dofmap.dim, dofmap.nk)
        if dofmap.incompressible:
            p = vec[dofmap.slice("p")].reshape(dofmap.n_cells, dofmap.nk)
        else:
            p = np.zeros((dofmap.n_cells, dofmap.nk))
        lam = vec[dofmap.slice("lam")].reshape(dofmap.n_lagrange, dofmap.dim, dofmap.nfk)
        return cls(u.copy(), p.copy(), lam.copy())

    def copy(self) -> "DiscreteState":
        return DiscreteState(self.u.copy(), self.p.copy(), self.lam.copy())


@dataclass
class LocalResiduals:
    motion: np.ndarray              # (ne, d, nk)
    incompressibility: np.ndarray   # (ne, nk), zeros when compressible
    dirichlet: np.ndarray           # (nL, d, nfk)

    def vector(self, dofmap: DofMap) -> np.ndarray:
        return DiscreteState(self.motion, self.incompressibility, self.dirichlet).vector(dofmap)


@dataclass
class BlockSystem:
    matrix: sp.csr_matrix
    residual: np.ndarray
    dofmap: DofMap
    eta: np.ndarray

    def block(self, rows: str, cols: str) -> sp.csr_matrix:
        return self.matrix[self.dofmap.slice(rows), :][:, self.dofmap.slice(cols)]


# ─────────────────────────── face states ──────────────────────────
def _chunks(n: int, size: int = CHUNK) -> Iterator[slice]:
    for start in range(0, n, size):
        yield slice(start, min(start + size, n))


def _check_volume(F: np.ndarray) -> np.ndarray:
    J = np.linalg.det(F)
    if np.any(J <= 0.0):
        e, q = np.unravel_index(int(np.argmin(J)), J.shape)
        raise InvalidStateError(float(J[e, q]), "element", int(e), int(q))
    return J


def _check_faces(ops: BR2Operators, F: np.ndarray) -> np.ndarray:
    J = np.linalg.det(F)
    live = np.where(ops.avgw[:, :, None] > 0.0, J, 1.0)
    if np.any(live <= 0.0):
        f, _, q = np.unravel_index(int(np.argmin(live)), live.shape)
        raise InvalidStateError(float(live.min()), "face", int(ops.faces[f]), int(q))
    return J


def face_states(problem: Problem, state: DiscreteState, t: float = 1.0,
                lift: DirichletLift | None = None) -> tuple[np.ndarray, np.ndarray]:
    """F^{k+1}_TF and pressure traces on both sides of every active face."""
    ops = problem.ops
    if lift is None:
        lift = ops.dirichlet_lift(problem.nitsche_data(t))
    F = def_grad_faces(ops, state.u, lift)
    p = ops.face_traces(state.p) if problem.incompressible else np.zeros(F.shape[:3])
    return F, p


def face_eta(problem: Problem, state: DiscreteState, t: float = 1.0) -> np.ndarray:
    """eta_F per active face for the given state."""
    ops, stab = problem.ops, problem.stabilization
    if stab.beta == 0.0 or not len(ops.faces):
        return np.full(len(ops.faces), stab.epsilon)
    F, p = face_states(problem, state, t)
    _check_faces(ops, F)
    lam = face_lambda(problem.law, problem.params, F, p, ops.fweights, ops.avgw)
    return eta_face(stab, lam)


# ─────────────────────────── the sweep ────────────────────────────
class _Triplets:
    def __init__(self) -> None:
        self.rows: list[np.ndarray] = []
        self.cols: list[np.ndarray] = []
        self.vals: list[np.ndarray] = []

    def add(self, rows: np.ndarray, cols: np.ndarray, vals: np.ndarray) -> None:
        rows, cols, vals = np.broadcast_arrays(rows, cols, vals)
        self.rows.append(rows.ravel())
        self.cols.append(cols.ravel())
        self.vals.append(vals.ravel())

    def matrix(self, n: int, drop_row: int, drop_col: int) -> sp.csr_matrix:
        if not self.rows:
            return sp.csr_matrix((n, n))
        r, c, v = (np.concatenate(x) for x in (self.rows, self.cols, self.vals))
        keep = (r < drop_row) & (c < drop_col) & (r >= 0) & (c >= 0)
        return sp.coo_matrix((v[keep], (r[keep], c[keep])), shape=(n, n)).tocsr()


def _sweep(problem: Problem, state: DiscreteState, t: float, eta: np.ndarray | None,
           jacobian: bool) -> tuple[LocalResiduals, sp.csr_matrix | None, np.ndarray]:
    ops, law, params = problem.ops, problem.law, problem.params
    dm = problem.dofmap
    ne, d, nk = dm.n_cells, dm.dim, dm.nk
    incompressible = problem.incompressible
    u, p = state.u, state.p
    psik, dpsik = ops.psi[..., :nk], ops.dpsi[..., :nk, :]
    w = ops.weights

    g_face = problem.nitsche_data(t)
    lift = ops.dirichlet_lift(g_face)
    if eta is None:
        eta = face_eta(problem, state, t)

    r_u = np.zeros((ne + 1, d, nk))
    r_p = np.zeros((ne + 1, nk))
    trip = _Triplets() if jacobian else None

    def udof(cell: np.ndarray) -> np.ndarray:    # (…,) -> (…, d, nk); dummy cells map past n_u
        return (cell[..., None, None] * d + np.arange(d)[:, None]) * nk + np.arange(nk)

    def pdof(cell: np.ndarray) -> np.ndarray:
        return dm.n_u + cell[..., None] * nk + np.arange(nk)

    big = dm.size + 1
    ubad = np.where(np.arange(ne + 1) == ne, big, 0)   # pushes dummy-cell dofs out of range

    # ---------- volume ----------
    Fv = def_grad_volume(ops, u, lift)
    Jv = _check_volume(Fv)
    pv = np.einsum("eqj,ej->eq", psik, p) if incompressible else np.zeros(Jv.shape)
    kin = Kinematics(Fv)
    Pv = first_piola(law, params, kin, pv)
    r_u[:ne] += np.einsum("eq,eqab,eqjb->eaj", w, Pv, dpsik)
    if problem.body_force is not None:
        f = problem.body_force(ops.points.reshape(-1, d), t).reshape(ops.points.shape)
        r_u[:ne] -= problem.density * np.einsum("eq,eqa,eqj->eaj", w, f, psik)
    if incompressible:
        r_p[:ne] += np.einsum("eq,eq,eqj->ej", w, Jv - 1.0, psik)

    if jacobian:
        Gv = kin.FinvT if incompressible else None
        for sl in _chunks(ne):
            cells = np.arange(ne)[sl]
            A = elasticity_tensor(law, params, Kinematics(Fv[sl]), pv[sl])
            T1 = np.einsum("eq,eqabcd,eqjb->eqajcd", w[sl], A, dpsik[sl], optimize=True)
            Kv = np.einsum("eqajcd,esqdm->eajscm", T1, ops.g[sl], optimize=True)
            nbr = ops.nbr[sl]
            rows = udof(cells)[:, :, :, None, None, None]
            cols = (udof(nbr) + ubad[nbr][:, :, None, None])[:, None, None, :, :, :]
            trip.add(rows, cols, Kv)
            if incompressible:
                wJG = (w[sl] * Jv[sl])[..., None, None] * Gv[sl]
                Kup = -np.einsum("eqab,eqjb,eqm->eajm", wJG, dpsik[sl], psik[sl])
                trip.add(rows[..., 0, 0, 0][..., None], pdof(cells)[:, None, None, :], Kup)
                Kpu = np.einsum("eqcd,esqdm,eqj->ejscm", wJG, ops.g[sl], psik[sl], optimize=True)
                trip.add(pdof(cells)[:, :, None, None, None],
                         (udof(nbr) + ubad[nbr][:, :, None, None])[:, None], Kpu)

    # ---------- active faces: consistency flux and BR2 penalty ----------
    na = len(ops.faces)
    if na:
        Ff = def_grad_faces(ops, u, lift)
        Jf = _check_faces(ops, Ff)
        pf = ops.face_traces(p) if incompressible else np.zeros(Jf.shape)
        kin_f = Kinematics(Ff)
        Pf = first_piola(law, params, kin_f, pf)
        Pbar = np.einsum("fr,frqab->fqab", ops.avgw, Pf)
        Rbar = penalty_lifting(ops, u, lift)
        flux = -Pbar + eta[:, None, None, None] * Rbar
        test = (ops.avgw > 0.0).astype(float)
        # W1[f, s, q, b, j] = w n^s_b psi^s_j on tested sides
        W1 = np.einsum("fq,s,fqb,fsqj,fs->fsqbj", ops.fweights, _SIDE_SIGN, ops.fnormals,
                       ops.fpsi[..., :nk], test, optimize=True)
        np.add.at(r_u, ops.fcells, np.einsum("fqab,fsqbj->fsaj", flux, W1))

        if incompressible:
            inner = ops.is_internal.astype(float) * problem.stabilization.eta_lbb * ops.h_face
            Wp = np.einsum("f,fq,st,ftqm,fsqj->fsjtm", inner, ops.fweights, _SIGMA_INTERNAL,
                           ops.fpsi[..., :nk], ops.fpsi[..., :nk], optimize=True)
            pp = ops.padded(p)[ops.fcells]                               # (na, 2, nk)
            np.add.at(r_p, ops.fcells, np.einsum("fsjtm,ftm->fsj", Wp, pp))

        if jacobian:
            Gf = kin_f.FinvT
            for sl in _chunks(na):
                cells = ops.fcells[sl]
                A = elasticity_tensor(law, params, Kinematics(Ff[sl]), pf[sl])
                M1 = -np.einsum("fr,frqabcd,frtqdm->ftqabcm", ops.avgw[sl], A, ops.h[sl],
                                optimize=True)
                Kf = np.einsum("fsqbj,ftqabcm->fsajtcm", W1[sl], M1, optimize=True)
                pen = np.einsum("f,fsqbj,ftqbm->fsjtm", eta[sl], W1[sl], ops.LF[sl], optimize=True)
                Kf += np.einsum("fsjtm,ac->fsajtcm", pen, np.eye(d))
                rows = (udof(cells) + ubad[cells][..., None, None])[:, :, :, :, None, None, None]
                cols = (udof(cells) + ubad[cells][..., None, None])[:, None, None, None, :, :, :]
                trip.add(rows, cols, Kf)
                if incompressible:
                    coef = (ops.avgw[sl][:, :, None] * Jf[sl])[..., None, None] * Gf[sl]
                    Kfup = np.einsum("fsqbj,ftqab,ftqm->fsajtm", W1[sl], coef,
                                     ops.fpsi[sl, :, :, :nk], optimize=True)
                    pcols = pdof(cells) + np.where(cells == ne, big, 0)[..., None]
                    trip.add(rows[..., 0, 0, 0][..., None, None], pcols[:, None, None, None], Kfup)
                    prow = pdof(cells) + np.where(cells == ne, big, 0)[..., None]
                    trip.add(prow[:, :, :, None, None], pcols[:, None, None], Wp[sl])

    # ---------- Neumann faces ----------
    nb = ops.neumann
    if len(nb.faces):
        gN = problem.boundary_values(nb.faces, nb.points, t)
        np.add.at(r_u, nb.cells, -np.einsum("fq,fqa,fqj->faj", nb.weights, gN, nb.psi))

    # ---------- Lagrange-multiplier faces ----------
    nL = dm.n_lagrange
    r_lam = np.zeros((nL, d, dm.nfk))
    if nL:
        lb, chi = ops.lagrange, ops.chi
        lamq = np.einsum("fqi,fai->fqa", chi, state.lam)
        np.add.at(r_u, lb.cells, -np.einsum("fq,fqa,fqj->faj", lb.weights, lamq, lb.psi))
        uq = np.einsum("fqj,faj->fqa", lb.psi, u[lb.cells])
        gD = problem.boundary_values(lb.faces, lb.points, t)
        r_lam += np.einsum("fq,fqa,fqi->fai", lb.weights, uq - gD, chi)
        eb = ops.edges
        eta_l = problem.stabilization.eta_lambda
        if len(eb.faces):
            lame = np.einsum("esqi,esai->esqa", eb.chi, state.lam[eb.faces])
            jump = lame - lame[:, ::-1]                                  # own side minus other
            np.add.at(r_lam, eb.faces,
                      eta_l * np.einsum("e,eq,esqa,esqi->esai", eb.h, eb.weights, jump, eb.chi))

        if jacobian:
            B = np.einsum("fq,fqj,fqm->fjm", lb.weights, lb.psi, chi)       # (nL, nk, nfk)
            eye = np.eye(d)
            lam_rows = dm.offsets["lam"] + (np.arange(nL)[:, None, None] * d
                                            + np.arange(d)[:, None]) * dm.nfk + np.arange(dm.nfk)
            urows = udof(lb.cells)
            Bu = -np.einsum("fjm,ac->fajcm", B, eye)
            trip.add(urows[:, :, :, None, None], lam_rows[:, None, None], Bu)
            Bl = np.einsum("fmi,ac->faicm", B, eye)
            trip.add(lam_rows[:, :, :, None, None], urows[:, None, None], Bl)
            if len(eb.faces):
                Ke = eta_l * np.einsum("e,eq,st,esqi,etqm->esitm", eb.h, eb.weights,
                                       _SIGMA_INTERNAL, eb.chi, eb.chi, optimize=True)
                Ke = np.einsum("esitm,ac->esaitcm", Ke, eye)
                lr = lam_rows[eb.faces]                                   # (nE, 2, d, nfk)
                trip.add(lr[:, :, :, :, None, None, None], lr[:, None, None, None], Ke)

    local = LocalResiduals(r_u[:ne], r_p[:ne] if incompressible else np.zeros((ne, nk)), r_lam)
    matrix = trip.matrix(dm.size, dm.size, dm.size) if jacobian else None
    return local, matrix, eta


# ─────────────────────────── public API ───────────────────────────
def local_residuals(problem: Problem, state: DiscreteState, t: float = 1.0,
                    eta: np.ndarray | None = None) -> LocalResiduals:
    return _sweep(problem, state, t, eta, jacobian=False)[0]


def residual_motion_element(problem: Problem, state: DiscreteState, element: int,
                            t: float = 1.0, eta: np.ndarray | None = None) -> np.ndarray:
    """Equation-of-motion residual of one cell against its test functions: (d, nk)."""
    return local_residuals(problem, state, t, eta).motion[element]


def residual_incompressibility_element(problem: Problem, state: DiscreteState, element: int,
                                       t: float = 1.0) -> np.ndarray:
    if not problem.incompressible:
        raise InvalidArgumentError("incompressibility residual needs the incompressible regime")
    eta = np.zeros(len(problem.ops.faces))
    return local_residuals(problem, state, t, eta).incompressibility[element]


def residual_dirichlet_face(problem: Problem, state: DiscreteState, face: int,
                            t: float = 1.0) -> np.ndarray:
    """Multiplier residual of one Lagrange-Dirichlet face (mesh face id): (d, nfk)."""
    hit = np.flatnonzero(problem.partition.lagrange_faces == face)
    if not len(hit):
        raise InvalidArgumentError(f"face {face} is not a Lagrange-Dirichlet face")
    eta = np.zeros(len(problem.ops.faces))
    return local_residuals(problem, state, t, eta).dirichlet[int(hit[0])]


def assemble_residual(problem: Problem, state: DiscreteState, t: float = 1.0,
                      eta: np.ndarray | None = None) -> np.ndarray:
    local, _, _ = _sweep(problem, state, t, eta, jacobian=False)
    return local.vector(problem.dofmap)


def assemble_jacobian(problem: Problem, state: DiscreteState, t: float = 1.0,
                      eta: np.ndarray | None = None) -> BlockSystem:
    """Jacobian (eta_F held fixed) and residual at `state`."""
    local, matrix, eta = _sweep(problem, state, t, eta, jacobian=True)
    return BlockSystem(matrix, local.vector(problem.dofmap), problem.dofmap, eta)
