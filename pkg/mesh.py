# mesh.py
"""
Unstructured mesh with face topology, boundary partitions and quadrature.

A mesh carries a single cell type. Faces are deduplicated by their sorted
vertex key; the first cell that lists a face owns it and its normals point
out of the owner.
"""
from __future__ import annotations

import itertools
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Any, Callable, Iterable, Mapping, Sequence

import numpy as np

from errors import ConfigurationError, InvalidArgumentError, UnsupportedFeatureError
from quadrature import quadrature_rule

log = logging.getLogger(__name__)

# ─────────────────────────── constants ────────────────────────────
DEFAULT_PATCH_ANGLE = 30.0        # degrees, smooth-patch threshold for multiplier faces
# ──────────────────────────────────────────────────────────────────


# ─────────────────────── reference cell tables ────────────────────
@dataclass(frozen=True)
class CellShape:
    name: str
    dim: int
    vertices: tuple[tuple[float, ...], ...]
    faces: tuple[tuple[int, ...], ...]
    face_entity: str
    tensor: bool            # multilinear map, otherwise affine


CELL_SHAPES: dict[str, CellShape] = {
    "triangle": CellShape(
        "triangle", 2, ((0, 0), (1, 0), (0, 1)),
        ((1, 2), (2, 0), (0, 1)), "segment", False),
    "quadrilateral": CellShape(
        "quadrilateral", 2, ((0, 0), (1, 0), (1, 1), (0, 1)),
        ((0, 1), (1, 2), (2, 3), (3, 0)), "segment", True),
    "tetrahedron": CellShape(
        "tetrahedron", 3, ((0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1)),
        ((1, 2, 3), (0, 3, 2), (0, 1, 3), (0, 2, 1)), "triangle", False),
    "hexahedron": CellShape(
        "hexahedron", 3,
        ((0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0),
         (0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1)),
        ((0, 3, 2, 1), (4, 5, 6, 7), (0, 1, 5, 4),
         (1, 2, 6, 5), (2, 3, 7, 6), (3, 0, 4, 7)), "quadrilateral", True),
}
_FACE_SHAPES = {
    "segment": (((0,), (1,)), False),
    "triangle": (((0, 0), (1, 0), (0, 1)), False),
    "quadrilateral": (((0, 0), (1, 0), (1, 1), (0, 1)), True),
}


def shape_functions(vertices: Sequence[Sequence[float]], tensor: bool,
                    ref_points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nodal shape functions N (nq, nv) and their reference gradients (nq, nv, dim)."""
    B = np.asarray(vertices, dtype=float)
    xi = np.asarray(ref_points, dtype=float)
    nq, dim = xi.shape
    nv = len(B)
    if not tensor:
        N = np.column_stack([1.0 - xi.sum(axis=1), xi])
        dN = np.zeros((nq, nv, dim))
        dN[:, 0, :] = -1.0
        dN[:, 1:, :] = np.eye(dim)
        return N, dN
    # factors[q, a, k] = xi_k if B_ak else 1 - xi_k
    factors = B[None] * xi[:, None, :] + (1.0 - B[None]) * (1.0 - xi[:, None, :])
    N = factors.prod(axis=2)
    dN = np.empty((nq, nv, dim))
    for j in range(dim):
        others = np.delete(factors, j, axis=2).prod(axis=2)
        dN[:, :, j] = (2.0 * B[None, :, j] - 1.0) * others
    return N, dN


# ─────────────────────────── quadrature data ──────────────────────
@dataclass(frozen=True)
class CellQuadrature:
    points: np.ndarray      # (ne, nq, d) physical
    weights: np.ndarray     # (ne, nq) including |det J|


@dataclass(frozen=True)
class FaceQuadrature:
    faces: np.ndarray       # (nf,) face indices
    points: np.ndarray      # (nf, nq, d)
    weights: np.ndarray     # (nf, nq)
    normals: np.ndarray     # (nf, nq, d), out of the owner cell


# ─────────────────────────────── Mesh ─────────────────────────────
@dataclass(frozen=True, eq=False)
class Mesh:
    dim: int
    cell_type: str
    points: np.ndarray              # (nv, d)
    cells: np.ndarray               # (ne, nvc)
    face_vertices: np.ndarray       # (nf, nvf) in the owner's local order
    face_cells: np.ndarray          # (nf, 2), -1 on the boundary
    cell_faces: np.ndarray          # (ne, nfc)
    cell_face_side: np.ndarray      # (ne, nfc) 0 owner / 1 neighbour
    face_tags: np.ndarray           # (nf,) -1 when untagged
    tag_names: dict[str, int] = field(default_factory=dict)
    _cache: dict[Any, Any] = field(default_factory=dict, repr=False)

    # ---------- construction ----------
    @classmethod
    def from_cells(cls, points: np.ndarray, cells: np.ndarray, cell_type: str,
                   boundary_tags: Mapping[tuple[int, ...], int] | None = None,
                   tag_names: Mapping[str, int] | None = None) -> "Mesh":
        """Build face topology from a cell connectivity table."""
        if cell_type not in CELL_SHAPES:
            raise UnsupportedFeatureError(f"unsupported cell type {cell_type!r}")
        shape = CELL_SHAPES[cell_type]
        points = np.asarray(points, dtype=float)
        cells = np.asarray(cells, dtype=np.int64)
        if points.ndim != 2 or points.shape[1] != shape.dim:
            raise InvalidArgumentError(
                f"{cell_type} cells need {shape.dim}-D points, got shape {points.shape}")
        if cells.ndim != 2 or cells.shape[1] != len(shape.vertices):
            raise InvalidArgumentError(f"{cell_type} cells need {len(shape.vertices)} vertices")
        if len(cells) == 0:
            raise InvalidArgumentError("mesh has no cells")
        if cells.min() < 0 or cells.max() >= len(points):
            raise InvalidArgumentError("cell references a missing vertex")

        index: dict[tuple[int, ...], int] = {}
        fverts: list[tuple[int, ...]] = []
        fcells: list[list[int]] = []
        nfc = len(shape.faces)
        cell_faces = np.empty((len(cells), nfc), dtype=np.int64)
        cell_side = np.empty((len(cells), nfc), dtype=np.int8)
        for e, cell in enumerate(cells):
            for m, local in enumerate(shape.faces):
                verts = tuple(int(cell[i]) for i in local)
                key = tuple(sorted(verts))
                f = index.get(key)
                if f is None:
                    f = index[key] = len(fverts)
                    fverts.append(verts)
                    fcells.append([e, -1])
                    side = 0
                elif fcells[f][1] == -1 and fcells[f][0] != e:
                    fcells[f][1] = e
                    side = 1
                else:
                    raise InvalidArgumentError(
                        f"non-conforming connectivity: face {key} shared by more than two cells")
                cell_faces[e, m] = f
                cell_side[e, m] = side

        face_cells = np.array(fcells, dtype=np.int64)
        tags = np.full(len(fverts), -1, dtype=np.int64)
        for key, tag in (boundary_tags or {}).items():
            f = index.get(tuple(sorted(key)))
            if f is None or face_cells[f, 1] >= 0:
                raise InvalidArgumentError(f"tagged face {tuple(key)} is not a boundary face")
            tags[f] = tag

        return cls(shape.dim, cell_type, points, cells, np.array(fverts, dtype=np.int64),
                   face_cells, cell_faces, cell_side, tags, dict(tag_names or {}))

    # ---------- sizes ----------
    @property
    def shape(self) -> CellShape:
        return CELL_SHAPES[self.cell_type]

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_faces(self) -> int:
        return len(self.face_vertices)

    @property
    def internal_faces(self) -> np.ndarray:
        return np.flatnonzero(self.face_cells[:, 1] >= 0)

    @property
    def boundary_faces(self) -> np.ndarray:
        return np.flatnonzero(self.face_cells[:, 1] < 0)

    # ---------- geometry ----------
    def _cached(self, key: Any, build: Callable[[], Any]) -> Any:
        if key not in self._cache:
            self._cache[key] = build()
        return self._cache[key]

    @property
    def cell_diameters(self) -> np.ndarray:
        return self._cached("h_cell", lambda: _diameters(self.points[self.cells]))

    @property
    def face_diameters(self) -> np.ndarray:
        return self._cached("h_face", lambda: _diameters(self.points[self.face_vertices]))

    @property
    def cell_centroids(self) -> np.ndarray:
        return self.points[self.cells].mean(axis=1)

    @property
    def face_centroids(self) -> np.ndarray:
        return self.points[self.face_vertices].mean(axis=1)

    @property
    def cell_volumes(self) -> np.ndarray:
        return self.cell_quadrature(1).weights.sum(axis=1)

    @property
    def h(self) -> float:
        return float(self.cell_diameters.max())

    def cell_quadrature(self, degree: int) -> CellQuadrature:
        return self._cached(("cell", degree), lambda: self._cell_quadrature(degree))

    def _cell_quadrature(self, degree: int) -> CellQuadrature:
        shape = self.shape
        # multilinear maps add degree to the integrand through det J
        extra = self.dim - 1 if shape.tensor else 0
        rule = quadrature_rule(shape.name, degree + extra)
        N, dN = shape_functions(shape.vertices, shape.tensor, rule.points)
        X = self.points[self.cells]                          # (ne, nv, d)
        pts = np.einsum("qa,ead->eqd", N, X)
        jac = np.einsum("ead,qak->eqdk", X, dN)
        det = np.abs(np.linalg.det(jac))
        return CellQuadrature(pts, det * rule.weights[None, :])

    def face_quadrature(self, degree: int, faces: np.ndarray | None = None) -> FaceQuadrature:
        full = self._cached(("face", degree), lambda: self._face_quadrature(degree))
        if faces is None:
            return full
        faces = np.asarray(faces, dtype=np.int64)
        return FaceQuadrature(faces, full.points[faces], full.weights[faces], full.normals[faces])

    def _face_quadrature(self, degree: int) -> FaceQuadrature:
        entity = self.shape.face_entity
        ref_vertices, tensor = _FACE_SHAPES[entity]
        extra = 1 if tensor else 0
        rule = quadrature_rule(entity, degree + extra)
        N, dN = shape_functions(ref_vertices, tensor, rule.points)
        X = self.points[self.face_vertices]                  # (nf, nvf, d)
        pts = np.einsum("qa,fad->fqd", N, X)
        tang = np.einsum("fad,qak->fqkd", X, dN)             # (nf, nq, d-1, d)
        if self.dim == 2:
            t = tang[:, :, 0, :]
            raw = np.stack([t[..., 1], -t[..., 0]], axis=-1)
        else:
            raw = np.cross(tang[:, :, 0, :], tang[:, :, 1, :])
        measure = np.linalg.norm(raw, axis=-1)
        normals = raw / measure[..., None]
        outward = self.face_centroids - self.cell_centroids[self.face_cells[:, 0]]
        sign = np.sign(np.einsum("fqd,fd->f", normals, outward))
        sign[sign == 0] = 1.0
        normals = normals * sign[:, None, None]
        return FaceQuadrature(np.arange(self.n_faces), pts,
                              measure * rule.weights[None, :], normals)

    def face_normals(self) -> np.ndarray:
        """Mean unit normal per face (owner outward)."""
        fq = self.face_quadrature(1)
        n = np.einsum("fq,fqd->fd", fq.weights, fq.normals)
        return n / np.linalg.norm(n, axis=1)[:, None]

    def edge_quadrature(self, edge: Sequence[int], degree: int) -> tuple[np.ndarray, np.ndarray, float]:
        """Points, weights and h_E on a mesh edge; in 2-D the edge is a vertex and h_E = 1."""
        if self.dim == 2:
            return self.points[[edge[0]]], np.ones(1), 1.0
        a, b = self.points[edge[0]], self.points[edge[1]]
        rule = quadrature_rule("segment", degree)
        length = float(np.linalg.norm(b - a))
        pts = a[None, :] + rule.points[:, :1] * (b - a)[None, :]
        return pts, rule.weights * length, length


def _diameters(groups: np.ndarray) -> np.ndarray:
    """Largest vertex-to-vertex distance per group of vertices (n, nv, d)."""
    diff = groups[:, :, None, :] - groups[:, None, :, :]
    return np.sqrt((diff ** 2).sum(axis=-1)).max(axis=(1, 2))


# ──────────────────────────── generators ──────────────────────────
_KUHN = [perm for perm in itertools.permutations(range(3))]
_HEX_INDEX = {bits: i for i, bits in enumerate(CELL_SHAPES["hexahedron"].vertices)}


def _kuhn_tets(hexa: np.ndarray) -> list[list[int]]:
    out = []
    for perm in _KUHN:
        corner = [0, 0, 0]
        verts = [hexa[_HEX_INDEX[tuple(corner)]]]
        for axis in perm:
            corner[axis] = 1
            verts.append(hexa[_HEX_INDEX[tuple(corner)]])
        out.append(verts)
    return out


def _compact(points: np.ndarray, cells: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    used, inverse = np.unique(cells, return_inverse=True)
    return points[used], inverse.reshape(cells.shape)


def build_cartesian_mesh(dim: int, cell_counts: int | Sequence[int],
                         box: Sequence[Sequence[float]] | None = None, *,
                         simplicial: bool = False,
                         cell_filter: Callable[[np.ndarray], np.ndarray] | None = None) -> Mesh:
    """
    Uniform grid of quadrilaterals / hexahedra over an axis-aligned box.

    `simplicial` splits each cell into 2 triangles or 6 Kuhn tetrahedra.
    `cell_filter` receives cell centroids and returns the cells to keep.
    """
    if dim not in (2, 3):
        raise InvalidArgumentError(f"dimension must be 2 or 3, got {dim}")
    counts = [cell_counts] * dim if isinstance(cell_counts, (int, np.integer)) else list(cell_counts)
    if len(counts) != dim or any(int(n) < 1 for n in counts):
        raise InvalidArgumentError(f"cell counts must be >= 1 per axis, got {cell_counts}")
    box = box or [(0.0, 1.0)] * dim
    axes = [np.linspace(lo, hi, n + 1) for (lo, hi), n in zip(box, counts)]
    grid = np.meshgrid(*axes, indexing="ij")
    points = np.column_stack([g.ravel(order="F") for g in grid])

    def vid(*ijk: np.ndarray) -> np.ndarray:
        out, stride = 0, 1
        for i, n in zip(ijk, counts):
            out = out + i * stride
            stride *= n + 1
        return out

    idx = np.meshgrid(*[np.arange(n) for n in counts], indexing="ij")
    idx = [i.ravel(order="F") for i in idx]
    corners = CELL_SHAPES["quadrilateral" if dim == 2 else "hexahedron"].vertices
    cells = np.column_stack([vid(*[i + b for i, b in zip(idx, bits)]) for bits in corners])

    if cell_filter is not None:
        keep = np.asarray(cell_filter(points[cells].mean(axis=1)), dtype=bool)
        cells = cells[keep]
        if len(cells) == 0:
            raise InvalidArgumentError("cell filter removed every cell")

    if simplicial:
        if dim == 2:
            cells = np.concatenate([cells[:, [0, 1, 2]], cells[:, [0, 2, 3]]])
            cell_type = "triangle"
        else:
            cells = np.array([tet for hexa in cells for tet in _kuhn_tets(hexa)])
            cell_type = "tetrahedron"
    else:
        cell_type = "quadrilateral" if dim == 2 else "hexahedron"

    points, cells = _compact(points, cells)
    mesh = Mesh.from_cells(points, cells, cell_type)
    log.debug("cartesian mesh: %d %s cells, %d faces", mesh.n_cells, cell_type, mesh.n_faces)
    return mesh


def build_hollow_cylinder_mesh(inner: float, outer: float, height: float,
                               counts: Sequence[int] = (2, 16, 8)) -> Mesh:
    """Straight-faceted hexahedral mesh of an annular cylinder along z."""
    nr, nt, nz = (int(n) for n in counts)
    if not 0.0 < inner < outer or height <= 0.0:
        raise InvalidArgumentError("need 0 < inner < outer and height > 0")
    if nr < 1 or nt < 3 or nz < 1:
        raise InvalidArgumentError(f"cylinder counts must be >= (1, 3, 1), got {tuple(counts)}")
    r = np.linspace(inner, outer, nr + 1)
    theta = np.linspace(0.0, 2.0 * math.pi, nt, endpoint=False)
    z = np.linspace(0.0, height, nz + 1)
    R, T, Z = np.meshgrid(r, theta, z, indexing="ij")
    points = np.column_stack([(R * np.cos(T)).ravel(), (R * np.sin(T)).ravel(), Z.ravel()])

    def vid(i: int, j: int, k: int) -> int:
        return (i * nt + j % nt) * (nz + 1) + k

    cells = [
        [vid(i, j, k), vid(i + 1, j, k), vid(i + 1, j + 1, k), vid(i, j + 1, k),
         vid(i, j, k + 1), vid(i + 1, j, k + 1), vid(i + 1, j + 1, k + 1), vid(i, j + 1, k + 1)]
        for i in range(nr) for j in range(nt) for k in range(nz)
    ]
    return Mesh.from_cells(points, np.array(cells), "hexahedron")


# ────────────────────────── boundary partition ────────────────────
class FaceKind(IntEnum):
    INTERNAL = 0
    NITSCHE = 1
    LAGRANGE = 2
    NEUMANN = 3


KIND_NAMES = {
    "dirichlet_nitsche": FaceKind.NITSCHE,
    "dirichlet_lagrange": FaceKind.LAGRANGE,
    "neumann": FaceKind.NEUMANN,
}


@dataclass(frozen=True)
class BoundaryRegion:
    """
    A named piece of the boundary. Faces are selected either by a predicate
    on face centroids or by a mesh tag; `value` is the Dirichlet datum or
    traction attached to the region (None means homogeneous).
    """
    name: str
    kind: str
    where: Callable[[np.ndarray], np.ndarray] | None = None
    tag: str | int | None = None
    value: Any = None

    @property
    def face_kind(self) -> FaceKind:
        try:
            return KIND_NAMES[self.kind]
        except KeyError:
            raise ConfigurationError(
                f"unknown boundary kind {self.kind!r}", field=f"boundaries.{self.name}.kind"
            ) from None

    def select(self, mesh: Mesh, faces: np.ndarray) -> np.ndarray:
        if self.tag is not None:
            tag = self.tag
            if isinstance(tag, str):
                if tag not in mesh.tag_names:
                    raise ConfigurationError(f"mesh has no tag {tag!r}",
                                             field=f"boundaries.{self.name}.tag")
                tag = mesh.tag_names[tag]
            return mesh.face_tags[faces] == int(tag)
        if self.where is None:
            return np.ones(len(faces), dtype=bool)
        return np.asarray(self.where(mesh.face_centroids[faces]), dtype=bool)


@dataclass(frozen=True, eq=False)
class BoundaryPartition:
    kind: np.ndarray                # (nf,) FaceKind values
    group: np.ndarray               # (nf,) region index, -1 on internal faces
    regions: tuple[BoundaryRegion, ...]
    lagrange_faces: np.ndarray      # (nL,) face ids of the multiplier region
    patch: np.ndarray               # (nL,) smooth patch id per multiplier face
    edge_pairs: np.ndarray          # (nE, 2) local multiplier-face pairs sharing an internal edge
    edge_vertices: np.ndarray       # (nE, 2) vertices of that edge (2-D: vertex, -1)
    boundary_edges: np.ndarray      # (nB, 3) local face, edge vertices

    def faces_of(self, kind: FaceKind) -> np.ndarray:
        return np.flatnonzero(self.kind == kind)

    @property
    def internal(self) -> np.ndarray:
        return self.faces_of(FaceKind.INTERNAL)

    @property
    def nitsche(self) -> np.ndarray:
        return self.faces_of(FaceKind.NITSCHE)

    @property
    def neumann(self) -> np.ndarray:
        return self.faces_of(FaceKind.NEUMANN)

    def internal_edges_of(self, local_face: int) -> list[tuple[int, ...]]:
        hit = np.flatnonzero((self.edge_pairs == local_face).any(axis=1))
        return [tuple(int(v) for v in self.edge_vertices[i] if v >= 0) for i in hit]

    def boundary_edges_of(self, local_face: int) -> list[tuple[int, ...]]:
        rows = self.boundary_edges[self.boundary_edges[:, 0] == local_face]
        return [tuple(int(v) for v in row[1:] if v >= 0) for row in rows]


def _face_edges(mesh: Mesh, f: int) -> list[tuple[int, ...]]:
    verts = [int(v) for v in mesh.face_vertices[f]]
    if mesh.dim == 2:
        return [(v,) for v in verts]
    return [tuple(sorted((verts[i], verts[(i + 1) % len(verts)]))) for i in range(len(verts))]


def classify_boundary(mesh: Mesh, regions: Iterable[BoundaryRegion], *,
                      patch_angle: float = DEFAULT_PATCH_ANGLE) -> BoundaryPartition:
    """
    Assign every boundary face to exactly one region and build the edge
    sets of the multiplier region. Two multiplier faces sharing an edge are
    on the same smooth patch iff the angle between their normals is below
    `patch_angle`; only those edges carry multiplier-jump terms.
    """
    regions = tuple(regions)
    bfaces = mesh.boundary_faces
    hits = np.zeros((len(regions), len(bfaces)), dtype=bool)
    for r, region in enumerate(regions):
        region.face_kind  # validates the kind early
        hits[r] = region.select(mesh, bfaces)

    counts = hits.sum(axis=0)
    for bad, what in ((counts == 0, "matched by no boundary region"),
                      (counts > 1, "matched by several boundary regions")):
        if bad.any():
            f = bfaces[np.flatnonzero(bad)[0]]
            centroid = ", ".join(f"{c:.6g}" for c in mesh.face_centroids[f])
            raise ConfigurationError(f"boundary face {f} at ({centroid}) is {what}")

    kind = np.full(mesh.n_faces, FaceKind.INTERNAL, dtype=np.int8)
    group = np.full(mesh.n_faces, -1, dtype=np.int64)
    owner = hits.argmax(axis=0)
    group[bfaces] = owner
    kind[bfaces] = [regions[r].face_kind for r in owner]

    lagrange = np.flatnonzero(kind == FaceKind.LAGRANGE)
    local = {int(f): i for i, f in enumerate(lagrange)}
    normals = mesh.face_normals() if len(lagrange) else np.zeros((0, mesh.dim))
    cos_tol = math.cos(math.radians(patch_angle))

    by_edge: dict[tuple[int, ...], list[int]] = {}
    for f in mesh.boundary_faces:
        for e in _face_edges(mesh, int(f)):
            by_edge.setdefault(e, []).append(int(f))

    pairs, pair_edges, border = [], [], []
    for edge, faces in by_edge.items():
        mult = [f for f in faces if f in local]
        if not mult:
            continue
        padded = edge if len(edge) == 2 else (edge[0], -1)
        if len(faces) == 2 and len(mult) == 2 and \
                float(normals[mult[0]] @ normals[mult[1]]) > cos_tol:
            pairs.append((local[mult[0]], local[mult[1]]))
            pair_edges.append(padded)
        else:
            border.extend((local[f], *padded) for f in mult)

    patch = _smooth_patches(len(lagrange), pairs)
    if len(lagrange):
        log.info("multiplier region: %d faces, %d patches, %d internal / %d boundary edges",
                 len(lagrange), patch.max() + 1, len(pairs), len(border))
    return BoundaryPartition(
        kind, group, regions, lagrange, patch,
        np.array(pairs, dtype=np.int64).reshape(-1, 2),
        np.array(pair_edges, dtype=np.int64).reshape(-1, 2),
        np.array(border, dtype=np.int64).reshape(-1, 3),
    )


def _smooth_patches(n: int, pairs: list[tuple[int, int]]) -> np.ndarray:
    """Connected components of the multiplier faces through internal edges (BFS)."""
    adj: list[list[int]] = [[] for _ in range(n)]
    for a, b in pairs:
        adj[a].append(b)
        adj[b].append(a)
    patch = np.full(n, -1, dtype=np.int64)
    current = 0
    for seed in range(n):
        if patch[seed] >= 0:
            continue
        q = deque([seed])
        patch[seed] = current
        while q:
            f = q.popleft()
            for g in adj[f]:
                if patch[g] < 0:
                    patch[g] = current
                    q.append(g)
        current += 1
    return patch
