# mesh_io.py
"""
Mesh readers.

`import_mesh` parses the small ASCII `.dgm` format:

    dgmesh 1
    vertices <n> <d>
    <x> <y> [<z>]                 (n lines)
    elements <m>
    <tri|quad|tet|hex> <v0> ...   (m lines)
    boundary <k>
    <tag-name> <v0> ...           (k lines, one boundary face each)

Indices are 0-based; blank lines and `#` comments are ignored. Any other
format is handed to meshio, with boundary names taken from `gmsh:physical`.
"""
from __future__ import annotations

import logging
import re
from pathlib import Path

import meshio
import numpy as np

from errors import InvalidArgumentError, MeshParseError, UnsupportedFeatureError
from mesh import CELL_SHAPES, Mesh

log = logging.getLogger(__name__)

# ─────────────────────────── constants ────────────────────────────
FORMAT_VERSION = 1
TYPE_TAGS = {"tri": "triangle", "quad": "quadrilateral", "tet": "tetrahedron", "hex": "hexahedron"}
_TAG_OF = {v: k for k, v in TYPE_TAGS.items()}
MESHIO_CELLS = {"triangle": "triangle", "quad": "quadrilateral",
                "tetra": "tetrahedron", "hexahedron": "hexahedron"}
MESHIO_FACETS = {2: ("line",), 3: ("triangle", "quad")}
_HEADER_RE = re.compile(r"^(vertices|elements|boundary)\s+(\d+)(?:\s+(\d+))?$")
# ──────────────────────────────────────────────────────────────────


class _Lines:
    """Significant lines with their 1-based source numbers."""

    def __init__(self, text: str) -> None:
        self.items = [(i + 1, ln.split("#", 1)[0].strip()) for i, ln in enumerate(text.splitlines())]
        self.items = [(n, ln) for n, ln in self.items if ln]
        self.pos = 0

    def next(self, what: str) -> tuple[int, str]:
        if self.pos >= len(self.items):
            last = self.items[-1][0] if self.items else 0
            raise MeshParseError(f"unexpected end of file, expected {what}", last)
        item = self.items[self.pos]
        self.pos += 1
        return item

    def section(self, name: str) -> tuple[int, int, int | None]:
        line, text = self.next(f"'{name}' header")
        m = _HEADER_RE.match(text)
        if not m or m.group(1) != name:
            raise MeshParseError(f"expected '{name} <count>', got {text!r}", line)
        return line, int(m.group(2)), int(m.group(3)) if m.group(3) else None


def _ints(tokens: list[str], line: int) -> list[int]:
    try:
        return [int(t) for t in tokens]
    except ValueError:
        raise MeshParseError(f"bad integer in {' '.join(tokens)!r}", line) from None


def import_mesh(source: str) -> Mesh:
    """Parse `.dgm` text into a Mesh; errors carry the offending line number."""
    lines = _Lines(source)
    line, text = lines.next("version line")
    parts = text.split()
    if len(parts) != 2 or parts[0] != "dgmesh":
        raise MeshParseError(f"expected 'dgmesh {FORMAT_VERSION}', got {text!r}", line)
    if parts[1] != str(FORMAT_VERSION):
        raise MeshParseError(f"unsupported format version {parts[1]}", line)

    line, nv, dim = lines.section("vertices")
    if dim not in (2, 3):
        raise MeshParseError("vertex dimension must be 2 or 3", line)
    points = np.empty((nv, dim))
    for i in range(nv):
        line, text = lines.next("vertex coordinates")
        tokens = text.split()
        if len(tokens) != dim:
            raise MeshParseError(f"expected {dim} coordinates, got {len(tokens)}", line)
        try:
            points[i] = [float(t) for t in tokens]
        except ValueError:
            raise MeshParseError(f"bad coordinate in {text!r}", line) from None

    _, ne, _ = lines.section("elements")
    cell_type, cells = None, []
    for _ in range(ne):
        line, text = lines.next("element")
        tag, *rest = text.split()
        if tag not in TYPE_TAGS:
            raise MeshParseError(f"unknown element type {tag!r}", line)
        shape = CELL_SHAPES[TYPE_TAGS[tag]]
        if shape.dim != dim:
            raise MeshParseError(f"{tag} elements need {shape.dim}-D vertices", line)
        if cell_type is None:
            cell_type = shape.name
        elif cell_type != shape.name:
            raise MeshParseError("mixed element types are not supported", line)
        verts = _ints(rest, line)
        if len(verts) != len(shape.vertices):
            raise MeshParseError(f"{tag} needs {len(shape.vertices)} vertices, got {len(verts)}", line)
        _check_refs(verts, nv, line)
        cells.append(verts)
    if not cells:
        raise MeshParseError("mesh has no elements", line)

    tags: dict[tuple[int, ...], int] = {}
    names: dict[str, int] = {}
    if lines.pos < len(lines.items):
        _, nb, _ = lines.section("boundary")
        for _ in range(nb):
            line, text = lines.next("boundary face")
            name, *rest = text.split()
            verts = _ints(rest, line)
            if len(verts) != len(CELL_SHAPES[cell_type].faces[0]):
                raise MeshParseError("boundary face has the wrong vertex count", line)
            _check_refs(verts, nv, line)
            tags[tuple(verts)] = names.setdefault(name, len(names))
    if lines.pos < len(lines.items):
        raise MeshParseError("trailing content after boundary table", lines.items[lines.pos][0])

    try:
        mesh = Mesh.from_cells(points, np.array(cells), cell_type, tags, names)
    except InvalidArgumentError as exc:
        raise MeshParseError(str(exc)) from exc
    log.info("imported %d %s cells, %d tagged boundary faces", mesh.n_cells, cell_type, len(tags))
    return mesh


def _check_refs(verts: list[int], nv: int, line: int) -> None:
    for v in verts:
        if not 0 <= v < nv:
            raise MeshParseError(f"vertex index {v} out of range [0, {nv})", line)


def format_mesh(mesh: Mesh) -> str:
    """Serialize a mesh (and its boundary tags) in the `.dgm` format."""
    out = [f"dgmesh {FORMAT_VERSION}", f"vertices {len(mesh.points)} {mesh.dim}"]
    out += [" ".join(repr(float(c)) for c in p) for p in mesh.points]
    out.append(f"elements {mesh.n_cells}")
    tag = _TAG_OF[mesh.cell_type]
    out += [f"{tag} " + " ".join(str(int(v)) for v in cell) for cell in mesh.cells]
    names = {v: k for k, v in mesh.tag_names.items()}
    tagged = np.flatnonzero(mesh.face_tags >= 0)
    out.append(f"boundary {len(tagged)}")
    for f in tagged:
        name = names.get(int(mesh.face_tags[f]), str(int(mesh.face_tags[f])))
        out.append(f"{name} " + " ".join(str(int(v)) for v in mesh.face_vertices[f]))
    return "\n".join(out) + "\n"


def read_mesh(path: str | Path) -> Mesh:
    """Read a `.dgm` file, or anything meshio understands (Gmsh, VTK, …)."""
    path = Path(path)
    if path.suffix == ".dgm":
        return import_mesh(path.read_text())
    try:
        raw = meshio.read(path)
    except Exception as exc:            # meshio raises a zoo of exception types
        raise MeshParseError(f"{path}: {exc}") from exc

    blocks = [(MESHIO_CELLS[c.type], c.data) for c in raw.cells if c.type in MESHIO_CELLS]
    if not blocks:
        raise UnsupportedFeatureError(f"{path}: no triangle/quad/tetra/hexahedron cells")
    dim = max(CELL_SHAPES[name].dim for name, _ in blocks)
    kinds = {name for name, _ in blocks if CELL_SHAPES[name].dim == dim}
    if len(kinds) > 1:
        raise UnsupportedFeatureError(f"{path}: mixed cell types {sorted(kinds)}")
    cell_type = kinds.pop()
    cells = np.concatenate([data for name, data in blocks if name == cell_type])

    tags: dict[tuple[int, ...], int] = {}
    physical = raw.cell_data_dict.get("gmsh:physical", {})
    for facet in MESHIO_FACETS[dim]:
        if facet not in physical:
            continue
        facet_cells = np.concatenate([c.data for c in raw.cells if c.type == facet])
        for verts, tag in zip(facet_cells, physical[facet]):
            tags[tuple(int(v) for v in verts)] = int(tag)
    names = {name: int(val[0]) for name, val in (raw.field_data or {}).items()
             if len(val) > 1 and int(val[1]) == dim - 1}

    try:
        return Mesh.from_cells(raw.points[:, :dim], cells, cell_type, tags, names)
    except InvalidArgumentError as exc:
        raise MeshParseError(f"{path}: {exc}") from exc
