import meshio
import numpy as np
import pytest

from errors import MeshParseError
from mesh import build_cartesian_mesh
from mesh_io import format_mesh, import_mesh, read_mesh

SQUARE = """\
dgmesh 1
# unit square split along its diagonal
vertices 4 2
0 0
1 0
1 1
0 1
elements 2
tri 0 1 2
tri 0 2 3
boundary 4
bottom 0 1
right 1 2
top 2 3
left 3 0
"""


def test_import_square():
    mesh = import_mesh(SQUARE)
    assert mesh.cell_type == "triangle"
    assert mesh.n_cells == 2
    assert mesh.n_faces == 5
    assert set(mesh.tag_names) == {"bottom", "right", "top", "left"}
    assert np.count_nonzero(mesh.face_tags >= 0) == 4
    bottom = np.flatnonzero(mesh.face_tags == mesh.tag_names["bottom"])
    np.testing.assert_allclose(mesh.face_centroids[bottom], [[0.5, 0.0]])


def test_format_then_import_keeps_topology_and_tags():
    mesh = import_mesh(SQUARE)
    again = import_mesh(format_mesh(mesh))
    np.testing.assert_array_equal(again.cells, mesh.cells)
    np.testing.assert_allclose(again.points, mesh.points)
    names = {v: k for k, v in mesh.tag_names.items()}
    names_again = {v: k for k, v in again.tag_names.items()}
    for f in mesh.boundary_faces:
        assert names_again[again.face_tags[f]] == names[mesh.face_tags[f]]


@pytest.mark.parametrize("text, line, message", [
    ("mesh 1\n", 1, "dgmesh"),
    ("dgmesh 2\n", 1, "version"),
    ("dgmesh 1\nvertices 2 2\n0 0\n1\n", 4, "coordinates"),
    ("dgmesh 1\nvertices 3 2\n0 0\n1 0\n0 1\nelements 1\nprism 0 1 2\n", 7, "unknown element"),
    ("dgmesh 1\nvertices 3 2\n0 0\n1 0\n0 1\nelements 1\ntri 0 1 9\n", 7, "out of range"),
    ("dgmesh 1\nvertices 3 2\n0 0\n1 0\n0 1\nelements 1\ntri 0 1\n", 7, "needs 3 vertices"),
    ("dgmesh 1\nvertices 3 2\n0 0\n1 0\n0 1\nelements 2\ntri 0 1 2\n", 7, "end of file"),
])
def test_parse_errors_carry_line_numbers(text, line, message):
    with pytest.raises(MeshParseError, match=message) as info:
        import_mesh(text)
    assert info.value.line == line


def test_read_dgm_file(tmp_path):
    path = tmp_path / "square.dgm"
    path.write_text(SQUARE)
    assert read_mesh(path).n_cells == 2


def test_read_through_meshio(tmp_path):
    src = build_cartesian_mesh(3, [2, 1, 1])
    path = tmp_path / "bar.vtu"
    meshio.write(path, meshio.Mesh(src.points, [("hexahedron", src.cells)]))
    mesh = read_mesh(path)
    assert mesh.cell_type == "hexahedron"
    assert mesh.n_cells == 2
    assert mesh.cell_volumes.sum() == pytest.approx(1.0)


def test_unreadable_file(tmp_path):
    path = tmp_path / "broken.msh"
    path.write_text("not a mesh")
    with pytest.raises(MeshParseError):
        read_mesh(path)
