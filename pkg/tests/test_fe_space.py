import numpy as np
import pytest

from fe_space import (BrokenSpace, FaceSpace, element_basis, face_basis, l2_project, monomial_exponents,
                      poly_dim)
from mesh import build_cartesian_mesh


def test_poly_dim():
    assert [poly_dim(2, k) for k in range(4)] == [1, 3, 6, 10]
    assert [poly_dim(3, k) for k in range(4)] == [1, 4, 10, 20]
    assert len(monomial_exponents(3, 2)) == 10
    np.testing.assert_array_equal(monomial_exponents(2, 1), [[0, 0], [1, 0], [0, 1]])


@pytest.mark.parametrize("dim, simplicial", [(2, False), (2, True), (3, False), (3, True)])
@pytest.mark.parametrize("degree", [1, 2])
def test_cell_basis_is_orthonormal(dim, simplicial, degree):
    mesh = build_cartesian_mesh(dim, 2, simplicial=simplicial)
    space = BrokenSpace(mesh, degree)
    pts, wts = space.quadrature()
    psi = space.basis.values(pts)
    gram = np.einsum("nq,nqi,nqj->nij", wts, psi, psi)
    np.testing.assert_allclose(gram, np.broadcast_to(np.eye(space.local_dim), gram.shape), atol=1e-11)


def test_bases_are_nested():
    mesh = build_cartesian_mesh(2, 2, simplicial=True)
    low, high = BrokenSpace(mesh, 1), BrokenSpace(mesh, 2)
    pts, _ = low.quadrature()
    np.testing.assert_allclose(high.basis.values(pts)[..., :3], low.basis.values(pts), atol=1e-11)


@pytest.mark.parametrize("degree", [1, 2])
def test_projection_reproduces_polynomials(degree):
    mesh = build_cartesian_mesh(3, 2, [(0.0, 1.0), (0.0, 2.0), (-1.0, 1.0)])
    space = BrokenSpace(mesh, degree, ncomp=2)
    target = lambda X: np.column_stack([1.0 + X[:, 0] - 2.0 * X[:, 2] ** degree,
                                        X[:, 1] * X[:, 0] ** (degree - 1)])
    coeffs = l2_project(target, space)
    pts, _ = space.quadrature()
    exact = target(pts.reshape(-1, 3)).reshape(pts.shape[:2] + (2,))
    np.testing.assert_allclose(space.evaluate(coeffs, pts), exact, atol=1e-11)
    grad = space.gradient(coeffs, pts)
    np.testing.assert_allclose(grad[..., 0, 0], 1.0, atol=1e-10)


def test_scalar_projection_shape():
    mesh = build_cartesian_mesh(2, 2)
    coeffs = l2_project(lambda X: X[:, 0] + X[:, 1], BrokenSpace(mesh, 1))
    assert coeffs.shape == (4, 3)


def test_element_basis():
    mesh = build_cartesian_mesh(2, [2, 1], simplicial=True)
    eb = element_basis(mesh, 3, 2)
    np.testing.assert_allclose(eb.gram, np.eye(6), atol=1e-11)
    values, grads = eb.at(eb.points)
    np.testing.assert_allclose(values, eb.values, atol=1e-13)
    np.testing.assert_allclose(grads, eb.gradients, atol=1e-12)


@pytest.mark.parametrize("dim", [2, 3])
def test_face_basis_is_orthonormal(dim):
    mesh = build_cartesian_mesh(dim, 2, simplicial=dim == 3)
    faces = mesh.boundary_faces
    space = FaceSpace(mesh, faces, 1)
    assert space.local_dim == dim * poly_dim(dim - 1, 1)
    basis = face_basis(mesh, faces, 1, space.quad_degree)
    pts, wts = space.quadrature(max(2, space.quad_degree))
    chi = basis.values(pts)
    gram = np.einsum("nq,nqi,nqj->nij", wts, chi, chi)
    np.testing.assert_allclose(gram, np.broadcast_to(np.eye(dim), gram.shape), atol=1e-11)


def test_face_projection_of_linear_data():
    mesh = build_cartesian_mesh(3, 1)
    space = FaceSpace(mesh, mesh.boundary_faces, 1)
    coeffs = l2_project(lambda X: np.column_stack([X[:, 0], X[:, 1], 2.0 * X[:, 2]]), space)
    pts, _ = space.quadrature()
    vals = np.einsum("nqj,naj->nqa", space.basis.values(pts), coeffs)
    np.testing.assert_allclose(vals[..., 2], 2.0 * pts[..., 2], atol=1e-12)
