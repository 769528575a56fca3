import numpy as np
import pytest

from assembly import (DiscreteState, Load, Problem, assemble_jacobian, assemble_residual, local_residuals,
                      residual_dirichlet_face, residual_incompressibility_element, residual_motion_element)
from conftest import project_field
from errors import InvalidArgumentError, InvalidStateError, UnsupportedFeatureError
from hyperelastic import LameParams, MaterialLaw
from mesh import BoundaryRegion, build_cartesian_mesh, classify_boundary
from stabilization import StabilizationParams

H = 1e-6


def random_state(problem, rng, scale=0.02):
    state = DiscreteState.zeros(problem.dofmap)
    state.u = scale * rng.normal(size=state.u.shape)
    if problem.incompressible:
        state.p = 0.1 * rng.normal(size=state.p.shape)
    state.lam = 0.05 * rng.normal(size=state.lam.shape)
    return state


def fd_jacobian(problem, state, eta, t=1.0):
    dm = problem.dofmap
    x = state.vector(dm)
    cols = []
    for j in range(dm.size):
        step = np.zeros(dm.size)
        step[j] = H
        plus = assemble_residual(problem, DiscreteState.from_vector(x + step, dm), t, eta)
        minus = assemble_residual(problem, DiscreteState.from_vector(x - step, dm), t, eta)
        cols.append((plus - minus) / (2 * H))
    return np.column_stack(cols)


def check_jacobian(problem, state, t=1.0):
    system = assemble_jacobian(problem, state, t)
    fd = fd_jacobian(problem, state, system.eta, t)
    J = system.matrix.toarray()
    assert np.linalg.norm(J - fd) / np.linalg.norm(fd) < 1e-6
    np.testing.assert_allclose(system.residual, assemble_residual(problem, state, t, system.eta), atol=1e-13)


@pytest.mark.parametrize("law, dirichlet", [
    ("NHK-C", "nitsche"), ("SVK-C", "nitsche"), ("NHK-CAV", "nitsche"),
    ("NHK-I", "nitsche"), ("SVK-I", "nitsche"),
    ("NHK-C", "lagrange"), ("SVK-C", "lagrange"),
    ("NHK-I", "lagrange"), ("SVK-I", "lagrange"),
])
def test_jacobian_matches_finite_differences(law, dirichlet, strip_problem, rng):
    problem = strip_problem(law, cells=(2, 2), dirichlet=dirichlet, beta=1.0, epsilon=0.5)
    check_jacobian(problem, random_state(problem, rng))


def test_jacobian_on_triangles_with_quadratics(strip_problem, rng):
    problem = strip_problem("NHK-I", cells=(1, 1), simplicial=True, degree=2, lam=1.0)
    check_jacobian(problem, random_state(problem, rng), t=0.5)


def test_jacobian_in_3d(rng):
    mesh = build_cartesian_mesh(3, [2, 1, 1])
    partition = classify_boundary(mesh, [
        BoundaryRegion("base", "dirichlet_nitsche", where=lambda c: c[:, 0] < 1e-9, value=[0.0, 0.0, 0.01]),
        BoundaryRegion("rest", "neumann", where=lambda c: c[:, 0] > 1e-9, value=[0.02, 0.0, 0.0]),
    ])
    problem = Problem(mesh, partition, MaterialLaw.parse("SVK-C"), LameParams(1.0, 10.0), 1,
                      StabilizationParams(beta=1.0, epsilon=1.0))
    check_jacobian(problem, random_state(problem, rng))


def test_dofmap_layout(strip_problem):
    problem = strip_problem("NHK-I", cells=(2, 2), dirichlet="lagrange")
    dm = problem.dofmap
    assert (dm.n_u, dm.n_p, dm.n_lam, dm.size) == (24, 12, 8, 44)
    assert dm.locate(23) == ("u", 3)
    assert dm.locate(24) == ("p", 0)
    assert dm.locate(43) == ("lam", 1)
    np.testing.assert_array_equal(dm.p_dofs(1), [27, 28, 29])
    state = DiscreteState.zeros(dm)
    assert state.vector(dm).shape == (44,)
    system = assemble_jacobian(problem, state, t=0.0)
    assert system.block("p", "p").shape == (12, 12)
    assert system.block("u", "lam").shape == (24, 8)


def test_local_residuals_match_the_global_vector(strip_problem, rng):
    problem = strip_problem("NHK-I", cells=(2, 2), dirichlet="lagrange")
    state = random_state(problem, rng)
    local = local_residuals(problem, state)
    np.testing.assert_allclose(local.vector(problem.dofmap), assemble_residual(problem, state))
    np.testing.assert_allclose(residual_motion_element(problem, state, 2), local.motion[2])
    np.testing.assert_allclose(residual_incompressibility_element(problem, state, 1),
                               local.incompressibility[1])
    face = int(problem.partition.lagrange_faces[1])
    np.testing.assert_allclose(residual_dirichlet_face(problem, state, face), local.dirichlet[1])


def test_rigid_motions_are_equilibrium_states(strip_problem):
    angle = 0.3
    R = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
    motion = lambda X: X @ (R - np.eye(2)).T + np.array([0.1, -0.2])
    problem = strip_problem("NHK-C", cells=(3, 2), pull=0.0, clamp=Load(motion))
    state = DiscreteState.zeros(problem.dofmap)
    state.u = project_field(problem.ops, motion)
    assert np.abs(assemble_residual(problem, state)).max() < 1e-10


def test_zero_state_feels_only_the_loads(strip_problem):
    problem = strip_problem("SVK-C", pull=0.1, clamp=Load.constant([0.0, 0.0]),
                            body_force=Load.constant([0.0, -1.0]))
    r = local_residuals(problem, DiscreteState.zeros(problem.dofmap), t=0.5).motion
    # a constant body force only reaches the constant mode of each cell
    psi0 = problem.ops.psi[:, 0, 0]
    np.testing.assert_allclose(r[:, 1, 0], 0.5 * problem.mesh.cell_volumes * psi0, rtol=1e-12)
    np.testing.assert_allclose(r[:, 1, 1:], 0.0, atol=1e-13)


def test_guards(strip_problem, rng):
    mesh = build_cartesian_mesh(2, 2)
    clamped = classify_boundary(mesh, [BoundaryRegion("all", "dirichlet_nitsche", value=[0.0, 0.0])])
    with pytest.raises(UnsupportedFeatureError):
        Problem(mesh, clamped, MaterialLaw.parse("NHK-I"), LameParams(1.0, 1.0))
    with pytest.raises(InvalidArgumentError):
        Problem(mesh, clamped, MaterialLaw.parse("NHK-C"), LameParams(1.0, 1.0), degree=0)

    problem = strip_problem("NHK-C")
    state = DiscreteState.zeros(problem.dofmap)
    with pytest.raises(InvalidArgumentError, match="Lagrange"):
        residual_dirichlet_face(problem, state, int(problem.mesh.boundary_faces[0]))
    with pytest.raises(InvalidArgumentError):
        residual_incompressibility_element(problem, state, 0)

    # x -> -x mirrors the strip: det F = -1
    state.u = project_field(problem.ops, lambda X: np.column_stack([-2.0 * X[:, 0], 0.0 * X[:, 1]]))
    with pytest.raises(InvalidStateError):
        assemble_residual(problem, state)


@pytest.mark.parametrize("law", ["SVK-C", "NHK-C"])
def test_reference_linearization_is_symmetric(law, strip_problem):
    # at u = 0 the operator reduces to linear-elastic BR2
    problem = strip_problem(law, cells=(3, 2), simplicial=True, degree=2)
    system = assemble_jacobian(problem, DiscreteState.zeros(problem.dofmap), t=0.0)
    K = system.block("u", "u").toarray()
    assert np.abs(K - K.T).max() <= 1e-10 * np.abs(K).max()


def test_incompressible_jacobian_with_multipliers_on_the_whole_boundary(rng):
    mesh = build_cartesian_mesh(2, 2, simplicial=True)
    partition = classify_boundary(mesh, [
        BoundaryRegion("all", "dirichlet_lagrange", value=Load(lambda X: 0.01 * X[:, ::-1])),
    ])
    problem = Problem(mesh, partition, MaterialLaw.parse("NHK-I"), LameParams(1.0, 1.0), 1,
                      StabilizationParams(beta=1.0, epsilon=0.5, eta_lbb=1.0, eta_lambda=1.0))
    assert problem.dofmap.n_lam > 0 and problem.dofmap.n_p > 0
    check_jacobian(problem, random_state(problem, rng), t=0.7)


def test_stencil_stops_at_face_neighbours(strip_problem, rng):
    problem = strip_problem("NHK-I", cells=(3, 3), simplicial=True)
    mesh, dm = problem.mesh, problem.dofmap
    J = assemble_jacobian(problem, random_state(problem, rng)).matrix.toarray()
    assert not np.allclose(J, 0.0)
    for e in range(mesh.n_cells):
        near = {e} | {int(c) for c in mesh.face_cells[mesh.cell_faces[e]].ravel() if c >= 0}
        rows = np.concatenate([dm.u_dofs(e), dm.p_dofs(e)])
        for c in range(mesh.n_cells):
            cols = np.concatenate([dm.u_dofs(c), dm.p_dofs(c)])
            block = J[np.ix_(rows, cols)]
            if c in near:
                assert np.abs(block).max() > 0.0
            else:
                assert np.abs(block).max() == 0.0, (e, c)


@pytest.mark.parametrize("law", ["NHK-I", "SVK-I"])
@pytest.mark.parametrize("dirichlet", ["nitsche", "lagrange"])
def test_pressure_coupling_blocks_are_negative_transposes(law, dirichlet, strip_problem, rng):
    # in the reference configuration J = 1 and F^-T = I in both blocks
    problem = strip_problem(law, cells=(3, 2), dirichlet=dirichlet, simplicial=True, degree=2)
    state = DiscreteState.zeros(problem.dofmap)
    state.p = rng.normal(size=state.p.shape)
    system = assemble_jacobian(problem, state, t=0.0)
    up = system.block("u", "p").toarray()
    pu = system.block("p", "u").toarray()
    assert np.abs(up).max() > 1e-3
    np.testing.assert_allclose(up, -pu.T, atol=1e-10 * np.abs(up).max())


def test_assembly_is_bitwise_reproducible(strip_problem, rng):
    problem = strip_problem("SVK-I", cells=(3, 2), dirichlet="lagrange", beta=1.0, epsilon=0.5)
    state = random_state(problem, rng)
    first = assemble_jacobian(problem, state, t=0.8)
    again = assemble_jacobian(problem, state.copy(), t=0.8)
    np.testing.assert_array_equal(first.residual, again.residual)
    np.testing.assert_array_equal(first.eta, again.eta)
    for attr in ("data", "indices", "indptr"):
        np.testing.assert_array_equal(getattr(first.matrix, attr), getattr(again.matrix, attr))
    np.testing.assert_array_equal(assemble_residual(problem, state, 0.8, first.eta), first.residual)
