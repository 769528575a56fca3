import numpy as np
import pytest
import scipy.sparse as sp

from assembly import Load
from errors import ConvergenceError, InvalidArgumentError, SingularSystemError
from solver import LoadingPath, NewtonSettings, incremental_solve, linear_solve, newton_converged


# ─────────────────────────── linear solves ────────────────────────
def test_identity_solve():
    rhs = np.arange(5.0)
    result = linear_solve(sp.identity(5, format="csr"), rhs)
    np.testing.assert_allclose(result.x, rhs)
    assert result.mode == "direct"


def test_krylov_agrees_with_direct(rng):
    n = 200
    dense = rng.normal(size=(n, n)) * (rng.random((n, n)) < 0.02)
    dense += np.eye(n) * (np.abs(dense).sum(axis=1).max() + 1.0)
    A = sp.csr_matrix(dense)
    b = rng.normal(size=n)
    direct = linear_solve(A, b, "direct")
    krylov = linear_solve(A, b, "krylov", rtol=1e-10)
    assert krylov.mode == "krylov"
    assert krylov.iterations >= 1
    np.testing.assert_allclose(krylov.x, direct.x, rtol=1e-6, atol=1e-9)


def test_singular_matrix_names_the_row():
    A = sp.csr_matrix(np.array([[2.0, 0.0], [0.0, 0.0]]))
    with pytest.raises(SingularSystemError) as info:
        linear_solve(A, np.ones(2))
    assert info.value.row == 1


def test_linear_solve_arguments():
    with pytest.raises(InvalidArgumentError):
        linear_solve(sp.identity(2, format="csr"))
    with pytest.raises(InvalidArgumentError):
        linear_solve(sp.identity(2, format="csr"), np.ones(2), "cholesky")


# ─────────────────────────── loading path / settings ──────────────
def test_loading_path():
    path = LoadingPath(4)
    assert path.fractions() == [0.25, 0.5, 0.75, 1.0]
    assert path.advance().fraction() == 0.25
    assert LoadingPath(4, 4).finished
    with pytest.raises(InvalidArgumentError):
        LoadingPath(0)
    with pytest.raises(InvalidArgumentError):
        LoadingPath(2, 3)


@pytest.mark.parametrize("kwargs", [{"rtol": 0.0}, {"max_iterations": 0}, {"invalid_state": "ignore"},
                                    {"linear_solver": "cg"}, {"recompute_eta": "never"}, {"max_splits": -1},
                                    {"atol": -1.0}, {"stall_rtol": 1.0}])
def test_newton_settings_validation(kwargs):
    with pytest.raises(InvalidArgumentError):
        NewtonSettings(**kwargs)


# ─────────────────────────── incremental Newton ───────────────────
def test_unloaded_problem_needs_no_iterations(strip_problem):
    problem = strip_problem(pull=0.0, clamp=Load.constant([0.0, 0.0]))
    state, report = incremental_solve(problem, 3)
    assert report.converged
    assert report.total_iterations == 0
    assert len(report.increments) == 3
    np.testing.assert_allclose(state.u, 0.0)


@pytest.mark.parametrize("law", ["NHK-C", "SVK-C", "NHK-I"])
def test_strip_converges(law, strip_problem):
    problem = strip_problem(law, cells=(4, 2))
    seen = []
    state, report = incremental_solve(problem, 2, on_increment=lambda rec, st: seen.append(rec.fraction))
    assert report.converged, report.summary()
    assert report.reached_fraction == 1.0
    assert seen == [0.5, 1.0]
    for record in report.increments:
        assert record.converged
        assert record.iterations >= 1
        assert record.residuals[-1] <= 1e-6 * record.residuals[0]
        assert record.eta_min >= 0.5
    # the right end moves with the pull
    assert state.u[:, 0, 0].max() > 0.0



def test_repeated_solves_are_bitwise_identical(strip_problem):
    runs = [incremental_solve(strip_problem("NHK-I", cells=(3, 2), dirichlet="lagrange"), 2) for _ in range(2)]
    (a, ra), (b, rb) = runs
    np.testing.assert_array_equal(a.u, b.u)
    np.testing.assert_array_equal(a.p, b.p)
    np.testing.assert_array_equal(a.lam, b.lam)
    assert [r.residuals for r in ra.increments] == [r.residuals for r in rb.increments]


def test_per_iteration_eta_and_krylov(strip_problem):
    problem = strip_problem("SVK-C", cells=(4, 2))
    settings = NewtonSettings(linear_solver="krylov", recompute_eta="per-iteration")
    _, report = incremental_solve(problem, 1, settings)
    assert report.converged, report.summary()
    assert all(n >= 1 for n in report.increments[0].linear_iterations)


def test_failure_is_reported(strip_problem):
    problem = strip_problem(pull=0.2)
    settings = NewtonSettings(rtol=1e-12, max_iterations=1)
    _, report = incremental_solve(problem, 1, settings)
    assert not report.converged
    assert report.failed_increment == 1
    assert report.reached_fraction == 0.0
    assert report.summary().startswith("fails to converge when reaching 100%")
    assert report.increments[0].message


def test_failure_raises_when_asked(strip_problem):
    problem = strip_problem(pull=0.2)
    settings = NewtonSettings(rtol=1e-12, max_iterations=1, invalid_state="fail")
    with pytest.raises(ConvergenceError) as info:
        incremental_solve(problem, 2, settings)
    assert info.value.increment == 1
    assert info.value.fraction == 0.5


def test_inverted_state_is_a_reported_failure(strip_problem):
    problem = strip_problem(pull=-50.0)
    _, report = incremental_solve(problem, 1)
    assert not report.converged
    assert "non-positive Jacobian" in report.failure


def test_split_on_failure_halves_the_increment(strip_problem):
    problem = strip_problem(pull=0.2)
    settings = NewtonSettings(rtol=1e-12, max_iterations=1, split_on_failure=True, max_splits=2)
    _, report = incremental_solve(problem, 1, settings)
    assert not report.converged
    assert [r.fraction for r in report.increments] == [1.0, 0.5, 0.25]
    assert all(r.index == 1 for r in report.increments)


def test_max_increments_stops_early(strip_problem):
    problem = strip_problem()
    _, report = incremental_solve(problem, 4, max_increments=1)
    assert report.converged
    assert len(report.increments) == 1
    assert report.reached_fraction == 0.25


def test_newton_stopping_rule():
    settings = NewtonSettings()
    assert newton_converged(1e-11, 1.0, 1e-6, settings)
    assert newton_converged(1e-14, 1e-12, None, settings)
    assert not newton_converged(1e-4, 1.0, None, settings)
    # still contracting quadratically: keep iterating
    assert not newton_converged(5e-9, 1.0, 1e-4, settings)
    # round-off plateau below stall_rtol: accept
    assert newton_converged(5e-9, 1.0, 7e-9, settings)
    assert not newton_converged(5e-9, 1.0, 7e-9, NewtonSettings(stall_rtol=0.0))
    # a stalled iterate far from the solution is not accepted
    assert not newton_converged(1e-3, 1.0, 1.1e-3, settings)
    assert newton_converged(1e-3, 1.0, None, NewtonSettings(atol=1e-2))


def test_absolute_tolerance_accepts_the_start(strip_problem):
    problem = strip_problem(pull=0.01)
    _, report = incremental_solve(problem, 2, NewtonSettings(atol=1e6))
    assert report.converged
    assert report.total_iterations == 0
