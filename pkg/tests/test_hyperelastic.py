import numpy as np
import pytest

from errors import InvalidArgumentError, InvalidStateError
from hyperelastic import (Kinematics, LameParams, MaterialLaw, cauchy_stress, elasticity_tensor,
                          first_piola, lame_from_young_poisson, strain_energy, von_mises)
from stabilization import tensor_eigenvalues

LAWS = ["SVK-C", "SVK-I", "NHK-C", "NHK-I", "NHK-CAV"]
PARAMS = LameParams(1.0, 10.0)
H = 1e-6


def random_F(rng, n, d, scale=0.2):
    F = np.eye(d) + scale * rng.uniform(-1.0, 1.0, size=(n, d, d))
    assert np.all(np.linalg.det(F) > 0.0)
    return F


def relative(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


@pytest.mark.parametrize("law", LAWS)
@pytest.mark.parametrize("d", [2, 3])
def test_first_piola_is_energy_derivative(law, d, rng):
    law = MaterialLaw.parse(law)
    F = random_F(rng, 50, d)
    P = first_piola(law, PARAMS, F)
    fd = np.zeros_like(P)
    for k in range(d):
        for l in range(d):
            E = np.zeros((d, d))
            E[k, l] = H
            fd[:, k, l] = (strain_energy(law, PARAMS, F + E) - strain_energy(law, PARAMS, F - E)) / (2 * H)
    assert relative(fd, P) < 1e-6


@pytest.mark.parametrize("law", LAWS)
@pytest.mark.parametrize("d", [2, 3])
def test_elasticity_tensor_is_stress_derivative(law, d, rng):
    law = MaterialLaw.parse(law)
    F = random_F(rng, 50, d)
    p = rng.uniform(-2.0, 2.0, size=50) if law.incompressible else 0.0
    A = elasticity_tensor(law, PARAMS, F, p)
    fd = np.zeros_like(A)
    for k in range(d):
        for l in range(d):
            E = np.zeros((d, d))
            E[k, l] = H
            fd[..., k, l] = (first_piola(law, PARAMS, F + E, p) - first_piola(law, PARAMS, F - E, p)) / (2 * H)
    assert relative(fd, A) < 1e-6


@pytest.mark.parametrize("law", ["SVK-C", "NHK-C"])
@pytest.mark.parametrize("d", [2, 3])
def test_linear_elastic_spectrum_at_identity(law, d):
    mu, lam = 1.3, 0.7
    A = elasticity_tensor(MaterialLaw.parse(law), LameParams(mu, lam), np.eye(d))
    skew = d * (d - 1) // 2
    expected = np.sort([0.0] * skew + [2 * mu] * (d * (d + 1) // 2 - 1) + [2 * mu + d * lam])
    np.testing.assert_allclose(tensor_eigenvalues(A), expected, atol=1e-10)


def test_reference_state_is_stress_free():
    for law in ("SVK-C", "NHK-C", "NHK-I"):
        P = first_piola(MaterialLaw.parse(law), PARAMS, np.eye(3))
        if law == "NHK-I":
            np.testing.assert_allclose(P, PARAMS.mu * np.eye(3))
        else:
            np.testing.assert_allclose(P, 0.0, atol=1e-14)


def test_pressure_term():
    law = MaterialLaw.parse("NHK-I")
    F = np.diag([1.2, 1.0, 1.0 / 1.2])
    P = first_piola(law, PARAMS, F, 0.5)
    np.testing.assert_allclose(P, PARAMS.mu * F - 0.5 * np.linalg.inv(F).T, atol=1e-14)


def test_energy_at_identity():
    for law in ("SVK-C", "SVK-I", "NHK-C", "NHK-I"):
        assert strain_energy(MaterialLaw.parse(law), PARAMS, np.eye(3)) == pytest.approx(0.0, abs=1e-14)
    W = strain_energy(MaterialLaw.parse("NHK-CAV"), PARAMS, np.eye(3))
    assert W == pytest.approx(2.0 * PARAMS.mu / np.sqrt(3.0), rel=1e-14)


@pytest.mark.parametrize("law", ["SVK-C", "NHK-C", "NHK-CAV"])
def test_frame_indifference(law, rng):
    law = MaterialLaw.parse(law)
    F = random_F(rng, 20, 3)
    Q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    Q *= np.sign(np.linalg.det(Q))
    QF = np.einsum("ij,njk->nik", Q, F)
    np.testing.assert_allclose(strain_energy(law, PARAMS, QF), strain_energy(law, PARAMS, F), rtol=1e-12)
    np.testing.assert_allclose(first_piola(law, PARAMS, QF),
                               np.einsum("ij,njk->nik", Q, first_piola(law, PARAMS, F)), atol=1e-11)


def test_cauchy_and_von_mises_uniaxial():
    sigma = np.diag([2.0, 0.0, 0.0])
    assert von_mises(sigma) == pytest.approx(2.0)
    assert von_mises(np.eye(3) * 5.0) == pytest.approx(0.0, abs=1e-14)
    kin = Kinematics(np.diag([1.1, 0.95, 0.97]))
    s = cauchy_stress(MaterialLaw.parse("NHK-C"), PARAMS, kin)
    np.testing.assert_allclose(s, s.T, atol=1e-14)


def test_complex_step_through_the_laws():
    law = MaterialLaw.parse("NHK-C")
    F = np.eye(3) + 0.1 * np.arange(9.0).reshape(3, 3) / 9.0
    E = np.zeros((3, 3))
    E[0, 1] = 1.0
    dP = np.imag(first_piola(law, PARAMS, F + 1e-30j * E)) / 1e-30
    np.testing.assert_allclose(dP, elasticity_tensor(law, PARAMS, F)[..., 0, 1], rtol=1e-10)


def test_lame_from_young_poisson():
    params = lame_from_young_poisson(1.0, 0.25)
    assert params.mu == pytest.approx(0.4)
    assert params.lam == pytest.approx(0.4)
    with pytest.raises(InvalidArgumentError, match="incompressible"):
        lame_from_young_poisson(1.0, 0.5)


def test_invalid_inputs():
    with pytest.raises(InvalidArgumentError):
        MaterialLaw.parse("mooney-rivlin")
    with pytest.raises(InvalidArgumentError):
        MaterialLaw("nhk-c", "incompressible")
    with pytest.raises(InvalidArgumentError):
        LameParams(0.0, 1.0)
    with pytest.raises(InvalidStateError):
        first_piola(MaterialLaw.parse("NHK-C"), PARAMS, np.diag([-1.0, 1.0]))
