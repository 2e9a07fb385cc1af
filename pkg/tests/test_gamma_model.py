import json

import numpy as np
import pytest

from exceptions import NoNodalPointsError, PreconditionError, SingularMapError
from models.schemas import ModelParams
from services.gamma_model import (
    CouplingQuad,
    bloch_jacobian,
    bloch_to_couplings,
    bloch_vector,
    couplings_to_bloch,
    diamond_matrix,
    gamma_set,
    hamiltonian,
    hamiltonian_from_bloch,
    matrix_payload,
    monopole_positions,
    spectrum_analytic,
    symmetry_report,
    valley_hamiltonian,
    wrap_momentum,
)


def anticommutator(x, y):
    return x @ y + y @ x


@pytest.mark.parametrize("a", [0.0, 0.5, -0.5, 1.0, -1.0, 2.3])
def test_gamma_set_hermitian_and_chiral(a):
    gammas = gamma_set(a)
    for g in (gammas.gx, gammas.gy, gammas.gz, gammas.gw, gammas.g0):
        np.testing.assert_allclose(g, g.conj().T, atol=1e-15)
    for g in gammas.stack():
        np.testing.assert_allclose(anticommutator(gammas.g0, g), 0, atol=1e-15)


def test_gamma_set_clifford_at_zero():
    gammas = gamma_set(0.0)
    stack = gammas.stack()
    for i in range(4):
        np.testing.assert_allclose(stack[i] @ stack[i], np.eye(4), atol=1e-15)
        for j in range(i + 1, 4):
            np.testing.assert_allclose(anticommutator(stack[i], stack[j]), 0, atol=1e-15)
    expected_gx = np.kron(np.eye(2), np.array([[0, 1], [1, 0]]))
    np.testing.assert_allclose(gammas.gx, expected_gx)


def test_gamma_square_with_deformation():
    gx = gamma_set(0.5).gx
    s1 = np.array([[0, 1], [1, 0]])
    np.testing.assert_allclose(gx @ gx, 1.25 * np.eye(4) + np.kron(s1, s1), atol=1e-15)


def test_gamma_set_rejects_non_finite():
    with pytest.raises(PreconditionError):
        gamma_set(float("nan"))


@pytest.mark.parametrize("k, expected", [
    ((0, 0, 0, 0), (0, 0, 0, -1)),
    ((0, 0, 0, np.pi / 2), (0, 0, 0, 0)),
    ((np.pi / 2, 0, 0, np.pi / 2), (1, 0, 0, 1)),
])
def test_bloch_vector_examples(massless, k, expected):
    np.testing.assert_allclose(bloch_vector(k, massless), expected, atol=1e-15)


def test_bloch_vector_periodic(rng):
    p = ModelParams(a=0.3, lam=0.4, v=(1.0, 2.0, 0.5, 1.5))
    ks = rng.uniform(-np.pi, np.pi, size=(200, 4))
    for j in range(4):
        shifted = ks.copy()
        shifted[:, j] += 2 * np.pi
        np.testing.assert_allclose(bloch_vector(shifted, p), bloch_vector(ks, p), atol=1e-12)


def test_wrap_momentum_range():
    k = wrap_momentum([np.pi, -np.pi, 3 * np.pi, 0.1])
    assert np.all(k >= -np.pi) and np.all(k < np.pi)
    assert k[3] == pytest.approx(0.1)


def test_bloch_jacobian_matches_finite_difference(rng):
    p = ModelParams(lam=0.2, v=(1.0, 1.3, 0.7, 1.1))
    k = rng.uniform(-np.pi, np.pi, size=4)
    jac = bloch_jacobian(k, p)
    h = 1e-6
    for j in range(4):
        step = np.zeros(4)
        step[j] = h
        column = (bloch_vector(k + step, p) - bloch_vector(k - step, p)) / (2 * h)
        np.testing.assert_allclose(jac[:, j], column, atol=1e-8)


def test_hamiltonian_examples(massless):
    np.testing.assert_allclose(hamiltonian_from_bloch(np.zeros(4), 0.0), 0)
    energies = np.linalg.eigvalsh(hamiltonian((np.pi / 2, 0, 0, np.pi / 2), massless))
    np.testing.assert_allclose(energies, [-np.sqrt(2), -np.sqrt(2), np.sqrt(2), np.sqrt(2)], atol=1e-12)


@pytest.mark.parametrize("a", [0.0, 0.5, -0.5, 1.0, -1.0])
def test_spectrum_matches_eigensolve(rng, a):
    lam = rng.uniform(-1.5, 1.5)
    p = ModelParams(a=a, lam=lam)
    ks = rng.uniform(-np.pi, np.pi, size=(1000, 4))
    h = hamiltonian(ks, p)
    numeric = np.linalg.eigvalsh(h)
    analytic = spectrum_analytic(bloch_vector(ks, p), a)
    scale = np.maximum(1.0, np.abs(analytic).max(axis=-1, keepdims=True))
    np.testing.assert_allclose(numeric / scale, analytic / scale, atol=1e-9)
    g0 = gamma_set(a).g0
    np.testing.assert_allclose(g0 @ h + h @ g0, 0, atol=1e-12)


@pytest.mark.parametrize("a, expected", [
    (0.5, [-1.5, -0.5, 0.5, 1.5]),
    (1.0, [-2.0, 0.0, 0.0, 2.0]),
])
def test_spectrum_analytic_examples(a, expected):
    np.testing.assert_allclose(spectrum_analytic([1.0, 0, 0, 0], a), expected)
    np.testing.assert_allclose(spectrum_analytic(np.zeros(4), a), 0)


def test_massive_spectrum_gapped(rng):
    p = ModelParams(a=0.0, lam=0.3, m=0.7)
    ks = rng.uniform(-np.pi, np.pi, size=(300, 4))
    energies = np.linalg.eigvalsh(hamiltonian(ks, p))
    assert np.all(np.abs(energies) >= 0.7 - 1e-12)
    radius = np.sqrt(np.sum(bloch_vector(ks, p) ** 2, axis=-1) + 0.49)
    np.testing.assert_allclose(energies, np.stack([-radius, -radius, radius, radius], axis=-1), atol=1e-12)


def test_valley_hamiltonian(gapped):
    np.testing.assert_allclose(np.linalg.eigvalsh(valley_hamiltonian(np.zeros(4), 1, gapped)), [-8, -8, 8, 8], atol=1e-12)
    p = ModelParams(lam=0.3)
    q = np.array([0.1, -0.2, 0.05, 0.3])
    flipped = q * np.array([1, 1, 1, -1])
    np.testing.assert_allclose(
        np.linalg.eigvalsh(valley_hamiltonian(q, -1, p)),
        np.linalg.eigvalsh(valley_hamiltonian(flipped, 1, p)),
        atol=1e-12,
    )


def test_valley_hamiltonian_matches_lattice_near_node():
    p = ModelParams(lam=0.3)
    k_plus = monopole_positions(p.lam).k_plus
    q = 1e-5 * np.array([1.0, -2.0, 0.5, 1.5])
    lattice = np.linalg.eigvalsh(hamiltonian(k_plus + q, p))
    linear = np.linalg.eigvalsh(valley_hamiltonian(q, 1, p))
    np.testing.assert_allclose(lattice, linear, atol=1e-9)


def test_valley_hamiltonian_rejects_merged():
    with pytest.raises(NoNodalPointsError):
        valley_hamiltonian(np.zeros(4), 1, ModelParams(lam=1.0))
    with pytest.raises(PreconditionError):
        valley_hamiltonian(np.zeros(4), 0, ModelParams())


def test_monopole_positions():
    pair = monopole_positions(0.0)
    assert pair.b_w == pytest.approx(np.pi / 2)
    np.testing.assert_allclose(pair.k_minus, [0, 0, 0, -np.pi / 2])
    assert monopole_positions(1.0).merged
    assert monopole_positions(1.0).b_w == 0.0
    assert monopole_positions(np.cos(0.4 * np.pi)).b_w == pytest.approx(0.4 * np.pi)
    assert monopole_positions(np.cos(0.6 * np.pi)).b_w == pytest.approx(0.6 * np.pi)
    with pytest.raises(NoNodalPointsError):
        monopole_positions(1.2)


@pytest.mark.parametrize("a, m, chiral, cp", [
    (0.0, 0.0, True, True),
    (0.5, 0.0, True, False),
    (0.0, 1.0, False, False),
])
def test_symmetry_report(a, m, chiral, cp):
    report = symmetry_report(ModelParams(a=a, lam=0.2, m=m))
    assert report.chiral is chiral
    assert report.cp is cp
    assert report.cp_squared_minus_one


def test_coupling_map_example():
    quad = bloch_to_couplings([1, 2, 3, 4], 0.5)
    assert quad.omega12 == pytest.approx(3 + 4j)
    assert quad.omega23 == pytest.approx(4.5 - 3.5j)
    assert quad.omega34 == pytest.approx(-1 - 2j)
    assert quad.omega41 == pytest.approx(-3.5 - 0.5j)
    energies = np.linalg.eigvalsh(diamond_matrix(quad))
    root = np.sqrt(30)
    np.testing.assert_allclose(energies, [-1.5 * root, -0.5 * root, 0.5 * root, 1.5 * root], atol=1e-12)


def test_coupling_map_simple_cases():
    zero = bloch_to_couplings(np.zeros(4), 0.7)
    assert all(w == 0 for w in zero.as_tuple())
    quad = bloch_to_couplings([1, 0, 0, 0], 0.0)
    assert quad.as_tuple() == pytest.approx((1, 0, 1, 0))
    np.testing.assert_allclose(np.linalg.eigvalsh(diamond_matrix(quad)), [-1, -1, 1, 1], atol=1e-12)


@pytest.mark.parametrize("a", [0.0, 0.5, -0.3, 1.7])
def test_coupling_round_trip_and_diamond(rng, a):
    d = rng.normal(size=4)
    quad = bloch_to_couplings(d, a)
    np.testing.assert_allclose(couplings_to_bloch(quad, a), d, atol=1e-12)
    np.testing.assert_allclose(diamond_matrix(quad), hamiltonian_from_bloch(d, a), atol=1e-12)


def test_coupling_inverse_errors():
    with pytest.raises(SingularMapError):
        couplings_to_bloch(bloch_to_couplings([1, 0, 0, 0], 1.0), 1.0)
    with pytest.raises(PreconditionError):
        couplings_to_bloch(CouplingQuad(1 + 0j, 0j, 5 + 0j, 0j), 0.0)


def test_matrix_payload_is_json():
    payload = matrix_payload(gamma_set(0.0).gz)
    text = json.dumps(payload)
    assert json.loads(text)[0][1] == [0.0, -1.0]
