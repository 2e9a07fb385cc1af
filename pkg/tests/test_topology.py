import numpy as np
import pytest
from scipy.linalg import expm

from exceptions import DegeneracyCrossingError, PreconditionError
from models.schemas import GridSpec, ModelParams
from services.gamma_model import hamiltonian_from_bloch, valley_hamiltonian
from services.topology import (
    chern_form_closed,
    chern_form_field,
    extrapolate_cutoff,
    occupied_frame,
    plaquette_curvature,
    point_curvature,
    second_chern_cutoff_closed,
    second_chern_full4d,
    second_chern_reduced,
    unitary_log,
    valley_chern,
    winding3_sphere,
)
from services.topology.chern import integrate_reduced
from services.topology.frames import PHI, Q, THETA, VARPHI, ValleyFrames

PAULI = np.array([
    [[0, 1], [1, 0]],
    [[0, -1j], [1j, 0]],
    [[1, 0], [0, -1]],
], dtype=complex)

COARSE = GridSpec(n_q=32, n_theta=16, n_phi=2, n_varphi=2, radial_ratio=1.1)


def random_unitary(rng, n):
    z = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def test_occupied_frame_dirac_point(gapped):
    sub = occupied_frame(valley_hamiltonian(np.zeros(4), 1, gapped))
    assert sub.rank == 2
    np.testing.assert_allclose(sub.energy, [-8, -8], atol=1e-12)
    np.testing.assert_allclose(sub.frame.conj().T @ sub.frame, np.eye(2), atol=1e-12)


def test_occupied_frame_single_band():
    sub = occupied_frame(hamiltonian_from_bloch([0, 0, 0, -1], 0.5), filling=(0,))
    assert sub.rank == 1
    assert sub.energy[0] == pytest.approx(-1.5)


def test_occupied_frame_gapless_point(massless):
    with pytest.raises(DegeneracyCrossingError):
        occupied_frame(valley_hamiltonian(np.zeros(4), 1, massless))


@pytest.mark.parametrize("n", [1, 2, 3])
def test_unitary_log_inverts_expm(rng, n):
    batch = np.stack([random_unitary(rng, n) for _ in range(20)])
    log_w, phase = unitary_log(batch)
    assert np.all(phase <= np.pi + 1e-12)
    for w, lw in zip(batch, log_w):
        np.testing.assert_allclose(expm(lw), w, atol=1e-10)
        np.testing.assert_allclose(lw, -lw.conj().T, atol=1e-10)


def test_unitary_log_near_identity():
    w = np.eye(2, dtype=complex)[None] * np.exp(0.3j)
    log_w, _ = unitary_log(w)
    np.testing.assert_allclose(log_w[0], 0.3j * np.eye(2), atol=1e-14)


def test_dirac_monopole_chern_number():
    n_theta, n_phi = 40, 60
    theta = np.linspace(0, np.pi, n_theta + 1)
    phi = np.linspace(0, 2 * np.pi, n_phi + 1)
    t, f = np.meshgrid(theta, phi, indexing="ij")
    n = np.stack([np.sin(t) * np.cos(f), np.sin(t) * np.sin(f), np.cos(t)], axis=-1)
    h = np.einsum("...i,ijk->...jk", n, PAULI)
    frames = occupied_frame(h, filling=(0,)).frame
    spacings = (np.pi / n_theta, 2 * np.pi / n_phi)
    flux = plaquette_curvature(frames, spacings).total_flux(spacings)[0, 0].real
    assert abs(abs(flux / (2 * np.pi)) - 1) < 1e-8


def test_constant_frames_have_no_curvature():
    frames = np.broadcast_to(np.eye(4, dtype=complex)[:, :2], (6, 5, 4, 2)).copy()
    result = plaquette_curvature(frames, (0.1, 0.2))
    np.testing.assert_allclose(result.curvature, 0, atol=1e-14)
    assert not result.flagged.any()


def _cell_points():
    points = np.array([[8.0, np.pi / 4, 0.0, 0.0], [3.0, 0.3, 0.0, 0.0], [20.0, 1.2, 0.0, 0.0]])
    steps = np.array([0.4, 0.02, 0.05, 0.05])
    return points, steps


def test_curvature_antisymmetric(gapped):
    frames = ValleyFrames(gapped)
    points, steps = _cell_points()
    f_qt = point_curvature(frames, points, (Q, THETA), steps)
    f_tq = point_curvature(frames, points, (THETA, Q), steps)
    np.testing.assert_allclose(f_tq, -f_qt, atol=1e-12)
    np.testing.assert_allclose(f_qt, np.swapaxes(f_qt.conj(), -1, -2), atol=1e-14)


def _smooth_gauge(points):
    """Point-dependent U(2) rotation, a smooth function of the coordinates"""
    g = np.stack([
        np.sin(0.3 * points[..., 0] + 2 * points[..., 1]),
        np.cos(points[..., 2] + 0.1 * points[..., 0]),
        np.sin(3 * points[..., 3] - points[..., 1]),
    ], axis=-1)
    norm = np.linalg.norm(g, axis=-1)
    unit = g / norm[..., None]
    rot = (np.cos(norm)[..., None, None] * np.eye(2)
           + 1j * np.sin(norm)[..., None, None] * np.einsum("...i,ijk->...jk", unit, PAULI))
    return rot * np.exp(1j * np.cos(points[..., 0]))[..., None, None]


def test_chern_trace_gauge_invariant(gapped):
    frames = ValleyFrames(gapped)

    def rotated(points):
        return frames(points) @ _smooth_gauge(points)

    points, steps = _cell_points()
    plain = np.einsum(
        "nij,nji->n",
        point_curvature(frames, points, (Q, THETA), steps),
        point_curvature(frames, points, (PHI, VARPHI), steps),
    )
    gauged = np.einsum(
        "nij,nji->n",
        point_curvature(rotated, points, (Q, THETA), steps),
        point_curvature(rotated, points, (PHI, VARPHI), steps),
    )
    np.testing.assert_allclose(gauged, plain, atol=1e-8)


def test_chern_form_closed_examples():
    m = 8.0
    expected = 3 / (2 ** 3.5 * 8 * np.pi ** 2 * m)
    assert chern_form_closed(m, np.pi / 4, m) == pytest.approx(expected)
    assert chern_form_closed(m, np.pi / 4, m) == pytest.approx(4.198e-4, rel=1e-3)
    assert chern_form_closed(5.0, 0.0, m) == 0
    assert chern_form_closed(5.0, np.pi / 2, m) == pytest.approx(0, abs=1e-18)
    assert np.all(chern_form_closed(np.linspace(0.1, 50, 10), 0.7, 0.0) == 0)


def test_cutoff_closed_form():
    assert second_chern_cutoff_closed(8.0, 200.0) == pytest.approx(0.47004, abs=1e-5)
    assert second_chern_cutoff_closed(8.0, 0.0) == pytest.approx(0.0, abs=1e-15)
    assert second_chern_cutoff_closed(-8.0, 200.0) == pytest.approx(-0.47004, abs=1e-5)
    assert extrapolate_cutoff(
        second_chern_cutoff_closed(8.0, 400.0), second_chern_cutoff_closed(8.0, 800.0)
    ) == pytest.approx(0.5, abs=1e-4)


def test_chern_form_matches_closed_form(gapped):
    field = chern_form_field(gapped, GridSpec(n_q=64, n_theta=64))
    mask = field.q[:, None] >= 0.05 * gapped.m
    scale = np.max(np.abs(field.closed))
    error = np.abs(field.chern_form - field.closed)[np.broadcast_to(mask, field.closed.shape)]
    assert np.max(error) / scale <= 1e-2


def test_second_chern_reduced_default_grid(gapped):
    result = second_chern_reduced(gapped)
    assert result.closed == pytest.approx(0.47004, abs=1e-5)
    assert result.value == pytest.approx(result.closed, abs=5e-3)
    assert result.drift < 0.01 * abs(result.value)


def test_second_chern_reduced_odd_in_mass():
    plus = second_chern_reduced(ModelParams(m=8.0), COARSE, check=False).value
    minus = second_chern_reduced(ModelParams(m=-8.0), COARSE, check=False).value
    assert plus + minus == pytest.approx(0, abs=1e-3)


def test_second_chern_extrapolates_to_half(gapped):
    c_q = second_chern_reduced(gapped, GridSpec(q_cut=200.0), check=False).value
    c_2q = second_chern_reduced(gapped, GridSpec(n_q=112, q_cut=400.0), check=False).value
    assert extrapolate_cutoff(c_q, c_2q) == pytest.approx(0.5, abs=1e-2)


def test_second_chern_reduced_preconditions():
    with pytest.raises(PreconditionError):
        second_chern_reduced(ModelParams(a=0.5, m=8.0), COARSE)
    with pytest.raises(PreconditionError):
        second_chern_reduced(ModelParams(m=0.0), COARSE)


def test_reduced_integral_second_order(gapped):
    closed = second_chern_cutoff_closed(gapped.m, COARSE.q_cut)
    coarse = integrate_reduced(chern_form_field(gapped, COARSE))
    fine = integrate_reduced(chern_form_field(gapped, COARSE.refined()))
    assert abs(coarse - closed) >= 3 * abs(fine - closed)


def test_full4d_matches_reduced(gapped):
    reduced = integrate_reduced(chern_form_field(gapped, COARSE))
    full = second_chern_full4d(gapped, 1, COARSE).value
    assert full == pytest.approx(reduced, rel=0.02)
    minus = second_chern_full4d(gapped, -1, COARSE).value
    assert minus == pytest.approx(-full, abs=1e-6)


def test_valley_chern(gapped):
    result = valley_chern(gapped, COARSE)
    assert result.c2_plus + result.c2_minus == pytest.approx(0, abs=1e-6)
    assert result.c2_valley == pytest.approx(0.47004, abs=0.015)
    flipped = valley_chern(gapped.with_mass(-8.0), COARSE)
    assert flipped.c2_valley == pytest.approx(-result.c2_valley, abs=1e-3)


@pytest.mark.slow
def test_full4d_deformed_model_tends_to_half():
    p = ModelParams(a=0.5, m=8.0)
    grid = GridSpec(n_q=32, n_theta=16, n_phi=6, n_varphi=6, radial_ratio=1.1)
    c_q = second_chern_full4d(p, 1, grid).value
    c_2q = second_chern_full4d(p, 1, grid.model_copy(update={"q_cut": 400.0, "n_q": 40})).value
    assert extrapolate_cutoff(c_q, c_2q) == pytest.approx(0.5, abs=0.05)


def test_parallel_field_is_bit_stable(gapped, monkeypatch):
    monkeypatch.setattr("services.parallel.DEFAULT_CHUNK", 16)
    grid = GridSpec(n_q=8, n_theta=8)
    serial = chern_form_field(gapped, grid, workers=1)
    pooled = chern_form_field(gapped, grid, workers=2)
    assert np.array_equal(serial.trace, pooled.trace)


@pytest.mark.parametrize("sign", [1, -1])
def test_winding_number_clifford(massless, sign):
    result = winding3_sphere(massless, sign)
    assert result.winding == sign


def test_winding_number_deformed_stays_unit():
    result = winding3_sphere(ModelParams(a=0.5), 1)
    assert result.winding == 1
    assert winding3_sphere(ModelParams(a=0.5), -1).winding == -1


def test_winding_radius_independent():
    p = ModelParams(lam=0.2)
    small = winding3_sphere(p, 1, radius=0.2).refined
    large = winding3_sphere(p, 1, radius=0.4).refined
    assert small == pytest.approx(large, abs=0.02)


def test_winding_errors():
    with pytest.raises(PreconditionError):
        winding3_sphere(ModelParams(m=1.0))
    with pytest.raises(DegeneracyCrossingError):
        winding3_sphere(ModelParams(a=1.0))
