import warnings

import numpy as np
import pytest

from exceptions import NoNodalPointsError, NonlinearityWarning, PreconditionError, SegmentationError
from models.schemas import GaugeProfile, GridSpec, ModelParams
from services.gamma_model import hamiltonian
from services.response import (
    SeparationSchedule,
    check_linearity,
    cosine_schedule,
    current_sweep,
    fit_line,
    gauge_shift,
    locate_nodal_point,
    magnetic_field_closed,
    monopole_shift_vs_Ax,
    pseudo_electric_field,
    pump_hamiltonian,
    separation_trace,
    standard_schedules,
    topological_current,
    valley_current,
    yang_charge,
)

A_X_SERIES = (-np.pi / 2, -np.pi / 4, 0.0, np.pi / 4, np.pi / 2)
COARSE = GridSpec(n_q=32, n_theta=16, radial_ratio=1.1)


def profiles(alpha):
    return [GaugeProfile(alpha=alpha, a_x=a_x) for a_x in A_X_SERIES]


def test_gauge_shift_examples():
    g = GaugeProfile(alpha=1.0)
    assert gauge_shift((-0.75 * np.pi, 0, 0, 0), g) == pytest.approx(3.46)
    assert gauge_shift((np.pi, 0, 0, 0), g) == pytest.approx(0, abs=1e-12)
    assert gauge_shift((-np.pi, 0, 0, 0), g) == pytest.approx(0, abs=1e-12)
    assert gauge_shift((0.0, 1.0, -2.0, 0.5), GaugeProfile(alpha=0.5)) == pytest.approx(2 / 7 * 3.46)
    assert gauge_shift((0.0, 0, 0, 0), GaugeProfile(alpha=0.5)) == pytest.approx(0.98857, abs=1e-5)


def test_gauge_shift_continuous():
    g = GaugeProfile(alpha=0.75)
    peak = -0.75 * np.pi
    left = gauge_shift(np.array([peak - 1e-13, 0, 0, 0]), g)
    right = gauge_shift(np.array([peak + 1e-13, 0, 0, 0]), g)
    assert left == pytest.approx(right, abs=1e-11)
    seam = gauge_shift(np.array([[np.pi - 1e-13, 0, 0, 0], [-np.pi + 1e-13, 0, 0, 0]]), g)
    np.testing.assert_allclose(seam, 0, atol=1e-11)


def test_gauge_shift_offset_moves_profile():
    g = GaugeProfile(alpha=1.0, a_x=np.pi / 4)
    assert gauge_shift((-np.pi / 2, 0, 0, 0), g) == pytest.approx(3.46)


def test_pump_shift_preserves_level_spacings(rng):
    p = ModelParams(a=0.5, lam=0.3)
    g = GaugeProfile(alpha=0.5, a_x=0.4)
    ks = rng.uniform(-np.pi, np.pi, size=(200, 4))
    bare = np.diff(np.linalg.eigvalsh(hamiltonian(ks, p)), axis=-1)
    pumped = np.diff(np.linalg.eigvalsh(pump_hamiltonian(ks, p, g)), axis=-1)
    np.testing.assert_allclose(pumped, bare, atol=1e-10)


def test_locate_nodal_point(massless):
    node = locate_nodal_point(massless, GaugeProfile(), 1)
    np.testing.assert_allclose(node.k, [0, 0, 0, np.pi / 2], atol=1e-7)
    assert node.spread < 1e-6
    assert node.energy == pytest.approx(gauge_shift((0, 0, 0, 0), GaugeProfile()), abs=1e-6)


def test_monopole_shift_linear():
    sweep = monopole_shift_vs_Ax(ModelParams(lam=0.0), profiles(1.0))
    assert sweep.fit.r_squared > 0.99
    assert not sweep.warnings
    assert sweep.b_z == pytest.approx(magnetic_field_closed(GaugeProfile(alpha=1.0)), rel=1e-5)
    baseline = [pt for pt in sweep.points if pt.a_x == 0.0][0]
    assert baseline.delta_e == pytest.approx(0, abs=1e-8)
    separations = [pt.separation for pt in sweep.points]
    assert np.ptp(separations) < 1e-6
    assert separations[0] == pytest.approx(np.pi, abs=1e-6)


def test_halving_alpha_doubles_field():
    strong = monopole_shift_vs_Ax(ModelParams(lam=0.2), profiles(0.5))
    weak = monopole_shift_vs_Ax(ModelParams(lam=0.2), profiles(1.0))
    assert strong.b_z / weak.b_z == pytest.approx(2.0, rel=1e-5)


def test_monopole_shift_preconditions():
    with pytest.raises(NoNodalPointsError):
        monopole_shift_vs_Ax(ModelParams(lam=1.2), profiles(1.0))
    with pytest.raises(PreconditionError):
        monopole_shift_vs_Ax(ModelParams(), [GaugeProfile(a_x=4.0)])
    with pytest.raises(PreconditionError):
        monopole_shift_vs_Ax(ModelParams(), [GaugeProfile(alpha=1.0), GaugeProfile(alpha=0.5)])


def test_nonlinear_fit_warns():
    fit = fit_line([0, 1, 2, 3], [0, 1, 0, 1])
    assert fit.r_squared < 0.99
    with pytest.warns(NonlinearityWarning):
        notes = check_linearity(fit, "alternating data")
    assert notes and "alternating data" in notes[0]


def test_pseudo_electric_field_cosine():
    expanding, merging = standard_schedules()
    field = pseudo_electric_field(expanding)
    np.testing.assert_allclose(field.e5, 0.2 * np.pi)
    assert pseudo_electric_field(merging).mean == pytest.approx(-0.2 * np.pi)
    b_w = dict(zip(np.round(field.tau, 6), field.b_w))
    assert b_w[2.0] == pytest.approx(0.4 * np.pi)
    assert b_w[3.0] == pytest.approx(0.6 * np.pi)


def test_pseudo_electric_field_finite_difference():
    tau = np.linspace(0, 4, 41)
    schedule = SeparationSchedule(tau=tau, lambdas=np.cos(0.1 * np.pi * tau))
    field = pseudo_electric_field(schedule)
    np.testing.assert_allclose(field.e5[1:-1], 0.1 * np.pi, rtol=1e-3)


def test_pseudo_electric_field_constant_and_errors():
    flat = SeparationSchedule(tau=[0, 1, 2], lambdas=[0.3, 0.3, 0.3])
    np.testing.assert_allclose(pseudo_electric_field(flat).e5, 0)
    with pytest.raises(SegmentationError):
        pseudo_electric_field(cosine_schedule(start=0.0, stop=10.0, direction="expanding"))
    with pytest.raises(NoNodalPointsError):
        SeparationSchedule(tau=[0, 1], lambdas=[0.5, 1.5])


def test_separation_trace_measures_nodes():
    schedule = cosine_schedule(start=2.0, stop=3.0, step=0.5)
    rows = separation_trace([schedule], measure=True)
    assert [row["tau"] for row in rows] == [2.0, 2.5, 3.0]
    for row in rows:
        assert row["b_w_measured"] == pytest.approx(row["b_w"], abs=1e-6)
    assert rows[0]["separation"] == pytest.approx(0.8 * np.pi)
    assert rows[-1]["separation"] == pytest.approx(1.2 * np.pi)


def test_topological_current():
    assert topological_current(0.5, 0.2 * np.pi, 1.0) == pytest.approx(1 / (20 * np.pi))
    assert topological_current(0.5, 0.2 * np.pi, 0.0) == 0
    assert topological_current(0.5, 0.2, 2.0) == pytest.approx(2 * topological_current(0.5, 0.2, 1.0))
    assert topological_current(-0.5, 0.2, 1.0) == -topological_current(0.5, 0.2, 1.0)
    assert topological_current(0.5, 0.2, -1.0) == -topological_current(0.5, 0.2, 1.0)
    assert valley_current(0.5, 1.0, 1.0) == pytest.approx(0.5 / (4 * np.pi ** 2))


def test_current_sweep_linear():
    with warnings.catch_warnings():
        warnings.simplefilter("error", NonlinearityWarning)
        result = current_sweep(0.47, 0.2 * np.pi, [-3.0, -1.5, 0.0, 1.5, 3.0])
    assert result["r_squared"] == pytest.approx(1.0)
    assert result["slope"] == pytest.approx(0.47 * 0.2 * np.pi / (2 * np.pi ** 2))


def test_yang_charge():
    near = yang_charge(ModelParams(), -8.0, 8.0, COARSE, check=False)
    assert near.delta_c2 == pytest.approx(0.940, abs=0.01)
    assert near.c2_pos == pytest.approx(-near.c2_neg, abs=1e-3)
    far = yang_charge(ModelParams(), -80.0, 80.0, COARSE, check=False)
    assert far.delta_c2 < near.delta_c2
    with pytest.raises(PreconditionError):
        yang_charge(ModelParams(), 8.0, 8.0, COARSE)
