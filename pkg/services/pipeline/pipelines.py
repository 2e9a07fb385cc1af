"""
The figure and check pipelines.

Each pipeline turns a validated PipelineSpec into tables and plots; the sweep values a
pipeline needs beyond the model, gauge, device and grid sections live in
spec.parameters and fall back to the class defaults.
"""
import logging
import math
from typing import List

import numpy as np

from exceptions import PreconditionError
from models.schemas import GaugeProfile, PipelineSpec
from services.device import (
    ats_dressing,
    ats_profile_schedule,
    floquet_effective_hamiltonian,
    measure_second_chern,
    momentum_line,
    spectroscopy_scan,
)
from services.gamma_model import (
    CouplingQuad,
    bloch_to_couplings,
    bloch_vector,
    hamiltonian,
    monopole_positions,
    spectrum_analytic,
    symmetry_report,
)
from services.pipeline.base import Pipeline, PipelineResult, Plot, Series
from services.response import (
    cosine_schedule,
    current_sweep,
    locate_nodal_point,
    magnetic_field_closed,
    monopole_shift_vs_Ax,
    pseudo_electric_field,
    separation_trace,
    topological_current,
    valley_current,
    yang_charge,
)
from services.topology import (
    chern_form_field,
    extrapolate_cutoff,
    integrate_reduced,
    second_chern_cutoff_closed,
    second_chern_full4d,
    second_chern_reduced,
    valley_chern,
    winding3_sphere,
)

logger = logging.getLogger(__name__)

BANDS = ("e1", "e2", "e3", "e4")


def _require_mass(spec: PipelineSpec) -> float:
    if spec.model.m == 0:
        raise PreconditionError(
            f"{spec.name} needs a gapped valley (m != 0)",
            {"module": "topo-invariants", "field": "m"},
        )
    return spec.model.m


def _unit_velocity(spec: PipelineSpec) -> bool:
    return spec.model.lam == 0 and spec.model.v == (1.0, 1.0, 1.0, 1.0)


def _check(table, name: str, value: float, expected: float, tolerance: float, recorded: bool = False) -> bool:
    """One row of an invariants table; recorded rows never fail"""
    ok = abs(value - expected) <= tolerance
    status = "recorded" if recorded else ("pass" if ok else "fail")
    table.add(name, float(value), float(expected), float(tolerance), status)
    return ok or recorded


class SpectrumPipeline(Pipeline):
    """Band structure along k_w and along k_x through the + node"""
    name = "fig2"
    defaults = {"a_values": [0.0, 0.5, 1.0], "points": 181}

    def run(self, spec: PipelineSpec, result: PipelineResult, workers: int) -> None:
        params = self.parameters(spec)
        b_w = math.acos(spec.model.lam) if abs(spec.model.lam) <= 1 else 0.0
        lines = {
            "kw": (momentum_line("w", params["points"]), 3),
            "kx": (momentum_line("x", params["points"], (0.0, 0.0, 0.0, b_w)), 0),
        }
        for label, (path, axis) in lines.items():
            with self.stage(result, f"spectrum_{label}"):
                table = result.table(f"spectrum_{label}", ["a", f"k_{label[1]}", *BANDS])
                plot = Plot(name=f"spectrum_{label}", title=f"Spectrum along k_{label[1]}",
                            xlabel=f"k_{label[1]} (rad)", ylabel="E (MHz)")
                for a in params["a_values"]:
                    p = spec.model.model_copy(update={"a": float(a)})
                    scan = spectroscopy_scan(p, path)
                    for k, energies in zip(path[:, axis], scan.energies):
                        table.add(float(a), float(k), *(float(e) for e in energies))
                    for band in range(4):
                        plot.series.append(Series(x=path[:, axis], y=scan.energies[:, band],
                                                  label=f"a={a}" if band == 0 else None))
                result.plots.append(plot)
        result.summary["b_w"] = b_w


class GaugePipeline(Pipeline):
    """Node displacement under a series of vector potentials A_x"""
    name = "fig3-gauge"
    defaults = {
        "alphas": [1.0, 0.5],
        "a_x": [-math.pi / 2, -math.pi / 4, 0.0, math.pi / 4, math.pi / 2],
    }

    def run(self, spec: PipelineSpec, result: PipelineResult, workers: int) -> None:
        params = self.parameters(spec)
        sweep_table = result.table("gauge_sweep", [
            "alpha", "a_x", "delta_e", "y", "k_plus_x", "k_plus_w", "k_minus_x", "k_minus_w", "separation",
        ])
        fit_table = result.table("gauge_fit", ["alpha", "slope", "intercept", "r_squared", "b_z", "b_z_closed"])
        plot = Plot(name="a_x_vs_y", title="A_x against Y", xlabel="Y", ylabel="A_x (rad)")

        for alpha in params["alphas"]:
            with self.stage(result, f"sweep_alpha_{alpha}"):
                profiles = [GaugeProfile(alpha=alpha, u_max=spec.gauge.u_max, a_x=a_x) for a_x in params["a_x"]]
                sweep = monopole_shift_vs_Ax(spec.model, profiles)
            for pt in sweep.points:
                sweep_table.add(float(alpha), pt.a_x, pt.delta_e, pt.y, float(pt.k_plus[0]), float(pt.k_plus[3]),
                                float(pt.k_minus[0]), float(pt.k_minus[3]), pt.separation)
            closed = magnetic_field_closed(profiles[0])
            fit_table.add(float(alpha), sweep.fit.slope, sweep.fit.intercept, sweep.fit.r_squared, sweep.b_z, closed)
            result.warnings.extend(sweep.warnings)
            result.summary[f"b_z(alpha={alpha})"] = sweep.b_z
            ys = [pt.y for pt in sweep.points]
            plot.series.append(Series(x=ys, y=[pt.a_x for pt in sweep.points], label=f"α={alpha}", style="o"))
            plot.series.append(Series(x=ys, y=[sweep.fit.slope * y + sweep.fit.intercept for y in ys], style="--"))
        result.plots.append(plot)


class SeparationPipeline(Pipeline):
    """b_w(τ) under Λ(τ) = cos(rate·τ) for the expanding and merging segments"""
    name = "fig3-efield"
    defaults = {"rate": 0.2 * math.pi, "step": 0.5, "measure": True}

    def run(self, spec: PipelineSpec, result: PipelineResult, workers: int) -> None:
        params = self.parameters(spec)
        rate, step = params["rate"], params["step"]
        series = (
            ("expanding_alpha1", 1.0, cosine_schedule(rate, 0.0, 5.0, step, "expanding")),
            ("merging_alpha1", 1.0, cosine_schedule(rate, 6.0, 10.0, step, "merging")),
            ("expanding_alpha0.5", 0.5, cosine_schedule(rate, 0.0, 5.0, step, "expanding")),
        )
        table = result.table("separation", [
            "series", "alpha", "tau", "lambda", "b_w", "b_w_measured", "separation", "e5", "direction",
        ])
        fields = result.table("pseudo_field", ["series", "direction", "mean_e5"])
        plot = Plot(name="separation", title="Monopole separation", xlabel="τ", ylabel="b_w (rad)")

        for label, alpha, schedule in series:
            with self.stage(result, label):
                gauge = spec.gauge.model_copy(update={"alpha": alpha})
                rows = separation_trace([schedule], spec.model, params["measure"], gauge)
                efield = pseudo_electric_field(schedule)
            for row in rows:
                table.add(label, alpha, row["tau"], row["lambda"], row["b_w"], row.get("b_w_measured"),
                          row["separation"], row["e5"], row["direction"])
            fields.add(label, efield.direction, efield.mean)
            plot.series.append(Series(x=[r["tau"] for r in rows], y=[r["b_w"] for r in rows], label=label,
                                      style="o-" if alpha == 1.0 else "s--"))
        result.plots.append(plot)


class ChernFormPipeline(Pipeline):
    """tr(F_qθ F_φϕ) and the Chern form on the (q, θ) grid"""
    name = "fig4-chernform"
    defaults = {"sign": 1}

    def run(self, spec: PipelineSpec, result: PipelineResult, workers: int) -> None:
        params = self.parameters(spec)
        m = _require_mass(spec)
        with self.stage(result, "field"):
            field_ = chern_form_field(spec.model, spec.grid, params["sign"], workers)

        table = result.table("chern_form", ["q", "theta", "trace", "chern_form", "closed"])
        for i, q in enumerate(field_.q):
            for j, theta in enumerate(field_.theta):
                closed = None if field_.closed is None else float(field_.closed[i, j])
                table.add(float(q), float(theta), float(field_.trace[i, j]), float(field_.chern_form[i, j]), closed)

        result.summary["c2_integrated"] = integrate_reduced(field_)
        if field_.closed is not None:
            result.summary["c2_closed"] = params["sign"] * second_chern_cutoff_closed(m, spec.grid.q_cut)
            mask = np.broadcast_to((field_.q >= 0.05 * abs(m))[:, None], field_.closed.shape)
            error = np.abs(field_.chern_form - field_.closed)[mask]
            result.summary["max_relative_error"] = float(np.max(error) / np.max(np.abs(field_.closed)))
        result.plots.append(Plot(
            name="chern_form", title=f"Chern form, m={m} MHz", xlabel="q (MHz)", ylabel="θ (rad)",
            image=field_.chern_form,
            extent=(float(field_.q[0]), float(field_.q[-1]), float(field_.theta[0]), float(field_.theta[-1])),
            colorbar="FF(q, θ)",
        ))


class ChernSweepPipeline(Pipeline):
    """C2 against the mass, numerically and optionally through the ramp protocol"""
    name = "fig4-c2sweep"
    defaults = {
        "masses": [-20.0, -12.0, -8.0, -4.0, 4.0, 8.0, 12.0, 20.0],
        "check": True,
        "extrapolate": False,
        "protocol": False,
    }

    def run(self, spec: PipelineSpec, result: PipelineResult, workers: int) -> None:
        params = self.parameters(spec)
        reduced = spec.model.a == 0
        method = "reduced" if reduced else "full4d"
        table = result.table("c2_sweep", [
            "m", "method", "c2", "drift", "closed", "extrapolated", "c2_protocol_ideal", "c2_protocol_decohered",
        ])
        rows = []
        for m in params["masses"]:
            p = spec.model.with_mass(float(m))
            with self.stage(result, f"c2_m{m:g}"):
                if reduced:
                    est = second_chern_reduced(p, spec.grid, workers, params["check"])
                else:
                    est = second_chern_full4d(p, 1, spec.grid, workers)
                extrapolated = None
                if params["extrapolate"]:
                    wide = spec.grid.model_copy(update={"q_cut": 2 * spec.grid.q_cut})
                    far = (second_chern_reduced(p, wide, workers, params["check"]) if reduced
                           else second_chern_full4d(p, 1, wide, workers))
                    extrapolated = extrapolate_cutoff(est.value, far.value)
            closed = second_chern_cutoff_closed(float(m), spec.grid.q_cut) if reduced and _unit_velocity(spec) else None
            ideal = decohered = None
            if params["protocol"]:
                with self.stage(result, f"protocol_m{m:g}"):
                    closed_options = spec.protocol.model_copy(update={"open_system": False})
                    ideal = measure_second_chern(p, spec.grid, closed_options, None, workers).value
                    open_options = spec.protocol.model_copy(update={"open_system": True})
                    decohered = measure_second_chern(p, spec.grid, open_options, spec.device.decoherence,
                                                     workers).value
            table.add(float(m), method, est.value, est.drift, closed, extrapolated, ideal, decohered)
            rows.append((float(m), est.value, closed))

        masses = [r[0] for r in rows]
        plot = Plot(name="c2_sweep", title="Second Chern number", xlabel="m (MHz)", ylabel="C2")
        plot.series.append(Series(x=masses, y=[r[1] for r in rows], label=method, style="o"))
        if all(r[2] is not None for r in rows):
            plot.series.append(Series(x=masses, y=[r[2] for r in rows], label="closed form", style="--"))
        result.plots.append(plot)
        result.summary["method"] = method


class CurrentPipeline(Pipeline):
    """Parity magnetic current J^z against B^z at fixed E5, computed and measured"""
    name = "fig4-current"
    defaults = {
        "c2": None,
        "mass": 8.0,
        "e5": 0.2 * math.pi,
        "alphas": [1.0, 0.75, 0.5, 0.25],
        "a_x": [-math.pi / 2, -math.pi / 4, 0.0, math.pi / 4, math.pi / 2],
        "b_fields": None,
        "measured": True,
        "protocol_grid": {"n_q": 10, "n_theta": 4, "q_cut": 40.0, "radial_ratio": 1.2},
        "valley": False,
        "e_z": 0.2 * math.pi,
    }

    def _fields(self, spec: PipelineSpec, params: dict, result: PipelineResult):
        """B^z from the A_x sweep of every alpha, with the closed form alongside"""
        alphas = params["alphas"]
        closed = [magnetic_field_closed(spec.gauge.model_copy(update={"alpha": a})) for a in alphas]
        if params["b_fields"] is not None:
            return [float(b) for b in params["b_fields"]], [float("nan")] * len(params["b_fields"])
        fitted = []
        for alpha in alphas:
            with self.stage(result, f"b_z_alpha_{alpha}"):
                profiles = [GaugeProfile(alpha=alpha, u_max=spec.gauge.u_max, a_x=a_x) for a_x in params["a_x"]]
                sweep = monopole_shift_vs_Ax(spec.model.with_mass(0.0), profiles)
            result.warnings.extend(sweep.warnings)
            fitted.append(sweep.b_z)
        return fitted, closed

    def _measured_c2(self, spec: PipelineSpec, params: dict, result: PipelineResult, workers: int):
        """C2 from the slow-ramp protocol, closed and with the device decoherence"""
        if not params["measured"]:
            return None, None
        if spec.model.a != 0 or params["mass"] == 0:
            note = "measured current needs a = 0 and a nonzero mass; skipped"
            logger.warning(note)
            result.warnings.append(note)
            return None, None
        p = spec.model.with_mass(params["mass"])
        grid = spec.grid.model_copy(update=params["protocol_grid"])
        with self.stage(result, "c2_measured"):
            closed_options = spec.protocol.model_copy(update={"open_system": False})
            ideal = measure_second_chern(p, grid, closed_options, None, workers).value
            open_options = spec.protocol.model_copy(update={"open_system": True})
            decohered = measure_second_chern(p, grid, open_options, spec.device.decoherence, workers).value
        return ideal, decohered

    def run(self, spec: PipelineSpec, result: PipelineResult, workers: int) -> None:
        params = self.parameters(spec)
        e5 = params["e5"]
        c2 = params["c2"]
        if c2 is None:
            with self.stage(result, "c2"):
                c2 = second_chern_reduced(spec.model.with_mass(params["mass"]), spec.grid, workers).value
        fields, closed_fields = self._fields(spec, params, result)
        ideal, decohered = self._measured_c2(spec, params, result, workers)

        with self.stage(result, "current"):
            sweep = current_sweep(c2, e5, fields)
        nan = float("nan")
        table = result.table("current", ["b_z", "b_z_closed", "j_z", "j_z_ideal", "j_z_decohered", "c2", "e5"])
        for b, b_closed, j in zip(sweep["b_z"], closed_fields, sweep["j_z"]):
            j_ideal = nan if ideal is None else topological_current(ideal, e5, b)
            j_decohered = nan if decohered is None else topological_current(decohered, e5, b)
            table.add(b, b_closed, j, j_ideal, j_decohered, c2, e5)
        result.warnings.extend(sweep["warnings"])
        result.summary.update(c2=c2, slope=sweep.get("slope"), r_squared=sweep.get("r_squared"),
                              slope_expected=c2 * e5 / (2 * math.pi ** 2))

        plot = Plot(name="current", title="Parity magnetic current", xlabel="B^z", ylabel="J^z")
        plot.series.append(Series(x=sweep["b_z"], y=sweep["j_z"], label="computed", style="o-"))
        for label, measured in (("measured", ideal), ("decohered", decohered)):
            if measured is None:
                continue
            measured_sweep = current_sweep(measured, e5, fields)
            result.summary.update({
                f"c2_{label}": measured,
                f"slope_{label}": measured_sweep.get("slope"),
                f"slope_{label}_expected": measured * e5 / (2 * math.pi ** 2),
            })
            plot.series.append(Series(x=measured_sweep["b_z"], y=measured_sweep["j_z"], label=label, style="s--"))

        if params["valley"]:
            with self.stage(result, "valley"):
                vc = valley_chern(spec.model.with_mass(params["mass"]), spec.grid, workers)
            valley = result.table("valley_current", ["b_z", "j5_z", "c2_valley", "e_z"])
            for b in sweep["b_z"]:
                valley.add(b, valley_current(vc.c2_valley, params["e_z"], b), vc.c2_valley, params["e_z"])
            result.summary["c2_valley"] = vc.c2_valley

        result.plots.append(plot)


class InvariantsPipeline(Pipeline):
    """Symmetry, node positions, winding, valley and Yang charges against their expected values"""
    name = "invariants"
    defaults = {"samples": 1000, "radius": 0.3, "mass": 8.0, "chern": True}

    def run(self, spec: PipelineSpec, result: PipelineResult, workers: int) -> None:
        params = self.parameters(spec)
        p = spec.model
        table = result.table("invariants", ["check", "value", "expected", "tolerance", "status"])
        passed: List[bool] = []

        with self.stage(result, "symmetry"):
            massless = p.with_mass(0.0)
            report = symmetry_report(massless, seed=spec.seed)
            passed.append(_check(table, "chiral_residual", report.chiral_residual, 0.0, 1e-10))
            passed.append(_check(table, "cp_residual", report.cp_residual, 0.0, 1e-10, recorded=p.a != 0))

        with self.stage(result, "spectrum"):
            rng = np.random.default_rng(spec.seed)
            ks = rng.uniform(-np.pi, np.pi, size=(params["samples"], 4))
            numeric = np.linalg.eigvalsh(hamiltonian(ks, massless))
            exact = spectrum_analytic(bloch_vector(ks, massless), p.a)
            scale = np.maximum(np.max(np.abs(exact), axis=-1, keepdims=True), 1e-12)
            passed.append(_check(table, "spectrum_max_relative", float(np.max(np.abs(numeric - exact) / scale)),
                                 0.0, 1e-9))

        with self.stage(result, "monopoles"):
            pair = monopole_positions(p.lam)
            node = locate_nodal_point(massless, GaugeProfile(), 1)
            passed.append(_check(table, "node_b_w", abs(float(node.k[3])), pair.b_w, 2 * np.pi / 720))
            result.summary["separation"] = 2 * pair.b_w

        with self.stage(result, "winding"):
            for sign in (1, -1):
                w = winding3_sphere(massless, sign, params["radius"])
                passed.append(_check(table, f"winding_{'plus' if sign > 0 else 'minus'}", w.refined, float(sign),
                                     0.02, recorded=p.a != 0))

        if params["chern"]:
            gapped = p.with_mass(params["mass"])
            with self.stage(result, "valley_chern"):
                vc = valley_chern(gapped, spec.grid, workers)
                if p.a == 0 and _unit_velocity(spec):
                    expected = second_chern_cutoff_closed(params["mass"], spec.grid.q_cut)
                    passed.append(_check(table, "c2_plus", vc.c2_plus, expected, 0.02 * abs(expected)))
                else:
                    # no closed form at finite cutoff away from a = 0
                    _check(table, "c2_plus", vc.c2_plus, math.copysign(0.5, params["mass"]), 0.03 * 0.5, True)
                table.add("c2_minus", vc.c2_minus, float("nan"), float("nan"), "recorded")
                table.add("c2_valley", vc.c2_valley, float("nan"), float("nan"), "recorded")
            if p.a == 0:
                with self.stage(result, "yang_charge"):
                    m = abs(params["mass"])
                    yc = yang_charge(p, -m, m, spec.grid, workers)
                    closed = 2 * second_chern_cutoff_closed(m, spec.grid.q_cut) if _unit_velocity(spec) else 1.0
                    passed.append(_check(table, "yang_charge", yc.delta_c2, closed, 0.01 * abs(closed)))

        result.summary["passed"] = all(passed)


class DevicePipeline(Pipeline):
    """Floquet, ATS and spectroscopy checks of the emulated device"""
    name = "device"
    defaults = {
        "coupling_scale": 0.25,
        "model_scale": 5.0,
        "rabi": 2.0,
        "points": 61,
        "spectrum_points": 21,
        "steps": None,
    }

    def run(self, spec: PipelineSpec, result: PipelineResult, workers: int) -> None:
        params = self.parameters(spec)
        cfg, scale = spec.device, params["coupling_scale"]
        checks = result.table("device_checks", ["check", "value", "expected", "tolerance", "status"])
        passed: List[bool] = []

        with self.stage(result, "floquet"):
            target = bloch_to_couplings(np.array([scale, 0.0, 0.0, scale]) / math.sqrt(2), spec.model.a)
            fl = floquet_effective_hamiltonian(cfg, target, steps=params["steps"])
            spread = float(np.max(np.abs(np.linalg.eigvalsh(fl.target))))
            passed.append(_check(checks, "floquet_spectral_relative", fl.spectral_deviation / spread, 0.0, 0.05))
            _check(checks, "floquet_leakage", fl.leakage, 0.0, float("nan"), recorded=True)
            zero = floquet_effective_hamiltonian(cfg, CouplingQuad(0j, 0j, 0j, 0j), steps=params["steps"])
            leftover = float(np.max(np.abs(zero.effective - np.diag(np.diag(zero.effective)))))
            passed.append(_check(checks, "zero_target_relative", leftover / scale, 0.0, 0.02))

            model_scale = params["model_scale"]
            model_target = bloch_to_couplings(np.array([model_scale, 0.0, 0.0, model_scale]) / math.sqrt(2),
                                              spec.model.a)
            model = floquet_effective_hamiltonian(cfg, model_target, method="linearized", steps=params["steps"])
            model_spread = float(np.max(np.abs(np.linalg.eigvalsh(model.target))))
            passed.append(_check(checks, "linearized_spectral_relative", model.spectral_deviation / model_spread,
                                 0.0, 0.05))

        with self.stage(result, "ats"):
            ats = ats_dressing(cfg, rabi=params["rabi"], detuning=0.0)
            passed.append(_check(checks, "ats_splitting_relative", ats.splitting / params["rabi"], 1.0, 0.01))
            _check(checks, "ats_closed_splitting", ats.closed_splitting, params["rabi"], float("nan"), recorded=True)
            result.warnings.extend(ats.warnings)
            k_x = np.linspace(-np.pi, np.pi, params["points"])
            schedule = ats_profile_schedule(spec.gauge, k_x, cfg)
        ats_table = result.table("ats_schedule", ["k_x", "rabi", "shift", "target"])
        for row in zip(schedule.k_x, schedule.rabi, schedule.shift, schedule.target):
            ats_table.add(*(float(v) for v in row))

        with self.stage(result, "spectroscopy"):
            scan = spectroscopy_scan(spec.model, momentum_line("w", params["spectrum_points"]), mode="device",
                                     device=cfg, coupling_scale=scale, workers=workers)
        peaks = result.table("device_spectrum", ["k_w", "level", "energy", "deviation"])
        plot = Plot(name="device_spectrum", title="Device spectroscopy along k_w", xlabel="k_w (rad)",
                    ylabel="E (MHz)")
        for band in range(4):
            plot.series.append(Series(x=scan.k[:, 3], y=scan.energies[:, band], style="k-"))
        for k, found, deviation in zip(scan.k[:, 3], scan.peaks, scan.deviation):
            for level, energy in enumerate(found):
                peaks.add(float(k), level, float(energy), float(deviation))
            plot.series.append(Series(x=[float(k)] * len(found), y=list(found), style="r."))
        result.plots.append(plot)

        plot_ats = Plot(name="ats_schedule", title="ATS energy shift", xlabel="k_x (rad)", ylabel="u0 (MHz)")
        plot_ats.series.append(Series(x=k_x, y=schedule.target, label="target"))
        plot_ats.series.append(Series(x=k_x, y=schedule.shift, label="dressed", style="o"))
        result.plots.append(plot_ats)
        result.summary.update(passed=all(passed), floquet_period=fl.period, floquet_leakage=fl.leakage,
                              ats_max_error=schedule.max_error,
                              spectroscopy_max_deviation=float(np.max(scan.deviation)))


PIPELINES = (
    SpectrumPipeline,
    GaugePipeline,
    SeparationPipeline,
    ChernFormPipeline,
    ChernSweepPipeline,
    CurrentPipeline,
    InvariantsPipeline,
    DevicePipeline,
)
