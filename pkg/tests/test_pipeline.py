import hashlib
import json
import math

import numpy as np
import pytest

import settings
from exceptions import ConfigurationError
from main import main
from models.schemas import PipelineSpec
from services.pipeline import acceptance, pipelines
from services.pipeline.acceptance import acceptance_suite
from services.pipeline.base import PipelineRegistry, Table
from services.pipeline.service import PipelineService, validate_config
from services.pipeline.writers import format_value, read_table, write_table
from services.topology import chern_form_closed


def write_config(path, payload):
    path.write_text(json.dumps(payload), encoding="utf-8")
    return path


def spectrum_spec(tmp_path, **updates):
    payload = {"name": "fig2", "output_dir": str(tmp_path), "plots": False,
               "parameters": {"points": 11}, **updates}
    return PipelineSpec.model_validate(payload)


def test_format_value_is_round_trip_text():
    assert format_value(0.1) == "0.1"
    assert format_value(True) == "true"
    assert format_value(3) == "3"
    assert format_value(None) == ""
    assert format_value(1 - 2j) == "1.0-2.0j"


def test_table_schema_header(tmp_path):
    table = Table(name="demo", columns=["x", "label"])
    table.add(1.5, "a,b")
    digest = write_table(table, tmp_path / "demo.csv")
    lines = (tmp_path / "demo.csv").read_text().splitlines()
    assert lines[0] == "# schema: tmlab.demo.v1"
    assert lines[2] == '1.5,"a,b"'
    assert digest == hashlib.sha256((tmp_path / "demo.csv").read_bytes()).hexdigest()
    assert read_table(tmp_path / "demo.csv").rows == [("1.5", "a,b")]


def test_table_rejects_wrong_width():
    with pytest.raises(ValueError):
        Table(name="demo", columns=["x"]).add(1, 2)


def test_registry_unknown_pipeline():
    PipelineService()
    assert "fig4-c2sweep" in PipelineRegistry.names()
    with pytest.raises(ConfigurationError):
        PipelineRegistry.get_pipeline("fig5")


def test_spectrum_run_is_deterministic(tmp_path):
    first = PipelineService().run(spectrum_spec(tmp_path / "one"))
    second = PipelineService().run(spectrum_spec(tmp_path / "two"))
    assert first.exit_code == second.exit_code == 0
    for name in ("spectrum_kw", "spectrum_kx"):
        a = (first.run_dir / "data" / f"{name}.csv").read_bytes()
        b = (second.run_dir / "data" / f"{name}.csv").read_bytes()
        assert a == b
    manifest = json.loads((first.run_dir / "manifest.json").read_text())
    assert manifest["status"] == "ok"
    assert manifest["spec"]["model"]["lambda"] == 0.0
    assert manifest["checksums"]["data/spectrum_kw.csv"] == hashlib.sha256(
        (first.run_dir / "data" / "spectrum_kw.csv").read_bytes()).hexdigest()
    assert "parameters.a_values" in manifest["defaults_applied"]


def test_spectrum_rows_cover_every_deformation(tmp_path):
    report = PipelineService().run(spectrum_spec(tmp_path))
    table = read_table(report.run_dir / "data" / "spectrum_kw.csv")
    assert table.columns == ["a", "k_w", "e1", "e2", "e3", "e4"]
    assert len(table.rows) == 3 * 11
    assert sorted({row[0] for row in table.rows}) == ["0.0", "0.5", "1.0"]


def test_plots_are_rendered(tmp_path):
    spec = spectrum_spec(tmp_path, plots=True)
    report = PipelineService().run(spec)
    assert (report.run_dir / "plots" / "spectrum_kw.png").stat().st_size > 0
    assert "plots/spectrum_kx.png" in report.files


def test_failed_stage_is_quarantined(tmp_path):
    spec = PipelineSpec.model_validate({
        "name": "fig4-c2sweep",
        "output_dir": str(tmp_path),
        "grid": {"n_q": 4, "n_theta": 4, "q_cut": 20.0},
        "parameters": {"masses": [8.0, 0.0], "check": False},
    })
    report = PipelineService().run(spec)
    assert report.exit_code == 2
    assert report.status == "error"
    rows = read_table(report.run_dir / "quarantine" / "data" / "c2_sweep.csv").rows
    assert len(rows) == 1
    manifest = json.loads((report.run_dir / "manifest.json").read_text())
    assert manifest["status"] == "error"
    assert not (report.run_dir / "data").exists()


def test_validate_rejects_separated_bands(tmp_path):
    path = write_config(tmp_path / "cfg.json", {"name": "fig3-gauge", "model": {"lambda": 1.2}})
    report = validate_config(path)
    assert not report.ok
    assert any("monopole_positions" in e for e in report.errors)


def test_validate_spectrum_allows_large_lambda(tmp_path):
    path = write_config(tmp_path / "cfg.json", {"name": "fig2", "model": {"lambda": 1.2}})
    assert validate_config(path).ok


def test_validate_rejects_unphysical_coherence(tmp_path):
    noisy = [{"t1": 1.0, "t2": 5.0}] + [{}] * 3
    path = write_config(tmp_path / "cfg.json", {"name": "device", "device": {"decoherence": noisy}})
    report = validate_config(path)
    assert not report.ok
    assert report.errors[0].startswith("device-emulator.decoherence.0")


def test_validate_echoes_defaults(tmp_path):
    path = write_config(tmp_path / "cfg.json", {"name": "fig2", "model": {"a": 0.5}})
    report = validate_config(path)
    assert report.ok
    assert report.spec.model.v == (1.0, 1.0, 1.0, 1.0)
    assert "model.v" in report.defaults_applied
    assert "model.a" not in report.defaults_applied


def test_validate_precedence(tmp_path):
    path = write_config(tmp_path / "cfg.json", {"name": "fig2", "model": {"lambda": 0.2, "a": 0.5}})
    report = validate_config(path, {"model.lambda": 0.5}, {"model": {"a": 0.1, "m": 3.0}})
    assert report.spec.model.lam == 0.5
    assert report.spec.model.a == 0.5
    assert report.spec.model.m == 3.0


def test_validate_reports_every_problem(tmp_path):
    path = write_config(tmp_path / "cfg.json", {"name": "fig6", "grid": {"n_q": 1}, "model": {"v": [1, 1, 0, 1]}})
    errors = validate_config(path).errors
    assert any(e.startswith("xplab-cli.name") for e in errors)
    assert any(e.startswith("topo-invariants.n_q") for e in errors)
    assert any(e.startswith("gamma-model.v") for e in errors)


def test_validate_unknown_parameter(tmp_path):
    path = write_config(tmp_path / "cfg.json", {"name": "fig2", "parameters": {"bogus": 1}})
    report = validate_config(path)
    assert report.errors == ["xplab-cli.parameters.bogus: not used by fig2"]


def test_validate_unreadable_file(tmp_path):
    report = validate_config(tmp_path / "missing.json")
    assert not report.ok
    assert report.errors[0].startswith("xplab-cli.config")


def test_acceptance_cheap_criteria_pass():
    report = acceptance_suite("quick", only=[1, 7])
    assert report["passed"], report
    assert [c["criterion"] for c in report["criteria"]] == [1, 7]


def test_acceptance_detects_wrong_closed_form(monkeypatch):
    monkeypatch.setattr(settings, "QUICK_GRID", "16x8")
    perturbed = lambda q, theta, m: 1.05 * chern_form_closed(q, theta, m)  # noqa: E731
    report = acceptance_suite("quick", only=[3], closed_form=perturbed)
    assert not report["passed"]
    assert report["criteria"][0]["checks"][0]["status"] == "fail"


def test_acceptance_errors_become_entries(monkeypatch):
    def broken(ctx):
        raise RuntimeError("boom")

    monkeypatch.setitem(acceptance.CRITERIA, 1, ("spectrum oracle", broken))
    report = acceptance_suite("quick", only=[1])
    assert report["criteria"][0]["status"] == "fail"
    assert report["criteria"][0]["checks"][0]["status"] == "error"


def test_cli_validate_and_exit_codes(tmp_path, capsys):
    good = write_config(tmp_path / "good.json", {"name": "fig2"})
    assert main(["validate", str(good)]) == 0
    assert '"defaults_applied"' in capsys.readouterr().out
    bad = write_config(tmp_path / "bad.json", {"name": "invariants", "model": {"lambda": 2.0}})
    assert main(["validate", str(bad)]) == 2
    assert "monopole_positions" in capsys.readouterr().err


def test_cli_spectrum_run(tmp_path, capsys):
    code = main(["spectrum", "--output-dir", str(tmp_path), "--no-plots", "--set", "parameters.points=5"])
    assert code == 0
    assert (tmp_path / "fig2-seed0" / "data" / "spectrum_kw.csv").exists()


def test_cli_run_takes_positional_config(tmp_path, capsys):
    config = write_config(tmp_path / "my-run.json", {
        "name": "fig2", "output_dir": str(tmp_path), "plots": False, "parameters": {"points": 5},
    })
    assert main(["run", str(config)]) == 0
    assert (tmp_path / "fig2-seed0" / "data" / "spectrum_kw.csv").exists()
    assert main(["run", str(config), "--config", str(tmp_path / "other.json")]) == 2
    assert "xplab-cli.config" in capsys.readouterr().err


def test_unexpected_error_is_quarantined(tmp_path, monkeypatch):
    def broken(self, spec, result, workers):
        result.table("partial", ["x"]).add(1.0)
        raise np.linalg.LinAlgError("SVD did not converge")

    monkeypatch.setattr(pipelines.SpectrumPipeline, "run", broken)
    report = PipelineService().run(spectrum_spec(tmp_path))
    assert report.exit_code == 1
    assert report.status == "error"
    assert "LinAlgError" in report.error
    assert (report.run_dir / "quarantine" / "data" / "partial.csv").exists()
    manifest = json.loads((report.run_dir / "manifest.json").read_text())
    assert manifest["status"] == "error"
    assert manifest["exit_code"] == 1


def test_current_uses_fitted_field_and_measured_c2(tmp_path):
    spec = PipelineSpec.model_validate({
        "name": "fig4-current",
        "output_dir": str(tmp_path),
        "plots": False,
        "protocol": {"samples": 101},
        "parameters": {"c2": 0.5, "alphas": [1.0, 0.5]},
    })
    report = PipelineService().run(spec)
    assert report.exit_code == 0, report.error
    table = read_table(report.run_dir / "data" / "current.csv")
    assert table.columns == ["b_z", "b_z_closed", "j_z", "j_z_ideal", "j_z_decohered", "c2", "e5"]
    for row in table.rows:
        assert float(row[0]) == pytest.approx(float(row[1]), rel=1e-5)
    summary = report.manifest["summary"]
    e5 = 0.2 * math.pi
    assert summary["slope_measured"] == pytest.approx(summary["c2_measured"] * e5 / (2 * math.pi ** 2), rel=1e-9)
    assert summary["slope_measured"] == pytest.approx(summary["slope_measured_expected"], rel=1e-9)
    assert summary["c2_measured"] > 0
    assert abs(summary["c2_decohered"]) < abs(summary["c2_measured"])


def test_current_skips_measurement_without_block_structure(tmp_path):
    spec = PipelineSpec.model_validate({
        "name": "fig4-current",
        "output_dir": str(tmp_path),
        "plots": False,
        "model": {"a": 0.5},
        "parameters": {"c2": 0.5, "alphas": [1.0, 0.5], "b_fields": [-0.6, -1.2]},
    })
    report = PipelineService().run(spec)
    assert report.exit_code == 0, report.error
    assert "c2_measured" not in report.manifest["summary"]
    assert any("measured current" in w for w in report.manifest["warnings"])


def test_sign_flip_tolerance_is_relative_to_c2():
    ctx = acceptance.SuiteContext(level="quick", workers=None, closed_form=chern_form_closed)
    plus = 0.4966
    assert acceptance.sign_flip_check(ctx, plus, -plus + 0.5 * acceptance.SIGN_FLIP_TOL * plus)
    assert not acceptance.sign_flip_check(ctx, plus, -plus + 2 * acceptance.SIGN_FLIP_TOL * plus)
    assert [c.status for c in ctx.checks] == ["pass", "fail"]
    assert "loop" in ctx.checks[0].detail
