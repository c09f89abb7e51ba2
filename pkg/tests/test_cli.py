import csv
import io
import json
import os
import subprocess
import sys

import jsonschema
import pytest

from finslerjet.cli import run
from finslerjet.scan import (CONFIG_SCHEMA, REPORT_SCHEMA, ConfigError, ScanConfig, build_metric,
                             csv_columns, parse_factor, run_scan)


def write_config(tmp_path, data, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def load(path):
    with open(path) as fh:
        return json.load(fh)


def test_euclidean_properties_scan(tmp_path):
    cfg = write_config(tmp_path, {"metric": {"kind": "euclidean", "params": {"n": 2}},
                                  "checks": ["properties"], "samples": {"count": 10}})
    out = tmp_path / "r.json"
    assert run(["scan", cfg, "-o", str(out), "-q"]) == 0
    report = load(out)
    jsonschema.validate(report, REPORT_SCHEMA)
    assert len(report["per_point"]) == 10
    for rec in report["per_point"]:
        assert all(v <= 1e-12 for v in rec["residuals"]["properties"].values())


def test_s5_einstein_scan(tmp_path):
    cfg = write_config(tmp_path, {"metric": {"kind": "s5_example", "params": {"c": 2}},
                                  "checks": ["einstein"], "tolerances": {"einstein_residual": 1e-5},
                                  "samples": {"count": 20, "seed": 4}})
    out = tmp_path / "r.json"
    assert run(["scan", cfg, "-o", str(out), "-q"]) == 0
    report = load(out)
    assert abs(report["stats"]["scal"]["mean"] - 6) <= 1e-5
    assert report["seed"] == 4
    assert report["summary"]["einstein"]["residuals"]["einstein_residual"]["tolerance"] == 1e-5


def test_randers_bound_exit_2(tmp_path, capsys):
    cfg = write_config(tmp_path, {"metric": {"kind": "randers", "params": {"b": [1.2, 0]}}})
    assert run(["scan", cfg, "-o", str(tmp_path / "r.json")]) == 2
    assert "Randers requires ‖b‖<1" in capsys.readouterr().err


def test_cylinder_check_command(tmp_path):
    out = tmp_path / "c.json"
    code = run(["cylinder-check", "--phi", "cos+c", "--c", "2", "--eps", "3.14", "--m2", "sphere2",
                "-o", str(out), "-q"])
    assert code == 0
    summary = load(out)["summary"]["cylinder"]["residuals"]
    assert summary["hessian_residual"]["max"] <= 1e-6


def test_conformal_check_command(tmp_path):
    out = tmp_path / "c.json"
    assert run(["conformal-check", "--metric", "euclidean3", "--u", "const:1.0", "-o", str(out), "-q"]) == 0
    assert load(out)["summary"]["conformal"]["residuals"]["ee9_residual"]["max"] == 0.0


def test_einstein_check_sphere(tmp_path):
    out = tmp_path / "e.csv"
    assert run(["einstein-check", "--metric", "sphere2", "--format", "csv", "-o", str(out), "-q"]) == 0
    rows = list(csv.DictReader(io.StringIO(out.read_text())))
    assert len(rows) == 20
    assert all(abs(float(r["scal"]) - 2) <= 1e-6 for r in rows)


def test_warped_check_command(tmp_path):
    out = tmp_path / "w.json"
    code = run(["warped-check", "--m1", "sphere2", "--m2", '{"kind": "randers", "params": {"b": [0.4, 0.2]}}',
                "--f", "cos+c:1.5", "-o", str(out), "-q"])
    assert code == 0
    res = load(out)["summary"]["warped"]["residuals"]
    assert set(res) == {"block_offdiag", "mixed_connection", "first_factor_connection",
                        "first_factor_curvature", "curvature_mixed_zero"}


def test_warped_finsler_first_factor_reports_diagnostics(tmp_path):
    m1 = {"kind": "conformal", "params": {"base": {"kind": "randers", "params": {"b": [0.3, 0.1]}},
                                          "u": "linear:0.3,-0.2"}}
    out = tmp_path / "w.json"
    code = run(["warped-check", "--m1", json.dumps(m1), "--m2", "sphere2", "--f", "cos+c:1.5",
                "--count", "5", "-o", str(out), "-q"])
    assert code == 0
    summary = load(out)["summary"]["warped"]
    assert "first_factor_curvature" in summary["diagnostics"]
    assert "first_factor_curvature" not in summary["residuals"]


def test_oracle_diff_command(tmp_path):
    out = tmp_path / "o.json"
    assert run(["oracle-diff", "--metric", "hyperbolic2", "--count", "10", "-o", str(out), "-q"]) == 0
    report = load(out)
    assert set(report["summary"]["oracle"]["residuals"]) == {
        "oracle_christoffel", "oracle_riemann", "oracle_ricci", "oracle_scal"}
    assert "oracle.oracle_scal" in csv_columns(report)


def test_oracle_needs_riemannian(tmp_path):
    assert run(["oracle-diff", "--metric", '{"kind": "randers", "params": {"b": [0.1, 0.2]}}',
                "-o", str(tmp_path / "o.json")]) == 2


@pytest.mark.parametrize("data", [
    {"metric": "nosuchmetric"},
    {"metric": "sphere2", "unknown": 1},
    {"metric": "sphere2", "samples": {"count": -1}},
    {"metric": "sphere2", "checks": ["einstein", "bogus"]},
    {"metric": "sphere2", "tolerances": {"not_a_residual": 1.0}},
    {"metric": {"kind": "randers", "params": {"b": [0.1, 0.1], "extra": 2}}},
    {"metric": "sphere2", "checks": ["conformal"], "conformal": {"u": "const:1"}},
    {"metric": "sphere3", "checks": ["conformal"]},
    {"metric": "sphere3", "checks": ["cylinder"]},
    {"metric": "sphere2", "checks": ["einstein"], "order": 3},
], ids=["unknown-kind", "unknown-key", "negative-count", "unknown-check", "unknown-tolerance",
        "unknown-param", "conformal-2d", "conformal-no-u", "cylinder-wrong-kind", "low-order"])
def test_config_errors_exit_2(tmp_path, data):
    cfg = write_config(tmp_path, data)
    assert run(["scan", cfg, "-o", str(tmp_path / "r.json"), "-q"]) == 2


def test_malformed_json_exit_2(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    assert run(["scan", str(path)]) == 2
    assert run(["scan", str(tmp_path / "missing.json")]) == 2


def test_unwritable_output_exit_2(tmp_path):
    cfg = write_config(tmp_path, {"metric": "sphere2"})
    assert run(["scan", cfg, "-o", str(tmp_path / "no" / "dir" / "r.json")]) == 2


def test_usage_error_exit_2():
    assert run(["einstein-check"]) == 2
    assert run(["frobnicate"]) == 2


def test_failing_check_exit_1(tmp_path):
    # R x S^2 has Ric = diag(0, g_S2): not Einstein
    product = {"kind": "warped", "params": {"m1": "euclidean1", "m2": "sphere2", "f": "const:1"}}
    cfg = write_config(tmp_path, {"metric": product, "checks": ["einstein"], "samples": {"count": 5}})
    out = tmp_path / "r.json"
    assert run(["scan", cfg, "-o", str(out), "-q"]) == 1
    report = load(out)
    assert report["passed"] is False
    assert report["summary"]["einstein"]["residuals"]["einstein_residual"]["pass"] is False


def test_point_failures_recorded(tmp_path):
    # the hyperbolic field is singular at x2 = 0; force samples across it
    cfg = write_config(tmp_path, {"metric": "hyperbolic2", "checks": ["properties"],
                                  "samples": {"count": 3, "domain": [[-1, 1], [0.0, 0.0]]}})
    out = tmp_path / "r.json"
    assert run(["scan", cfg, "-o", str(out), "-q"]) == 1
    report = load(out)
    jsonschema.validate(report, REPORT_SCHEMA)
    assert len(report["failures"]) == 3 and report["per_point"] == []
    assert all(isinstance(f["error"], str) for f in report["failures"])


def test_empty_scan_passes(tmp_path):
    cfg = write_config(tmp_path, {"metric": "sphere2", "samples": {"count": 0}})
    out = tmp_path / "r.json"
    assert run(["scan", cfg, "-o", str(out), "-q"]) == 0
    assert load(out)["per_point"] == []


def test_determinism_and_worker_independence(tmp_path):
    data = {"metric": {"kind": "randers", "params": {"b": [0.3, -0.1, 0.2]}},
            "checks": ["properties", "einstein"], "samples": {"count": 12, "seed": 17},
            "tolerances": {"einstein_residual": 1.0}}
    cfg = write_config(tmp_path, data)
    texts = []
    for i, workers in enumerate(["1", "1", "3"]):
        out = tmp_path / f"r{i}.json"
        assert run(["scan", cfg, "--workers", workers, "-o", str(out), "-q"]) == 0
        report = load(out)
        report.pop("timing")
        report["config"].pop("workers")
        report["config"]["output"].pop("path")
        texts.append(json.dumps(report, sort_keys=True))
    assert texts[0] == texts[1] == texts[2]


def test_byte_identical_modulo_timing(tmp_path):
    cfg = write_config(tmp_path, {"metric": "sphere3", "checks": ["einstein"], "samples": {"count": 5}})
    outs = []
    for _ in range(2):
        out = tmp_path / "r.json"
        run(["scan", cfg, "-o", str(out), "-q"])
        lines = [ln for ln in out.read_text().splitlines() if '"seconds"' not in ln]
        outs.append("\n".join(lines))
    assert outs[0] == outs[1]


def test_output_dir_env(tmp_path, monkeypatch):
    monkeypatch.setenv("FINSLERJET_OUTPUT_DIR", str(tmp_path))
    cfg = write_config(tmp_path, {"metric": "sphere2", "samples": {"count": 2}})
    assert run(["scan", cfg, "-q"]) == 0
    assert (tmp_path / "sphere2-report.json").exists()


def test_stdout_output(capsys):
    assert run(["einstein-check", "--metric", "euclidean2", "--count", "2", "-o", "-", "-q"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["metric"]["label"] == "euclidean2"


def test_nan_written_as_null():
    from finslerjet.scan import _clean, report_json
    text = report_json(_clean({"a": float("nan"), "b": [float("inf"), 1.0]}))
    assert json.loads(text) == {"a": None, "b": [None, 1.0]}


def test_every_checked_residual_in_summary():
    config = ScanConfig.from_dict({"metric": "sphere3", "checks": ["properties", "einstein"],
                                   "samples": {"count": 3}, "with_oracle": True})
    report = run_scan(config)
    for rec in report["per_point"]:
        for check, vals in rec["residuals"].items():
            assert set(vals) <= set(report["summary"][check]["residuals"])


def test_factor_specs():
    assert parse_factor("const:2")([0.3]) == 2.0
    assert parse_factor("linear:1,2")([0.5, 0.25]) == 1.0
    with pytest.raises(ConfigError):
        parse_factor("wiggle:1")
    with pytest.raises(ConfigError):
        parse_factor("neglog-cos+c:0.5")


def test_build_metric_shorthand():
    assert build_metric("euclidean4").dim == 4
    with pytest.raises(ConfigError):
        build_metric("sphere7")


def test_schemas_are_valid():
    jsonschema.Draft202012Validator.check_schema(CONFIG_SCHEMA)
    jsonschema.Draft202012Validator.check_schema(REPORT_SCHEMA)


def test_module_entry_point(tmp_path):
    out = tmp_path / "r.json"
    proc = subprocess.run([sys.executable, "-m", "finslerjet", "einstein-check", "--metric", "sphere2",
                           "--count", "3", "-o", str(out)], capture_output=True, text=True,
                          env={**os.environ, "PYTHONWARNINGS": "ignore"})
    assert proc.returncode == 0, proc.stderr
    assert "PASSED" in proc.stdout
