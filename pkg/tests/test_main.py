import json
import logging
import shutil

import pytest
import yaml

from configuration_manager import ConfigurationManager, parse_config
from main import main, run, run_report
from report_exporter import validate_payload


def _diagnostics(run_dir):
    payload = json.loads((run_dir / "diagnostics.json").read_text(encoding="utf-8"))
    validate_payload(payload)
    return payload


def test_report_on_empty_directory_fails(tmp_path):
    assert main(["report", str(tmp_path)]) == 1
    assert not (tmp_path / "summary.md").exists()


@pytest.mark.parametrize("argv", [["fly"], ["solve"], ["solve", "--threads", "many"], ["report"]])
def test_usage_errors_exit_one(argv):
    assert main(argv) == 1


def test_missing_config_file_exits_one(tmp_path):
    assert main(["solve", "--config", str(tmp_path / "absent.yaml")]) == 1


def test_invalid_config_exits_one(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text("problem: {N: 5, mu1: 1, mu2: 1, rho: 1, beta: 1, b1: 1, b2: 1}\n",
                    encoding="utf-8")
    assert main(["thresholds", "--config", str(path), "--out", str(tmp_path)]) == 1


def test_cutoff_run_then_report(tmp_path):
    assert main(["cutoff", "--out", str(tmp_path)]) == 0
    run_dir = tmp_path / "cutoff"
    payload = _diagnostics(run_dir)
    assert payload["kind"] == "cutoff"
    assert payload["status"] == "success"
    assert payload["summary"]["gradient_slope_2"] is True
    assert len(payload["result"]["rows"]) == 4
    assert (run_dir / "cutoff.csv").exists()
    assert yaml.safe_load((run_dir / "config.yaml").read_text())["experiment"]["name"] == "cutoff"

    assert main(["report", str(tmp_path)]) == 0
    assert (tmp_path / "summary.md").exists()
    assert (tmp_path / "summary.xlsx").exists()
    assert (tmp_path / "ladder_fits.csv").exists()


def test_thresholds_run_records_regime(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text("problem: {N: 1, mu1: 1, mu2: 1, rho: 1, beta: 1, b1: 1, b2: 1}\n",
                    encoding="utf-8")
    assert main(["thresholds", "--config", str(path), "--out", str(tmp_path), "--seed", "4"]) == 0
    payload = _diagnostics(tmp_path / "thresholds")
    assert payload["summary"]["regime"] == "coercive_1d"
    assert payload["seed"] == 4
    assert payload["config"]["solve"]["seed"] == 4


def test_regime_error_exits_three(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text("problem: {N: 2, mu1: 1, mu2: 1, rho: 1, beta: 1, b1: 1, b2: 1}\n"
                    "solve: {mode: local_min}\n", encoding="utf-8")
    assert main(["solve", "--config", str(path), "--out", str(tmp_path)]) == 3
    payload = _diagnostics(tmp_path / "solve")
    assert payload["status"] == "regime"
    assert payload["exit_code"] == 3
    assert payload["result"]["error"]["error"] == "RegimeError"


def _walk_floats(obj):
    if isinstance(obj, float):
        yield obj
    elif isinstance(obj, dict):
        for value in obj.values():
            yield from _walk_floats(value)
    elif isinstance(obj, list):
        for value in obj:
            yield from _walk_floats(value)


def _cutoff_config(manager, tmp_path):
    cfg = parse_config("experiment: cutoff\n", manager.get_defaults())
    cfg.output_dir = tmp_path
    return cfg


def test_run_logs_status_markers(tmp_path, config_dir, caplog):
    caplog.set_level(logging.INFO)
    manager = ConfigurationManager(config_dir)
    assert run(_cutoff_config(manager, tmp_path), manager) == 0
    assert "✅ Results for 'cutoff'" in caplog.text
    assert run_report(tmp_path / "empty") == 1
    assert "❌ Nothing to aggregate" in caplog.text


def test_output_float_digits_setting(tmp_path, config_dir):
    settings = tmp_path / "config"
    shutil.copytree(config_dir, settings)
    main_yaml = settings / "config_main.yaml"
    main_yaml.write_text(main_yaml.read_text(encoding="utf-8").replace(
        "float_digits: 17", "float_digits: 6"), encoding="utf-8")
    manager = ConfigurationManager(settings)
    assert manager.get_output_settings()["float_digits"] == 6

    out = tmp_path / "out"
    assert run(_cutoff_config(manager, out), manager) == 0
    payload = _diagnostics(out / "cutoff")
    values = list(_walk_floats(payload["result"]))
    assert values
    assert all(float(f"{v:.6g}") == v for v in values)


@pytest.mark.slow
def test_solve_reruns_are_byte_identical(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text("problem: {N: 1, mu1: 1, mu2: 1, rho: 1, beta: 1, b1: 1, b2: 0}\n"
                    "grid: {n: 256}\n"
                    "solve: {mode: global_min, max_iters: 20000, seed: 3}\n", encoding="utf-8")
    out = tmp_path / "out"
    argv = ["solve", "--config", str(path), "--out", str(out)]
    first_code = main(argv)
    first = {p.relative_to(out): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()}
    assert main(argv) == first_code
    second = {p.relative_to(out): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()}
    assert {p.name for p in first} >= {"diagnostics.json", "state.nlsf", "fiber_trace.csv"}
    assert second == first
