from pathlib import Path

import pytest

from configuration_manager import (ConfigurationManager, Experiment, format_config,
                                   load_run_config, parse_config, resolve_threads)
from exceptions import ConfigurationError
from solver import SolveMode

SOLVE_YAML = """
experiment:
  name: solve
  output_dir: out
problem: {N: 3, mu1: 1.0, mu2: 1.0, rho: 5.0, beta: 0.05, b1: 0.5, b2: 0.5}
grid: {n: 512, r_max: 20.0}
solve: {mode: local_min, seed: 7}
"""


def test_parse_fills_defaults_and_copies_grid():
    cfg = parse_config(SOLVE_YAML)
    assert cfg.experiment is Experiment.SOLVE
    assert cfg.problem.N == 3 and cfg.grid["N"] == 3
    assert cfg.solve.mode is SolveMode.LOCAL_MIN
    assert (cfg.solve.n, cfg.solve.r_max, cfg.solve.spacing) == (512, 20.0, "uniform")
    assert cfg.solve.seed == 7
    assert cfg.output_dir == Path("out")
    assert cfg.ladder is None and cfg.component is None


def test_format_parses_back_to_same_config():
    cfg = parse_config(SOLVE_YAML + "ladder:\n  masses: [[0.4, 0.4], [0.3, 0.3]]\n")
    assert parse_config(format_config(cfg)) == cfg


def test_subcommand_overrides_experiment_name():
    cfg = parse_config(SOLVE_YAML, experiment="thresholds")
    assert cfg.experiment is Experiment.THRESHOLDS


def test_defaults_are_overridden_by_run_file():
    defaults = {"grid": {"n": 4096, "spacing": "graded"}, "solve": {"max_iters": 10}}
    cfg = parse_config(SOLVE_YAML, defaults)
    assert cfg.grid["n"] == 512
    assert cfg.grid["spacing"] == "graded"
    assert cfg.solve.max_iters == 10


def test_problem_free_experiment_needs_no_problem():
    cfg = parse_config("experiment: cutoff\nladder:\n  eps: [0.2, 0.1]\n")
    assert cfg.problem is None
    assert cfg.ladder == {"eps": [0.2, 0.1]}


@pytest.mark.parametrize("text, key", [
    ("problem: {N: 3}\n", "experiment.name"),
    ("experiment: fly\n", "experiment.name"),
    ("experiment: solve\nproblem: {N: 3, mu1: 1, mu2: 1, rho: 1, beta: 0.1, b1: 1}\n",
     "problem.b2"),
    ("experiment: solve\nproblem: {N: 3.5, mu1: 1, mu2: 1, rho: 1, beta: 0.1, b1: 1, b2: 1}\n",
     "problem.N"),
    ("experiment: solve\nproblem: {N: 3, mu1: -1, mu2: 1, rho: 1, beta: 0.1, b1: 1, b2: 1}\n",
     "problem.mu1"),
    ("experiment: solve\nproblem: {N: 3, mu1: one, mu2: 1, rho: 1, beta: 0.1, b1: 1, b2: 1}\n",
     "problem.mu1"),
    ("experiment: profile\ngrid: {n: 32}\n", "grid.n"),
    ("experiment: profile\ngrid: {spacing: log}\n", "grid.spacing"),
    ("experiment: profile\ngrid: {r_max: -1.0}\n", "grid.r_max"),
    ("experiment: profile\nsolve: {mode: saddle}\n", "solve.mode"),
    ("experiment: profile\nsolve: {step: 0.0}\n", "solve.step"),
    ("experiment: profile\nevolution: {dt: 0.0}\n", "evolution.dt"),
    ("experiment: profile\nevolution: {reference: ground}\n", "evolution.reference"),
    ("experiment: {name: profile, component: 3}\n", "experiment.component"),
    ("experiment: collapse\nproblem: {N: 3, mu1: 0, mu2: 0, rho: 0, beta: 1, b1: 1, b2: 1}\n",
     "ladder.masses"),
    ("experiment: betalimit\nproblem: {N: 3, mu1: 1, mu2: 1, rho: 1, beta: 1, b1: 1, b2: 1}\n",
     "ladder.betas"),
    ("experiment: profile\nladder:\n  masses: [[0.5, -1.0]]\n", "ladder.masses[0]"),
    ("experiment: profile\nladder:\n  masses: [0.5]\n", "ladder.masses[0]"),
])
def test_errors_name_the_key_path(text, key):
    with pytest.raises(ConfigurationError) as info:
        parse_config(text)
    assert info.value.key_path == key
    assert key in str(info.value)
    assert info.value.exit_code == 1


def test_grid_dimension_must_match_problem():
    with pytest.raises(ConfigurationError) as info:
        parse_config(SOLVE_YAML.replace("grid: {n: 512", "grid: {N: 2, n: 512"))
    assert info.value.key_path == "grid.N"


@pytest.mark.parametrize("text", ["[1, 2]\n", "experiment: [solve\n", b"\xff\xfe"])
def test_malformed_documents(text):
    with pytest.raises(ConfigurationError):
        parse_config(text)


def test_unknown_keys_are_ignored(caplog):
    cfg = parse_config("experiment: profile\ngrid: {n: 128, colour: red}\nextra: 1\n")
    assert cfg.grid["n"] == 128
    assert "grid.colour" in caplog.text


def test_threads_resolution_order(monkeypatch):
    monkeypatch.delenv("NORMSOLVE_THREADS", raising=False)
    assert resolve_threads(None) == 1
    assert resolve_threads(None, {"threads": 3}) == 3
    monkeypatch.setenv("NORMSOLVE_THREADS", "4")
    assert resolve_threads(None, {"threads": 3}) == 4
    assert resolve_threads(2, {"threads": 3}) == 2


def test_invalid_thread_counts(monkeypatch):
    monkeypatch.setenv("NORMSOLVE_THREADS", "many")
    with pytest.raises(ConfigurationError) as info:
        resolve_threads(None)
    assert info.value.key_path == "NORMSOLVE_THREADS"
    with pytest.raises(ConfigurationError) as info:
        resolve_threads(0)
    assert info.value.key_path == "--threads"


def test_manager_loads_modular_directory(config_dir):
    manager = ConfigurationManager(config_dir)
    assert manager.validate_configuration()
    defaults = manager.get_defaults()
    assert defaults["grid"] == {"n": 2048, "r_max": None, "spacing": "uniform"}
    assert defaults["solve"]["max_reruns"] == 3
    assert defaults["evolution"]["reference"] == "local_min"
    assert manager.get_output_settings()["output_prefixes"]["failed"] == "Failed_"
    assert manager.get_certificate_config()["certificate_settings"]["gradient_slack"] == 10.0
    assert manager.get_ladder_config()["eps"] == [0.2, 0.1, 0.05, 0.02]
    assert manager.get_runtime_settings() == {"threads": 1}


def test_manager_single_file_and_missing_path(tmp_path):
    path = tmp_path / "settings.yaml"
    path.write_text("grid: {n: 256}\n", encoding="utf-8")
    manager = ConfigurationManager(path)
    assert manager.get_grid_config()["n"] == 256
    assert not manager.validate_configuration()
    with pytest.raises(ConfigurationError):
        ConfigurationManager(tmp_path / "missing")


def test_load_run_config_uses_manager_defaults(tmp_path, config_dir):
    path = tmp_path / "run.yaml"
    path.write_text("experiment: profile\n", encoding="utf-8")
    cfg = load_run_config(path, ConfigurationManager(config_dir))
    assert cfg.grid["n"] == 2048
    assert cfg.solve.max_iters == 50000
    with pytest.raises(ConfigurationError):
        load_run_config(tmp_path / "absent.yaml")
