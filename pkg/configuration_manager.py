import logging
import os
from dataclasses import asdict, dataclass, field, fields
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import yaml

from exceptions import ConfigurationError
from functional import ProblemParams
from radial_grid import SPACINGS
from solver import SolveConfig, SolveMode


class Experiment(str, Enum):
    SOLVE = "solve"
    THRESHOLDS = "thresholds"
    PROFILE = "profile"
    EVOLVE = "evolve"
    COLLAPSE = "collapse"
    BUBBLE = "bubble"
    BETALIMIT = "betalimit"
    CUTOFF = "cutoff"
    REPORT = "report"


# Experiments that run without a [problem] section.
PROBLEM_FREE = (Experiment.PROFILE, Experiment.CUTOFF, Experiment.REPORT)

PROBLEM_KEYS = {"N": int, "mu1": float, "mu2": float, "rho": float, "beta": float,
                "b1": float, "b2": float}
GRID_KEYS = {"N": int, "n": int, "r_max": float, "spacing": str}
SOLVE_KEYS = {"mode": str, "step": float, "tol_grad": float, "tol_pohozaev": float,
              "max_iters": int, "seed": int, "ball_radius": float, "max_reruns": int}
EVOLUTION_KEYS = {"dt": float, "t_end": float, "amplitude": float, "n_perturbations": int,
                  "record_every": int, "reference": str}
LADDER_KEYS = {"masses": list, "betas": list, "eps": list}
EXPERIMENT_KEYS = {"name": str, "output_dir": str, "component": int}


@dataclass
class EvolutionSettings:
    """Time stepping and perturbation settings for the evolve experiment."""
    dt: float = 1e-3
    t_end: float = 20.0
    amplitude: float = 1e-3
    n_perturbations: int = 5
    record_every: int = 10
    reference: str = "local_min"

    def __post_init__(self):
        for name in ("dt", "t_end"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"must be positive, got {getattr(self, name)}",
                                         key_path=f"evolution.{name}")
        if self.amplitude < 0:
            raise ConfigurationError(f"must be nonnegative, got {self.amplitude}",
                                     key_path="evolution.amplitude")
        if self.n_perturbations < 1:
            raise ConfigurationError(f"must be >= 1, got {self.n_perturbations}",
                                     key_path="evolution.n_perturbations")
        if self.record_every < 1:
            raise ConfigurationError(f"must be >= 1, got {self.record_every}",
                                     key_path="evolution.record_every")
        if self.reference not in [mode.value for mode in SolveMode]:
            raise ConfigurationError(f"must be one of {[m.value for m in SolveMode]}, got "
                                     f"{self.reference!r}", key_path="evolution.reference")


@dataclass
class RunConfig:
    """
    Validated run configuration.

    Args:
        problem: Problem coefficients and masses (None for problem-free experiments).
        grid: Grid settings ``{N, n, r_max, spacing}``; ``r_max`` None selects the decay heuristic.
        solve: Solver settings (grid size and spacing are copied in).
        experiment: Experiment to run.
        output_dir: Root directory of run outputs.
        ladder: Optional ladders (``masses``, ``betas``, ``eps``).
        evolution: Evolution settings.
        component: Active component of a semi-trivial solve (1 or 2), if any.
    """
    problem: Optional[ProblemParams]
    grid: Dict[str, Any]
    solve: SolveConfig
    experiment: Experiment
    output_dir: Path
    ladder: Optional[Dict[str, List[Any]]] = None
    evolution: EvolutionSettings = field(default_factory=EvolutionSettings)
    component: Optional[int] = None


class ConfigurationManager:
    """
    Loads default settings from a YAML file or a modular configuration directory.

    The modular layout merges ``config_main.yaml`` (grid and solver
    defaults, output prefixes, runtime), ``config_experiments.yaml``
    (evolution and ladder defaults) and ``config_constants.yaml``
    (certificate tolerance tiers) into one dictionary.
    """

    CONFIG_FILES = ('config_main.yaml', 'config_experiments.yaml', 'config_constants.yaml')

    def __init__(self, config_path: Union[str, Path]):
        """
        Initialize configuration manager and load all configuration data.

        Args:
            config_path: Path to configuration file or directory
        """
        self.config_path = Path(config_path)
        self.config = self._load_configuration()

    def _load_configuration(self) -> Dict[str, Any]:
        if self.config_path.is_file():
            return self._load_single_config_file(self.config_path)
        elif self.config_path.is_dir():
            return self._load_modular_configs(self.config_path)
        else:
            raise ConfigurationError(f"Configuration path not found: {self.config_path}")

    def _load_single_config_file(self, config_file: Path) -> Dict[str, Any]:
        try:
            with open(config_file, 'r', encoding='utf-8') as f:
                config = yaml.safe_load(f) or {}
            logging.info(f"Loaded configuration from {config_file.name}")
            return config
        except Exception as e:
            logging.error(f"Failed to load configuration from {config_file}: {e}")
            raise

    def _load_modular_configs(self, config_dir: Path) -> Dict[str, Any]:
        """
        Load and merge configuration from the modular YAML files.

        Args:
            config_dir: Directory containing configuration files

        Returns:
            Merged configuration dictionary
        """
        config = {}
        for filename in self.CONFIG_FILES:
            file_path = config_dir / filename
            if file_path.exists():
                try:
                    with open(file_path, 'r', encoding='utf-8') as f:
                        file_config = yaml.safe_load(f) or {}
                    config.update(file_config)
                    logging.info(f"Loaded configuration from {filename}")
                except Exception as e:
                    logging.warning(f"Failed to load {filename}: {e}")
        return config

    def get_grid_config(self) -> Dict[str, Any]:
        grid = self.config.get('grid', {})
        return {'n': grid.get('n', 2048), 'r_max': grid.get('r_max'),
                'spacing': grid.get('spacing', 'uniform')}

    def get_solver_config(self) -> Dict[str, Any]:
        solve = dict(self.config.get('solve', {}))
        solve.setdefault('step', 1e-2)
        solve.setdefault('tol_pohozaev', 1e-6)
        solve.setdefault('max_iters', 50000)
        solve.setdefault('max_reruns', 3)
        return solve

    def get_evolution_config(self) -> Dict[str, Any]:
        return dict(self.config.get('evolution', {}))

    def get_ladder_config(self) -> Dict[str, Any]:
        return dict(self.config.get('ladder_defaults', {}))

    def get_certificate_config(self) -> Dict[str, Any]:
        """
        Get configuration subset for the certificate validator.

        Returns:
            Configuration dict containing the certificate tolerance tiers
        """
        return {'certificate_settings': self.config.get('certificate_settings', {})}

    def get_output_settings(self) -> Dict[str, Any]:
        """
        Get output file naming settings.

        Returns:
            Configuration for run directory prefixes and float formatting
        """
        output_config = self.config.get('output_settings', {})
        return {
            'output_prefixes': output_config.get('prefixes', {}),
            'float_digits': output_config.get('float_digits', 17),
        }

    def get_runtime_settings(self) -> Dict[str, Any]:
        return dict(self.config.get('runtime', {}))

    def get_defaults(self) -> Dict[str, Dict[str, Any]]:
        """Section defaults used to fill a run configuration."""
        return {
            'grid': self.get_grid_config(),
            'solve': self.get_solver_config(),
            'evolution': self.get_evolution_config(),
        }

    def validate_configuration(self) -> bool:
        """
        Validate that all required configuration sections are present.

        Returns:
            True if configuration is valid, False otherwise
        """
        required_sections = ['grid', 'solve', 'output_settings', 'certificate_settings']
        missing_sections = [section for section in required_sections
                            if section not in self.config]
        if missing_sections:
            logging.error(f"Missing required configuration sections: {missing_sections}")
            return False
        return True


def resolve_threads(cli_threads: Optional[int], runtime: Optional[Dict[str, Any]] = None) -> int:
    """``--threads``, else ``NORMSOLVE_THREADS``, else ``runtime.threads``, else 1."""
    if cli_threads is not None:
        threads = cli_threads
        source = "--threads"
    elif os.environ.get("NORMSOLVE_THREADS"):
        raw = os.environ["NORMSOLVE_THREADS"]
        try:
            threads = int(raw)
        except ValueError:
            raise ConfigurationError(f"must be an integer, got {raw!r}",
                                     key_path="NORMSOLVE_THREADS")
        source = "NORMSOLVE_THREADS"
    else:
        threads = int((runtime or {}).get("threads", 1))
        source = "runtime.threads"
    if threads < 1:
        raise ConfigurationError(f"must be >= 1, got {threads}", key_path=source)
    return threads


def _coerce(value: Any, expected: type, key_path: str) -> Any:
    if value is None:
        return None
    if expected is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigurationError(f"expected a real number, got {value!r}", key_path=key_path)
        return float(value)
    if expected is int:
        if isinstance(value, bool) or not isinstance(value, int):
            if isinstance(value, float) and value.is_integer():
                return int(value)
            raise ConfigurationError(f"expected an integer, got {value!r}", key_path=key_path)
        return value
    if expected is str:
        if not isinstance(value, str):
            raise ConfigurationError(f"expected a string, got {value!r}", key_path=key_path)
        return value
    if expected is list:
        if not isinstance(value, list):
            raise ConfigurationError(f"expected a list, got {value!r}", key_path=key_path)
        return value
    return value


def _section(document: Dict[str, Any], name: str, keys: Dict[str, type],
             defaults: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    raw = document.get(name) or {}
    if not isinstance(raw, dict):
        raise ConfigurationError(f"expected a mapping, got {type(raw).__name__}", key_path=name)
    merged = {k: v for k, v in (defaults or {}).items() if k in keys}
    for key, value in raw.items():
        if key not in keys:
            logging.warning(f"Unknown configuration key {name}.{key} ignored")
            continue
        merged[key] = value
    return {key: _coerce(value, keys[key], f"{name}.{key}") for key, value in merged.items()}


def _parse_ladder(raw: Dict[str, Any]) -> Dict[str, List[Any]]:
    ladder = {}
    if "masses" in raw:
        masses = []
        for i, point in enumerate(raw["masses"]):
            if not isinstance(point, (list, tuple)) or len(point) != 2:
                raise ConfigurationError(f"expected a [b1, b2] pair, got {point!r}",
                                         key_path=f"ladder.masses[{i}]")
            b1 = _coerce(point[0], float, f"ladder.masses[{i}][0]")
            b2 = _coerce(point[1], float, f"ladder.masses[{i}][1]")
            if b1 <= 0 or b2 <= 0:
                raise ConfigurationError("masses must be positive", key_path=f"ladder.masses[{i}]")
            masses.append([b1, b2])
        ladder["masses"] = masses
    for key in ("betas", "eps"):
        if key in raw:
            ladder[key] = [_coerce(x, float, f"ladder.{key}[{i}]") for i, x in enumerate(raw[key])]
    return ladder


def parse_config(text: Union[bytes, str], defaults: Optional[Dict[str, Dict[str, Any]]] = None,
                 experiment: Optional[str] = None) -> RunConfig:
    """
    Parse and validate a YAML run configuration.

    Sections: ``problem``, ``grid``, ``solve``, ``experiment`` (a name or a
    mapping with ``name``, ``output_dir``, ``component``), optional
    ``ladder`` and ``evolution``. Missing keys are filled from ``defaults``.
    A non-None ``experiment`` (the CLI subcommand) overrides ``experiment.name``.

    Raises:
        ConfigurationError: Naming the dotted key path of the first problem.
    """
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as e:
            raise ConfigurationError(f"configuration is not UTF-8: {e}")
    try:
        document = yaml.safe_load(text) or {}
    except yaml.YAMLError as e:
        raise ConfigurationError(f"configuration is not valid YAML: {e}")
    if not isinstance(document, dict):
        raise ConfigurationError("configuration must be a mapping of sections")
    defaults = defaults or {}
    known = {"problem", "grid", "solve", "experiment", "ladder", "evolution"}
    for key in document:
        if key not in known:
            logging.warning(f"Unknown configuration key {key} ignored")

    raw_experiment = document.get("experiment")
    if isinstance(raw_experiment, str):
        raw_experiment = {"name": raw_experiment}
    if experiment is not None:
        raw_experiment = dict(raw_experiment or {})
        if raw_experiment.get("name", experiment) != experiment:
            logging.warning(f"experiment.name={raw_experiment['name']!r} overridden by {experiment!r}")
        raw_experiment["name"] = experiment
    if raw_experiment is None:
        raise ConfigurationError("missing required key", key_path="experiment.name")
    experiment_section = _section({"experiment": raw_experiment}, "experiment", EXPERIMENT_KEYS)
    try:
        experiment = Experiment(experiment_section.get("name"))
    except ValueError:
        raise ConfigurationError(f"expected one of {[e.value for e in Experiment]}, got "
                                 f"{experiment_section.get('name')!r}", key_path="experiment.name")

    problem = None
    if "problem" in document or experiment not in PROBLEM_FREE:
        values = _section(document, "problem", PROBLEM_KEYS)
        for key in PROBLEM_KEYS:
            if values.get(key) is None:
                raise ConfigurationError(f"missing required key ({PROBLEM_KEYS[key].__name__})",
                                         key_path=f"problem.{key}")
        problem = ProblemParams(**values)

    grid = _section(document, "grid", GRID_KEYS, defaults.get("grid"))
    grid.setdefault("n", 2048)
    grid.setdefault("r_max", None)
    grid.setdefault("spacing", "uniform")
    if problem is not None:
        if grid.get("N") is not None and grid["N"] != problem.N:
            raise ConfigurationError(f"must match problem.N={problem.N}, got {grid['N']}",
                                     key_path="grid.N")
        grid["N"] = problem.N
    if grid["spacing"] not in SPACINGS:
        raise ConfigurationError(f"must be one of {SPACINGS}, got {grid['spacing']!r}",
                                 key_path="grid.spacing")
    if grid["n"] < 64:
        raise ConfigurationError(f"must be >= 64, got {grid['n']}", key_path="grid.n")
    if grid["r_max"] is not None and not grid["r_max"] > 0:
        raise ConfigurationError(f"must be positive, got {grid['r_max']}", key_path="grid.r_max")

    solve_values = _section(document, "solve", SOLVE_KEYS, defaults.get("solve"))
    try:
        solve = SolveConfig(n=grid["n"], r_max=grid["r_max"], spacing=grid["spacing"],
                            **solve_values)
    except ValueError as e:
        raise ConfigurationError(f"invalid value: {e}", key_path="solve.mode")

    evolution = EvolutionSettings(**_section(document, "evolution", EVOLUTION_KEYS,
                                             defaults.get("evolution")))
    ladder = None
    if document.get("ladder") is not None:
        ladder = _parse_ladder(_section(document, "ladder", LADDER_KEYS))
    if experiment in (Experiment.COLLAPSE, Experiment.BUBBLE) and not (ladder or {}).get("masses"):
        raise ConfigurationError("a mass ladder is required", key_path="ladder.masses")
    if experiment == Experiment.BETALIMIT and not (ladder or {}).get("betas"):
        raise ConfigurationError("a beta ladder is required", key_path="ladder.betas")

    component = experiment_section.get("component")
    if component is not None and component not in (1, 2):
        raise ConfigurationError(f"must be 1 or 2, got {component}", key_path="experiment.component")

    return RunConfig(problem=problem, grid=grid, solve=solve, experiment=experiment,
                     output_dir=Path(experiment_section.get("output_dir", "results")),
                     ladder=ladder, evolution=evolution, component=component)


def format_config(cfg: RunConfig) -> str:
    """YAML text that parses back to ``cfg``."""
    solve = {f.name: getattr(cfg.solve, f.name) for f in fields(cfg.solve)
             if f.name in SOLVE_KEYS}
    solve["mode"] = cfg.solve.mode.value
    experiment = {"name": cfg.experiment.value, "output_dir": str(cfg.output_dir)}
    if cfg.component is not None:
        experiment["component"] = cfg.component
    document = {
        "experiment": experiment,
        "grid": {key: cfg.grid[key] for key in ("n", "r_max", "spacing")},
        "solve": solve,
        "evolution": asdict(cfg.evolution),
    }
    if cfg.problem is not None:
        document["problem"] = cfg.problem.to_dict()
    if cfg.ladder is not None:
        document["ladder"] = cfg.ladder
    return yaml.safe_dump(document, sort_keys=True)


def load_run_config(path: Union[str, Path], manager: Optional[ConfigurationManager] = None,
                    experiment: Optional[str] = None) -> RunConfig:
    """Read and parse a run configuration file, filling defaults from ``manager``."""
    path = Path(path)
    try:
        text = path.read_bytes()
    except OSError as e:
        logging.error(f"Failed to read run configuration {path}: {e}")
        raise ConfigurationError(f"cannot read {path}: {e}")
    return parse_config(text, manager.get_defaults() if manager else None, experiment)
