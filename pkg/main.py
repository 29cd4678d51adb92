import argparse
import logging
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np
import pandas as pd
import yaml

from asymptotics import (beta_limit_experiment, bubble_limit_experiment, collapse_experiment,
                         cutoff_bubble_estimates, refined_energy_bound_check, window_witness_4d)
from certificate_validator import CertificateValidator
from configuration_manager import (ConfigurationManager, Experiment, RunConfig, format_config,
                                   load_run_config, parse_config, resolve_threads)
from evolution import evolve, stability_experiment
from exceptions import NormSolveError, RegimeError, UsageError
from functional import FiberProfile
from profiles import bubble_params, constants_table, pde_residual, solve_scalar_ground_state
from radial_grid import (RadialField, StatePair, build_radial_grid, integrate, integrate_modulus_squared,
                         kinetic, write_field_dump)
from report_exporter import (FLOAT_DIGITS, aggregate_report, run_directory_name,
                             write_diagnostics, write_frame_csv, write_report)
from solver import (SOLVERS, SolveMode, SolveResult, compare_semitrivial, estimate_constant_A,
                    solve_semitrivial, subadditivity_check)
from thresholds import Regime, classify_regime, h_curve, monotonicity_ladder

CONFIG_DIRECTORY = Path(__file__).parent.resolve() / 'config'
FIBER_TRACE_T = np.linspace(-3.0, 3.0, 241)
PROFILE_RADIUS = 30.0


@dataclass
class ExperimentOutcome:
    """What one experiment produced: status, scalar summary and artifacts."""
    status: str
    exit_code: int
    summary: Dict[str, object] = field(default_factory=dict)
    result: Dict[str, object] = field(default_factory=dict)
    message: str = ""
    frames: Dict[str, pd.DataFrame] = field(default_factory=dict)
    fields: Dict[str, StatePair] = field(default_factory=dict)


def setup_logging(verbose: bool = False):
    """
    Configure console logging for the solver suite.

    Args:
        verbose: Log at DEBUG instead of INFO
    """
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format='%(asctime)s - %(levelname)s - %(message)s',
        handlers=[
            logging.StreamHandler()
        ],
        force=True,
    )


def _solve_outcome(result: SolveResult) -> ExperimentOutcome:
    status = result.certificates.status if result.certificates else "failed"
    if not result.converged:
        status = "failed"
    d = result.diagnostics
    summary = {
        "branch": result.branch.value,
        "converged": result.converged,
        "energy": d.energy,
        "kinetic": d.kinetic,
        "lambda1": d.lambda1,
        "lambda2": d.lambda2,
        "grad_norm": d.grad_norm,
        "pohozaev_relative": d.relative_pohozaev(),
        "multiplier_residual": d.multiplier_residual,
        "fiber_second": d.fiber_second,
        "iterations": result.iterations,
        "boundary_ratio": result.boundary_ratio,
    }
    return ExperimentOutcome(status=status, exit_code=0 if status != "failed" else 2,
                             summary=summary, result=result.to_dict(), message=result.message)


def run_solve(cfg: RunConfig, validator: CertificateValidator, threads: int) -> ExperimentOutcome:
    p = cfg.problem
    constants = constants_table(threads=threads)
    if cfg.component is not None:
        result = solve_semitrivial(p, cfg.component, cfg.solve, constants, validator)
    else:
        result = SOLVERS[cfg.solve.mode](p, cfg.solve, constants, None, validator)
    outcome = _solve_outcome(result)
    if cfg.solve.mode == SolveMode.LOCAL_MIN and p.N == 3 and result.converged:
        bound = refined_energy_bound_check(p, result, constants)
        outcome.result["refined_bound"] = bound
        outcome.summary["below_refined_bound"] = bool(bound["satisfied"])
    if cfg.component is None and result.converged and p.b1 > 0 and p.b2 > 0:
        try:
            if cfg.solve.mode == SolveMode.MOUNTAIN_PASS:
                levels = compare_semitrivial(p, cfg.solve, constants, threads)
                outcome.result["semitrivial"] = levels
                outcome.summary["below_semitrivial"] = levels["strictly_below"]
            elif cfg.solve.mode == SolveMode.GLOBAL_MIN and p.N == 1:
                spot = subadditivity_check(p, cfg.solve)
                outcome.result["subadditivity"] = spot
                outcome.summary["subadditive"] = spot["holds"]
        except NormSolveError as e:
            logging.warning(f"Order check skipped: {e}")
    profile = FiberProfile.from_state(result.state, p)
    outcome.frames["fiber_trace"] = pd.DataFrame(profile.trace(FIBER_TRACE_T))
    outcome.fields["state"] = result.state
    return outcome


def run_thresholds(cfg: RunConfig, validator: CertificateValidator, threads: int
                   ) -> ExperimentOutcome:
    p = cfg.problem
    constants = constants_table(threads=threads)
    report = classify_regime(p, constants)
    outcome = ExperimentOutcome(status="success", exit_code=0, result=report.to_dict(),
                                message="; ".join(report.notes))
    outcome.summary = {"regime": report.regime.value, "R0": report.R0, "R1": report.R1,
                       "condition_lhs": report.condition_lhs,
                       "condition_rhs": report.condition_rhs}
    if report.regime == Regime.TWO_SOLUTION_3D:
        outcome.summary["R0_below_R1"] = bool(report.R0 < report.R1)
        outcome.frames["h_curve"] = h_curve(p, constants, np.linspace(0.0, 1.5 * report.R1, 301))
        if cfg.ladder and cfg.ladder.get("masses"):
            ladder = monotonicity_ladder(p, constants, cfg.ladder["masses"])
            outcome.result["monotonicity"] = ladder
            outcome.summary["R0_increasing"] = ladder["R0_increasing"]
            outcome.summary["R1_decreasing"] = ladder["R1_decreasing"]
            outcome.frames["monotonicity"] = pd.DataFrame(ladder["rows"])
    if p.N == 2 and report.regime == Regime.COERCIVE_2D:
        A = estimate_constant_A(p, cfg.solve)
        outcome.summary["A_estimate"] = A
        outcome.summary["A_in_bracket"] = bool(report.A_lower <= A <= report.A_upper)
    return outcome


def run_profile(cfg: RunConfig, validator: CertificateValidator, threads: int
                ) -> ExperimentOutcome:
    constants = constants_table(threads=threads)
    n = cfg.grid["n"]
    Q = solve_scalar_ground_state(2, 3, build_radial_grid(2, PROFILE_RADIUS, n))
    w = solve_scalar_ground_state(3, 2, build_radial_grid(3, PROFILE_RADIUS, n))
    q_grad, q_mass = kinetic(Q), integrate_modulus_squared(Q)
    q_quartic = integrate(RadialField(Q.grid, Q.values ** 4))
    summary = {
        "sobolev_S": constants.sobolev_S,
        "q_mass_sq": constants.q_mass_sq,
        "w_mass_sq": constants.w_mass_sq,
        "w_kinetic": constants.w_kinetic,
        "q_residual": pde_residual(Q, 3),
        "w_residual": pde_residual(w, 2),
        "q_identity_error": max(abs(q_grad - q_mass), abs(q_grad - 0.5 * q_quartic)) / q_mass,
    }
    outcome = ExperimentOutcome(status="success", exit_code=0, summary=summary,
                                result=constants.to_dict())
    outcome.frames["constants"] = pd.DataFrame(constants.to_rows())
    outcome.fields["Q"] = StatePair(Q, RadialField.zeros(Q.grid), float(np.sqrt(q_mass)), 0.0)
    outcome.fields["w"] = StatePair(w, RadialField.zeros(w.grid),
                                    float(np.sqrt(integrate_modulus_squared(w))), 0.0)
    return outcome


def run_evolve(cfg: RunConfig, validator: CertificateValidator, threads: int) -> ExperimentOutcome:
    p = cfg.problem
    settings = cfg.evolution
    solve_cfg = replace(cfg.solve, mode=SolveMode(settings.reference))
    reference = SOLVERS[solve_cfg.mode](p, solve_cfg, constants_table(threads=threads), None,
                                        validator)
    outcome = _solve_outcome(reference)
    outcome.result = {"reference": reference.to_dict()}
    outcome.fields["reference"] = reference.state
    if outcome.exit_code != 0:
        outcome.message = f"reference state did not converge: {reference.message}"
        return outcome
    baseline = evolve(reference.state, p, settings.dt, settings.t_end, reference=reference.state,
                      record_every=settings.record_every)
    report = stability_experiment(reference.state, p, settings.amplitude,
                                  settings.n_perturbations, settings.t_end, settings.dt,
                                  seed=cfg.solve.seed, threads=threads,
                                  record_every=settings.record_every)
    outcome.result["stability"] = report.to_dict()
    outcome.summary.update({
        "unperturbed_distance": baseline.max_distance(),
        "unperturbed_mass_drift": baseline.mass_drift(),
        "unperturbed_energy_drift": baseline.energy_drift(),
        "max_sup_distance": max(report.sup_distances),
        "stability_threshold": report.threshold,
        "stable": report.stable,
        "growth_flagged": report.growth_flagged,
        "max_mass_drift": max(t.mass_drift() for t in report.traces),
        "max_energy_drift": max(t.energy_drift() for t in report.traces),
    })
    outcome.frames["trace_unperturbed"] = baseline.to_frame()
    for k, trace in enumerate(report.traces):
        outcome.frames[f"trace_{k}"] = trace.to_frame()
    return outcome


def _sweep_outcome(sweep) -> ExperimentOutcome:
    outcome = ExperimentOutcome(status="failed" if sweep.partial else "success",
                                exit_code=2 if sweep.partial else 0, result=sweep.to_dict())
    outcome.summary.update({f"slope_{name}": value for name, value in sweep.fit_exponents.items()})
    outcome.summary.update(sweep.verdicts)
    outcome.summary["partial"] = sweep.partial
    outcome.frames["ladder"] = sweep.to_frame()
    if sweep.partial:
        outcome.message = "one or more ladder points failed or did not converge"
    return outcome


def run_sweep(cfg: RunConfig, validator: CertificateValidator, threads: int) -> ExperimentOutcome:
    """
    Run a ladder experiment; points are solved in parallel inside the
    experiment and fitted after all of them finish.
    """
    p = cfg.problem
    constants = constants_table(threads=threads)
    if cfg.experiment == Experiment.COLLAPSE:
        sweep = collapse_experiment(p, cfg.ladder["masses"], cfg.solve, constants, threads=threads)
    elif cfg.experiment == Experiment.BUBBLE:
        sweep = bubble_limit_experiment(p, cfg.ladder["masses"], cfg.solve, constants,
                                        bubble=bubble_params(p.mu1, p.mu2, p.rho), threads=threads)
    elif cfg.experiment == Experiment.BETALIMIT:
        sweep = beta_limit_experiment(p, cfg.ladder["betas"], cfg.solve, constants,
                                      threads=threads)
    else:
        raise UsageError(f"{cfg.experiment.value} is not a ladder experiment")
    return _sweep_outcome(sweep)


def run_cutoff(cfg: RunConfig, validator: CertificateValidator, threads: int,
               eps_ladder: Optional[List[float]] = None) -> ExperimentOutcome:
    eps_ladder = (cfg.ladder or {}).get("eps") or eps_ladder
    if not eps_ladder:
        raise UsageError("cutoff needs an eps ladder (ladder.eps)")
    estimates = cutoff_bubble_estimates(eps_ladder)
    outcome = ExperimentOutcome(status="success", exit_code=0, result=estimates)
    outcome.summary.update({f"slope_{name}": value for name, value in estimates["slopes"].items()})
    outcome.summary.update(estimates["verdicts"])
    outcome.result["fit_exponents"] = estimates["slopes"]
    outcome.result["fit_residuals"] = estimates["residuals"]
    outcome.frames["cutoff"] = pd.DataFrame(estimates["rows"])
    if cfg.problem is not None and cfg.problem.N == 4:
        witness = window_witness_4d(cfg.problem, eps_ladder)
        outcome.result["window_witness"] = witness
        outcome.summary["window_witness"] = witness["witness"]
        outcome.frames["window_witness"] = pd.DataFrame(witness["rows"])
    return outcome


EXPERIMENTS: Dict[Experiment, Callable[..., ExperimentOutcome]] = {
    Experiment.SOLVE: run_solve,
    Experiment.THRESHOLDS: run_thresholds,
    Experiment.PROFILE: run_profile,
    Experiment.EVOLVE: run_evolve,
    Experiment.COLLAPSE: run_sweep,
    Experiment.BUBBLE: run_sweep,
    Experiment.BETALIMIT: run_sweep,
    Experiment.CUTOFF: run_cutoff,
}


def _error_outcome(error: NormSolveError) -> ExperimentOutcome:
    if isinstance(error, RegimeError):
        status = "regime"
    elif error.exit_code == 2:
        status = "failed"
    else:
        status = "error"
    return ExperimentOutcome(status=status, exit_code=error.exit_code, message=str(error),
                             result={"error": error.to_dict()})


def _write_outputs(cfg: RunConfig, outcome: ExperimentOutcome, prefixes: Dict[str, str],
                   float_digits: int = FLOAT_DIGITS) -> Path:
    prefix_status = "failed" if outcome.status == "error" else outcome.status
    run_dir = cfg.output_dir / run_directory_name(cfg.experiment.value, prefix_status, prefixes)
    run_dir.mkdir(parents=True, exist_ok=True)
    config_text = format_config(cfg)
    (run_dir / "config.yaml").write_text(config_text, encoding="utf-8")
    write_diagnostics(run_dir, {
        "kind": cfg.experiment.value,
        "status": outcome.status,
        "exit_code": outcome.exit_code,
        "seed": cfg.solve.seed,
        "message": outcome.message,
        "config": yaml.safe_load(config_text),
        "summary": outcome.summary,
        "result": outcome.result,
    }, float_digits)
    for name, frame in outcome.frames.items():
        write_frame_csv(run_dir / f"{name}.csv", frame, float_digits)
    for name, state in outcome.fields.items():
        write_field_dump(run_dir / f"{name}.nlsf", state.grid, [state.u.values, state.v.values])
    return run_dir


def run(cfg: RunConfig, manager: Optional[ConfigurationManager] = None, threads: int = 1) -> int:
    """
    Execute one experiment and write its run directory.

    Returns:
        Exit status: 0 success, 1 usage or input error, 2 non-convergence,
        3 parameters outside the regime the experiment needs
    """
    if cfg.experiment == Experiment.REPORT:
        return run_report(cfg.output_dir)
    validator = CertificateValidator(manager.get_certificate_config() if manager else None)

    # Get output settings from the modular configuration
    output_settings = manager.get_output_settings() if manager else {}
    prefixes = output_settings.get('output_prefixes', {})
    float_digits = output_settings.get('float_digits', FLOAT_DIGITS)
    logging.info(f"--- Starting experiment: {cfg.experiment.value} ---")
    try:
        # cutoff takes its eps ladder from config_experiments.yaml when the run file has none
        if cfg.experiment == Experiment.CUTOFF:
            eps_default = manager.get_ladder_config().get('eps') if manager else None
            outcome = run_cutoff(cfg, validator, threads, eps_default)
        else:
            outcome = EXPERIMENTS[cfg.experiment](cfg, validator, threads)
    except NormSolveError as e:
        logging.error(f"❌ {cfg.experiment.value} stopped: {e}")
        outcome = _error_outcome(e)

    # Run directory named by certificate status (Failed_solve, SuccessWithTol_solve)
    try:
        run_dir = _write_outputs(cfg, outcome, prefixes, float_digits)
    except Exception as e:
        logging.error(f"❌ Unable to save outputs for '{cfg.experiment.value}': {e}")
        return 1
    marker = "✅" if outcome.exit_code == 0 else "❌"
    logging.info(f"{marker} Results for '{cfg.experiment.value}' (status {outcome.status.upper()}, "
                 f"exit {outcome.exit_code}) saved in {run_dir}")
    return outcome.exit_code


def run_report(results_dir: Path) -> int:
    """Aggregate a results directory; exit 1 when nothing could be aggregated."""
    report = aggregate_report(results_dir)
    if not report.rows:
        logging.error(f"❌ Nothing to aggregate in '{results_dir}'")
        for path, reason in report.skipped:
            logging.error(f"Skipped {path}: {reason}")
        return 1
    paths = write_report(results_dir, report)
    logging.info(f"✅ Summary of {len(report.rows)} runs written to {paths['markdown']}")
    return 0


class CliParser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = CliParser(add_help=False)
    common.add_argument('--config', type=Path, help='Run configuration (YAML)')
    common.add_argument('--seed', type=int, help='Seed of randomized initial guesses')
    common.add_argument('--out', type=Path, help='Output directory')
    common.add_argument('--threads', type=int, help='Worker threads (else NORMSOLVE_THREADS)')
    common.add_argument('--verbose', action='store_true', help='Debug logging')

    parser = CliParser(prog='normsolve',
                       description='Normalized solutions of coupled Schrodinger systems')
    subparsers = parser.add_subparsers(dest='experiment', required=True)
    for experiment in Experiment:
        sub = subparsers.add_parser(experiment.value, parents=[common])
        if experiment == Experiment.REPORT:
            sub.add_argument('results_dir', nargs='?', type=Path,
                             help='Directory of prior run outputs')
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """
    Parse the command line, load configuration and run the experiment.
    """
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        setup_logging()
        logging.error(f"Usage error: {e}")
        return e.exit_code
    setup_logging(args.verbose)

    manager = None
    if CONFIG_DIRECTORY.exists() and any(CONFIG_DIRECTORY.glob('config_*.yaml')):
        manager = ConfigurationManager(CONFIG_DIRECTORY)
        if not manager.validate_configuration():
            logging.warning("Default configuration is incomplete, built-in defaults apply")
    else:
        logging.warning(f"No configuration found in '{CONFIG_DIRECTORY}', built-in defaults apply")

    experiment = Experiment(args.experiment)
    try:
        if experiment == Experiment.REPORT:
            results_dir = args.results_dir or args.out
            if results_dir is None:
                raise UsageError("report needs a results directory")
            return run_report(results_dir)
        if args.config is not None:
            cfg = load_run_config(args.config, manager, experiment.value)
        elif experiment in (Experiment.PROFILE, Experiment.CUTOFF):
            cfg = parse_config(f"experiment: {experiment.value}\n",
                               manager.get_defaults() if manager else None)
        else:
            raise UsageError(f"{experiment.value} needs --config")
        if args.seed is not None:
            cfg.solve = replace(cfg.solve, seed=args.seed)
        if args.out is not None:
            cfg.output_dir = args.out
        threads = resolve_threads(args.threads, manager.get_runtime_settings() if manager else None)
    except NormSolveError as e:
        logging.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    return run(cfg, manager, threads)


if __name__ == '__main__':
    sys.exit(main())
