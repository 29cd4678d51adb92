"""
Scaling-law experiments.

Mass collapse of the three-dimensional local minimizer onto the quadratic
profile, the small-coupling limit of the excited state, the small-mass
bubble limit in four dimensions and the cutoff-bubble estimates behind the
four-dimensional energy window.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.integrate import quad
from scipy.interpolate import CubicSpline
from tqdm import tqdm

from exceptions import DomainError, NormSolveError, UsageError
from functional import FiberProfile, ProblemParams, fiber_critical_points_of
from profiles import (BubbleParams, ConstantsTable, bubble_derivative, bubble_params, bubble_values,
                      cutoff_bubble, cutoff_function, solve_scalar_ground_state, sobolev_constant)
from radial_grid import (RadialField, RadialGrid, StatePair, build_radial_grid, h1_distance,
                         integrate_modulus_squared, kinetic, resample, state_h1_norm)
from solver import SolveConfig, SolveResult, solve_local_min, solve_mountain_pass

QUADRATIC_PROFILE_GRID = (30.0, 2048)


@dataclass(frozen=True)
class CollapseScaling:
    """
    Rescaling rates of the quadratic-only system.

    ``(L1 u0(theta1 x), L2 v0(theta2 x))`` with ``(u0, v0) = (sqrt(2) w / beta, w / beta)``
    has masses ``(b1, b2)``; the reference multipliers equal ``theta_i^2``.
    """
    theta1: float
    theta2: float
    L1: float
    L2: float
    lambda1_ref: float
    lambda2_ref: float

    @property
    def theta_ratio(self) -> float:
        return self.theta1 / self.theta2

    def to_dict(self) -> Dict[str, float]:
        return {"theta1": self.theta1, "theta2": self.theta2, "L1": self.L1, "L2": self.L2,
                "lambda1_ref": self.lambda1_ref, "lambda2_ref": self.lambda2_ref,
                "theta_ratio": self.theta_ratio}


def collapse_scaling(p: ProblemParams, w_mass_sq: float) -> CollapseScaling:
    """Closed-form rates for ``beta > 0`` and positive masses in three dimensions."""
    if p.N != 3:
        raise DomainError(f"Collapse scaling is defined for N=3, got N={p.N}")
    if p.beta <= 0 or p.b1 <= 0 or p.b2 <= 0:
        raise UsageError("Collapse scaling needs beta > 0 and positive masses",
                         details=p.to_dict())
    b1, b2, beta, w2 = p.b1, p.b2, p.beta, w_mass_sq
    theta1 = 2.0 * beta ** 2 * b1 ** 1.2 * b2 ** 0.8 / (16.0 ** 0.4 * w2)
    theta2 = beta ** 2 * b1 ** 1.6 * b2 ** 0.4 / (16.0 ** 0.2 * w2)
    L1 = 2.0 * beta ** 4 * b1 ** 2.8 * b2 ** 1.2 / (16.0 ** 0.6 * w2 ** 2)
    L2 = 4.0 * beta ** 4 * b1 ** 2.4 * b2 ** 1.6 / (16.0 ** 0.8 * w2 ** 2)
    lambda1 = 4.0 * beta ** 4 * b1 ** 2.4 * b2 ** 1.6 / (16.0 ** 0.8 * w2 ** 2)
    lambda2 = beta ** 4 * b1 ** 3.2 * b2 ** 0.8 / (16.0 ** 0.4 * w2 ** 2)
    return CollapseScaling(theta1=float(theta1), theta2=float(theta2), L1=float(L1), L2=float(L2),
                           lambda1_ref=float(lambda1), lambda2_ref=float(lambda2))


def collapse_ray_masses(b1: float) -> Tuple[float, float]:
    """Masses on the ray ``b1^2 = 2 b2^2`` where both rates coincide."""
    return b1, b1 / np.sqrt(2.0)


def explicit_energy(p: ProblemParams, w_mass_sq: float, w_kinetic: float) -> float:
    """Least energy of the quadratic-only system in closed form."""
    b1, b2, beta = p.b1, p.b2, p.beta
    first = 4.0 * beta ** 4 * b1 ** 4.4 * b2 ** 1.6 / (16.0 ** 0.8 * w_mass_sq ** 3)
    second = beta ** 4 * b1 ** 3.2 * b2 ** 2.8 / (16.0 ** 0.4 * w_mass_sq ** 3)
    return float(-(first + second) * w_kinetic / 6.0)


@lru_cache(maxsize=4)
def quadratic_profile(r_max: float = QUADRATIC_PROFILE_GRID[0],
                      n: int = QUADRATIC_PROFILE_GRID[1]) -> RadialField:
    """Positive solution ``w`` of ``-Delta w + w = w^2`` in R^3 on a uniform grid."""
    return solve_scalar_ground_state(3, 2.0, build_radial_grid(3, r_max, n))


def _evaluate_scaled(w: RadialField, r: np.ndarray) -> np.ndarray:
    spline = CubicSpline(w.grid.nodes, w.values, bc_type=((1, 0.0), "not-a-knot"))
    values = np.zeros_like(r)
    inside = r <= w.grid.r_max
    values[inside] = spline(r[inside])
    return values


def explicit_quadratic_state(p: ProblemParams, w: Optional[RadialField] = None
                             ) -> Tuple[StatePair, CollapseScaling]:
    """
    ``(L1 u0(theta1 x), L2 v0(theta2 x))`` on ``w.grid`` scaled by ``1/theta1``.

    The discrete mass of ``w`` enters the rates so that the masses are hit
    exactly. The pair solves the quadratic-only system when the rates
    coincide (mass ray ``b1^2 = 2 b2^2``); otherwise the second component is
    interpolated and the rate ratio tells how far the pair is from a solution.
    """
    w = w or quadratic_profile()
    w_mass_sq = integrate_modulus_squared(w)
    scaling = collapse_scaling(p, w_mass_sq)
    grid = w.grid.scaled(1.0 / scaling.theta1)
    u = scaling.L1 * np.sqrt(2.0) / p.beta * w.values
    if np.isclose(scaling.theta1, scaling.theta2, rtol=1e-12, atol=0.0):
        v = scaling.L2 / p.beta * w.values
    else:
        v = scaling.L2 / p.beta * _evaluate_scaled(w, grid.nodes * scaling.theta2)
        v[-1] = 0.0
    state = StatePair(RadialField(grid, u), RadialField(grid, v), p.b1, p.b2)
    return state, scaling


def refined_energy_bound_check(p: ProblemParams, ground: SolveResult,
                               c: ConstantsTable) -> Dict[str, object]:
    """
    Compare a computed local minimum with the least energy of the
    quadratic-only system, which bounds it from above.
    """
    bound = explicit_energy(p, c.w_mass_sq, c.w_kinetic)
    value = ground.diagnostics.energy
    report = {
        "energy": value,
        "bound": bound,
        "margin": bound - value,
        "satisfied": bool(ground.converged and value < bound),
        "converged": ground.converged,
    }
    logging.info(f"Refined bound: energy={value:.10g}, bound={bound:.10g}, "
                 f"satisfied={report['satisfied']}")
    return report


@dataclass
class SweepResult:
    """
    Ladder experiment outcome.

    Args:
        experiment: Experiment name.
        ladder: Parameter points in ladder order.
        points: Per-point measurements (failed points carry an ``error`` entry).
        fit_exponents: Least-squares log-log slopes.
        fit_residuals: Root-mean-square residual of each fit.
        verdicts: Named pass/fail checks.
        partial: True when any point failed or did not converge.
    """
    experiment: str
    ladder: List[Dict[str, float]]
    points: List[Dict[str, object]] = field(default_factory=list)
    fit_exponents: Dict[str, float] = field(default_factory=dict)
    fit_residuals: Dict[str, float] = field(default_factory=dict)
    verdicts: Dict[str, bool] = field(default_factory=dict)
    partial: bool = False
    results: List[Optional[SolveResult]] = field(default_factory=list, repr=False)

    def to_dict(self) -> Dict[str, object]:
        return {
            "experiment": self.experiment,
            "ladder": self.ladder,
            "points": self.points,
            "fit_exponents": self.fit_exponents,
            "fit_residuals": self.fit_residuals,
            "verdicts": self.verdicts,
            "partial": self.partial,
        }

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.points)


def fit_slope(x: Sequence[float], y: Sequence[float]) -> Tuple[float, float]:
    """Slope and RMS residual of ``log |y|`` against ``log x``."""
    lx = np.log(np.asarray(x, dtype=float))
    ly = np.log(np.abs(np.asarray(y, dtype=float)))
    coefficients = np.polyfit(lx, ly, 1)
    residual = ly - np.polyval(coefficients, lx)
    return float(coefficients[0]), float(np.sqrt(np.mean(residual ** 2)))


def _strictly_decreasing(values: Sequence[float]) -> bool:
    return bool(np.all(np.diff(np.asarray(values, dtype=float)) < 0))


def _run_ladder(items: Sequence, task: Callable, threads: int, desc: str) -> List:
    """Run ``task`` over ``items``; failures come back as the raised exception."""
    def guarded(item):
        try:
            return task(item)
        except NormSolveError as e:
            logging.error(f"Ladder point {item} failed: {e}")
            return e

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(guarded, items))
    return [guarded(item) for item in tqdm(items, desc=desc)]


def _rescaled_components(state: StatePair, scaling: CollapseScaling, reference: RadialGrid
                         ) -> StatePair:
    """``(u(x/theta1)/L1, v(x/theta2)/L2)`` resampled on ``reference``."""
    grid = state.grid
    u = RadialField(grid.scaled(scaling.theta1), state.u.values / scaling.L1)
    v = RadialField(grid.scaled(scaling.theta2), state.v.values / scaling.L2)
    return StatePair(resample(u, reference), resample(v, reference), state.b1, state.b2)


def collapse_experiment(p_base: ProblemParams, mass_ladder: Sequence[Tuple[float, float]],
                        cfg: SolveConfig, c: ConstantsTable, threads: int = 1,
                        w: Optional[RadialField] = None) -> SweepResult:
    """
    Local minimizers along a decreasing mass ladder, rescaled onto the
    quadratic profile.

    Each point reports the relative H^1 error of the rescaled pair to
    ``(sqrt(2) w / beta, w / beta)``, the multiplier ratios
    ``lambda_i / theta_i^2`` and the kinetic term; the kinetic term, energy
    and multipliers are fitted against ``b1``.
    """
    if p_base.N != 3:
        raise DomainError(f"Mass collapse is studied for N=3, got N={p_base.N}")
    ladder = [(float(b1), float(b2)) for b1, b2 in mass_ladder]
    if not _strictly_decreasing([b1 for b1, _ in ladder]):
        raise UsageError("Mass ladder must be strictly decreasing in b1")
    w = w or quadratic_profile()
    u0 = np.sqrt(2.0) / p_base.beta * w.values
    v0 = w.values / p_base.beta
    limit = StatePair(RadialField(w.grid, u0), RadialField(w.grid, v0), 1.0, 1.0)
    limit_norm = state_h1_norm(limit)
    cfg = replace(cfg, r_max=None)

    def task(masses):
        return solve_local_min(p_base.with_(b1=masses[0], b2=masses[1]), cfg, c)

    outcomes = _run_ladder(ladder, task, threads, "Collapse ladder")
    sweep = SweepResult(experiment="collapse",
                        ladder=[{"b1": b1, "b2": b2} for b1, b2 in ladder])
    for (b1, b2), outcome in zip(ladder, outcomes):
        if isinstance(outcome, Exception):
            sweep.points.append({"b1": b1, "b2": b2, "error": str(outcome)})
            sweep.results.append(None)
            sweep.partial = True
            continue
        p = p_base.with_(b1=b1, b2=b2)
        scaling = collapse_scaling(p, c.w_mass_sq)
        rescaled = _rescaled_components(outcome.state, scaling, w.grid)
        d = outcome.diagnostics
        sweep.points.append({
            "b1": b1, "b2": b2,
            "converged": outcome.converged,
            "energy": d.energy,
            "kinetic": d.kinetic,
            "lambda1": d.lambda1,
            "lambda2": d.lambda2,
            "lambda1_ratio": d.lambda1 / scaling.theta1 ** 2,
            "lambda2_ratio": d.lambda2 / scaling.theta2 ** 2,
            "rescaled_error": h1_distance(rescaled, limit) / limit_norm,
            "theta_ratio": scaling.theta_ratio,
        })
        sweep.results.append(outcome)
        sweep.partial = sweep.partial or not outcome.converged

    good = [pt for pt in sweep.points if "error" not in pt]
    if len(good) >= 2:
        b1s = [pt["b1"] for pt in good]
        for name in ("kinetic", "energy", "lambda1", "lambda2"):
            slope, residual = fit_slope(b1s, [pt[name] for pt in good])
            sweep.fit_exponents[name] = slope
            sweep.fit_residuals[name] = residual
        errors = [pt["rescaled_error"] for pt in good]
        sweep.verdicts["error_decreasing"] = _strictly_decreasing(errors)
        last = good[-1]
        sweep.verdicts["final_error_below_0.1"] = bool(errors[-1] < 0.1)
        sweep.verdicts["ratios_within_20pct"] = bool(
            abs(last["lambda1_ratio"] - 1.0) < 0.2 and abs(last["lambda2_ratio"] - 1.0) < 0.2)
        sweep.verdicts["kinetic_slope_6"] = bool(abs(sweep.fit_exponents["kinetic"] - 6.0) < 0.5)
    logging.info(f"Collapse experiment: {len(good)}/{len(ladder)} points, "
                 f"slopes {sweep.fit_exponents}")
    return sweep


def _half_width(f: RadialField) -> float:
    """Radius where ``f`` first falls to half its origin value (linear interpolation)."""
    values = f.values
    half = 0.5 * values[0]
    below = np.nonzero(values <= half)[0]
    if below.size == 0:
        return float(f.grid.r_max)
    i = int(below[0])
    r0, r1 = f.grid.nodes[i - 1], f.grid.nodes[i]
    f0, f1 = values[i - 1], values[i]
    return float(r0 + (half - f0) * (r1 - r0) / (f1 - f0))


def bubble_fit(state: StatePair, bubble: BubbleParams) -> Dict[str, float]:
    """
    Fit ``eps0`` (half-width of u) and the amplitude factor ``sigma1``, and
    measure the D^{1,2} distance to ``(sqrt(k1) U_eps0, sqrt(k2) U_eps0)``.
    """
    eps0 = _half_width(state.u)
    sigma1 = np.sqrt(bubble.k1) * 2.0 * np.sqrt(2.0) / (eps0 * state.u.values[0])
    U = bubble_values(eps0, state.grid.nodes)
    du = RadialField(state.grid, state.u.values - np.sqrt(bubble.k1) * U)
    dv = RadialField(state.grid, state.v.values - np.sqrt(bubble.k2) * U)
    reference = (bubble.k1 + bubble.k2) * sobolev_constant() ** 2
    return {"eps0": eps0, "sigma1": float(sigma1),
            "d12_error": float(np.sqrt((kinetic(du) + kinetic(dv)) / reference))}


def bubble_limit_experiment(p_base: ProblemParams, mass_ladder: Sequence[Tuple[float, float]],
                            cfg: SolveConfig, c: ConstantsTable,
                            bubble: Optional[BubbleParams] = None,
                            threads: int = 1) -> SweepResult:
    """Four-dimensional ground states along a decreasing mass ladder against the bubble pair."""
    if p_base.N != 4:
        raise DomainError(f"Bubble limit is studied for N=4, got N={p_base.N}")
    ladder = [(float(b1), float(b2)) for b1, b2 in mass_ladder]
    if not _strictly_decreasing([b1 for b1, _ in ladder]):
        raise UsageError("Mass ladder must be strictly decreasing in b1")
    bubble = bubble or bubble_params(p_base.mu1, p_base.mu2, p_base.rho)
    target = bubble.least_energy()
    ratio_target = (bubble.k1 / bubble.k2) ** 0.25

    def task(masses):
        return solve_mountain_pass(p_base.with_(b1=masses[0], b2=masses[1]), cfg, c)

    outcomes = _run_ladder(ladder, task, threads, "Bubble ladder")
    sweep = SweepResult(experiment="bubble",
                        ladder=[{"b1": b1, "b2": b2} for b1, b2 in ladder])
    for (b1, b2), outcome in zip(ladder, outcomes):
        if isinstance(outcome, Exception):
            sweep.points.append({"b1": b1, "b2": b2, "error": str(outcome)})
            sweep.results.append(None)
            sweep.partial = True
            continue
        state = outcome.state
        w = state.grid.weights
        l4_u = float(np.dot(w, state.u.values ** 4)) ** 0.25
        l4_v = float(np.dot(w, state.v.values ** 4)) ** 0.25
        point = {"b1": b1, "b2": b2, "converged": outcome.converged,
                 "energy": outcome.diagnostics.energy,
                 "energy_gap": abs(outcome.diagnostics.energy - target) / target,
                 "l4_ratio": l4_u / l4_v,
                 "coupling": p_base.beta * outcome.diagnostics.cubic_coupling}
        point.update(bubble_fit(state, bubble))
        sweep.points.append(point)
        sweep.results.append(outcome)
        sweep.partial = sweep.partial or not outcome.converged

    good = [pt for pt in sweep.points if "error" not in pt]
    if len(good) >= 2:
        sweep.verdicts["energy_gap_decreasing"] = _strictly_decreasing(
            [pt["energy_gap"] for pt in good])
        sweep.verdicts["d12_error_decreasing"] = _strictly_decreasing(
            [pt["d12_error"] for pt in good])
        sweep.verdicts["coupling_decreasing"] = _strictly_decreasing(
            [pt["coupling"] for pt in good])
        sweep.verdicts["final_gap_below_5pct"] = bool(good[-1]["energy_gap"] < 0.05)
        sweep.verdicts["ratio_within_5pct"] = bool(
            abs(good[-1]["l4_ratio"] / ratio_target - 1.0) < 0.05)
        slope, residual = fit_slope([pt["b1"] for pt in good], [pt["eps0"] for pt in good])
        sweep.fit_exponents["eps0"] = slope
        sweep.fit_residuals["eps0"] = residual
    sweep.verdicts["below_bubble_energy"] = all(
        0 < pt["energy"] < target for pt in good)
    logging.info(f"Bubble experiment: target {target:.10g}, gaps "
                 f"{[round(pt['energy_gap'], 6) for pt in good]}")
    return sweep


def cutoff_bubble_norms(eps: float, radius: float = 1.0) -> Dict[str, float]:
    """Gradient, L^4, L^3 and L^2 integrals of the cutoff bubble by adaptive quadrature."""
    omega = 2.0 * np.pi ** 2
    points = [eps] if eps < radius else None

    def xi_prime(r):
        x = r / radius - 1.0
        if x <= 0.0 or x >= 1.0:
            return 0.0
        return -6.0 * x * (1.0 - x) / radius

    def W(r):
        return float(bubble_values(eps, r) * cutoff_function(r, radius))

    def dW(r):
        return float(xi_prime(r) * bubble_values(eps, r)
                     + cutoff_function(r, radius) * bubble_derivative(eps, r))

    def integral(fn) -> float:
        head, _ = quad(fn, 0.0, radius, points=points, limit=400, epsabs=0.0, epsrel=1e-13)
        tail, _ = quad(fn, radius, 2.0 * radius, limit=400, epsabs=0.0, epsrel=1e-13)
        return omega * (head + tail)

    return {
        "gradient": integral(lambda r: dW(r) ** 2 * r ** 3),
        "quartic": integral(lambda r: W(r) ** 4 * r ** 3),
        "cubic": integral(lambda r: abs(W(r)) ** 3 * r ** 3),
        "mass": integral(lambda r: W(r) ** 2 * r ** 3),
    }


def _grid_norms(eps: float, grid: RadialGrid, radius: float) -> Dict[str, float]:
    field_ = cutoff_bubble(eps, grid, radius)
    w = grid.weights
    values = field_.values
    return {"gradient": kinetic(field_), "quartic": float(np.dot(w, values ** 4)),
            "cubic": float(np.dot(w, np.abs(values) ** 3)), "mass": float(np.dot(w, values ** 2))}


def cutoff_bubble_estimates(eps_ladder: Sequence[float], grid: Optional[RadialGrid] = None,
                            radius: float = 1.0) -> Dict[str, object]:
    """
    Deficits of the cutoff bubble along an ``eps`` ladder with log-log slopes.

    Without a grid the integrals come from adaptive quadrature of the
    closed-form integrands; with an N=4 grid they are grid sums.
    """
    eps_values = [float(e) for e in eps_ladder]
    if any(not 0 < e <= 0.5 for e in eps_values):
        raise UsageError(f"Cutoff ladder must lie in (0, 0.5], got {eps_values}")
    if len(eps_values) < 2:
        raise UsageError("Cutoff ladder needs at least two points")
    if grid is not None and grid.dimension != 4:
        raise UsageError(f"Cutoff bubbles live in dimension 4, grid has N={grid.dimension}")
    S2 = sobolev_constant() ** 2
    rows = []
    for eps in eps_values:
        norms = cutoff_bubble_norms(eps, radius) if grid is None else _grid_norms(eps, grid, radius)
        rows.append({
            "eps": eps,
            **norms,
            "gradient_deficit": abs(norms["gradient"] - S2),
            "quartic_deficit": abs(norms["quartic"] - S2),
            "mass_over_log": norms["mass"] / abs(np.log(eps)),
        })
    slopes, residuals = {}, {}
    for name in ("gradient_deficit", "quartic_deficit", "cubic", "mass_over_log"):
        slopes[name], residuals[name] = fit_slope(eps_values, [row[name] for row in rows])
    verdicts = {
        "gradient_slope_2": abs(slopes["gradient_deficit"] - 2.0) <= 0.3,
        "cubic_slope_1": abs(slopes["cubic"] - 1.0) <= 0.3,
        "mass_slope_2": abs(slopes["mass_over_log"] - 2.0) <= 0.3,
        "quartic_faster": slopes["quartic_deficit"] > slopes["gradient_deficit"],
    }
    logging.info(f"Cutoff bubble slopes: {slopes}")
    return {"rows": rows, "slopes": slopes, "residuals": residuals, "verdicts": verdicts,
            "S_squared": S2}


def window_witness_4d(p: ProblemParams, eps_ladder: Sequence[float],
                      bubble: Optional[BubbleParams] = None) -> Dict[str, object]:
    """
    Fiber maximum of the trial pair ``(b1 W/||W||, b2 W/||W||)`` along an
    ``eps`` ladder against the bubble energy ``(k1 + k2) S^2 / 4``.
    """
    if p.N != 4:
        raise DomainError(f"The four-dimensional witness needs N=4, got N={p.N}")
    bubble = bubble or bubble_params(p.mu1, p.mu2, p.rho)
    bound = bubble.least_energy()
    rows = []
    for eps in eps_ladder:
        norms = cutoff_bubble_norms(float(eps))
        scale = 1.0 / np.sqrt(norms["mass"])
        a1, a2 = p.b1 * scale, p.b2 * scale
        profile = FiberProfile(
            N=4, beta=p.beta,
            kinetic=(a1 ** 2 + a2 ** 2) * norms["gradient"],
            quartic=(p.mu1 * a1 ** 4 + p.mu2 * a2 ** 4 + 2.0 * p.rho * a1 ** 2 * a2 ** 2)
            * norms["quartic"],
            cubic=a1 ** 2 * a2 * norms["cubic"])
        t_max = fiber_critical_points_of(profile).t
        value = float(profile.value(t_max))
        rows.append({"eps": float(eps), "fiber_max": value, "below": value < bound})
    verdict = bool(rows and rows[-1]["below"])
    logging.info(f"Window witness: bound {bound:.10g}, smallest-eps value "
                 f"{rows[-1]['fiber_max'] if rows else float('nan'):.10g}")
    return {"bound": bound, "rows": rows, "witness": verdict}


def beta_limit_experiment(p_base: ProblemParams, beta_ladder: Sequence[float],
                          cfg: SolveConfig, c: ConstantsTable,
                          threads: int = 1) -> SweepResult:
    """
    Both three-dimensional branches along a decreasing ``beta`` ladder at
    fixed masses, compared with the decoupled (beta = 0) excited state.

    A lost local minimizer at small ``beta`` is recorded on its point and
    does not end the sweep.
    """
    if p_base.N != 3:
        raise DomainError(f"Beta limit is studied for N=3, got N={p_base.N}")
    betas = [float(b) for b in beta_ladder]
    if not _strictly_decreasing(betas) or betas[-1] <= 0:
        raise UsageError("Beta ladder must be strictly decreasing and positive")
    reference = solve_mountain_pass(p_base.with_(beta=0.0), cfg, c)
    ref_state = reference.state
    ref_norm = state_h1_norm(ref_state)

    def task(beta):
        p = p_base.with_(beta=beta)
        try:
            local = solve_local_min(p, cfg, c)
        except NormSolveError as e:
            logging.warning(f"Local minimizer lost at beta={beta}: {e}")
            local = None
        excited = solve_mountain_pass(p, cfg, c, initial=local.state if local else None)
        return local, excited

    outcomes = _run_ladder(betas, task, threads, "Beta ladder")
    sweep = SweepResult(experiment="betalimit", ladder=[{"beta": b} for b in betas])
    for beta, outcome in zip(betas, outcomes):
        if isinstance(outcome, Exception):
            sweep.points.append({"beta": beta, "error": str(outcome)})
            sweep.results.append(None)
            sweep.partial = True
            continue
        local, excited = outcome
        on_reference = StatePair(resample(excited.state.u, ref_state.grid),
                                 resample(excited.state.v, ref_state.grid),
                                 ref_state.b1, ref_state.b2)
        point = {
            "beta": beta,
            "m_plus": local.diagnostics.energy if local is not None else None,
            "local_converged": bool(local is not None and local.converged),
            "m_minus": excited.diagnostics.energy,
            "excited_converged": excited.converged,
            "distance_to_decoupled": h1_distance(on_reference, ref_state) / ref_norm,
        }
        sweep.points.append(point)
        sweep.results.append(excited)
        sweep.partial = sweep.partial or not excited.converged

    good = [pt for pt in sweep.points if "error" not in pt]
    m0 = reference.diagnostics.energy
    m_minus = [pt["m_minus"] for pt in good]
    sweep.verdicts["m_minus_chain"] = bool(
        all(a <= b + 1e-4 for a, b in zip(m_minus, m_minus[1:]))
        and all(m <= m0 + 1e-4 for m in m_minus))
    plus = [abs(pt["m_plus"]) for pt in good if pt["m_plus"] is not None]
    sweep.verdicts["m_plus_to_zero"] = _strictly_decreasing(plus) if len(plus) >= 2 else False
    if good:
        sweep.verdicts["distance_below_5pct"] = bool(good[-1]["distance_to_decoupled"] < 0.05)
    sweep.points.append({"beta": 0.0, "m_minus": m0, "excited_converged": reference.converged,
                         "distance_to_decoupled": 0.0, "m_plus": None, "local_converged": False})
    logging.info(f"Beta limit: m- chain {m_minus} against m-_0 = {m0:.10g}")
    return sweep
