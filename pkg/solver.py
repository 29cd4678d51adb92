"""
Constrained minimization engines on the product of mass spheres.

All modes share one engine: a Sobolev-preconditioned projected gradient
descent with per-component renormalization and a backtracking line search.
Fiber-reduced modes replace every iterate by its dilation onto the Pohozaev
set before it is accepted. The dilation is realized by rescaling the grid,
so projected iterates satisfy the discrete Pohozaev identity exactly and the
objective being minimized is the closed-form fiber value.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy.linalg import solve_banded
from tqdm import tqdm

from certificate_validator import CertificateSummary, CertificateValidator
from exceptions import ConfigurationError, DomainError, RegimeError, StructureError
from functional import (Diagnostics, FiberProfile, ProblemParams, classify_fiber_roots,
                        diagnose, energy_components, fiber_critical_points_of, gradient,
                        project_tangent, tangential_norm)
from profiles import ConstantsTable, constants_table, cutoff_bubble
from radial_grid import (RadialField, RadialGrid, StatePair, build_radial_grid,
                         laplacian_apply, rescale_dilate, resample)
from thresholds import Regime, classify_regime

ARMIJO = 1e-4
STEP_GROWTH = 1.5
MAX_STEP = 1.0
MIN_STEP = 1e-12
ROUNDOFF = 1e-13
DECAY_LENGTHS = 28.0
BOUNDARY_TOLERANCE = 1e-8
RERUN_FACTOR = 1.5


class SolveMode(str, Enum):
    GLOBAL_MIN = "global_min"
    LOCAL_MIN = "local_min"
    MOUNTAIN_PASS = "mountain_pass"
    RAYLEIGH_QUOTIENT_A = "rayleigh_quotient_A"


class Branch(str, Enum):
    GROUND_PLUS = "ground_plus"
    EXCITED_MINUS = "excited_minus"
    GLOBAL = "global"
    QUOTIENT = "quotient"


class Reduction(str, Enum):
    NONE = "none"
    FIBER_MIN = "fiber_min"
    FIBER_LOCAL_MIN = "fiber_local_min"
    FIBER_MAX = "fiber_max"


@dataclass
class SolveConfig:
    """
    Solver settings.

    Args:
        mode: Which critical point to compute.
        step: Initial step of the line search.
        tol_grad: Projected-gradient tolerance; ``1e-7 (b1 + b2)`` when unset.
        tol_pohozaev: Relative Pohozaev tolerance.
        max_iters: Iteration budget per attempt.
        seed: Seed of the randomized initial guess.
        ball_radius: Kinetic-norm bound for local minimization (defaults to R0).
        n: Grid size.
        r_max: Truncation radius; chosen from the decay heuristic when unset.
        spacing: Grid spacing.
        max_reruns: Reruns with a larger radius when the boundary decay check fails.
    """
    mode: SolveMode = SolveMode.GLOBAL_MIN
    step: float = 1e-2
    tol_grad: Optional[float] = None
    tol_pohozaev: float = 1e-6
    max_iters: int = 50000
    seed: int = 0
    ball_radius: Optional[float] = None
    n: int = 2048
    r_max: Optional[float] = None
    spacing: str = "uniform"
    max_reruns: int = 3

    def __post_init__(self):
        self.mode = SolveMode(self.mode)
        if not self.step > 0:
            raise ConfigurationError(f"must be positive, got {self.step}", key_path="solve.step")
        if self.tol_grad is not None and not self.tol_grad > 0:
            raise ConfigurationError(f"must be positive, got {self.tol_grad}",
                                     key_path="solve.tol_grad")
        if not self.tol_pohozaev > 0:
            raise ConfigurationError(f"must be positive, got {self.tol_pohozaev}",
                                     key_path="solve.tol_pohozaev")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ConfigurationError(f"must be an integer >= 1, got {self.max_iters}",
                                     key_path="solve.max_iters")
        if self.ball_radius is not None and not self.ball_radius > 0:
            raise ConfigurationError(f"must be positive, got {self.ball_radius}",
                                     key_path="solve.ball_radius")

    def grad_tolerance(self, p: ProblemParams) -> float:
        return self.tol_grad if self.tol_grad is not None else 1e-7 * (p.b1 + p.b2)


@dataclass
class SolveResult:
    """Outcome of one solve with its certificates."""
    state: StatePair
    diagnostics: Diagnostics
    converged: bool
    iterations: int
    branch: Branch
    objective: float = 0.0
    certificates: Optional[CertificateSummary] = None
    message: str = ""
    boundary_ratio: float = 0.0
    history: List[float] = field(default_factory=list, repr=False)

    def to_dict(self) -> Dict[str, object]:
        return {
            "branch": self.branch.value,
            "converged": self.converged,
            "iterations": self.iterations,
            "objective": self.objective,
            "message": self.message,
            "boundary_ratio": self.boundary_ratio,
            "masses": [self.state.b1, self.state.b2],
            "grid": self.state.grid.describe(),
            "diagnostics": self.diagnostics.to_dict(),
            "certificates": self.certificates.to_dict() if self.certificates else None,
        }


def _fiber_shift(profile: FiberProfile, reduction: Reduction) -> float:
    if reduction == Reduction.FIBER_MAX:
        return fiber_critical_points_of(profile).t
    minima, _ = classify_fiber_roots(profile)
    if not minima:
        raise StructureError("Fiber map has no minimum", details={
            "kinetic": profile.kinetic, "quartic": profile.quartic, "cubic": profile.cubic})
    if reduction == Reduction.FIBER_LOCAL_MIN:
        return min(minima)
    return min(minima, key=profile.value)


class ConstrainedDescent:
    """
    Projected descent on the product of mass spheres.

    The search direction is the gradient preconditioned by ``K + sigma W``
    (``sigma`` tracks the multipliers) and projected so that it is
    W-orthogonal to each component. Steps are retracted by renormalization,
    with absolute values taken on components held positive.

    Args:
        params: Problem coefficients and masses.
        config: Solver settings.
        reduction: Fiber projection applied to every accepted iterate.
        quotient: Minimize ``K / Q`` instead of the energy.
        positive: Per-component positivity enforcement.
        ball_radius: Upper bound on the kinetic norm of accepted iterates.
    """

    def __init__(self, params: ProblemParams, config: SolveConfig,
                 reduction: Reduction = Reduction.NONE, quotient: bool = False,
                 positive: Tuple[bool, bool] = (True, True),
                 ball_radius: Optional[float] = None):
        self.params = params
        self.config = config
        self.reduction = reduction
        self.quotient = quotient
        self.positive = positive
        self.ball_radius = ball_radius
        self.tolerance = config.grad_tolerance(params)
        self.ball_rejections = 0

    def _value(self, state: StatePair) -> Tuple[float, float, Tuple[float, float, float]]:
        K, Q, C = energy_components(state, self.params)
        if self.quotient:
            R = K / Q
            return R, abs(R), (K, Q, C)
        value = 0.5 * K - 0.25 * Q - 0.5 * self.params.beta * C
        return value, max(abs(K), abs(Q), abs(self.params.beta * C)), (K, Q, C)

    def _project(self, state: StatePair) -> Tuple[StatePair, float, float, float]:
        """Fiber projection; returns (state, objective, magnitude, kinetic)."""
        if self.reduction != Reduction.NONE:
            K, Q, C = energy_components(state, self.params)
            profile = FiberProfile(N=self.params.N, beta=self.params.beta,
                                   kinetic=K, quartic=Q, cubic=C)
            try:
                shift = _fiber_shift(profile, self.reduction)
            except StructureError:
                if self.reduction != Reduction.FIBER_MIN:
                    raise
                shift = 0.0
            state = rescale_dilate(state, shift)
        value, magnitude, (K, _, _) = self._value(state)
        return state, value, magnitude, K

    def _gradient(self, state: StatePair) -> Tuple[np.ndarray, np.ndarray]:
        if not self.quotient:
            g_u, g_v = gradient(state, self.params)
            return g_u.values, g_v.values
        p = self.params
        K, Q, _ = energy_components(state, p)
        u, v = state.u.values, state.v.values
        gK_u = -2.0 * laplacian_apply(state.u).values
        gK_v = -2.0 * laplacian_apply(state.v).values
        gQ_u = 4.0 * (p.mu1 * u ** 3 + p.rho * v * v * u)
        gQ_v = 4.0 * (p.mu2 * v ** 3 + p.rho * u * u * v)
        R = K / Q
        g_u = (gK_u - R * gQ_u) / Q
        g_v = (gK_v - R * gQ_v) / Q
        g_u[-1] = 0.0
        g_v[-1] = 0.0
        return g_u, g_v

    def _direction(self, state: StatePair, g: Tuple[np.ndarray, np.ndarray],
                   lambdas: Tuple[float, float], kinetic_total: float
                   ) -> Tuple[np.ndarray, np.ndarray, float]:
        grid = state.grid
        free = grid.n - 1
        masses = (state.b1, state.b2)
        total_mass = masses[0] ** 2 + masses[1] ** 2
        floor = 0.1 * kinetic_total / total_mass if not self.quotient else kinetic_total / total_mass
        active = [lam for lam, b in zip(lambdas, masses) if b > 0 and lam > 0]
        sigma = max(min(active), floor) if (active and not self.quotient) else floor
        sigma = max(sigma, 1e-12)

        W = grid.weights[:free]
        comps = (state.u.values[:free], state.v.values[:free])
        rhs = np.column_stack([W * g[0][:free], W * g[1][:free], W * comps[0], W * comps[1]])
        solved = solve_banded((1, 1), grid.stiffness_banded(sigma), rhs)

        directions = []
        slope = 0.0
        for i in range(2):
            d = np.zeros(grid.n)
            if masses[i] > 0:
                raw = solved[:, i]
                z = solved[:, 2 + i]
                shift = np.dot(W, comps[i] * raw) / np.dot(W, comps[i] * z)
                d[:free] = raw - shift * z
                slope += float(np.dot(W, g[i][:free] * d[:free]))
            directions.append(d)
        return directions[0], directions[1], slope

    def _retract(self, state: StatePair, d_u: np.ndarray, d_v: np.ndarray,
                 alpha: float) -> StatePair:
        u = state.u.values - alpha * d_u
        v = state.v.values - alpha * d_v
        if self.positive[0]:
            u = np.abs(u)
        if self.positive[1]:
            v = np.abs(v)
        return state.with_values(u, v).normalized()

    def run(self, state: StatePair) -> Tuple[StatePair, Dict[str, object]]:
        """
        Descend from ``state`` until the projected gradient is below tolerance.

        Returns:
            Tuple of (final state, run info with iterations, history, gradient
            norm and a convergence flag)
        """
        state, value, magnitude, K = self._project(state.normalized())
        g = self._gradient(state)
        alpha = self.config.step
        history = [value]
        converged = False
        message = ""
        grad_norm = np.inf
        iteration = 0
        verbose = logging.getLogger().isEnabledFor(logging.DEBUG)

        for iteration in range(1, self.config.max_iters + 1):
            tangent, lambdas = project_tangent(
                state, (RadialField(state.grid, g[0]), RadialField(state.grid, g[1])))
            grad_norm = tangential_norm(tangent)
            if grad_norm < self.tolerance:
                converged = True
                break
            d_u, d_v, slope = self._direction(state, g, lambdas, K)
            noise = ROUNDOFF * magnitude
            accepted = False
            while alpha >= MIN_STEP:
                trial = self._retract(state, d_u, d_v, alpha)
                try:
                    projected, trial_value, trial_magnitude, trial_K = self._project(trial)
                except StructureError:
                    alpha *= 0.5
                    continue
                if self.ball_radius is not None and np.sqrt(trial_K) >= self.ball_radius:
                    self.ball_rejections += 1
                    alpha *= 0.5
                    continue
                if trial_value <= value - ARMIJO * alpha * slope + noise:
                    accepted = True
                    break
                alpha *= 0.5
            if not accepted:
                message = f"line search stalled at gradient norm {grad_norm:.3e}"
                break
            state, value, magnitude, K = projected, trial_value, trial_magnitude, trial_K
            g = self._gradient(state)
            history.append(value)
            alpha = min(alpha * STEP_GROWTH, MAX_STEP)
            if verbose and iteration % 100 == 0:
                logging.debug(f"iter {iteration}: objective={value:.15g} grad={grad_norm:.3e} "
                              f"step={alpha:.2e}")
        else:
            message = f"iteration budget exhausted at gradient norm {grad_norm:.3e}"

        return state, {"iterations": iteration, "history": history, "grad_norm": grad_norm,
                       "gradient_met": converged, "message": message, "objective": value}


def suggest_r_max(p: ProblemParams, c: Optional[ConstantsTable], mode: SolveMode
                  ) -> Tuple[float, float]:
    """
    Truncation radius and initial width from a decay heuristic.

    The decay length is ``1 / min(theta1, theta2)`` of the collapse scaling
    for the three-dimensional local minimizer and 1 otherwise; the radius
    covers 28 decay lengths.

    Returns:
        Tuple of (r_max, initial Gaussian width)
    """
    length = 1.0
    if p.N == 3 and mode == SolveMode.LOCAL_MIN and c is not None and p.beta > 0:
        from asymptotics import collapse_scaling
        scaling = collapse_scaling(p, c.w_mass_sq)
        length = 1.0 / min(scaling.theta1, scaling.theta2)
    return DECAY_LENGTHS * length, 1.5 * length if length > 1.0 else length


def initial_guess(p: ProblemParams, grid: RadialGrid, mode: SolveMode, seed: int,
                  width: float = 1.0) -> StatePair:
    """
    Mass-normalized starting state with seeded random widths.

    Four-dimensional mountain-pass runs start from the cutoff-bubble pair.
    """
    rng = np.random.default_rng(seed)
    factors = rng.uniform(0.8, 1.25, size=2)
    r = grid.nodes
    if p.N == 4 and mode == SolveMode.MOUNTAIN_PASS:
        shapes = [cutoff_bubble(0.3 * width * f, grid, radius=2.0 * width).values.copy() for f in factors]
    else:
        shapes = [np.exp(-(r / (width * f)) ** 2) for f in factors]
    u = shapes[0] if p.b1 > 0 else np.zeros(grid.n)
    v = shapes[1] if p.b2 > 0 else np.zeros(grid.n)
    u[-1] = 0.0
    v[-1] = 0.0
    return StatePair(RadialField(grid, u), RadialField(grid, v), p.b1, p.b2).normalized()


def _grid_for(p: ProblemParams, cfg: SolveConfig, c: Optional[ConstantsTable]
              ) -> Tuple[RadialGrid, float]:
    r_max, width = suggest_r_max(p, c, cfg.mode)
    if cfg.r_max is not None:
        r_max = cfg.r_max
        width = min(width, r_max / DECAY_LENGTHS)
    spacing = cfg.spacing
    return build_radial_grid(p.N, r_max, cfg.n, spacing), width


def _run_with_reruns(engine: ConstrainedDescent, state: StatePair, cfg: SolveConfig
                     ) -> Tuple[StatePair, Dict[str, object], float]:
    total_iterations = 0
    history: List[float] = []
    for attempt in range(cfg.max_reruns + 1):
        state, info = engine.run(state)
        total_iterations += info["iterations"]
        history.extend(info["history"])
        ratio = max(state.u.boundary_ratio(), state.v.boundary_ratio())
        if ratio < BOUNDARY_TOLERANCE or attempt == cfg.max_reruns:
            break
        larger = build_radial_grid(state.grid.dimension, RERUN_FACTOR * state.grid.r_max,
                                   state.grid.n, state.grid.spacing)
        logging.warning(f"Boundary ratio {ratio:.2e} too large; rerunning with "
                        f"r_max={larger.r_max:.4g}")
        state = StatePair(resample(state.u, larger), resample(state.v, larger),
                          state.b1, state.b2).normalized()
    info["iterations"] = total_iterations
    info["history"] = history
    return state, info, ratio


def _finish(p: ProblemParams, cfg: SolveConfig, engine: ConstrainedDescent,
            state: StatePair, info: Dict[str, object], ratio: float, branch: Branch,
            validator: Optional[CertificateValidator]) -> SolveResult:
    diagnostics = diagnose(state, p)
    validator = validator or CertificateValidator()
    if engine.quotient:
        certified = replace(diagnostics, grad_norm=float(info["grad_norm"]))
        certificates = validator.evaluate(certified, engine.tolerance, cfg.tol_pohozaev,
                                          (p.b1, p.b2), checks=("gradient",))
    else:
        certificates = validator.evaluate(diagnostics, engine.tolerance, cfg.tol_pohozaev,
                                          (p.b1, p.b2))
    converged = bool(info["gradient_met"]) and not certificates.failed
    message = str(info["message"])
    if ratio >= BOUNDARY_TOLERANCE:
        message = (message + "; " if message else "") + f"boundary ratio {ratio:.2e}"
    return SolveResult(state=state, diagnostics=diagnostics, converged=converged,
                       iterations=int(info["iterations"]), branch=branch,
                       objective=float(info["objective"]), certificates=certificates,
                       message=message, boundary_ratio=float(ratio),
                       history=list(info["history"]))


def _reject(result: SolveResult, reason: str) -> SolveResult:
    result.converged = False
    result.message = (result.message + "; " if result.message else "") + reason
    logging.warning(f"Solve rejected: {reason}")
    return result


def _log_result(mode: SolveMode, p: ProblemParams, result: SolveResult):
    status = "converged" if result.converged else "not converged"
    logging.info(f"{mode.value} N={p.N} b=({p.b1:.4g}, {p.b2:.4g}) beta={p.beta:.4g}: "
                 f"energy={result.diagnostics.energy:.12g} after {result.iterations} "
                 f"iterations ({status})")


def solve_global_min(p: ProblemParams, cfg: SolveConfig,
                     constants: Optional[ConstantsTable] = None,
                     initial: Optional[StatePair] = None,
                     validator: Optional[CertificateValidator] = None) -> SolveResult:
    """
    Global minimizer of the energy on the product sphere (N = 1, 2).

    Iterates are moved to the minimum of their fiber whenever the fiber has
    one, which the global minimizer always satisfies.

    Raises:
        RegimeError: Outside the coercive regimes.
    """
    if p.N >= 3:
        raise RegimeError(f"Energy is unbounded below on the product sphere for N={p.N}",
                          details={"N": p.N})
    if p.N == 2:
        constants = constants or constants_table(pairs=((2, 4),))
        report = classify_regime(p, constants)
        if report.regime != Regime.COERCIVE_2D:
            raise RegimeError(f"Global minimization needs the coercive regime, got "
                              f"{report.regime.value}", details=report.to_dict())
    cfg = replace(cfg, mode=SolveMode.GLOBAL_MIN)
    logging.info(f"Starting global minimization N={p.N} b=({p.b1}, {p.b2})")
    grid, width = _grid_for(p, cfg, constants)
    state = initial or initial_guess(p, grid, cfg.mode, cfg.seed, width)
    engine = ConstrainedDescent(p, cfg, reduction=Reduction.FIBER_MIN,
                                positive=(True, p.beta >= 0))
    state, info, ratio = _run_with_reruns(engine, state, cfg)
    result = _finish(p, cfg, engine, state, info, ratio, Branch.GLOBAL, validator)
    if result.converged and result.diagnostics.energy >= 0:
        _reject(result, "global minimum is not negative")
    _log_result(cfg.mode, p, result)
    return result


def solve_local_min(p: ProblemParams, cfg: SolveConfig,
                    constants: Optional[ConstantsTable] = None,
                    initial: Optional[StatePair] = None,
                    validator: Optional[CertificateValidator] = None) -> SolveResult:
    """
    Local minimizer on the P+ branch inside the ball of radius R0 (N = 3).

    Raises:
        RegimeError: Outside the two-solution window.
    """
    if p.N != 3:
        raise RegimeError(f"Local minimization is defined for N=3, got N={p.N}")
    constants = constants or constants_table()
    report = classify_regime(p, constants)
    if report.regime != Regime.TWO_SOLUTION_3D:
        raise RegimeError(f"Local minimization needs the two-solution window, got "
                          f"{report.regime.value}", details=report.to_dict())
    cfg = replace(cfg, mode=SolveMode.LOCAL_MIN)
    ball = cfg.ball_radius or report.R0
    logging.info(f"Starting local minimization b=({p.b1}, {p.b2}) beta={p.beta} R0={report.R0:.6g}")
    grid, width = _grid_for(p, cfg, constants)
    state = initial or initial_guess(p, grid, cfg.mode, cfg.seed, width)
    engine = ConstrainedDescent(p, cfg, reduction=Reduction.FIBER_LOCAL_MIN, ball_radius=ball)
    state, info, ratio = _run_with_reruns(engine, state, cfg)
    result = _finish(p, cfg, engine, state, info, ratio, Branch.GROUND_PLUS, validator)
    d = result.diagnostics
    if p.beta * d.cubic_coupling <= 0:
        _reject(result, "quadratic coupling term is not positive")
    elif d.energy >= 0 or d.fiber_second <= 0:
        _reject(result, "state is not a negative-level P+ point")
    if engine.ball_rejections:
        logging.info(f"Trust region shrank {engine.ball_rejections} times at the R0 ball")
    _log_result(cfg.mode, p, result)
    return result


def solve_mountain_pass(p: ProblemParams, cfg: SolveConfig,
                        constants: Optional[ConstantsTable] = None,
                        initial: Optional[StatePair] = None,
                        validator: Optional[CertificateValidator] = None) -> SolveResult:
    """
    Mountain-pass state as the minimizer of the fiber maximum (N = 3, 4).

    For N = 3 the decoupled case beta = 0 is accepted as the reference
    problem of the beta -> 0 limit.

    Raises:
        RegimeError: Outside the admissible windows.
    """
    constants = constants or constants_table()
    if p.N == 3:
        if p.beta < 0:
            raise RegimeError("Mountain-pass search needs beta >= 0 in N=3", details=p.to_dict())
        if p.beta > 0:
            report = classify_regime(p, constants)
            if report.regime != Regime.TWO_SOLUTION_3D:
                raise RegimeError(f"Mountain-pass search needs the two-solution window, got "
                                  f"{report.regime.value}", details=report.to_dict())
    elif p.N == 4:
        report = classify_regime(p, constants)
        if report.regime != Regime.CRITICAL_4D_OK:
            raise RegimeError(f"Four-dimensional ground state needs the critical window, got "
                              f"{report.regime.value}", details=report.to_dict())
    else:
        raise RegimeError(f"Mountain-pass search is defined for N=3, 4, got N={p.N}")
    cfg = replace(cfg, mode=SolveMode.MOUNTAIN_PASS)
    if p.N == 4 and cfg.spacing == "uniform":
        cfg = replace(cfg, spacing="graded")
    logging.info(f"Starting mountain-pass search N={p.N} b=({p.b1}, {p.b2}) beta={p.beta}")
    return _mountain_pass(p, cfg, constants, initial, validator)


def _mountain_pass(p: ProblemParams, cfg: SolveConfig, constants: Optional[ConstantsTable],
                   initial: Optional[StatePair],
                   validator: Optional[CertificateValidator]) -> SolveResult:
    grid, width = _grid_for(p, cfg, constants)
    state = initial or initial_guess(p, grid, cfg.mode, cfg.seed, width)
    engine = ConstrainedDescent(p, cfg, reduction=Reduction.FIBER_MAX)
    state, info, ratio = _run_with_reruns(engine, state, cfg)
    result = _finish(p, cfg, engine, state, info, ratio, Branch.EXCITED_MINUS, validator)
    d = result.diagnostics
    if d.energy <= 0 or d.fiber_second >= 0:
        _reject(result, "state is not a positive-level P- point")
    _log_result(cfg.mode, p, result)
    return result


def solve_semitrivial(p: ProblemParams, component: int, cfg: SolveConfig,
                      constants: Optional[ConstantsTable] = None,
                      validator: Optional[CertificateValidator] = None) -> SolveResult:
    """
    Scalar mountain-pass level with one component switched off.

    Args:
        p: Parameters; the mass of the other component is set to 0.
        component: 1 keeps ``u`` (mass b1), 2 keeps ``v`` (mass b2).
    """
    if component not in (1, 2):
        raise ConfigurationError(f"must be 1 or 2, got {component}", key_path="solve.component")
    scalar = p.with_(b2=0.0) if component == 1 else p.with_(b1=0.0)
    cfg = replace(cfg, mode=SolveMode.MOUNTAIN_PASS)
    logging.info(f"Starting semi-trivial mountain-pass search for component {component}")
    return _mountain_pass(scalar, cfg, constants, None, validator)


def minimize_quotient_A(p: ProblemParams, cfg: SolveConfig,
                        validator: Optional[CertificateValidator] = None) -> SolveResult:
    """Minimize ``K / Q`` over the product sphere (N = 2)."""
    if p.N != 2:
        raise DomainError(f"The constant A is defined for N=2, got N={p.N}")
    cfg = replace(cfg, mode=SolveMode.RAYLEIGH_QUOTIENT_A)
    grid, width = _grid_for(p, cfg, None)
    state = initial_guess(p, grid, cfg.mode, cfg.seed, width)
    engine = ConstrainedDescent(p, cfg, quotient=True)
    state, info, ratio = _run_with_reruns(engine, state, cfg)
    result = _finish(p, cfg, engine, state, info, ratio, Branch.QUOTIENT, validator)
    logging.info(f"Quotient minimization: A={result.objective:.12g} ({result.iterations} iterations)")
    return result


def estimate_constant_A(p: ProblemParams, cfg: SolveConfig) -> float:
    """Numerical value of ``A = inf K / Q`` on the product sphere."""
    return float(minimize_quotient_A(p, cfg).objective)


SOLVERS: Dict[SolveMode, Callable[..., SolveResult]] = {
    SolveMode.GLOBAL_MIN: solve_global_min,
    SolveMode.LOCAL_MIN: solve_local_min,
    SolveMode.MOUNTAIN_PASS: solve_mountain_pass,
}


def compare_semitrivial(p: ProblemParams, cfg: SolveConfig,
                        constants: Optional[ConstantsTable] = None,
                        threads: int = 1) -> Dict[str, object]:
    """
    Coupled mountain-pass level against the two scalar levels with one
    component switched off; the coupled level lies strictly below both.
    """
    constants = constants or constants_table()
    tasks = [
        lambda: solve_mountain_pass(p, cfg, constants),
        lambda: solve_semitrivial(p, 1, cfg, constants),
        lambda: solve_semitrivial(p, 2, cfg, constants),
    ]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=min(threads, len(tasks))) as pool:
            coupled, first, second = [future.result() for future in
                                      [pool.submit(task) for task in tasks]]
    else:
        coupled, first, second = [task() for task in tasks]
    levels = (coupled.diagnostics.energy, first.diagnostics.energy, second.diagnostics.energy)
    return {
        "coupled": levels[0],
        "semitrivial_u": levels[1],
        "semitrivial_v": levels[2],
        "converged": all(r.converged for r in (coupled, first, second)),
        "strictly_below": bool(levels[0] < min(levels[1], levels[2])),
    }


def subadditivity_check(p: ProblemParams, cfg: SolveConfig, splits: int = 3,
                        slack: float = 1e-4) -> Dict[str, object]:
    """
    One-dimensional spot check ``m(b) + m(d) >= m(sqrt(b^2 + d^2)) - slack``
    for random mass splits of ``(p.b1, p.b2)``.
    """
    if p.N != 1:
        raise DomainError(f"Subadditivity spot check is run for N=1, got N={p.N}")
    rng = np.random.default_rng(cfg.seed)
    total = solve_global_min(p, cfg).diagnostics.energy
    rows = []
    for _ in tqdm(range(splits), desc="Mass splits"):
        f1, f2 = rng.uniform(0.2, 0.8, size=2)
        first = p.with_(b1=p.b1 * np.sqrt(f1), b2=p.b2 * np.sqrt(f2))
        second = p.with_(b1=p.b1 * np.sqrt(1.0 - f1), b2=p.b2 * np.sqrt(1.0 - f2))
        m_first = solve_global_min(first, cfg).diagnostics.energy
        m_second = solve_global_min(second, cfg).diagnostics.energy
        rows.append({"fractions": [float(f1), float(f2)], "sum": m_first + m_second,
                     "whole": total, "holds": bool(m_first + m_second >= total - slack)})
    return {"whole": total, "splits": rows, "holds": all(row["holds"] for row in rows)}
