"""
Scalar reference profiles and best constants.

Ground states of ``-Delta u + u = u^p`` are found by shooting on the radial
ODE (bisection on ``u(0)``) and then polished by Newton's method on the
discretized system. Norms that enter the best constants are integrated on
the dense ODE solution so the constants do not inherit the grid error.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np
import scipy.sparse as sparse
from scipy.integrate import quad, solve_ivp
from scipy.sparse.linalg import spsolve
from tqdm import tqdm

from exceptions import DomainError, ProfileSolveError, RegimeError, UsageError
from radial_grid import (RadialField, RadialGrid, build_radial_grid,
                         kinetic, laplacian_apply, sphere_area, stiffness_apply)

SHOOTING_TOLERANCE = 1e-12
NEWTON_TOLERANCE = 1e-10
NEWTON_MAX_ITERATIONS = 50
SHOOTING_START = 1e-6
SHOOTING_RANGE = 60.0
BUBBLE_RESIDUAL_TOLERANCE = 1e-5

# Pairs the threshold formulas need.
DEFAULT_PAIRS = ((2, 4), (3, 3), (3, 4), (4, 3))


def critical_exponent(N: int) -> float:
    """Sobolev exponent ``2N/(N-2)``; infinite for N <= 2."""
    return np.inf if N <= 2 else 2.0 * N / (N - 2.0)


def gamma_p(N: int, p: float) -> float:
    return N * (p - 2.0) / (2.0 * p)


@dataclass(frozen=True)
class ShootingProfile:
    """Converged shooting data for ``-Delta u + u = u^p`` in R^N."""
    dimension: int
    exponent: float
    amplitude: float
    r_valid: float
    solution: object = field(repr=False, compare=False)

    def evaluate(self, r: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Profile and derivative, with the exponential tail beyond ``r_valid``."""
        r = np.asarray(r, dtype=float)
        u = np.empty_like(r)
        du = np.empty_like(r)
        near = r <= SHOOTING_START
        inner = (r > SHOOTING_START) & (r <= self.r_valid)
        outer = r > self.r_valid
        a = self.amplitude
        curvature = (a - a ** self.exponent) / self.dimension
        u[near] = a + 0.5 * curvature * r[near] ** 2
        du[near] = curvature * r[near]
        if np.any(inner):
            y = self.solution(r[inner])
            u[inner] = y[0]
            du[inner] = y[1]
        if np.any(outer):
            u_edge = float(self.solution(self.r_valid)[0])
            decay = (self.dimension - 1) / 2.0
            tail = u_edge * np.exp(-(r[outer] - self.r_valid)) * (self.r_valid / r[outer]) ** decay
            u[outer] = tail
            du[outer] = -tail * (1.0 + decay / r[outer])
        return u, du


@dataclass(frozen=True)
class GroundStateNorms:
    """Norms of a scalar ground state integrated on the ODE solution."""
    dimension: int
    exponent: float
    mass: float
    kinetic: float
    power: float

    def nehari_residual(self) -> float:
        return abs(self.kinetic + self.mass - self.power) / (self.kinetic + self.mass)


@dataclass(frozen=True)
class ConstantsTable:
    """
    Best constants and reference norms used by the threshold formulas.

    Filled once by ``constants_table`` and never modified afterwards; pairs
    outside the table are evaluated on demand without being stored.

    Args:
        gn: Map (N, p) to the Gagliardo-Nirenberg best constant C_{N,p}.
        gamma: Map (N, p) to ``N(p-2)/(2p)``.
        sobolev_S: Best Sobolev constant in R^4.
        q_mass_sq: ``||Q||^2`` of the 2D cubic ground state.
        w_mass_sq: ``||w||^2`` of the 3D quadratic ground state.
        w_kinetic: ``||grad w||^2``.
    """
    gn: Dict[Tuple[int, int], float]
    gamma: Dict[Tuple[int, int], float]
    sobolev_S: float
    q_mass_sq: float
    w_mass_sq: float
    w_kinetic: float

    def C(self, N: int, p: int) -> float:
        if (N, p) in self.gn:
            return self.gn[(N, p)]
        return gn_constant(N, p)

    def to_rows(self) -> List[Dict[str, float]]:
        return [{"N": N, "p": p, "C": self.gn[(N, p)], "gamma": self.gamma[(N, p)]}
                for (N, p) in sorted(self.gn)]

    def to_dict(self) -> Dict[str, object]:
        return {
            "gn": self.to_rows(),
            "sobolev_S": self.sobolev_S,
            "q_mass_sq": self.q_mass_sq,
            "w_mass_sq": self.w_mass_sq,
            "w_kinetic": self.w_kinetic,
        }


@dataclass(frozen=True)
class BubbleParams:
    """Amplitudes of the coupled four-dimensional bubble pair."""
    k1: float
    k2: float
    coupled_S: float
    residual: float = 0.0

    def least_energy(self) -> float:
        """``(k1 + k2) S^2 / 4``, the upper end of the 4D energy window."""
        return self.coupled_S ** 2 / 4.0


def _validate_pair(N: int, p: float):
    if N not in (1, 2, 3, 4):
        raise DomainError(f"Unsupported dimension N={N}")
    if p <= 1:
        raise DomainError(f"Exponent p={p} must exceed 1")
    if N >= 3 and p >= (N + 2.0) / (N - 2.0):
        raise DomainError(f"Exponent p={p} is not subcritical in dimension {N}",
                          details={"N": N, "p": p})


def _shoot(N: int, p: float, a: float, r_end: float):
    """Integrate from the origin; returns (verdict, solution, stop radius)."""
    curvature = (a - a ** p) / N
    r0 = SHOOTING_START
    y0 = [a + 0.5 * curvature * r0 ** 2, curvature * r0]

    def rhs(r, y):
        u, du = y
        return [du, u - np.sign(u) * np.abs(u) ** p - (N - 1) / r * du]

    def crossed_zero(r, y):
        return y[0]
    crossed_zero.terminal = True
    crossed_zero.direction = -1

    def turned_up(r, y):
        return y[1]
    turned_up.terminal = True
    turned_up.direction = 1

    sol = solve_ivp(rhs, (r0, r_end), y0, method="DOP853", rtol=1e-12, atol=1e-14,
                    events=(crossed_zero, turned_up), dense_output=True)
    if sol.t_events[0].size:
        return "over", sol.sol, float(sol.t_events[0][0])
    if sol.t_events[1].size:
        return "under", sol.sol, float(sol.t_events[1][0])
    u_end, du_end = sol.y[0, -1], sol.y[1, -1]
    return ("under" if u_end + du_end > 0 else "over"), sol.sol, float(sol.t[-1])


@lru_cache(maxsize=None)
def shoot_ground_state(N: int, p: float, lower: float = 1.0,
                       tolerance: float = SHOOTING_TOLERANCE) -> ShootingProfile:
    """
    Bracket and bisect ``u(0)`` for the positive decaying solution of
    ``u'' + (N-1)/r u' = u - u^p``.

    Args:
        N: Dimension.
        p: Nonlinearity exponent.
        lower: Starting lower end of the bracket (must undershoot).
        tolerance: Relative bisection tolerance on ``u(0)``.

    Returns:
        ShootingProfile carrying the last undershooting trajectory.
    """
    _validate_pair(N, p)
    lo = max(lower, 1.0) * (1.0 + 1e-9)
    verdict, _, _ = _shoot(N, p, lo, SHOOTING_RANGE)
    if verdict != "under":
        raise ProfileSolveError(f"Lower shooting bracket u(0)={lo} does not undershoot",
                                details={"N": N, "p": p, "lower": lo})
    hi = 2.0 * lo
    for _ in range(60):
        verdict, _, _ = _shoot(N, p, hi, SHOOTING_RANGE)
        if verdict == "over":
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise ProfileSolveError("No overshooting amplitude found while bracketing",
                                details={"N": N, "p": p, "last_amplitude": hi})

    while hi - lo > tolerance * hi:
        mid = 0.5 * (lo + hi)
        verdict, _, _ = _shoot(N, p, mid, SHOOTING_RANGE)
        if verdict == "over":
            hi = mid
        else:
            lo = mid

    _, solution, r_stop = _shoot(N, p, lo, SHOOTING_RANGE)
    _, _, r_over = _shoot(N, p, hi, SHOOTING_RANGE)
    r_valid = max(min(r_stop, r_over) - 3.0, 0.5 * min(r_stop, r_over))
    logging.debug(f"Shooting N={N} p={p}: u(0)={lo:.15g}, valid to r={r_valid:.3f}")
    return ShootingProfile(dimension=N, exponent=p, amplitude=lo, r_valid=r_valid,
                           solution=solution)


@lru_cache(maxsize=None)
def ground_state_norms(N: int, p: float) -> GroundStateNorms:
    """Mass, kinetic and ``int u^{p+1}`` of the ground state by adaptive quadrature."""
    profile = shoot_ground_state(N, p)
    omega = sphere_area(N)

    def integral(fn) -> float:
        head, _ = quad(fn, 0.0, profile.r_valid, limit=400, epsabs=0.0, epsrel=1e-12)
        tail, _ = quad(fn, profile.r_valid, np.inf, limit=200)
        return omega * (head + tail)

    def mass_density(r):
        u, _ = profile.evaluate(np.array([r]))
        return u[0] ** 2 * r ** (N - 1)

    def kinetic_density(r):
        _, du = profile.evaluate(np.array([r]))
        return du[0] ** 2 * r ** (N - 1)

    def power_density(r):
        u, _ = profile.evaluate(np.array([r]))
        return abs(u[0]) ** (p + 1) * r ** (N - 1)

    return GroundStateNorms(dimension=N, exponent=p, mass=integral(mass_density),
                            kinetic=integral(kinetic_density), power=integral(power_density))


def _newton_polish(grid: RadialGrid, values: np.ndarray, p: float,
                   tolerance: float, max_iterations: int) -> np.ndarray:
    free = grid.n - 1
    weights = grid.weights[:free]
    stiffness = grid.stiffness[:free, :free]
    u = values.copy()
    u[-1] = 0.0

    def residual(u_full):
        Ku = stiffness_apply(grid, u_full)[:free]
        ui = u_full[:free]
        return Ku / weights + ui - np.sign(ui) * np.abs(ui) ** p

    def weighted_norm(x):
        return float(np.sqrt(np.dot(weights, x * x)))

    scale = np.sqrt(kinetic(RadialField(grid, u)) + np.dot(grid.weights, u * u))
    F = residual(u)
    for iteration in range(max_iterations):
        norm = weighted_norm(F)
        if norm < tolerance * scale:
            logging.debug(f"Newton polish converged in {iteration} iterations ({norm:.2e})")
            return u
        jac = (sparse.diags(1.0 / weights) @ stiffness
               + sparse.diags(1.0 - p * np.abs(u[:free]) ** (p - 1)))
        step = spsolve(jac.tocsc(), -F)
        damping = 1.0
        while damping > 1e-4:
            trial = u.copy()
            trial[:free] += damping * step
            F_trial = residual(trial)
            if weighted_norm(F_trial) < norm:
                u, F = trial, F_trial
                break
            damping *= 0.5
        else:
            break
    norm = weighted_norm(F)
    if norm < 100.0 * tolerance * scale:
        logging.warning(f"Newton polish stalled at relative residual {norm / scale:.2e}")
        return u
    raise ProfileSolveError("Newton polish did not reach the residual tolerance",
                            details={"grid": grid.describe(), "p": p,
                                     "residual": weighted_norm(F), "scale": scale})


def solve_scalar_ground_state(N: int, p: float, grid: RadialGrid,
                              newton_tolerance: float = NEWTON_TOLERANCE,
                              max_newton: int = NEWTON_MAX_ITERATIONS) -> RadialField:
    """
    Positive radial solution of ``-Delta u + u = u^p`` sampled on ``grid``.

    The shooting profile seeds a Newton iteration on the discrete system so
    the returned field solves the discretized equation to ``newton_tolerance``
    relative to its H^1 norm.

    Raises:
        UsageError: If the grid dimension differs from ``N``.
        DomainError: For supercritical exponents.
        ProfileSolveError: If bracketing or polishing fails.
    """
    if grid.dimension != N:
        raise UsageError(f"Grid has dimension {grid.dimension}, ground state requested for N={N}")
    _validate_pair(N, p)
    profile = shoot_ground_state(N, p)
    seed, _ = profile.evaluate(grid.nodes)
    values = _newton_polish(grid, seed, p, newton_tolerance, max_newton)
    if np.any(values[:-1] <= 0):
        raise ProfileSolveError("Polished ground state lost positivity",
                                details={"grid": grid.describe(), "N": N, "p": p})
    return RadialField(grid, values)


def pde_residual(f: RadialField, p: float) -> float:
    """``||-Delta u + u - u^p||_{L^2} / ||u||_{H^1}`` over the free nodes."""
    lap = laplacian_apply(f).values
    res = -lap + f.values - np.sign(f.values) * np.abs(f.values) ** p
    res[-1] = 0.0
    num = np.sqrt(np.dot(f.grid.weights, res * res))
    den = np.sqrt(kinetic(f) + np.dot(f.grid.weights, f.values ** 2))
    return float(num / den)


def aubin_talenti(eps: float, grid: RadialGrid) -> RadialField:
    """Bubble ``2 sqrt(2) eps / (eps^2 + r^2)`` on an N=4 grid."""
    if grid.dimension != 4:
        raise UsageError(f"Bubbles live in dimension 4, grid has N={grid.dimension}")
    if eps <= 0:
        raise UsageError(f"Bubble scale must be positive, got {eps}")
    return RadialField(grid, bubble_values(eps, grid.nodes))


def bubble_values(eps: float, r: np.ndarray) -> np.ndarray:
    return 2.0 * np.sqrt(2.0) * eps / (eps ** 2 + np.asarray(r) ** 2)


def bubble_derivative(eps: float, r: np.ndarray) -> np.ndarray:
    r = np.asarray(r)
    return -4.0 * np.sqrt(2.0) * eps * r / (eps ** 2 + r ** 2) ** 2


def bubble_gradient_tail(eps: float, radius: float) -> float:
    """``int_{|x|>R} |grad U_eps|^2`` in closed form."""
    X = eps ** 2 + radius ** 2
    return 2.0 * np.pi ** 2 * 32.0 * eps ** 2 * 0.5 * (
        1.0 / X - eps ** 2 / X ** 2 + eps ** 4 / (3.0 * X ** 3))


def bubble_quartic_tail(eps: float, radius: float) -> float:
    """``int_{|x|>R} U_eps^4`` in closed form."""
    X = eps ** 2 + radius ** 2
    return 2.0 * np.pi ** 2 * 64.0 * eps ** 4 * 0.5 * (
        1.0 / (2.0 * X ** 2) - eps ** 2 / (3.0 * X ** 3))


def bubble_integrals(field_: RadialField, eps: float) -> Tuple[float, float]:
    """Gradient and quartic integrals of a sampled bubble with analytic tails."""
    grad = kinetic(field_) + bubble_gradient_tail(eps, field_.grid.r_max)
    quartic = float(np.dot(field_.grid.weights, field_.values ** 4))
    quartic += bubble_quartic_tail(eps, field_.grid.r_max)
    return grad, quartic


def cutoff_function(r: np.ndarray, radius: float = 1.0) -> np.ndarray:
    """Radial cutoff equal to 1 on ``r <= radius``, 0 on ``r >= 2 radius``, C^1 in between."""
    x = np.clip(np.asarray(r, dtype=float) / radius - 1.0, 0.0, 1.0)
    return 1.0 - x * x * (3.0 - 2.0 * x)


def cutoff_bubble(eps: float, grid: RadialGrid, radius: float = 1.0) -> RadialField:
    """Bubble multiplied by the cutoff; vanishes on the Dirichlet node when ``2 radius <= r_max``."""
    values = bubble_values(eps, grid.nodes) * cutoff_function(grid.nodes, radius)
    values[-1] = 0.0
    return RadialField(grid, values)


@lru_cache(maxsize=None)
def sobolev_constant_exact_quadrature() -> float:
    """S from adaptive quadrature of the closed-form bubble integrands."""
    omega = sphere_area(4)
    grad, _ = quad(lambda r: bubble_derivative(1.0, r) ** 2 * r ** 3, 0.0, np.inf,
                   limit=200, epsrel=1e-13)
    quartic, _ = quad(lambda r: bubble_values(1.0, r) ** 4 * r ** 3, 0.0, np.inf,
                      limit=200, epsrel=1e-13)
    return float(omega * grad / np.sqrt(omega * quartic))


def sobolev_constant(grid: Optional[RadialGrid] = None) -> float:
    """
    Best Sobolev constant in R^4 from the bubble quotient.

    Without a grid the closed-form integrands are integrated adaptively;
    with an N=4 grid the sampled bubble and analytic tails are used.
    """
    if grid is None:
        return sobolev_constant_exact_quadrature()
    bubble = aubin_talenti(1.0, grid)
    grad, quartic = bubble_integrals(bubble, 1.0)
    return float(grad / np.sqrt(quartic))


def weinstein_quotient(f: RadialField, p: float) -> float:
    """``||u||_p / (||grad u||^gamma ||u||^{1-gamma})`` on the grid."""
    N = f.grid.dimension
    gamma = gamma_p(N, p)
    lp = float(np.dot(f.grid.weights, np.abs(f.values) ** p)) ** (1.0 / p)
    grad = np.sqrt(kinetic(f))
    l2 = np.sqrt(float(np.dot(f.grid.weights, f.values ** 2)))
    return float(lp / (grad ** gamma * l2 ** (1.0 - gamma)))


@lru_cache(maxsize=None)
def gn_constant(N: int, p: float) -> float:
    """
    Best Gagliardo-Nirenberg constant ``C_{N,p}`` with
    ``||u||_p <= C ||grad u||^{gamma_p} ||u||^{1-gamma_p}``.

    The quotient is evaluated at the ground state of
    ``-Delta u + u = u^{p-1}``; ``(4, 4)`` returns ``1/sqrt(S)``.

    Raises:
        DomainError: For ``p <= 2`` or ``p`` at or above the critical exponent.
    """
    if N not in (1, 2, 3, 4):
        raise DomainError(f"Unsupported dimension N={N}")
    if (N, p) == (4, 4):
        return float(1.0 / np.sqrt(sobolev_constant()))
    if p <= 2 or p >= critical_exponent(N):
        raise DomainError(f"(N, p) = ({N}, {p}) is outside 2 < p < 2*",
                          details={"N": N, "p": p, "critical": critical_exponent(N)})
    norms = ground_state_norms(N, p - 1)
    gamma = gamma_p(N, p)
    lp = norms.power ** (1.0 / p)
    return float(lp / (norms.kinetic ** (gamma / 2.0) * norms.mass ** ((1.0 - gamma) / 2.0)))


def constants_table(pairs: Iterable[Tuple[int, int]] = DEFAULT_PAIRS,
                    threads: int = 1) -> ConstantsTable:
    """
    Build the constants table for ``pairs`` plus the Q and w norms.

    Args:
        pairs: (N, p) pairs to evaluate.
        threads: Worker threads for distinct pairs.
    """
    pairs = list(pairs)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            values = list(pool.map(lambda pair: gn_constant(*pair), pairs))
    else:
        values = [gn_constant(N, p) for N, p in tqdm(pairs, desc="Best constants",
                                                     disable=len(pairs) < 2)]
    q = ground_state_norms(2, 3)
    w = ground_state_norms(3, 2)
    table = ConstantsTable(
        gn={pair: value for pair, value in zip(pairs, values)},
        gamma={pair: gamma_p(*pair) for pair in pairs},
        sobolev_S=sobolev_constant(),
        q_mass_sq=q.mass,
        w_mass_sq=w.mass,
        w_kinetic=w.kinetic,
    )
    logging.info(f"Constants table ready for pairs {pairs}")
    return table


def bubble_pair_residual(k1: float, k2: float, mu1: float, mu2: float, rho: float,
                         grid: RadialGrid) -> float:
    """Relative L^2 residual of ``(sqrt(k1) U_1, sqrt(k2) U_1)`` in the critical system."""
    bubble = aubin_talenti(1.0, grid)
    u = np.sqrt(k1) * bubble.values
    v = np.sqrt(k2) * bubble.values
    lap_u = laplacian_apply(RadialField(grid, u), clamp=False).values
    lap_v = laplacian_apply(RadialField(grid, v), clamp=False).values
    res_u = -lap_u - mu1 * u ** 3 - rho * v ** 2 * u
    res_v = -lap_v - mu2 * v ** 3 - rho * u ** 2 * v
    interior = grid.nodes <= 0.5 * grid.r_max
    w = grid.weights[interior]
    num = np.dot(w, res_u[interior] ** 2 + res_v[interior] ** 2)
    den = np.dot(w, lap_u[interior] ** 2 + lap_v[interior] ** 2)
    return float(np.sqrt(num / den))


def bubble_params(mu1: float, mu2: float, rho: float,
                  grid: Optional[RadialGrid] = None) -> BubbleParams:
    """
    Amplitudes ``k1, k2`` of the least-energy pair ``(sqrt(k1) U, sqrt(k2) U)``.

    Raises:
        RegimeError: When ``rho`` lies in ``[min(mu), max(mu)]``.
    """
    low, high = min(mu1, mu2), max(mu1, mu2)
    if not (0 < rho < low or rho > high):
        raise RegimeError(f"rho={rho} lies in the excluded band [{low}, {high}]",
                          details={"mu1": mu1, "mu2": mu2, "rho": rho})
    det = rho ** 2 - mu1 * mu2
    k1 = (rho - mu2) / det
    k2 = (rho - mu1) / det
    S = sobolev_constant()
    grid = grid or build_radial_grid(4, 40.0, 4096, "graded")
    residual = bubble_pair_residual(k1, k2, mu1, mu2, rho, grid)
    if residual > BUBBLE_RESIDUAL_TOLERANCE:
        logging.warning(f"Bubble pair residual {residual:.2e} exceeds {BUBBLE_RESIDUAL_TOLERANCE}")
    return BubbleParams(k1=float(k1), k2=float(k2), coupled_S=float(np.sqrt(k1 + k2) * S),
                        residual=residual)
