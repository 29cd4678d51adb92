"""
Constrained variational calculus for the coupled system.

Energy, gradient and Pohozaev functional are assembled from three integrals
of a state: the kinetic term ``K``, the quartic term ``Q`` and the cubic
coupling ``C = int u^2 v``. The fiber map along the mass-preserving dilation
is a closed form in these three numbers.
"""

from dataclasses import asdict, dataclass, replace
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.optimize import brentq, newton

from exceptions import ConfigurationError, DomainError, StructureError, UsageError
from radial_grid import RadialField, StatePair, kinetic, laplacian_apply

FIBER_LOG_TAU_RANGE = (np.log(1e-6), np.log(1e6))
FIBER_SCAN_POINTS = 2001
FIBER_ROOT_TOLERANCE = 1e-12
FIBER_AMBIGUITY = 1e-10


@dataclass(frozen=True)
class ProblemParams:
    """
    Coefficients and masses of the stationary system.

    Args:
        N: Space dimension.
        mu1: Self-interaction of the first component.
        mu2: Self-interaction of the second component.
        rho: Cubic cross-coupling.
        beta: Quadratic coupling.
        b1: Mass of the first component (L^2 norm).
        b2: Mass of the second component.

    Zero cubic coefficients are accepted so that the quadratic-only limit
    system can be evaluated with the same machinery.
    """
    N: int
    mu1: float
    mu2: float
    rho: float
    beta: float
    b1: float
    b2: float

    def __post_init__(self):
        if self.N not in (1, 2, 3, 4):
            raise ConfigurationError(f"must be one of 1, 2, 3, 4, got {self.N}", key_path="problem.N")
        for name in ("mu1", "mu2", "rho"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ConfigurationError(f"must be a nonnegative real, got {value}",
                                         key_path=f"problem.{name}")
        if not np.isfinite(self.beta):
            raise ConfigurationError(f"must be finite, got {self.beta}", key_path="problem.beta")
        for name in ("b1", "b2"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ConfigurationError(f"must be a positive real, got {value}",
                                         key_path=f"problem.{name}")
        if self.b1 == 0 and self.b2 == 0:
            raise ConfigurationError("at least one mass must be positive", key_path="problem.b1")

    def with_(self, **changes) -> "ProblemParams":
        return replace(self, **changes)

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


@dataclass(frozen=True)
class Diagnostics:
    """Per-state certificate record."""
    energy: float
    kinetic: float
    quartic: float
    cubic_coupling: float
    pohozaev: float
    lambda1: float
    lambda2: float
    grad_norm: float
    fiber_second: float
    multiplier_residual: float = 0.0
    mass_error1: float = 0.0
    mass_error2: float = 0.0

    def relative_pohozaev(self) -> float:
        return abs(self.pohozaev) / self.kinetic if self.kinetic > 0 else abs(self.pohozaev)

    def to_dict(self) -> Dict[str, float]:
        return {key: float(value) for key, value in asdict(self).items()}


@dataclass(frozen=True)
class FiberCriticalPoints:
    """Critical points of the fiber map: local minimum ``s``, maximum ``t`` and zeros."""
    s: Optional[float]
    t: float
    zeros: Optional[Tuple[float, float]]

    def to_dict(self) -> Dict[str, object]:
        return {"s": self.s, "t": self.t, "zeros": list(self.zeros) if self.zeros else None}


@dataclass(frozen=True)
class FiberProfile:
    """
    Closed-form fiber map ``Psi(t) = e^{2t} K/2 - e^{Nt} Q/4 - (beta/2) e^{Nt/2} C``.
    """
    N: int
    beta: float
    kinetic: float
    quartic: float
    cubic: float

    @classmethod
    def from_state(cls, s: StatePair, p: ProblemParams) -> "FiberProfile":
        K, Q, C = energy_components(s, p)
        return cls(N=p.N, beta=p.beta, kinetic=K, quartic=Q, cubic=C)

    def value(self, t):
        N = self.N
        return (0.5 * np.exp(2 * t) * self.kinetic - 0.25 * np.exp(N * t) * self.quartic
                - 0.5 * self.beta * np.exp(N * t / 2) * self.cubic)

    def first(self, t):
        N = self.N
        return (np.exp(2 * t) * self.kinetic - 0.25 * N * np.exp(N * t) * self.quartic
                - 0.25 * N * self.beta * np.exp(N * t / 2) * self.cubic)

    def second(self, t):
        N = self.N
        return (2 * np.exp(2 * t) * self.kinetic - 0.25 * N * N * np.exp(N * t) * self.quartic
                - 0.125 * N * N * self.beta * np.exp(N * t / 2) * self.cubic)

    def _reduced_first(self, t):
        # Psi'(t) e^{-Nt/2}, bounded growth on the scan window.
        N = self.N
        return (self.kinetic * np.exp((4 - N) * t / 2) - 0.25 * N * self.quartic * np.exp(N * t / 2)
                - 0.25 * N * self.beta * self.cubic)

    def _reduced_value(self, t):
        N = self.N
        return (0.5 * self.kinetic * np.exp((4 - N) * t / 2) - 0.25 * self.quartic * np.exp(N * t / 2)
                - 0.5 * self.beta * self.cubic)

    def scan(self, n_points: int = FIBER_SCAN_POINTS) -> np.ndarray:
        # tau = e^{t/2} in [1e-6, 1e6]
        return np.linspace(2 * FIBER_LOG_TAU_RANGE[0], 2 * FIBER_LOG_TAU_RANGE[1], n_points)

    def trace(self, t_values: np.ndarray) -> Dict[str, np.ndarray]:
        return {"t": t_values, "psi": self.value(t_values), "psi_prime": self.first(t_values),
                "psi_second": self.second(t_values)}


def _bracketed_roots(fn, grid: np.ndarray) -> List[float]:
    values = fn(grid)
    roots = []
    for i in range(grid.size - 1):
        a, b = values[i], values[i + 1]
        if a == 0.0:
            roots.append(float(grid[i]))
        elif a * b < 0:
            roots.append(brentq(fn, grid[i], grid[i + 1], xtol=FIBER_ROOT_TOLERANCE,
                                rtol=4 * np.finfo(float).eps))
    return roots


def energy_components(s: StatePair, p: ProblemParams) -> Tuple[float, float, float]:
    """``(int |grad u|^2 + |grad v|^2, int mu1 u^4 + mu2 v^4 + 2 rho u^2 v^2, int u^2 v)``."""
    if s.grid.dimension != p.N:
        raise UsageError(f"State lives in dimension {s.grid.dimension}, parameters say {p.N}")
    w = s.grid.weights
    u, v = s.u.values, s.v.values
    K = kinetic(s.u) + kinetic(s.v)
    u2, v2 = u * u, v * v
    Q = float(np.dot(w, p.mu1 * u2 * u2 + p.mu2 * v2 * v2 + 2.0 * p.rho * u2 * v2))
    C = float(np.dot(w, u2 * v))
    return K, Q, C


def energy(s: StatePair, p: ProblemParams) -> float:
    """``J = K/2 - Q/4 - (beta/2) int u^2 v``."""
    K, Q, C = energy_components(s, p)
    return 0.5 * K - 0.25 * Q - 0.5 * p.beta * C


def gradient(s: StatePair, p: ProblemParams) -> Tuple[RadialField, RadialField]:
    """Unconstrained L^2 gradient; zero on the Dirichlet node."""
    u, v = s.u.values, s.v.values
    g_u = (-laplacian_apply(s.u).values - p.beta * u * v - p.mu1 * u ** 3 - p.rho * v * v * u)
    g_v = (-laplacian_apply(s.v).values - 0.5 * p.beta * u * u - p.mu2 * v ** 3
           - p.rho * u * u * v)
    g_u[-1] = 0.0
    g_v[-1] = 0.0
    return RadialField(s.grid, g_u), RadialField(s.grid, g_v)


def project_tangent(s: StatePair, g: Tuple[RadialField, RadialField]
                    ) -> Tuple[Tuple[RadialField, RadialField], Tuple[float, float]]:
    """
    Tangential gradient ``(g_u + l1 u, g_v + l2 v)`` with
    ``l_i = -<g_i, component>/b_i^2``.

    An inactive component (zero mass) gets multiplier 0.
    """
    w = s.grid.weights
    parts = []
    lambdas = []
    for comp, gi, b in ((s.u, g[0], s.b1), (s.v, g[1], s.b2)):
        if b == 0:
            lambdas.append(0.0)
            parts.append(RadialField(s.grid, gi.values))
            continue
        lam = -float(np.dot(w, gi.values * comp.values)) / (b * b)
        lambdas.append(lam)
        parts.append(RadialField(s.grid, gi.values + lam * comp.values))
    return (parts[0], parts[1]), (lambdas[0], lambdas[1])


def tangential_norm(tangent: Tuple[RadialField, RadialField]) -> float:
    w = tangent[0].grid.weights
    return float(np.sqrt(np.dot(w, tangent[0].values ** 2) + np.dot(w, tangent[1].values ** 2)))


def pohozaev(s: StatePair, p: ProblemParams) -> float:
    """``P = K - (N/4) Q - (N beta/4) C``, the dilation derivative of the energy at 0."""
    K, Q, C = energy_components(s, p)
    return K - 0.25 * p.N * Q - 0.25 * p.N * p.beta * C


def multiplier_identity_rhs(N: int, quartic: float, cubic: float, beta: float) -> float:
    """``(1 - N/4) Q + (3/2 - N/4) beta C``, valid at stationary states in any N."""
    return (1.0 - 0.25 * N) * quartic + (1.5 - 0.25 * N) * beta * cubic


def multiplier_identity_residual(s: StatePair, p: ProblemParams, l1: float, l2: float) -> float:
    """
    Absolute residual of ``l1 b1^2 + l2 b2^2 = (1 - N/4) Q + (3/2 - N/4) beta C``.

    Raises:
        DomainError: For ``N`` outside {2, 3}.
    """
    if p.N not in (2, 3):
        raise DomainError(f"Multiplier identity is provided for N in (2, 3), got N={p.N}")
    _, Q, C = energy_components(s, p)
    return abs(l1 * s.b1 ** 2 + l2 * s.b2 ** 2 - multiplier_identity_rhs(p.N, Q, C, p.beta))


def fiber_map(s: StatePair, p: ProblemParams, t: float) -> float:
    return float(FiberProfile.from_state(s, p).value(t))


def classify_fiber_roots(profile: FiberProfile) -> Tuple[List[float], List[float]]:
    """
    Roots of ``Psi'`` split into local minima and local maxima.

    Roots are bracketed on ``tau = e^{t/2} in [1e-6, 1e6]``, refined by
    Brent's method and polished by Newton; the sign of ``Psi''`` decides.

    Raises:
        StructureError: If a root is degenerate.
    """
    grid = profile.scan()
    minima, maxima = [], []
    for root in _bracketed_roots(profile._reduced_first, grid):
        try:
            root = float(newton(profile.first, root, fprime=profile.second, tol=1e-14, maxiter=5))
        except (RuntimeError, OverflowError):
            pass
        curvature = profile.second(root)
        scale = abs(np.exp(2 * root) * profile.kinetic) or 1.0
        if abs(curvature) < FIBER_AMBIGUITY * scale:
            raise StructureError("Degenerate fiber critical point", details=_fiber_details(profile))
        (minima if curvature > 0 else maxima).append(root)
    return minima, maxima


def fiber_critical_points_of(profile: FiberProfile) -> FiberCriticalPoints:
    """
    Critical points and zeros of a closed-form fiber map.

    Raises:
        StructureError: If no maximum exists or a root is degenerate.
    """
    minima, maxima = classify_fiber_roots(profile)
    if not maxima:
        raise StructureError("Fiber map has no maximum", details=_fiber_details(profile))
    t_max = max(maxima, key=lambda t: profile.value(t))
    s_min = min(minima) if minima else None

    zero_roots = _bracketed_roots(profile._reduced_value, profile.scan())
    zeros = (zero_roots[0], zero_roots[-1]) if len(zero_roots) >= 2 else None
    return FiberCriticalPoints(s=s_min, t=t_max, zeros=zeros)


def fiber_critical_points(s: StatePair, p: ProblemParams) -> FiberCriticalPoints:
    return fiber_critical_points_of(FiberProfile.from_state(s, p))


def _fiber_details(profile: FiberProfile) -> Dict[str, object]:
    samples = np.linspace(-10.0, 10.0, 21)
    return {"kinetic": profile.kinetic, "quartic": profile.quartic, "cubic": profile.cubic,
            "beta": profile.beta, "N": profile.N,
            "t": samples.tolist(), "psi": [float(x) for x in profile.value(samples)]}


def system_residual(s: StatePair, p: ProblemParams, l1: float, l2: float) -> float:
    """L^2 norm of the stationary-system residual relative to the H^1 size of the state."""
    g_u, g_v = gradient(s, p)
    res_u = g_u.values + l1 * s.u.values
    res_v = g_v.values + l2 * s.v.values
    w = s.grid.weights
    num = np.sqrt(np.dot(w, res_u ** 2) + np.dot(w, res_v ** 2))
    size = np.sqrt(kinetic(s.u) + kinetic(s.v) + np.dot(w, s.u.values ** 2)
                   + np.dot(w, s.v.values ** 2))
    return float(num / size)


def diagnose(s: StatePair, p: ProblemParams) -> Diagnostics:
    """Assemble the full certificate record of a state."""
    K, Q, C = energy_components(s, p)
    g = gradient(s, p)
    tangent, (l1, l2) = project_tangent(s, g)
    profile = FiberProfile(N=p.N, beta=p.beta, kinetic=K, quartic=Q, cubic=C)
    residual = abs(l1 * s.b1 ** 2 + l2 * s.b2 ** 2 - multiplier_identity_rhs(p.N, Q, C, p.beta))
    e1, e2 = s.mass_errors()
    return Diagnostics(
        energy=0.5 * K - 0.25 * Q - 0.5 * p.beta * C,
        kinetic=K,
        quartic=Q,
        cubic_coupling=C,
        pohozaev=K - 0.25 * p.N * Q - 0.25 * p.N * p.beta * C,
        lambda1=l1,
        lambda2=l2,
        grad_norm=tangential_norm(tangent),
        fiber_second=float(profile.second(0.0)),
        multiplier_residual=residual,
        mass_error1=e1,
        mass_error2=e2,
    )
