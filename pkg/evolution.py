"""
Split-step evolution of the time-dependent coupled system.

The fields evolve by

    i d_z Phi = Delta Phi + (mu1 |Phi|^2 + rho |Psi|^2 + beta |Psi|) Phi
    i d_z Psi = Delta Psi + (mu2 |Psi|^2 + rho |Phi|^2) Psi + (beta/2) |Phi|^2 Psi / |Psi|

so that ``(e^{-i l1 z} u, e^{-i l2 z} v)`` is a standing wave whenever
``(u, v, l1, l2)`` solves the stationary system. The nonlinear part leaves
each modulus unchanged and is integrated exactly as a pointwise phase
rotation; the linear part is a Crank-Nicolson step on the radial
stiffness matrix. Both substeps conserve the discrete masses.

On real nonnegative fields ``beta |Psi| Phi`` and ``(beta/2) |Phi|^2 Psi / |Psi|``
reduce to ``beta Phi Psi`` and ``(beta/2) Phi^2``, the coupling terms of the
stationary system.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
import scipy.sparse as sparse
from scipy.sparse.linalg import splu
from tqdm import tqdm

from exceptions import ConfigurationError, UsageError
from functional import ProblemParams
from radial_grid import (RadialField, RadialGrid, StatePair, h1_distance, integrate_modulus_squared,
                         kinetic, state_h1_norm)

BLOW_UP_FACTOR = 1e3
GROWTH_FACTOR = 2.0
STABILITY_FACTOR = 10.0


@dataclass
class EvolutionTrace:
    """
    Recorded observables of one run.

    ``dist_to_ground`` compares the moduli with the reference state, which
    removes the phase orbit of the standing wave.
    """
    times: List[float] = field(default_factory=list)
    mass1: List[float] = field(default_factory=list)
    mass2: List[float] = field(default_factory=list)
    energy: List[float] = field(default_factory=list)
    dist_to_ground: List[float] = field(default_factory=list)
    kinetic: List[float] = field(default_factory=list)
    phase1: List[float] = field(default_factory=list)
    phase2: List[float] = field(default_factory=list)
    blown_up: bool = False
    final: Optional[StatePair] = field(default=None, repr=False)

    def growth(self) -> float:
        """Largest kinetic term relative to the initial one."""
        if not self.kinetic or self.kinetic[0] <= 0:
            return 0.0
        return float(max(self.kinetic) / self.kinetic[0])

    def max_distance(self) -> float:
        return float(max(self.dist_to_ground)) if self.dist_to_ground else 0.0

    def mass_drift(self) -> float:
        drifts = []
        for series in (self.mass1, self.mass2):
            if series and series[0] > 0:
                drifts.append(max(abs(m - series[0]) for m in series) / series[0])
        return float(max(drifts)) if drifts else 0.0

    def energy_drift(self) -> float:
        if not self.energy:
            return 0.0
        scale = abs(self.energy[0]) or 1.0
        return float(max(abs(e - self.energy[0]) for e in self.energy) / scale)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "t": self.times,
            "mass1": self.mass1,
            "mass2": self.mass2,
            "energy": self.energy,
            "dist": self.dist_to_ground,
            "kinetic": self.kinetic,
            "phase1": self.phase1,
            "phase2": self.phase2,
        })


def hamiltonian(phi: np.ndarray, psi: np.ndarray, grid: RadialGrid, p: ProblemParams) -> float:
    """Conserved energy of a complex pair; equals J on real nonnegative pairs."""
    w = grid.weights
    a2, b2 = np.abs(phi) ** 2, np.abs(psi) ** 2
    K = kinetic(RadialField(grid, phi)) + kinetic(RadialField(grid, psi))
    Q = float(np.dot(w, p.mu1 * a2 * a2 + p.mu2 * b2 * b2 + 2.0 * p.rho * a2 * b2))
    C = float(np.dot(w, a2 * np.sqrt(b2)))
    return 0.5 * K - 0.25 * Q - 0.5 * p.beta * C


def _nonlinear_rotation(phi: np.ndarray, psi: np.ndarray, p: ProblemParams,
                        tau: float) -> None:
    """In-place exact flow of the modulus-preserving nonlinear part over ``tau``."""
    a2 = np.abs(phi) ** 2
    b = np.abs(psi)
    b2 = b * b
    omega1 = p.mu1 * a2 + p.rho * b2 + p.beta * b
    coupling = np.zeros_like(b)
    nonzero = b > 0
    coupling[nonzero] = 0.5 * p.beta * a2[nonzero] / b[nonzero]
    omega2 = p.mu2 * b2 + p.rho * a2 + coupling
    phi *= np.exp(-1j * omega1 * tau)
    psi *= np.exp(-1j * omega2 * tau)


class CrankNicolson:
    """
    Linear propagator ``(W - i dt/2 K) x+ = (W + i dt/2 K) x`` on the free nodes.

    Args:
        grid: Radial grid; the last node stays at zero.
        dt: Time step.
    """

    def __init__(self, grid: RadialGrid, dt: float):
        free = grid.n - 1
        K = grid.stiffness[:free, :free].astype(complex)
        W = sparse.diags(grid.weights[:free].astype(complex))
        self._free = free
        self._explicit = (W + 0.5j * dt * K).tocsr()
        self._solver = splu((W - 0.5j * dt * K).tocsc())

    def __call__(self, values: np.ndarray) -> np.ndarray:
        out = np.zeros_like(values)
        out[:self._free] = self._solver.solve(self._explicit @ values[:self._free])
        return out


def _validate_initial(initial: StatePair, p: ProblemParams):
    if initial.grid.dimension != p.N:
        raise UsageError(f"Initial state lives in N={initial.grid.dimension}, parameters say {p.N}")


def evolve(initial: StatePair, p: ProblemParams, dt: float, t_end: float,
           reference: Optional[StatePair] = None, record_every: int = 10) -> EvolutionTrace:
    """
    Strang split-step integration up to ``t_end``.

    Args:
        initial: Initial pair (real or complex fields).
        p: Problem coefficients.
        dt: Time step.
        t_end: Final time.
        reference: Real profile used for the distance column; defaults to the
            modulus of ``initial``.
        record_every: Record observables every this many steps.

    Returns:
        EvolutionTrace; a run whose kinetic term exceeds ``1e3`` times its
        initial value stops early with ``blown_up`` set.
    """
    if not dt > 0:
        raise ConfigurationError(f"must be positive, got {dt}", key_path="evolution.dt")
    if not t_end > 0:
        raise ConfigurationError(f"must be positive, got {t_end}", key_path="evolution.t_end")
    if record_every < 1:
        raise ConfigurationError(f"must be >= 1, got {record_every}",
                                 key_path="evolution.record_every")
    _validate_initial(initial, p)
    grid = initial.grid
    reference = reference or initial.modulus()
    phi = np.array(initial.u.values, dtype=complex)
    psi = np.array(initial.v.values, dtype=complex)
    phi[-1] = psi[-1] = 0.0
    propagator = CrankNicolson(grid, dt)
    steps = int(round(t_end / dt))
    trace = EvolutionTrace()
    k0 = kinetic(RadialField(grid, phi)) + kinetic(RadialField(grid, psi))

    def record(t: float) -> float:
        u, v = RadialField(grid, phi), RadialField(grid, psi)
        k = kinetic(u) + kinetic(v)
        moduli = StatePair(RadialField(grid, np.abs(phi)), RadialField(grid, np.abs(psi)),
                           reference.b1, reference.b2)
        trace.times.append(t)
        trace.mass1.append(integrate_modulus_squared(u))
        trace.mass2.append(integrate_modulus_squared(v))
        trace.energy.append(hamiltonian(phi, psi, grid, p))
        trace.dist_to_ground.append(h1_distance(moduli, reference))
        trace.kinetic.append(k)
        trace.phase1.append(float(np.angle(phi[0])))
        trace.phase2.append(float(np.angle(psi[0])))
        return k

    record(0.0)
    for step in range(1, steps + 1):
        _nonlinear_rotation(phi, psi, p, 0.5 * dt)
        phi = propagator(phi)
        psi = propagator(psi)
        _nonlinear_rotation(phi, psi, p, 0.5 * dt)
        if step % record_every == 0 or step == steps:
            k = record(step * dt)
            if k0 > 0 and k > BLOW_UP_FACTOR * k0:
                trace.blown_up = True
                logging.warning(f"Kinetic term grew past {BLOW_UP_FACTOR:g}x at t={step * dt:.4g}")
                break
    trace.final = StatePair(RadialField(grid, phi), RadialField(grid, psi), initial.b1, initial.b2)
    logging.debug(f"Evolution to t={trace.times[-1]:.4g}: mass drift {trace.mass_drift():.2e}, "
                  f"energy drift {trace.energy_drift():.2e}")
    return trace


def unwrapped_phase_rate(trace: EvolutionTrace, component: int = 1) -> float:
    """Least-squares rate of the origin phase; ``-lambda_i`` for a standing wave."""
    phases = np.unwrap(np.asarray(trace.phase1 if component == 1 else trace.phase2))
    slope, _ = np.polyfit(np.asarray(trace.times), phases, 1)
    return float(slope)


def perturb(ground: StatePair, amplitude: float, seed: int) -> StatePair:
    """
    Smooth random complex perturbation with H^1 size ``amplitude ||ground||_{H^1}``.

    The perturbation is a sum of three complex Gaussian bumps per component
    with random centres and widths inside the support of the ground state.
    """
    if amplitude < 0:
        raise ConfigurationError(f"must be nonnegative, got {amplitude}",
                                 key_path="evolution.amplitude")
    grid = ground.grid
    if amplitude == 0:
        return StatePair(RadialField(grid, ground.u.values.astype(complex)),
                         RadialField(grid, ground.v.values.astype(complex)), ground.b1, ground.b2)
    rng = np.random.default_rng(seed)
    r = grid.nodes
    scale = 0.1 * grid.r_max
    bumps = []
    for comp, b in ((ground.u, ground.b1), (ground.v, ground.b2)):
        values = np.zeros(grid.n, dtype=complex)
        if b > 0:
            for _ in range(3):
                centre = rng.uniform(0.0, scale)
                width = rng.uniform(0.3, 1.0) * scale
                coefficient = rng.normal() + 1j * rng.normal()
                values += coefficient * np.exp(-((r - centre) / width) ** 2)
        values[-1] = 0.0
        bumps.append(values)
    delta = StatePair(RadialField(grid, bumps[0]), RadialField(grid, bumps[1]),
                      ground.b1, ground.b2)
    size = state_h1_norm(delta)
    factor = amplitude * state_h1_norm(ground) / size
    return StatePair(RadialField(grid, ground.u.values + factor * bumps[0]),
                     RadialField(grid, ground.v.values + factor * bumps[1]),
                     ground.b1, ground.b2)


@dataclass
class StabilityReport:
    """Outcome of a perturbation experiment around one computed state."""
    amplitude: float
    ground_h1: float
    sup_distances: List[float]
    growth: List[float]
    blown_up: List[bool]
    threshold: float
    stable: bool
    growth_flagged: bool
    traces: List[EvolutionTrace] = field(default_factory=list, repr=False)

    def to_dict(self) -> Dict[str, object]:
        return {
            "amplitude": self.amplitude,
            "ground_h1": self.ground_h1,
            "sup_distances": list(self.sup_distances),
            "growth": list(self.growth),
            "blown_up": list(self.blown_up),
            "threshold": self.threshold,
            "stable": self.stable,
            "growth_flagged": self.growth_flagged,
        }


def stability_experiment(ground: StatePair, p: ProblemParams, amplitude: float,
                         n_perturbations: int, t_end: float, dt: float, seed: int = 0,
                         threads: int = 1, record_every: int = 10) -> StabilityReport:
    """
    Evolve ``n_perturbations`` perturbed copies of ``ground`` and report the
    supremum distance of each run to the ground profile.

    The verdict is stable when every supremum stays below
    ``10 amplitude ||ground||_{H^1}`` (or below the standing-wave scheme
    error when ``amplitude`` is zero); growth is flagged when a run's kinetic
    term more than doubles.
    """
    if n_perturbations < 1:
        raise ConfigurationError(f"must be >= 1, got {n_perturbations}",
                                 key_path="evolution.n_perturbations")
    initials = [perturb(ground, amplitude, seed + k) for k in range(n_perturbations)]

    def run(initial: StatePair) -> EvolutionTrace:
        return evolve(initial, p, dt, t_end, reference=ground, record_every=record_every)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            traces = list(pool.map(run, initials))
    else:
        traces = [run(initial) for initial in tqdm(initials, desc="Perturbation runs")]

    ground_h1 = state_h1_norm(ground)
    sups = [trace.max_distance() for trace in traces]
    threshold = STABILITY_FACTOR * amplitude * ground_h1
    if amplitude == 0:
        threshold = max(sups) if sups else 0.0
    growth = [trace.growth() for trace in traces]
    report = StabilityReport(
        amplitude=amplitude,
        ground_h1=ground_h1,
        sup_distances=sups,
        growth=growth,
        blown_up=[trace.blown_up for trace in traces],
        threshold=threshold,
        stable=all(s <= threshold for s in sups) and not any(t.blown_up for t in traces),
        growth_flagged=any(g > GROWTH_FACTOR for g in growth),
        traces=traces,
    )
    logging.info(f"Stability experiment: amplitude={amplitude:g}, max sup distance="
                 f"{max(sups):.3e}, threshold={threshold:.3e}, stable={report.stable}")
    return report
