"""
Closed-form regime classification.

Everything here is evaluated from the problem coefficients and the computed
best constants; no PDE is solved. The three-dimensional window is governed by

    h(t) = t^2/2 - (D1 + D2 + rho D3) t^3 / 4 - |beta| D4 t^{3/2} / 2,

a lower envelope of the energy in terms of the kinetic norm ``t``.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.optimize import brentq

from exceptions import DomainError, RegimeError, UsageError
from functional import FiberProfile, ProblemParams, energy, energy_components
from profiles import BubbleParams, ConstantsTable
from radial_grid import StatePair

CONDITION_RHS_3D = 2.0 * np.sqrt(6.0) / 3.0


class Regime(str, Enum):
    COERCIVE_1D = "coercive_1d"
    COERCIVE_2D = "coercive_2d"
    UNBOUNDED_2D = "unbounded_2d"
    INDETERMINATE_2D = "indeterminate_2d"
    TWO_SOLUTION_3D = "two_solution_3d"
    OUTSIDE_3D_WINDOW = "outside_3d_window"
    CRITICAL_4D_OK = "critical_4d_ok"
    OUTSIDE_4D_WINDOW = "outside_4d_window"
    NONEXISTENCE_BETA_NEGATIVE = "nonexistence_beta_negative"


class WindowMembership(str, Enum):
    INSIDE_BALL = "inside_ball"
    ANNULUS = "annulus"
    OUTSIDE = "outside"


@dataclass
class ThresholdReport:
    """
    Regime verdict with the numbers it rests on.

    Args:
        regime: Classified regime.
        R0: Lower root of ``h`` (3D window only).
        R1: Upper root of ``h``.
        condition_lhs: Left side of the governing inequality.
        condition_rhs: Right side of the governing inequality.
        A_lower: Lower end of the 2D bracket for A.
        A_upper: Upper end of the 2D bracket for A.
        notes: Free-text remarks.
        constants: Constants used, embedded for auditability.
    """
    regime: Regime
    R0: Optional[float] = None
    R1: Optional[float] = None
    condition_lhs: Optional[float] = None
    condition_rhs: Optional[float] = None
    A_lower: Optional[float] = None
    A_upper: Optional[float] = None
    notes: List[str] = field(default_factory=list)
    constants: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, object]:
        return {
            "regime": self.regime.value,
            "R0": self.R0,
            "R1": self.R1,
            "condition_lhs": self.condition_lhs,
            "condition_rhs": self.condition_rhs,
            "A_lower": self.A_lower,
            "A_upper": self.A_upper,
            "notes": "; ".join(self.notes),
            "constants": dict(self.constants),
        }


def _require_dimension(p: ProblemParams, N: int, what: str):
    if p.N != N:
        raise DomainError(f"{what} is defined for N={N}, got N={p.N}")


def threshold_coefficients(p: ProblemParams, c: ConstantsTable) -> Dict[str, float]:
    """The D coefficients of ``h``, their sum ``D`` and the maximizer ``t~ = 2/(3D)``."""
    C34 = c.C(3, 4) ** 4
    C33 = c.C(3, 3) ** 3
    D1 = p.mu1 * C34 * p.b1
    D2 = p.mu2 * C34 * p.b2
    D3 = C34 * np.sqrt(p.b1 * p.b2)
    D4 = (2.0 / 3.0 * p.b1 ** 1.5 + 1.0 / 3.0 * p.b2 ** 1.5) * C33
    D = D1 + D2 + p.rho * D3
    return {"D1": D1, "D2": D2, "D3": D3, "D4": D4, "D": D, "t_tilde": 2.0 / (3.0 * D)}


def h_eval(t: float, p: ProblemParams, c: ConstantsTable) -> float:
    _require_dimension(p, 3, "h")
    d = threshold_coefficients(p, c)
    t = np.asarray(t, dtype=float)
    value = 0.5 * t ** 2 - 0.25 * d["D"] * t ** 3 - 0.5 * abs(p.beta) * d["D4"] * t ** 1.5
    return float(value) if value.ndim == 0 else value


def condition_3d(p: ProblemParams, c: ConstantsTable) -> Tuple[float, float]:
    """
    Left and right side of the three-dimensional smallness condition.

    ``h`` has a positive hump iff ``|beta| D4 sqrt(D) < 2 sqrt(6)/9``; the
    left side is reported multiplied by 3 against ``2 sqrt(6)/3``.
    """
    d = threshold_coefficients(p, c)
    return 3.0 * abs(p.beta) * d["D4"] * np.sqrt(d["D"]), CONDITION_RHS_3D


def admissible_beta(p: ProblemParams, c: ConstantsTable, fraction: float = 0.5) -> float:
    """The positive beta at which the condition's left side is ``fraction`` of its right side."""
    _require_dimension(p, 3, "admissible beta")
    if not 0 < fraction < 1:
        raise UsageError(f"fraction must lie in (0, 1), got {fraction}")
    lhs_unit, rhs = condition_3d(p.with_(beta=1.0), c)
    return float(fraction * rhs / lhs_unit)


def solve_R0_R1(p: ProblemParams, c: ConstantsTable) -> Tuple[float, float]:
    """
    The two positive zeros of ``h`` around its interior maximum.

    Raises:
        RegimeError: If the smallness condition fails or ``beta = 0``.
    """
    _require_dimension(p, 3, "R0/R1")
    lhs, rhs = condition_3d(p, c)
    if lhs >= rhs:
        raise RegimeError("Three-dimensional smallness condition violated",
                          details={"condition_lhs": lhs, "condition_rhs": rhs})
    if p.beta == 0:
        raise RegimeError("beta = 0 has no positive lower root R0",
                          details={"condition_lhs": lhs, "condition_rhs": rhs})
    d = threshold_coefficients(p, c)
    D, D4, beta = d["D"], d["D4"], abs(p.beta)

    def phi(t):
        return 0.5 * np.sqrt(t) - 0.25 * D * t ** 1.5 - 0.5 * beta * D4

    t_tilde = d["t_tilde"]
    lo = t_tilde
    while phi(lo) >= 0:
        lo *= 0.1
    hi = t_tilde
    while phi(hi) >= 0:
        hi *= 2.0
    tol = 4 * np.finfo(float).eps
    R0 = brentq(phi, lo, t_tilde, xtol=1e-300, rtol=tol, maxiter=500)
    R1 = brentq(phi, t_tilde, hi, xtol=1e-300, rtol=tol, maxiter=500)
    return float(R0), float(R1)


def _constants_snapshot(c: ConstantsTable) -> Dict[str, float]:
    snapshot = {f"C_{N}_{p}": value for (N, p), value in sorted(c.gn.items())}
    snapshot.update({"S": c.sobolev_S, "q_mass_sq": c.q_mass_sq, "w_mass_sq": c.w_mass_sq})
    return snapshot


def constant_A_bracket(p: ProblemParams, c: ConstantsTable) -> Tuple[float, float]:
    """Closed-form lower and upper bounds on ``A = inf K/Q`` over the product sphere."""
    _require_dimension(p, 2, "A bracket")
    b1s, b2s = p.b1 ** 2, p.b2 ** 2
    lower = c.q_mass_sq / (2.0 * max((p.mu1 + p.rho) * b1s, (p.mu2 + p.rho) * b2s))
    upper = 0.5 * (b1s + b2s) * c.q_mass_sq / (p.mu1 * b1s ** 2 + p.mu2 * b2s ** 2
                                               + 2.0 * p.rho * b1s * b2s)
    return float(lower), float(upper)


def window_4d(p: ProblemParams, c: ConstantsTable, bubble: BubbleParams
              ) -> Dict[str, object]:
    """
    Four-dimensional energy window ``(0, (k1 + k2) S^2 / 4)`` and the mass
    conditions ``beta b1 < 3 / (2 C^3)`` and ``beta b2 < 3 / C^3`` with ``C = C_{4,3}``.

    The governing left side is reported as ``max(2 beta C^3 b1 / 3, beta C^3 b2 / 3)``
    against 1.
    """
    _require_dimension(p, 4, "4D window")
    C43 = c.C(4, 3) ** 3
    first = 2.0 * p.beta * C43 * p.b1 / 3.0
    second = p.beta * C43 * p.b2 / 3.0
    lhs = max(first, second)
    return {"lower": 0.0, "upper": bubble.least_energy(), "condition_lhs": lhs,
            "condition_rhs": 1.0, "first_condition": first, "second_condition": second,
            "satisfied": bool(p.beta > 0 and lhs < 1.0), "k1": bubble.k1, "k2": bubble.k2}


def classify_regime(p: ProblemParams, c: ConstantsTable,
                    bubble: Optional[BubbleParams] = None) -> ThresholdReport:
    """Classify the parameters into the regime the theory predicts."""
    report = ThresholdReport(regime=Regime.COERCIVE_1D, constants=_constants_snapshot(c))
    if p.N == 1:
        report.notes.append("energy bounded below on the product sphere; minimum attained for beta > 0")
        if p.beta <= 0:
            report.notes.append("attainment for beta <= 0 is not covered")
        return report

    if p.N == 2:
        lower, upper = constant_A_bracket(p, c)
        report.A_lower, report.A_upper = lower, upper
        report.condition_lhs, report.condition_rhs = lower, 0.5
        if lower > 0.5:
            report.regime = Regime.COERCIVE_2D
            if p.beta < 0:
                report.notes.append("beta < 0: no positive solutions in the coercive band")
            if p.b2 > np.sqrt(c.q_mass_sq):
                report.notes.append("attainment needs b2 <= ||Q||")
        elif upper < 0.5:
            report.regime = Regime.UNBOUNDED_2D
            report.condition_lhs = upper
            report.notes.append("energy unbounded below along dilations")
        else:
            report.regime = Regime.INDETERMINATE_2D
            report.notes.append(f"A bracket [{lower:.6g}, {upper:.6g}] straddles 1/2")
        return report

    if p.N == 3:
        lhs, rhs = condition_3d(p, c)
        report.condition_lhs, report.condition_rhs = lhs, rhs
        if p.beta <= 0:
            report.regime = Regime.OUTSIDE_3D_WINDOW
            report.notes.append("two-solution window requires beta > 0")
            return report
        if lhs < rhs:
            report.regime = Regime.TWO_SOLUTION_3D
            report.R0, report.R1 = solve_R0_R1(p, c)
        else:
            report.regime = Regime.OUTSIDE_3D_WINDOW
            report.notes.append("h has no positive hump")
        return report

    if p.beta < 0:
        report.regime = Regime.NONEXISTENCE_BETA_NEGATIVE
        report.notes.append("beta < 0 in N >= 4: no positive (radial nontrivial) solution")
        return report
    if bubble is None:
        from profiles import bubble_params
        try:
            bubble = bubble_params(p.mu1, p.mu2, p.rho)
        except RegimeError as e:
            report.regime = Regime.OUTSIDE_4D_WINDOW
            report.notes.append(str(e))
            return report
    window = window_4d(p, c, bubble)
    report.condition_lhs = window["condition_lhs"]
    report.condition_rhs = window["condition_rhs"]
    report.regime = Regime.CRITICAL_4D_OK if window["satisfied"] else Regime.OUTSIDE_4D_WINDOW
    if p.beta == 0:
        report.notes.append("beta = 0 gives no positive level below the bubble energy")
    return report


def check_3d_window_membership(s: StatePair, p: ProblemParams, c: ConstantsTable
                               ) -> WindowMembership:
    R0, R1 = solve_R0_R1(p, c)
    K, _, _ = energy_components(s, p)
    t = np.sqrt(K)
    if t < R0:
        return WindowMembership.INSIDE_BALL
    if t <= R1:
        return WindowMembership.ANNULUS
    return WindowMembership.OUTSIDE


def h_curve(p: ProblemParams, c: ConstantsTable, t_values: Sequence[float]) -> pd.DataFrame:
    t_values = np.asarray(t_values, dtype=float)
    return pd.DataFrame({"t": t_values, "h": h_eval(t_values, p, c)})


def monotonicity_ladder(p: ProblemParams, c: ConstantsTable,
                        ladder: Sequence[Tuple[float, float]]) -> Dict[str, object]:
    """R0 and R1 along an increasing mass ladder with strict-monotonicity verdicts."""
    rows = []
    for b1, b2 in ladder:
        R0, R1 = solve_R0_R1(p.with_(b1=b1, b2=b2), c)
        rows.append({"b1": b1, "b2": b2, "R0": R0, "R1": R1})
    R0s = np.array([row["R0"] for row in rows])
    R1s = np.array([row["R1"] for row in rows])
    return {
        "rows": rows,
        "R0_increasing": bool(np.all(np.diff(R0s) > 0)),
        "R1_decreasing": bool(np.all(np.diff(R1s) < 0)),
    }


def unbounded_fiber_witness(p: ProblemParams, state: StatePair, t_limit: float = 60.0
                            ) -> Dict[str, object]:
    """
    Follow ``J(t * s)`` with the quadratic coupling switched off until it
    falls below ``-10 |J(s)|``.
    """
    _require_dimension(p, 2, "unbounded fiber witness")
    params = p.with_(beta=0.0)
    K, Q, _ = energy_components(state, params)
    profile = FiberProfile(N=2, beta=0.0, kinetic=K, quartic=Q, cubic=0.0)
    initial = float(energy(state, params))
    target = -10.0 * abs(initial) if initial != 0 else -1.0
    ts = np.linspace(0.0, t_limit, 601)
    values = profile.value(ts)
    below = np.nonzero(values < target)[0]
    reached = float(ts[below[0]]) if below.size else None
    logging.info(f"Fiber witness: quartic/kinetic={Q / K:.4f}, reached target at t={reached}")
    return {
        "initial_energy": initial,
        "target": target,
        "quartic_over_kinetic": Q / K,
        "t_reached": reached,
        "decreasing": bool(np.all(np.diff(values) < 0)),
        "unbounded": reached is not None,
    }
