import numpy as np
import pytest

from conftest import gaussian_pair
from exceptions import DomainError, RegimeError, UsageError
from functional import ProblemParams, energy, energy_components
from profiles import bubble_params
from radial_grid import RadialField, StatePair, build_radial_grid, rescale_dilate
from thresholds import (CONDITION_RHS_3D, Regime, WindowMembership, admissible_beta,
                        check_3d_window_membership, classify_regime, condition_3d,
                        constant_A_bracket, h_curve, h_eval, monotonicity_ladder, solve_R0_R1,
                        threshold_coefficients, unbounded_fiber_witness, window_4d)


@pytest.fixture(scope="module")
def bubble():
    return bubble_params(1.0, 1.0, 0.5)


def _params(**changes):
    values = {"N": 2, "mu1": 1.0, "mu2": 1.0, "rho": 1.0, "beta": 0.5, "b1": 1.0, "b2": 1.0}
    values.update(changes)
    return ProblemParams(**values)


def test_admissible_beta_hits_requested_fraction(params3, constants):
    lhs, rhs = condition_3d(params3, constants)
    assert rhs == CONDITION_RHS_3D
    assert lhs / rhs == pytest.approx(0.5, rel=1e-12)


def test_admissible_beta_fraction_range(params3, constants):
    with pytest.raises(UsageError):
        admissible_beta(params3, constants, 1.0)
    with pytest.raises(DomainError):
        admissible_beta(_params(), constants)


def test_roots_bracket_the_hump(params3, constants):
    R0, R1 = solve_R0_R1(params3, constants)
    t_tilde = threshold_coefficients(params3, constants)["t_tilde"]
    assert 0 < R0 < t_tilde < R1
    scale = R1 ** 2
    assert abs(h_eval(R0, params3, constants)) < 1e-10 * scale
    assert abs(h_eval(R1, params3, constants)) < 1e-10 * scale
    assert h_eval(t_tilde, params3, constants) > 0


def test_condition_violation_raises(params3, constants):
    outside = params3.with_(beta=3.0 * params3.beta)
    with pytest.raises(RegimeError) as info:
        solve_R0_R1(outside, constants)
    assert info.value.details["condition_lhs"] > info.value.details["condition_rhs"]
    with pytest.raises(RegimeError):
        solve_R0_R1(params3.with_(beta=0.0), constants)


def test_three_dimensional_regimes(params3, constants):
    report = classify_regime(params3, constants)
    assert report.regime is Regime.TWO_SOLUTION_3D
    assert report.R0 < report.R1
    assert classify_regime(params3.with_(beta=-params3.beta), constants).regime \
        is Regime.OUTSIDE_3D_WINDOW
    assert classify_regime(params3.with_(beta=3.0 * params3.beta), constants).regime \
        is Regime.OUTSIDE_3D_WINDOW
    assert report.to_dict()["regime"] == "two_solution_3d"


def test_one_dimensional_regime_is_coercive(constants):
    report = classify_regime(_params(N=1), constants)
    assert report.regime is Regime.COERCIVE_1D
    assert classify_regime(_params(N=1, beta=-1.0), constants).notes


def test_two_dimensional_regimes(constants):
    assert classify_regime(_params(), constants).regime is Regime.COERCIVE_2D
    assert classify_regime(_params(b1=3.0, b2=3.0), constants).regime is Regime.UNBOUNDED_2D
    report = classify_regime(_params(b1=1.0, b2=0.5, mu2=2.0, rho=0.5), constants)
    assert report.A_lower <= report.A_upper


def test_constant_A_bracket_for_equal_components(constants):
    lower, upper = constant_A_bracket(_params(), constants)
    # with equal masses and couplings both ends are ||Q||^2 / (2 (mu + rho) b^2)
    assert lower == pytest.approx(constants.q_mass_sq / 4.0)
    assert upper == pytest.approx(lower)


def test_four_dimensional_window(constants, bubble):
    p = ProblemParams(N=4, mu1=1.0, mu2=1.0, rho=0.5, beta=0.01, b1=0.5, b2=0.5)
    window = window_4d(p, constants, bubble)
    assert window["satisfied"]
    assert window["upper"] == pytest.approx(bubble.least_energy())
    assert classify_regime(p, constants, bubble).regime is Regime.CRITICAL_4D_OK
    assert classify_regime(p.with_(beta=-0.01), constants, bubble).regime \
        is Regime.NONEXISTENCE_BETA_NEGATIVE
    large = 2.0 * 3.0 / (constants.C(4, 3) ** 3 * p.b2)
    assert classify_regime(p.with_(beta=large), constants, bubble).regime \
        is Regime.OUTSIDE_4D_WINDOW


def test_four_dimensional_band_is_outside(constants):
    p = ProblemParams(N=4, mu1=1.0, mu2=2.0, rho=1.5, beta=0.01, b1=0.5, b2=0.5)
    report = classify_regime(p, constants)
    assert report.regime is Regime.OUTSIDE_4D_WINDOW
    assert report.notes


def test_window_membership_by_kinetic_norm(state3, params3, constants):
    R0, R1 = solve_R0_R1(params3, constants)
    K, _, _ = energy_components(state3, params3)
    for target, expected in ((0.5 * R0, WindowMembership.INSIDE_BALL),
                             (0.5 * (R0 + R1), WindowMembership.ANNULUS),
                             (2.0 * R1, WindowMembership.OUTSIDE)):
        t = np.log(target / np.sqrt(K))
        moved = rescale_dilate(state3, t)
        assert check_3d_window_membership(moved, params3, constants) is expected


def test_h_curve_frame(params3, constants):
    frame = h_curve(params3, constants, [0.0, 0.1, 0.2])
    assert list(frame.columns) == ["t", "h"]
    assert frame["h"].iloc[0] == 0.0


def test_monotonicity_ladder(params3, constants):
    ladder = [(0.3, 0.3), (0.4, 0.4), (0.5, 0.5)]
    result = monotonicity_ladder(params3, constants, ladder)
    assert result["R0_increasing"] and result["R1_decreasing"]
    assert [row["b1"] for row in result["rows"]] == [0.3, 0.4, 0.5]


def test_unbounded_fiber_witness():
    grid = build_radial_grid(2, 10.0, 1024)
    p = _params(b1=3.0, b2=3.0)
    heavy = unbounded_fiber_witness(p, gaussian_pair(grid, 3.0, 3.0, widths=(1.0, 1.0)))
    assert heavy["unbounded"] and heavy["decreasing"]
    assert heavy["quartic_over_kinetic"] > 2.0
    light = unbounded_fiber_witness(p.with_(b1=1.0, b2=1.0),
                                    gaussian_pair(grid, 1.0, 1.0, widths=(1.0, 1.0)))
    assert not light["unbounded"]
    assert light["t_reached"] is None


def _gaussian_mixture(grid, rng):
    r = grid.nodes
    values = np.zeros(grid.n)
    for _ in range(rng.integers(1, 4)):
        center = rng.uniform(0.0, 3.0)
        width = rng.uniform(0.5, 2.0)
        values += rng.uniform(0.2, 1.0) * np.exp(-((r - center) / width) ** 2)
    values[-1] = 0.0
    return RadialField(grid, values)


@pytest.mark.parametrize("seed", range(8))
def test_h_lower_bounds_energy(grid3, params3, constants, seed):
    rng = np.random.default_rng(seed)
    state = StatePair(_gaussian_mixture(grid3, rng), _gaussian_mixture(grid3, rng),
                      params3.b1, params3.b2).normalized()
    state = rescale_dilate(state, rng.uniform(-1.0, 1.0))
    K, _, _ = energy_components(state, params3)
    assert energy(state, params3) >= h_eval(np.sqrt(K), params3, constants)
