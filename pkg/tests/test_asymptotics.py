import numpy as np
import pytest

from asymptotics import (beta_limit_experiment, bubble_fit, bubble_limit_experiment,
                         collapse_experiment, collapse_ray_masses, collapse_scaling,
                         cutoff_bubble_estimates, explicit_energy, explicit_quadratic_state,
                         fit_slope, quadratic_profile, refined_energy_bound_check,
                         window_witness_4d)
from exceptions import DomainError, UsageError
from functional import Diagnostics, ProblemParams, energy, system_residual
from profiles import aubin_talenti, bubble_params
from radial_grid import (RadialField, StatePair, build_radial_grid, integrate_modulus_squared,
                         kinetic)
from solver import Branch, SolveConfig, SolveResult


def _quadratic_params(b1, b2, beta=1.0):
    return ProblemParams(N=3, mu1=0.0, mu2=0.0, rho=0.0, beta=beta, b1=b1, b2=b2)


def test_rates_coincide_on_collapse_ray():
    b1, b2 = collapse_ray_masses(0.8)
    scaling = collapse_scaling(_quadratic_params(b1, b2), 10.0)
    assert scaling.theta_ratio == pytest.approx(1.0, rel=1e-12)
    assert scaling.lambda1_ref == pytest.approx(scaling.theta1 ** 2, rel=1e-12)
    assert scaling.lambda2_ref == pytest.approx(scaling.theta2 ** 2, rel=1e-12)


def test_rates_scale_with_masses():
    w2 = 10.0
    small = collapse_scaling(_quadratic_params(*collapse_ray_masses(0.5)), w2)
    large = collapse_scaling(_quadratic_params(*collapse_ray_masses(1.0)), w2)
    # theta grows like b1^2 along the ray
    assert large.theta1 / small.theta1 == pytest.approx(4.0, rel=1e-12)


def test_collapse_scaling_guards():
    with pytest.raises(DomainError):
        collapse_scaling(ProblemParams(N=2, mu1=0.0, mu2=0.0, rho=0.0, beta=1.0,
                                       b1=1.0, b2=1.0), 10.0)
    with pytest.raises(UsageError):
        collapse_scaling(_quadratic_params(1.0, 0.0), 10.0)


def test_explicit_quadratic_state_solves_limit_system():
    w = quadratic_profile()
    p = _quadratic_params(*collapse_ray_masses(0.6), beta=1.5)
    state, scaling = explicit_quadratic_state(p, w)
    assert max(state.mass_errors()) < 1e-10
    assert system_residual(state, p, scaling.lambda1_ref, scaling.lambda2_ref) < 1e-6
    expected = explicit_energy(p, integrate_modulus_squared(w), kinetic(w))
    assert energy(state, p) == pytest.approx(expected, rel=1e-3)
    assert energy(state, p) < 0


def test_refined_bound_check_uses_converged_energy(state3, params3, constants):
    bound = explicit_energy(params3, constants.w_mass_sq, constants.w_kinetic)
    diagnostics = Diagnostics(energy=bound - 1.0, kinetic=1.0, quartic=1.0, cubic_coupling=1.0,
                              pohozaev=0.0, lambda1=1.0, lambda2=1.0, grad_norm=0.0,
                              fiber_second=1.0)
    result = SolveResult(state=state3, diagnostics=diagnostics, converged=True, iterations=1,
                         branch=Branch.GROUND_PLUS)
    report = refined_energy_bound_check(params3, result, constants)
    assert report["satisfied"]
    assert report["margin"] == pytest.approx(1.0)
    result.converged = False
    assert not refined_energy_bound_check(params3, result, constants)["satisfied"]


def test_fit_slope_recovers_power_law():
    x = [0.1, 0.2, 0.4, 0.8]
    slope, residual = fit_slope(x, [3.0 * v ** 2 for v in x])
    assert slope == pytest.approx(2.0, rel=1e-12)
    assert residual < 1e-12
    slope, _ = fit_slope(x, [-5.0 * v ** 6 for v in x])
    assert slope == pytest.approx(6.0, rel=1e-12)


def test_bubble_fit_on_exact_pair():
    grid = build_radial_grid(4, 40.0, 4096, "graded")
    bubble = bubble_params(1.0, 1.0, 0.5, grid=grid)
    U = aubin_talenti(0.5, grid).values
    state = StatePair(RadialField(grid, np.sqrt(bubble.k1) * U),
                      RadialField(grid, np.sqrt(bubble.k2) * U), 1.0, 1.0)
    fit = bubble_fit(state, bubble)
    assert fit["eps0"] == pytest.approx(0.5, rel=1e-4)
    assert fit["sigma1"] == pytest.approx(1.0, rel=1e-4)
    assert fit["d12_error"] < 1e-3


def test_cutoff_estimates_follow_expected_rates():
    result = cutoff_bubble_estimates([0.2, 0.1, 0.05, 0.02])
    assert result["verdicts"]["gradient_slope_2"]
    assert result["verdicts"]["cubic_slope_1"]
    assert result["verdicts"]["quartic_faster"]
    assert [row["eps"] for row in result["rows"]] == [0.2, 0.1, 0.05, 0.02]
    assert result["S_squared"] == pytest.approx(32.0 * np.pi ** 2 / 3.0)


@pytest.mark.parametrize("ladder", [[0.6, 0.1], [0.0, 0.1], [0.1]])
def test_cutoff_ladder_validation(ladder):
    with pytest.raises(UsageError):
        cutoff_bubble_estimates(ladder)


def test_cutoff_grid_must_be_four_dimensional():
    with pytest.raises(UsageError):
        cutoff_bubble_estimates([0.2, 0.1], grid=build_radial_grid(3, 4.0, 256))


def test_cutoff_grid_sums_agree_with_quadrature():
    grid = build_radial_grid(4, 4.0, 8192, "graded")
    exact = cutoff_bubble_estimates([0.2, 0.1])
    sampled = cutoff_bubble_estimates([0.2, 0.1], grid=grid)
    for a, b in zip(exact["rows"], sampled["rows"]):
        assert b["gradient"] == pytest.approx(a["gradient"], rel=1e-3)
        assert b["quartic"] == pytest.approx(a["quartic"], rel=1e-3)


def test_window_witness_below_bubble_energy():
    bubble = bubble_params(1.0, 1.0, 0.5)
    p = ProblemParams(N=4, mu1=1.0, mu2=1.0, rho=0.5, beta=0.1, b1=0.5, b2=0.5)
    witness = window_witness_4d(p, [0.1, 0.05, 0.02], bubble)
    assert witness["bound"] == pytest.approx(bubble.least_energy())
    assert witness["witness"]
    assert all(row["fiber_max"] > 0 for row in witness["rows"])


def test_window_witness_needs_four_dimensions(params3):
    with pytest.raises(DomainError):
        window_witness_4d(params3, [0.1])


def test_ladder_guards(params3, constants):
    cfg = SolveConfig()
    with pytest.raises(UsageError):
        collapse_experiment(params3, [(0.3, 0.3), (0.4, 0.4)], cfg, constants)
    with pytest.raises(DomainError):
        collapse_experiment(params3.with_(N=2), [(0.4, 0.4), (0.3, 0.3)], cfg, constants)
    with pytest.raises(DomainError):
        bubble_limit_experiment(params3, [(0.4, 0.4), (0.3, 0.3)], cfg, constants)
    with pytest.raises(UsageError):
        beta_limit_experiment(params3, [0.1, 0.2], cfg, constants)
    with pytest.raises(UsageError):
        beta_limit_experiment(params3, [0.2, 0.0], cfg, constants)
