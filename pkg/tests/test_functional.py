import numpy as np
import pytest

from conftest import gaussian_pair
from exceptions import ConfigurationError, DomainError, StructureError, UsageError
from functional import (FiberProfile, ProblemParams, classify_fiber_roots, diagnose, energy,
                        energy_components, fiber_critical_points, fiber_critical_points_of,
                        fiber_map, gradient, multiplier_identity_residual,
                        pohozaev, project_tangent, system_residual)
from profiles import solve_scalar_ground_state
from radial_grid import (RadialField, StatePair, build_radial_grid, dilate,
                         integrate_modulus_squared, rescale_dilate)


def _random_state(grid, rng, b1, b2):
    r = grid.nodes
    fields = []
    for _ in range(2):
        width = rng.uniform(0.6, 2.0)
        tilt = rng.uniform(-0.3, 0.3)
        values = (1.0 + tilt * r) * np.exp(-(r / width) ** 2)
        values[-1] = 0.0
        fields.append(RadialField(grid, values))
    return StatePair(fields[0], fields[1], b1, b2).normalized()


def _random_direction(grid, rng):
    r = grid.nodes
    values = rng.uniform(-1.0, 1.0) * np.exp(-(r / rng.uniform(0.5, 2.0)) ** 2) * np.cos(r)
    values[-1] = 0.0
    return values


def test_gradient_matches_central_differences(grid3, params3):
    rng = np.random.default_rng(7)
    eps = 1e-6
    for _ in range(20):
        state = _random_state(grid3, rng, params3.b1, params3.b2)
        phi, psi = _random_direction(grid3, rng), _random_direction(grid3, rng)
        g_u, g_v = gradient(state, params3)
        w = grid3.weights
        analytic = float(np.dot(w, g_u.values * phi) + np.dot(w, g_v.values * psi))
        plus = state.with_values(state.u.values + eps * phi, state.v.values + eps * psi)
        minus = state.with_values(state.u.values - eps * phi, state.v.values - eps * psi)
        numeric = (energy(plus, params3) - energy(minus, params3)) / (2 * eps)
        assert numeric == pytest.approx(analytic, rel=1e-5, abs=1e-9)


def test_pohozaev_is_fiber_derivative(state3, params3):
    profile = FiberProfile.from_state(state3, params3)
    assert profile.first(0.0) == pytest.approx(pohozaev(state3, params3), rel=1e-12)
    h = 1e-5
    numeric = (energy(rescale_dilate(state3, h), params3)
               - energy(rescale_dilate(state3, -h), params3)) / (2 * h)
    assert numeric == pytest.approx(pohozaev(state3, params3), rel=1e-6)


@pytest.mark.parametrize("t", [-1.0, -0.3, 0.5, 1.0])
def test_fiber_map_matches_rescaled_energy(state3, params3, t):
    assert energy(rescale_dilate(state3, t), params3) == pytest.approx(
        fiber_map(state3, params3, t), rel=1e-10)


@pytest.fixture(scope="module")
def fine_state3():
    return gaussian_pair(build_radial_grid(3, 8.0, 32768), 0.5, 0.5)


@pytest.mark.parametrize("t", [-0.5, 0.25, 0.5, 1.0])
def test_fiber_map_matches_resampled_dilation(fine_state3, params3, t):
    moved = dilate(fine_state3, t)
    K, Q, C = energy_components(moved, params3)
    scale = 0.5 * K + 0.25 * Q + 0.5 * abs(params3.beta) * C
    assert abs(fiber_map(fine_state3, params3, t) - energy(moved, params3)) < 1e-6 * scale


def test_fiber_map_at_zero_is_energy(state3, params3):
    assert fiber_map(state3, params3, 0.0) == pytest.approx(energy(state3, params3), rel=1e-14)


def test_three_dimensional_fiber_has_minimum_then_maximum():
    minima, maxima = classify_fiber_roots(FiberProfile(N=3, beta=0.1, kinetic=1.0,
                                                       quartic=1.0, cubic=1.0))
    assert len(minima) == 1 and len(maxima) == 1
    assert minima[0] < maxima[0]


def test_four_dimensional_fiber_has_single_maximum():
    profile = FiberProfile(N=4, beta=1.0, kinetic=2.0, quartic=1.0, cubic=1.0)
    minima, maxima = classify_fiber_roots(profile)
    assert minima == [] and len(maxima) == 1
    # Psi' = e^{2t}(K - beta C) - Q e^{4t}
    assert maxima[0] == pytest.approx(0.0, abs=1e-10)


def test_two_dimensional_fiber_without_maximum_raises():
    profile = FiberProfile(N=2, beta=1.0, kinetic=1.0, quartic=1.0, cubic=1.0)
    minima, maxima = classify_fiber_roots(profile)
    assert len(minima) == 1 and maxima == []
    with pytest.raises(StructureError) as info:
        fiber_critical_points_of(profile)
    assert info.value.exit_code == 2
    assert "psi" in info.value.details


def test_fiber_critical_points_shift_under_dilation():
    K, Q, C, t0 = 1.0, 1.0, 1.0, 0.37
    base = fiber_critical_points_of(FiberProfile(3, 0.1, K, Q, C))
    moved = fiber_critical_points_of(FiberProfile(3, 0.1, K * np.exp(2 * t0),
                                                  Q * np.exp(3 * t0), C * np.exp(1.5 * t0)))
    assert moved.s == pytest.approx(base.s - t0, abs=1e-6)
    assert moved.t == pytest.approx(base.t - t0, abs=1e-6)
    assert base.zeros is not None
    assert base.zeros[0] < base.t


def test_fiber_projections_land_on_pohozaev_branches(state3, params3):
    points = fiber_critical_points(state3, params3)
    assert points.s is not None and points.s < points.t
    lower = rescale_dilate(state3, points.s)
    upper = rescale_dilate(state3, points.t)
    for projected, sign in ((lower, 1.0), (upper, -1.0)):
        d = diagnose(projected, params3)
        assert abs(d.pohozaev) < 1e-6 * d.kinetic
        assert sign * d.fiber_second > 0


def test_energy_components_and_diagnose_agree(state3, params3):
    K, Q, C = energy_components(state3, params3)
    d = diagnose(state3, params3)
    assert d.energy == pytest.approx(energy(state3, params3), rel=1e-14)
    assert d.pohozaev == pytest.approx(pohozaev(state3, params3), rel=1e-14)
    assert (d.kinetic, d.quartic, d.cubic_coupling) == (K, Q, C)
    assert d.mass_error1 < 1e-12 and d.mass_error2 < 1e-12
    assert set(d.to_dict()) >= {"energy", "pohozaev", "lambda1", "lambda2", "grad_norm"}


def test_tangent_is_orthogonal_to_components(state3, params3):
    (t_u, t_v), (l1, l2) = project_tangent(state3, gradient(state3, params3))
    w = state3.grid.weights
    assert abs(np.dot(w, t_u.values * state3.u.values)) < 1e-12
    assert abs(np.dot(w, t_v.values * state3.v.values)) < 1e-12
    assert np.isfinite(l1) and np.isfinite(l2)


def test_inactive_component_gets_zero_multiplier(grid3):
    p = ProblemParams(N=3, mu1=1.0, mu2=1.0, rho=1.0, beta=0.5, b1=0.5, b2=0.0)
    state = gaussian_pair(grid3, 0.5, 0.0)
    _, (_, l2) = project_tangent(state, gradient(state, p))
    assert l2 == 0.0


def test_ground_state_solves_system_with_unit_multiplier():
    grid = build_radial_grid(2, 30.0, 2048)
    q = solve_scalar_ground_state(2, 3, grid)
    b1 = float(np.sqrt(integrate_modulus_squared(q)))
    p = ProblemParams(N=2, mu1=1.0, mu2=1.0, rho=0.0, beta=0.0, b1=b1, b2=0.0)
    state = StatePair(q, RadialField.zeros(grid), b1, 0.0)
    assert system_residual(state, p, 1.0, 0.0) < 1e-6
    assert multiplier_identity_residual(state, p, 1.0, 0.0) < 1e-3 * b1 ** 2


def test_multiplier_identity_only_for_two_and_three_dimensions():
    grid = build_radial_grid(4, 10.0, 256)
    p = ProblemParams(N=4, mu1=1.0, mu2=1.0, rho=0.5, beta=0.1, b1=0.5, b2=0.5)
    with pytest.raises(DomainError):
        multiplier_identity_residual(gaussian_pair(grid, 0.5, 0.5), p, 1.0, 1.0)


def test_dimension_mismatch_is_rejected(state3):
    p = ProblemParams(N=2, mu1=1.0, mu2=1.0, rho=0.5, beta=0.1, b1=0.5, b2=0.5)
    with pytest.raises(UsageError):
        energy(state3, p)


@pytest.mark.parametrize("changes, key", [
    ({"N": 5}, "problem.N"),
    ({"mu1": -1.0}, "problem.mu1"),
    ({"rho": float("nan")}, "problem.rho"),
    ({"beta": float("inf")}, "problem.beta"),
    ({"b2": -0.1}, "problem.b2"),
    ({"b1": 0.0, "b2": 0.0}, "problem.b1"),
])
def test_invalid_parameters_name_the_key(changes, key):
    values = {"N": 3, "mu1": 1.0, "mu2": 1.0, "rho": 1.0, "beta": 0.1, "b1": 0.5, "b2": 0.5}
    values.update(changes)
    with pytest.raises(ConfigurationError) as info:
        ProblemParams(**values)
    assert info.value.key_path == key


def test_zero_couplings_are_accepted():
    p = ProblemParams(N=3, mu1=0.0, mu2=0.0, rho=0.0, beta=1.0, b1=1.0, b2=1.0)
    assert p.with_(beta=2.0).beta == 2.0
    assert p.to_dict()["mu1"] == 0.0
