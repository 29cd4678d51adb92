import numpy as np
import pytest

from exceptions import ConfigurationError, DomainError, RegimeError, StructureError
from functional import FiberProfile, ProblemParams, diagnose
from radial_grid import build_radial_grid
from solver import (Reduction, SolveConfig, SolveMode, _fiber_shift, compare_semitrivial,
                    estimate_constant_A, initial_guess, minimize_quotient_A, solve_global_min,
                    solve_local_min, solve_mountain_pass, solve_semitrivial, subadditivity_check,
                    suggest_r_max)
from thresholds import constant_A_bracket, solve_R0_R1


def _params(**changes):
    values = {"N": 1, "mu1": 1.0, "mu2": 1.0, "rho": 1.0, "beta": 1.0, "b1": 1.0, "b2": 1.0}
    values.update(changes)
    return ProblemParams(**values)


@pytest.mark.parametrize("changes, key", [
    ({"step": 0.0}, "solve.step"),
    ({"tol_grad": -1.0}, "solve.tol_grad"),
    ({"tol_pohozaev": 0.0}, "solve.tol_pohozaev"),
    ({"max_iters": 0}, "solve.max_iters"),
    ({"ball_radius": -2.0}, "solve.ball_radius"),
])
def test_solve_config_validation(changes, key):
    with pytest.raises(ConfigurationError) as info:
        SolveConfig(**changes)
    assert info.value.key_path == key


def test_solve_config_mode_and_tolerance():
    cfg = SolveConfig(mode="local_min")
    assert cfg.mode is SolveMode.LOCAL_MIN
    assert cfg.grad_tolerance(_params(b1=1.0, b2=0.5)) == pytest.approx(1.5e-7)
    assert SolveConfig(tol_grad=1e-9).grad_tolerance(_params()) == 1e-9
    with pytest.raises(ValueError):
        SolveConfig(mode="saddle")


def test_default_radius_heuristic():
    assert suggest_r_max(_params(), None, SolveMode.GLOBAL_MIN) == (28.0, 1.0)


def test_initial_guess_is_seeded_and_normalized():
    p = _params(N=3, beta=0.1, b1=0.5, b2=0.7)
    grid = build_radial_grid(3, 20.0, 256)
    first = initial_guess(p, grid, SolveMode.LOCAL_MIN, seed=3)
    again = initial_guess(p, grid, SolveMode.LOCAL_MIN, seed=3)
    other = initial_guess(p, grid, SolveMode.LOCAL_MIN, seed=4)
    assert np.array_equal(first.u.values, again.u.values)
    assert not np.array_equal(first.u.values, other.u.values)
    assert max(first.mass_errors()) < 1e-12
    assert first.u.values[-1] == 0.0


def test_initial_guess_for_four_dimensional_mountain_pass():
    p = ProblemParams(N=4, mu1=1.0, mu2=1.0, rho=0.5, beta=0.1, b1=0.5, b2=0.5)
    grid = build_radial_grid(4, 28.0, 512, "graded")
    state = initial_guess(p, grid, SolveMode.MOUNTAIN_PASS, seed=0)
    assert np.all(state.u.values[grid.nodes >= 4.0] == 0.0)
    assert max(state.mass_errors()) < 1e-12


def test_inactive_mass_gives_zero_component():
    grid = build_radial_grid(1, 20.0, 256)
    state = initial_guess(_params(b2=0.0), grid, SolveMode.GLOBAL_MIN, seed=0)
    assert not np.any(state.v.values)


def test_fiber_shift_selection():
    profile = FiberProfile(N=3, beta=0.1, kinetic=1.0, quartic=1.0, cubic=1.0)
    low = _fiber_shift(profile, Reduction.FIBER_LOCAL_MIN)
    high = _fiber_shift(profile, Reduction.FIBER_MAX)
    assert profile.first(low) == pytest.approx(0.0, abs=1e-10)
    assert profile.second(low) > 0 > profile.second(high)
    no_min = FiberProfile(N=4, beta=1.0, kinetic=2.0, quartic=1.0, cubic=1.0)
    with pytest.raises(StructureError):
        _fiber_shift(no_min, Reduction.FIBER_MIN)


def test_global_min_regime_guards(constants):
    with pytest.raises(RegimeError):
        solve_global_min(_params(N=3), SolveConfig())
    with pytest.raises(RegimeError):
        solve_global_min(_params(N=2, b1=3.0, b2=3.0), SolveConfig(), constants)


def test_local_min_regime_guards(params3, constants):
    with pytest.raises(RegimeError):
        solve_local_min(_params(N=2), SolveConfig(), constants)
    with pytest.raises(RegimeError) as info:
        solve_local_min(params3.with_(beta=3.0 * params3.beta), SolveConfig(), constants)
    assert info.value.details["regime"] == "outside_3d_window"


def test_mountain_pass_regime_guards(params3, constants):
    with pytest.raises(RegimeError):
        solve_mountain_pass(params3.with_(beta=-0.1), SolveConfig(), constants)
    with pytest.raises(RegimeError):
        solve_mountain_pass(_params(N=1), SolveConfig(), constants)
    four = ProblemParams(N=4, mu1=1.0, mu2=1.0, rho=0.5, beta=-0.1, b1=0.5, b2=0.5)
    with pytest.raises(RegimeError):
        solve_mountain_pass(four, SolveConfig(), constants)


def test_dimension_guards():
    with pytest.raises(ConfigurationError):
        solve_semitrivial(_params(N=3), 3, SolveConfig())
    with pytest.raises(DomainError):
        minimize_quotient_A(_params(N=3), SolveConfig())
    with pytest.raises(DomainError):
        subadditivity_check(_params(N=2), SolveConfig())


@pytest.mark.slow
def test_one_dimensional_global_minimum():
    p = _params()
    cfg = SolveConfig(n=512, max_iters=20000)
    result = solve_global_min(p, cfg)
    assert result.converged, result.message
    assert result.diagnostics.energy < 0
    assert max(result.state.mass_errors()) < 1e-10
    assert result.diagnostics.relative_pohozaev() < 1e-4
    assert np.all(result.state.u.values[:-1] >= 0)
    rerun = solve_global_min(p, cfg)
    assert np.array_equal(rerun.state.u.values, result.state.u.values)
    assert rerun.diagnostics.energy == result.diagnostics.energy


@pytest.mark.slow
def test_three_dimensional_local_minimum(params3, constants):
    result = solve_local_min(params3, SolveConfig(n=1024, max_iters=20000), constants)
    assert result.converged, result.message
    d = result.diagnostics
    R0, _ = solve_R0_R1(params3, constants)
    assert d.energy < 0
    assert d.fiber_second > 0
    assert np.sqrt(d.kinetic) < R0
    assert result.to_dict()["branch"] == "ground_plus"


@pytest.mark.slow
def test_three_dimensional_mountain_pass(params3, constants):
    result = solve_mountain_pass(params3, SolveConfig(n=1024, max_iters=20000), constants)
    assert result.converged, result.message
    d = result.diagnostics
    assert d.energy > 0
    assert d.fiber_second < 0
    assert diagnose(result.state, params3).relative_pohozaev() < 1e-4


@pytest.mark.slow
def test_constant_A_lies_in_bracket(constants):
    p = _params(N=2, mu2=2.0, rho=0.5, b2=0.5)
    lower, upper = constant_A_bracket(p, constants)
    A = estimate_constant_A(p, SolveConfig(n=1024, max_iters=20000))
    assert lower * (1 - 1e-3) <= A <= upper * (1 + 1e-3)


@pytest.mark.slow
def test_coupled_level_below_semitrivial_levels(params3, constants):
    levels = compare_semitrivial(params3, SolveConfig(n=1024, max_iters=20000), constants)
    assert levels["converged"]
    assert levels["strictly_below"]
    assert levels["coupled"] > 0


@pytest.mark.slow
def test_one_dimensional_subadditivity():
    spot = subadditivity_check(_params(), SolveConfig(n=512, max_iters=20000), splits=2)
    assert spot["whole"] < 0
    assert len(spot["splits"]) == 2
    assert spot["holds"]
