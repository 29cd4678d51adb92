import pytest

from certificate_validator import CertificateValidator
from configuration_manager import ConfigurationManager
from functional import Diagnostics


def _diagnostics(**changes):
    values = dict(energy=-0.1, kinetic=2.0, quartic=1.0, cubic_coupling=0.5, pohozaev=0.0,
                  lambda1=1.0, lambda2=0.5, grad_norm=0.0, fiber_second=1.0,
                  multiplier_residual=0.0)
    values.update(changes)
    return Diagnostics(**values)


def test_clean_candidate_succeeds():
    summary = CertificateValidator().evaluate(_diagnostics(), 1e-7, 1e-6, (1.0, 1.0))
    assert summary.status == "success"
    assert set(summary.results) == {"gradient", "pohozaev", "multiplier"}
    assert summary.messages == []


def test_loose_tier_is_success_with_tolerance():
    validator = CertificateValidator()
    # relative Pohozaev 5e-5 sits between 1e-6 and the 1e-4 discretization tier
    summary = validator.evaluate(_diagnostics(pohozaev=1e-4), 1e-7, 1e-6, (1.0, 1.0))
    assert summary.status == "success_with_tolerance"
    assert summary.results["pohozaev"].tolerance_used == 1e-4
    assert len(summary.messages) == 1


def test_any_failure_fails_the_summary():
    summary = CertificateValidator().evaluate(_diagnostics(grad_norm=1e-3), 1e-7, 1e-6,
                                              (1.0, 1.0))
    assert summary.failed
    assert summary.results["gradient"].status == "failed"
    assert summary.to_dict()["results"]["gradient"]["value"] == 1e-3


def test_checks_can_be_restricted():
    summary = CertificateValidator().evaluate(_diagnostics(pohozaev=1.0), 1e-7, 1e-6,
                                              (1.0, 1.0), checks=("gradient",))
    assert summary.status == "success"
    assert list(summary.results) == ["gradient"]


def test_unknown_check_is_rejected():
    with pytest.raises(ValueError):
        CertificateValidator().evaluate(_diagnostics(), 1e-7, 1e-6, (1.0, 1.0),
                                        checks=("energy",))


def test_settings_come_from_configuration():
    validator = CertificateValidator({"certificate_settings": {"gradient_slack": 1000.0}})
    summary = validator.evaluate(_diagnostics(grad_norm=1e-5), 1e-7, 1e-6, (1.0, 1.0))
    assert summary.results["gradient"].status == "success_with_tolerance"


def test_multiplier_loose_tier_scales_with_multipliers():
    validator = CertificateValidator()
    diagnostics = _diagnostics(lambda1=100.0, lambda2=0.0, multiplier_residual=5e-3)
    result = validator.check_multiplier(diagnostics, 1e-7, (1.0, 1.0))
    assert result.status == "success_with_tolerance"
    assert result.tolerance == pytest.approx(1e-6)


def test_multiplier_tolerance_follows_gradient_tolerance(config_dir):
    settings = ConfigurationManager(config_dir).get_certificate_config()
    validator = CertificateValidator(settings)
    factor = settings["certificate_settings"]["multiplier_factor"]
    for tol_pohozaev in (1e-6, 1e-3):
        summary = validator.evaluate(_diagnostics(), 2e-7, tol_pohozaev, (1.0, 1.0))
        assert summary.results["multiplier"].tolerance == pytest.approx(factor * 2e-7, rel=1e-12)
