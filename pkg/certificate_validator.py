import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Tuple

from functional import Diagnostics


@dataclass
class CertificateResult:
    """Result of a single certificate check."""
    status: str  # 'success', 'success_with_tolerance', 'failed'
    value: float
    tolerance: float
    tolerance_used: float


@dataclass
class CertificateSummary:
    """All certificate checks of one converged candidate."""
    status: str
    messages: List[str] = field(default_factory=list)
    results: Dict[str, CertificateResult] = field(default_factory=dict)

    @property
    def failed(self) -> bool:
        return self.status == "failed"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "status": self.status,
            "messages": list(self.messages),
            "results": {name: asdict(result) for name, result in self.results.items()},
        }


class CertificateValidator:
    """
    Checks the stationarity certificates of a solver candidate.

    A converged state carries three certificates: the projected-gradient
    norm, the Pohozaev residual relative to the kinetic term and the residual
    of the multiplier identity. Each is compared against a strict tolerance
    and a looser discretization tolerance, giving the three-tier status
    'success', 'success_with_tolerance' or 'failed'. The summary status is
    'failed' if any check failed and 'success_with_tolerance' if any check
    needed the looser tier.
    """

    CHECKS = ("gradient", "pohozaev", "multiplier")

    def __init__(self, config: Optional[Dict[str, Any]] = None):
        """
        Initialize validator with tolerance configuration.

        Args:
            config: Configuration containing a ``certificate_settings`` section
        """
        settings = (config or {}).get('certificate_settings', {})
        self.gradient_slack = settings.get('gradient_slack', 10.0)
        self.pohozaev_discretization = settings.get('pohozaev_discretization', 1e-4)
        self.multiplier_factor = settings.get('multiplier_factor', 10.0)
        self.multiplier_discretization = settings.get('multiplier_discretization', 1e-4)

    def _check_tolerance(self, value: float, tolerance: float,
                         loose_tolerance: float) -> Tuple[str, float]:
        """
        Classify ``value`` against a strict and a loose tolerance.

        Returns:
            Tuple of (status, tolerance that decided it)
        """
        value = abs(value)
        if value <= tolerance:
            return "success", tolerance
        if value <= max(loose_tolerance, tolerance):
            return "success_with_tolerance", loose_tolerance
        return "failed", max(loose_tolerance, tolerance)

    def check_gradient(self, diagnostics: Diagnostics, tol_grad: float) -> CertificateResult:
        status, used = self._check_tolerance(diagnostics.grad_norm, tol_grad,
                                             self.gradient_slack * tol_grad)
        return CertificateResult(status=status, value=diagnostics.grad_norm,
                                 tolerance=tol_grad, tolerance_used=used)

    def check_pohozaev(self, diagnostics: Diagnostics, tol_pohozaev: float) -> CertificateResult:
        relative = diagnostics.relative_pohozaev()
        status, used = self._check_tolerance(relative, tol_pohozaev, self.pohozaev_discretization)
        return CertificateResult(status=status, value=relative, tolerance=tol_pohozaev,
                                 tolerance_used=used)

    def check_multiplier(self, diagnostics: Diagnostics, tol_grad: float,
                         masses: Tuple[float, float]) -> CertificateResult:
        b1, b2 = masses
        scale = abs(diagnostics.lambda1) * b1 ** 2 + abs(diagnostics.lambda2) * b2 ** 2
        tolerance = self.multiplier_factor * tol_grad
        loose = self.multiplier_discretization * max(scale, 1.0)
        status, used = self._check_tolerance(diagnostics.multiplier_residual, tolerance, loose)
        return CertificateResult(status=status, value=diagnostics.multiplier_residual,
                                 tolerance=tolerance, tolerance_used=used)

    def evaluate(self, diagnostics: Diagnostics, tol_grad: float, tol_pohozaev: float,
                 masses: Tuple[float, float],
                 checks: Iterable[str] = CHECKS) -> CertificateSummary:
        """
        Run the requested certificate checks.

        Args:
            diagnostics: Diagnostics of the candidate state
            tol_grad: Projected-gradient tolerance of the run
            tol_pohozaev: Relative Pohozaev tolerance of the run
            masses: Target masses (b1, b2)
            checks: Subset of ``CHECKS`` that applies to the solve mode

        Returns:
            CertificateSummary with per-check results
        """
        summary = CertificateSummary(status="success")
        for name in checks:
            if name == "gradient":
                result = self.check_gradient(diagnostics, tol_grad)
            elif name == "pohozaev":
                result = self.check_pohozaev(diagnostics, tol_pohozaev)
            elif name == "multiplier":
                result = self.check_multiplier(diagnostics, tol_grad, masses)
            else:
                raise ValueError(f"Unknown certificate check {name!r}")
            summary.results[name] = result
            if result.status != "success":
                summary.messages.append(
                    f"{name} certificate {result.status}: {result.value:.3e} "
                    f"(tolerance {result.tolerance:.3e})")

        if any(r.status == "failed" for r in summary.results.values()):
            summary.status = "failed"
        elif any(r.status == "success_with_tolerance" for r in summary.results.values()):
            summary.status = "success_with_tolerance"
        for message in summary.messages:
            logging.warning(message)
        return summary
