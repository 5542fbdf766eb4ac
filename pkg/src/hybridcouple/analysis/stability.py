"""Local stability from the eigenvalues of the state Jacobian."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import NumericalError, UsageError
from .linearize import DEFAULT_EPS, state_jacobian

DEFAULT_TOL_MARGIN = 1e-9


@dataclass(frozen=True)
class StabilityReport:
    eigenvalues: np.ndarray         # sorted by decreasing magnitude
    spectral_radius: float
    n_outside: int
    classification: str             # "stable", "marginal" or "unstable"
    tol_margin: float = DEFAULT_TOL_MARGIN

    @property
    def magnitudes(self):
        return np.abs(self.eigenvalues)


def sort_eigenvalues(ev):
    """Decreasing magnitude, then decreasing real part, then imaginary part."""
    ev = np.asarray(ev, dtype=np.complex128)
    order = np.lexsort((-ev.imag, -ev.real, -np.abs(ev)))
    return ev[order]


def classify(eigenvalues, tol_margin: float = DEFAULT_TOL_MARGIN) -> StabilityReport:
    ev = sort_eigenvalues(eigenvalues)
    mags = np.abs(ev)
    rho = float(mags.max()) if mags.size else 0.0
    n_out = int(np.count_nonzero(mags > 1.0 + tol_margin))
    if n_out:
        cls = "unstable"
    elif rho < 1.0 - tol_margin:
        cls = "stable"
    else:
        cls = "marginal"
    return StabilityReport(ev, rho, n_out, cls, tol_margin)


def eigen_report(A, tol_margin: float = DEFAULT_TOL_MARGIN) -> StabilityReport:
    """Classify the discrete-time matrix ``A`` against the unit circle."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise UsageError(f"A must be square, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise NumericalError("Jacobian has non-finite entries")
    try:
        ev = np.linalg.eigvals(A)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigenvalue computation failed: {exc}") from None
    return classify(ev, tol_margin)


def stability_local(sys, eq, tol_margin: float = DEFAULT_TOL_MARGIN,
                    eps: float = DEFAULT_EPS) -> StabilityReport:
    """Eigenvalues of ``dF/dx`` at a converged equilibrium ``eq``."""
    if not eq.converged:
        raise UsageError(f"equilibrium did not converge ({eq.message}); stability is undefined")
    A = state_jacobian(sys, eq.x, eq.u_bar, eq.d_bar, eps)
    return eigen_report(A, tol_margin)
