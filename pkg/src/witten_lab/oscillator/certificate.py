"""
Spectral-gap certificate from two Rayleigh-quotient bounds.

If A restricted to a subspace H1 has Rayleigh quotient <= a and A restricted to the M-orthogonal
complement has Rayleigh quotient >= b, no eigenvalue of M^{-1}A lies in (a, b).
"""
import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from witten_lab.core.linalg import DENSE_LIMIT, Operator, inverse_sqrt_spd, mass_apply, symmetrize, to_dense
from witten_lab.errors import OscillatorError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CertificateReport:
    """
    Attributes:
        holds: Both Rayleigh bounds hold
        upper_on_span: Largest Rayleigh quotient on span(H1)
        lower_on_complement: Smallest Rayleigh quotient on the complement (inf if empty)
        verified: Full-spectrum check ran and agreed
    """

    holds: bool
    upper_on_span: float
    lower_on_complement: float
    verified: bool


def _as_dense_mass(mass: np.ndarray) -> np.ndarray:
    return np.diag(mass) if np.ndim(mass) == 1 else np.asarray(mass, dtype=float)


def certify_gap(a_matrix: Operator, mass: np.ndarray, h1_basis: np.ndarray, a: float, b: float) -> CertificateReport:
    """
    Evaluate both Rayleigh bounds and, on desk-scale problems, cross-check the full spectrum.

    Args:
        a_matrix: Symmetric matrix A
        mass: SPD inner product (1-D for diagonal)
        h1_basis: Columns spanning H1, linearly independent
        a: Upper bound required on span(H1)
        b: Lower bound required on the complement

    Returns:
        CertificateReport

    Raises:
        ValueError: Unless 0 < a < b
        OscillatorError: When the bounds hold but an eigenvalue lies in (a, b)
    """
    if not 0 < a < b:
        raise ValueError(f"certificate needs 0 < a < b, got a={a}, b={b}")
    dense = to_dense(symmetrize(a_matrix))
    m = _as_dense_mass(mass)
    basis = np.atleast_2d(np.asarray(h1_basis, dtype=float))
    if basis.shape[0] != dense.shape[0]:
        basis = basis.T
    inv_sqrt, smallest = inverse_sqrt_spd(basis.T @ mass_apply(mass, basis))
    if smallest <= 1e-12:
        raise ValueError("H1 basis is not linearly independent")
    u = basis @ inv_sqrt
    compressed = u.T @ dense @ u
    upper = float(sla.eigvalsh(0.5 * (compressed + compressed.T)).max()) if u.shape[1] else -np.inf

    complement = sla.null_space(u.T @ m)
    if complement.shape[1]:
        lower = float(
            sla.eigvalsh(complement.T @ dense @ complement, complement.T @ m @ complement).min()
        )
    else:
        lower = np.inf
    holds = upper <= a and lower >= b
    verified = False
    if holds and dense.shape[0] <= DENSE_LIMIT:
        spectrum = sla.eigvalsh(dense, m)
        inside = spectrum[(spectrum > a) & (spectrum < b)]
        if inside.size:
            raise OscillatorError(f"certificate holds but eigenvalue {inside[0]:.6g} lies in ({a:g}, {b:g})")
        verified = True
    logger.debug("gap certificate (%g, %g): span max %.4g, complement min %.4g", a, b, upper, lower)
    return CertificateReport(holds, upper, lower, verified)


def gap_certificate(a_matrix: Operator, mass: np.ndarray, h1_basis: np.ndarray, a: float, b: float) -> bool:
    """True iff the spectrum of M^{-1}A is certified to miss (a, b) by the span/complement bounds."""
    return certify_gap(a_matrix, mass, h1_basis, a, b).holds
