"""
Hodge decomposition of cochains into exact, coexact and harmonic parts.
"""
import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import lsqr

from witten_lab.core.inner_product import Cochain, InnerProductComplex, adjoint_differential
from witten_lab.core.linalg import Mass, Operator, is_diagonal_mass, to_dense

logger = logging.getLogger(__name__)

# Least-squares problems with fewer columns than this are solved densely.
DENSE_LSTSQ_LIMIT = 3000


@dataclass(frozen=True)
class HodgeSplit:
    """Exact, coexact and harmonic parts of a cochain."""

    exact: Cochain
    coexact: Cochain
    harmonic: Cochain

    def total(self) -> Cochain:
        return self.exact + self.coexact + self.harmonic


class _Weight:
    """Square-root factor R of a mass matrix, M = RᵀR, so that ||x||_M = ||Rx||."""

    def __init__(self, mass: Mass):
        self.diagonal = is_diagonal_mass(mass)
        self.factor = np.sqrt(mass) if self.diagonal else sla.cholesky(np.asarray(mass), lower=False)

    def apply(self, x: np.ndarray) -> np.ndarray:
        if self.diagonal:
            return self.factor[:, None] * x if x.ndim == 2 else self.factor * x
        return self.factor @ x

    def left(self, matrix: Operator) -> Operator:
        if self.diagonal and sp.issparse(matrix):
            return sp.diags(self.factor) @ matrix
        return self.apply(to_dense(matrix))


def _project_onto_range(weight: _Weight, operator: Operator, target: np.ndarray) -> np.ndarray:
    """M-orthogonal projection of target onto range(operator)."""
    if operator.shape[1] == 0:
        return np.zeros_like(target)
    system = weight.left(operator)
    rhs = weight.apply(target)
    if sp.issparse(system) and system.shape[1] > DENSE_LSTSQ_LIMIT:
        solution = lsqr(system, rhs, atol=1e-15, btol=1e-15, iter_lim=20 * system.shape[1])[0]
    else:
        solution = np.linalg.lstsq(to_dense(system), rhs, rcond=None)[0]
    return np.asarray(operator @ solution).ravel()


def hodge_decompose(ipc: InnerProductComplex, omega: Cochain) -> HodgeSplit:
    """
    Split a cochain into d-exact, δ-coexact and harmonic parts.

    The exact part is the M-orthogonal projection onto range(d^{q-1}), the coexact part the
    projection onto range(δ^{q+1}); the harmonic part is the remainder.

    Args:
        ipc: Inner-product complex
        omega: Cochain of degree q

    Returns:
        HodgeSplit whose parts sum to omega
    """
    q = omega.degree
    values = omega.values
    weight = _Weight(ipc.masses[q])
    exact = np.zeros_like(values)
    coexact = np.zeros_like(values)
    if q > 0:
        exact = _project_onto_range(weight, ipc.differentials[q - 1], values)
    if q < ipc.length:
        coexact = _project_onto_range(weight, adjoint_differential(ipc, q + 1), values)
    harmonic = values - exact - coexact
    logger.debug(
        "hodge split q=%d norms exact=%.3e coexact=%.3e harmonic=%.3e",
        q,
        ipc.norm(q, exact),
        ipc.norm(q, coexact),
        ipc.norm(q, harmonic),
    )
    return HodgeSplit(Cochain(q, exact), Cochain(q, coexact), Cochain(q, harmonic))
