"""
Witten deformation d(t) = e^{-tf} d e^{tf} by diagonal conjugation, and the deformed Laplacians.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from witten_lab.core.inner_product import InnerProductComplex, laplacian, stiffness
from witten_lab.core.linalg import Operator, max_abs
from witten_lab.errors import ConstructionError, DecompositionError, OverflowGuardError

logger = logging.getLogger(__name__)

# Largest admissible |t f| before e^{tf} loses all precision.
MAX_EXPONENT = 300.0
# Residual bound for callers that need the interpolation exact to round-off.
STRICT_TOLERANCE = 1e-8


@dataclass(frozen=True)
class DeformedComplex:
    """
    The complex (C^*, d(t)) with the inner products of the base complex.

    Attributes:
        base: Undeformed complex
        samples: f sampled at the barycenter of every cell, per degree
        t: Deformation parameter
        complex: Complex with differentials d^q(t) = W_{q+1}(-t) d^q W_q(t)
    """

    base: InnerProductComplex
    samples: List[np.ndarray]
    t: float
    complex: InnerProductComplex

    def d(self, q: int) -> Optional[Operator]:
        return self.complex.d(q)

    def factored_nilpotency_defect(self) -> float:
        """Max-norm of W(-t) (d^{q+1} d^q) W(t), zero whenever the base complex is exactly nilpotent."""
        worst = 0.0
        for q in range(self.base.length - 1):
            product = sp.coo_matrix(self.base.differentials[q + 1] @ self.base.differentials[q])
            product.eliminate_zeros()
            if not product.nnz:
                continue
            scale = np.exp(self.t * (self.samples[q][product.col] - self.samples[q + 2][product.row]))
            worst = max(worst, float(np.max(np.abs(product.data * scale))))
        return worst


def _check_samples(ipc: InnerProductComplex, samples: Sequence[np.ndarray]) -> List[np.ndarray]:
    if len(samples) != ipc.length + 1:
        raise ConstructionError(f"need f samples for {ipc.length + 1} degrees, got {len(samples)}", module="witten")
    checked = []
    for q, s in enumerate(samples):
        arr = np.asarray(s, dtype=float)
        if arr.shape != (ipc.dim(q),):
            raise ConstructionError(f"degree {q}: {arr.shape[0]} samples for {ipc.dim(q)} cells", module="witten")
        checked.append(arr)
    return checked


def _conjugate(d: Operator, f_source: np.ndarray, f_target: np.ndarray, t: float) -> Operator:
    """Entries d[τ, σ] exp(t (f_σ - f_τ)) without forming e^{±tf} separately."""
    if sp.issparse(d):
        coo = d.tocoo()
        data = coo.data * np.exp(t * (f_source[coo.col] - f_target[coo.row]))
        return sp.csr_matrix((data, (coo.row, coo.col)), shape=d.shape)
    return np.asarray(d) * np.exp(t * (f_source[None, :] - f_target[:, None]))


def deform(ipc: InnerProductComplex, f_samples: Sequence[np.ndarray], t: float, check: bool = True) -> DeformedComplex:
    """
    Build the Witten-deformed complex at parameter t.

    Args:
        ipc: Base complex
        f_samples: f at the barycenters of the cells of every degree
        t: Deformation parameter (negative values allowed)
        check: Verify nilpotency of the multiplied-out differentials

    Returns:
        DeformedComplex sharing the base inner products

    Raises:
        OverflowGuardError: When |t f| exceeds 300 anywhere
    """
    samples = _check_samples(ipc, f_samples)
    peak = max((float(np.max(np.abs(s))) for s in samples if s.size), default=0.0) * abs(t)
    if peak > MAX_EXPONENT:
        raise OverflowGuardError(peak)
    differentials = [_conjugate(d, samples[q], samples[q + 1], t) for q, d in enumerate(ipc.differentials)]
    deformed = InnerProductComplex(list(ipc.masses), differentials, ipc.normalization, ipc.primal_volumes)
    result = DeformedComplex(ipc, samples, float(t), deformed)
    if check:
        defect = deformed.nilpotency_defect()
        if defect > 1e-12:
            raise ConstructionError(f"d(t)∘d(t) defect {defect:.2e} at t={t:g}", module="witten")
    return result


def witten_stiffness(dc: DeformedComplex, q: int) -> Operator:
    """Symmetric form M^q Δ^q(t)."""
    return stiffness(dc.complex, q)


def witten_laplacian(dc: DeformedComplex, q: int) -> Operator:
    """Δ^q(t) = d^{q-1}(t) δ^q(t) + δ^{q+1}(t) d^q(t); at t = 0 this is the Hodge Laplacian."""
    return laplacian(dc.complex, q)


@dataclass(frozen=True)
class QuadraticDecomposition:
    """
    Δ^q(t) ≈ A + tB + t²C recovered from t in {0, 1, -1}.

    Attributes:
        A: Δ^q(0)
        B: Coefficient of t (discrete Lie-derivative part)
        C: Coefficient of t² (discrete multiplication by |grad f|²)
        residual: Relative max-norm misfit at the verification point t = 2
    """

    A: Operator
    B: Operator
    C: Operator
    residual: float


def quadratic_decomposition(
    ipc: InnerProductComplex,
    f_samples: Sequence[np.ndarray],
    q: int,
    tolerance: Optional[float] = None,
) -> QuadraticDecomposition:
    """
    Interpolate Δ^q(t) by a quadratic polynomial in t.

    Conjugation gives an entire family; it is exactly quadratic only for constant f, so the
    residual at t = 2 is reported and converges to zero under mesh refinement. The residual check is
    opt-in: with the default `tolerance=None` nothing is raised, whatever the residual. Pass
    STRICT_TOLERANCE (1e-8) to fail on any family that is not quadratic to round-off.

    Args:
        ipc: Base complex
        f_samples: f per degree
        q: Degree
        tolerance: Raise DecompositionError when the residual exceeds it (default None: never raise)

    Returns:
        QuadraticDecomposition

    Raises:
        DecompositionError: Only when `tolerance` is given and the residual exceeds it
    """
    lap = {t: witten_laplacian(deform(ipc, f_samples, t, check=False), q) for t in (0.0, 1.0, -1.0, 2.0)}
    a = lap[0.0]
    b = (lap[1.0] - lap[-1.0]) * 0.5
    c = (lap[1.0] + lap[-1.0]) * 0.5 - a
    misfit = lap[2.0] - (a + b * 2.0 + c * 4.0)
    residual = max_abs(misfit) / max(max_abs(lap[2.0]), 1e-300)
    logger.debug("quadratic decomposition q=%d residual %.3e", q, residual)
    if tolerance is not None and residual > tolerance:
        raise DecompositionError(residual, tolerance)
    return QuadraticDecomposition(a, b, c, residual)

