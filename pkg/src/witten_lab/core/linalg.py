"""
Shared linear algebra: mass-weighted eigensolves, kernel thresholds and Gram-matrix helpers.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from witten_lab.errors import AmbiguousKernelError, ConvergenceError

logger = logging.getLogger(__name__)

# Problems at or below this size are solved densely.
DENSE_LIMIT = 600

Mass = np.ndarray
Operator = Union[np.ndarray, sp.spmatrix]


@dataclass(frozen=True)
class Eigenpairs:
    """
    Lowest eigenpairs of a generalized symmetric problem K v = λ M v.

    Attributes:
        values: Ascending eigenvalues
        vectors: Columns M-orthonormal
        residuals: M-norm of M^{-1} K v - λ v for each pair
    """

    values: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray


def is_diagonal_mass(mass: Mass) -> bool:
    return np.ndim(mass) == 1


def mass_apply(mass: Mass, x: np.ndarray) -> np.ndarray:
    """Multiply by M (diagonal masses stored as 1-D arrays)."""
    if is_diagonal_mass(mass):
        return mass[:, None] * x if x.ndim == 2 else mass * x
    return mass @ x


def mass_solve(mass: Mass, x: np.ndarray) -> np.ndarray:
    """Multiply by M^{-1}."""
    if is_diagonal_mass(mass):
        return x / mass[:, None] if x.ndim == 2 else x / mass
    return sla.cho_solve(sla.cho_factor(mass), x)


def mass_matrix(mass: Mass) -> Operator:
    if is_diagonal_mass(mass):
        return sp.diags(mass, format="csr")
    return np.asarray(mass)


def inner(mass: Mass, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """M-inner products of the columns of a and b (vectors give a scalar)."""
    return a.T @ mass_apply(mass, b)


def to_dense(matrix: Operator) -> np.ndarray:
    return matrix.toarray() if sp.issparse(matrix) else np.asarray(matrix, dtype=float)


def max_abs(matrix: Operator) -> float:
    """Entrywise max-norm of a sparse or dense matrix (0 for empty ones)."""
    if sp.issparse(matrix):
        return float(abs(matrix).max()) if matrix.nnz else 0.0
    return float(np.max(np.abs(matrix))) if np.size(matrix) else 0.0


def symmetrize(matrix: Operator) -> Operator:
    sym = (matrix + matrix.T) * 0.5
    return sym.tocsr() if sp.issparse(sym) else sym


def norm_estimate(stiffness: Operator, mass: Mass) -> float:
    """
    Cheap upper bound for the largest eigenvalue of K v = λ M v.

    Uses the Gershgorin row-sum bound of M^{-1/2} K M^{-1/2} for diagonal masses; dense problems
    fall back to the exact top eigenvalue.
    """
    if is_diagonal_mass(mass):
        scale = 1.0 / np.sqrt(mass)
        if sp.issparse(stiffness):
            scaled = sp.diags(scale) @ abs(stiffness) @ sp.diags(scale)
            rows = np.asarray(scaled.sum(axis=1)).ravel()
        else:
            rows = (np.abs(stiffness) * scale[:, None] * scale[None, :]).sum(axis=1)
        return float(rows.max()) if rows.size else 0.0
    values = sla.eigh(to_dense(stiffness), mass, eigvals_only=True)
    return float(np.max(np.abs(values))) if values.size else 0.0


def _residuals(stiffness: Operator, mass: Mass, values: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    r = stiffness @ vectors - mass_apply(mass, vectors) * values[None, :]
    weighted = mass_solve(mass, r)
    return np.sqrt(np.abs(np.sum(r * weighted, axis=0)))


def lowest_eigenpairs(
    stiffness: Operator,
    mass: Mass,
    count: int,
    seed: int = 0,
    check: bool = True,
) -> Eigenpairs:
    """
    Compute the lowest eigenpairs of K v = λ M v.

    Args:
        stiffness: Symmetric positive semidefinite K (sparse or dense)
        mass: Diagonal masses as a 1-D array, or a dense SPD matrix
        count: Number of eigenpairs
        seed: Seed of the Lanczos start vector
        check: Raise when a residual exceeds 1e-8 (1 + λ)

    Returns:
        Eigenpairs with M-orthonormal vectors
    """
    dim = stiffness.shape[0]
    count = min(count, dim)
    if count <= 0:
        return Eigenpairs(np.zeros(0), np.zeros((dim, 0)), np.zeros(0))

    if not is_diagonal_mass(mass):
        values, vectors = sla.eigh(to_dense(symmetrize(stiffness)), mass, subset_by_index=[0, count - 1])
    else:
        inv_sqrt = 1.0 / np.sqrt(mass)
        if sp.issparse(stiffness):
            scaled = symmetrize(sp.diags(inv_sqrt) @ stiffness @ sp.diags(inv_sqrt)).tocsc()
        else:
            scaled = symmetrize(inv_sqrt[:, None] * stiffness * inv_sqrt[None, :])
        if dim <= DENSE_LIMIT or count >= dim - 1:
            values, u = sla.eigh(to_dense(scaled), subset_by_index=[0, count - 1])
        else:
            diag = np.abs(scaled.diagonal())
            shift = 1e-3 * float(diag.mean()) if diag.size and diag.mean() > 0 else 1.0
            v0 = np.random.default_rng(seed).standard_normal(dim)
            try:
                values, u = eigsh(scaled, k=count, sigma=-shift, which="LM", v0=v0, tol=0)
            except ArpackNoConvergence as exc:
                res = np.inf
                if exc.eigenvalues is not None and len(exc.eigenvalues):
                    vec = inv_sqrt[:, None] * exc.eigenvectors
                    res = float(_residuals(stiffness, mass, exc.eigenvalues, vec).max())
                raise ConvergenceError("eigensolver did not converge", residual=res, module="derham") from exc
            order = np.argsort(values)
            values, u = values[order], u[:, order]
        vectors = inv_sqrt[:, None] * u

    values = np.asarray(values, dtype=float)
    residuals = _residuals(stiffness, mass, values, vectors)
    worst = residuals / (1.0 + np.abs(values))
    logger.debug("eigensolve dim=%d count=%d worst residual %.2e", dim, count, float(worst.max()))
    if check and worst.max() > 1e-8:
        raise ConvergenceError("eigenpair residual above 1e-8 (1 + λ)", residual=float(worst.max()), module="derham")
    return Eigenpairs(values, vectors, residuals)


def count_zero_eigenvalues(
    values: np.ndarray,
    scale: float,
    tol_zero: float = 1e-6,
    min_ratio: float = 10.0,
    floor_rel: float = 1e-13,
) -> Optional[Tuple[int, float]]:
    """
    Separate numerically zero eigenvalues from the rest.

    The first eigenvalue above tol_zero * scale is taken as the first clearly nonzero one; everything
    below tol_zero times that eigenvalue counts as zero, and the ratio across the split must reach
    min_ratio.

    Args:
        values: Ascending eigenvalues (a lowest-part window is enough)
        scale: Upper bound for the spectrum
        tol_zero: Relative zero threshold
        min_ratio: Required ratio between the first nonzero and the last zero eigenvalue
        floor_rel: Round-off floor relative to scale

    Returns:
        (kernel dimension, gap ratio), or None when every value in the window is below the
        nonzero cutoff and a larger window is needed
    """
    if scale <= 0.0:
        return len(values), np.inf
    floor = floor_rel * scale
    above = np.flatnonzero(values > tol_zero * scale)
    if above.size == 0:
        return None
    first = int(above[0])
    threshold = tol_zero * values[first]
    zeros = int(np.count_nonzero(values < threshold))
    below = values[first - 1] if first > 0 else 0.0
    ratio = float(values[first] / max(below, floor))
    if zeros != first or ratio < min_ratio:
        raise AmbiguousKernelError(ratio, f"{first} candidates below {tol_zero:g}*scale, {zeros} below threshold")
    return zeros, ratio


def numerical_rank(matrix: Operator, rtol: float = 1e-10) -> int:
    """Rank from singular values (dense; intended for desk-scale matrices)."""
    dense = to_dense(matrix)
    if dense.size == 0:
        return 0
    sv = np.linalg.svd(dense, compute_uv=False)
    return int(np.count_nonzero(sv > rtol * sv[0])) if sv.size and sv[0] > 0 else 0


def inverse_sqrt_spd(gram: np.ndarray) -> Tuple[np.ndarray, float]:
    """
    Inverse square root of a symmetric positive definite matrix by eigendecomposition.

    Returns:
        Tuple of (G^{-1/2}, smallest eigenvalue of G)
    """
    w, u = np.linalg.eigh(0.5 * (gram + gram.T))
    smallest = float(w.min()) if w.size else 1.0
    safe = np.where(w > 0, w, np.inf)
    return (u / np.sqrt(safe)[None, :]) @ u.T, smallest


def log_gram_volume(matrix: np.ndarray) -> float:
    """
    Logarithm of sqrt(det(Aᵀ A)) for a matrix with orthonormal-coordinate columns.

    Returns -inf for a rank-deficient matrix.
    """
    if matrix.shape[1] == 0:
        return 0.0
    sign, logdet = np.linalg.slogdet(matrix.T @ matrix)
    return 0.5 * float(logdet) if sign > 0 else -np.inf
