"""
Spectral packages of Hodge Laplacians and numerically detected harmonic forms.
"""
import logging
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from witten_lab.core.inner_product import InnerProductComplex, stiffness
from witten_lab.core.linalg import count_zero_eigenvalues, lowest_eigenpairs, norm_estimate
from witten_lab.errors import AmbiguousKernelError

logger = logging.getLogger(__name__)

DEFAULT_TOL_ZERO = 1e-6
DEFAULT_MIN_RATIO = 10.0
DEFAULT_TOL_GROUP = 1e-8


@dataclass(frozen=True)
class SpectralPackage:
    """
    Lowest eigenpairs of Δ^q with their multiplicity grouping.

    Attributes:
        degree: Form degree q
        values: Ascending eigenvalues
        vectors: M-orthonormal eigenvectors as columns
        residuals: M-norm residual per pair
        groups: Partition of the indices into clusters of (numerically) equal eigenvalues
        tol_group: Relative grouping tolerance used
    """

    degree: int
    values: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray
    groups: List[List[int]]
    tol_group: float

    def group_of(self) -> np.ndarray:
        """Group id of every index."""
        ids = np.zeros(len(self.values), dtype=int)
        for g, members in enumerate(self.groups):
            ids[members] = g
        return ids

    def multiplicities(self) -> List[int]:
        return [len(g) for g in self.groups]

    def rows(self) -> List[Tuple[int, int, float, int]]:
        """(degree, index, eigenvalue, multiplicity_group) rows for export."""
        ids = self.group_of()
        return [(self.degree, i, float(v), int(ids[i])) for i, v in enumerate(self.values)]


@dataclass(frozen=True)
class KernelInfo:
    """Numerical kernel of Δ^q: its dimension, the gap ratio across it and an M-orthonormal basis."""

    degree: int
    dimension: int
    ratio: float
    basis: np.ndarray
    scale: float


def group_eigenvalues(values: np.ndarray, tol_group: float = DEFAULT_TOL_GROUP) -> List[List[int]]:
    """Chain consecutive eigenvalues with |λ_i - λ_{i-1}| <= tol_group (1 + λ_i) into groups."""
    groups: List[List[int]] = []
    for i, value in enumerate(values):
        if groups and abs(value - values[i - 1]) <= tol_group * (1.0 + abs(value)):
            groups[-1].append(i)
        else:
            groups.append([i])
    return groups


def spectral_package(
    ipc: InnerProductComplex,
    q: int,
    count: int,
    tol_group: float = DEFAULT_TOL_GROUP,
    seed: int = 0,
) -> SpectralPackage:
    """
    Compute the lowest `count` eigenpairs of Δ^q in the M^q inner product.

    Args:
        ipc: Inner-product complex
        q: Degree
        count: Number of eigenpairs (clipped to the dimension)
        tol_group: Relative tolerance of the multiplicity grouping
        seed: Seed of the iterative solver start vector

    Returns:
        SpectralPackage with residual-checked pairs
    """
    pairs = lowest_eigenpairs(stiffness(ipc, q), ipc.masses[q], count, seed=seed)
    groups = group_eigenvalues(pairs.values, tol_group)
    logger.debug("spectral package q=%d count=%d groups=%d", q, len(pairs.values), len(groups))
    return SpectralPackage(q, pairs.values, pairs.vectors, pairs.residuals, groups, tol_group)


def kernel_dimension(
    ipc: InnerProductComplex,
    q: int,
    tol_zero: float = DEFAULT_TOL_ZERO,
    min_ratio: float = DEFAULT_MIN_RATIO,
    seed: int = 0,
) -> KernelInfo:
    """
    Detect ker Δ^q numerically.

    The eigenvalue window doubles until it contains the first clearly nonzero eigenvalue.

    Raises:
        AmbiguousKernelError: When the zero/nonzero split has a gap ratio below min_ratio
    """
    dim = ipc.dim(q)
    mass = ipc.masses[q]
    if dim == 0:
        return KernelInfo(q, 0, np.inf, np.zeros((0, 0)), 0.0)
    k = stiffness(ipc, q)
    scale = norm_estimate(k, mass)
    if scale <= 0.0:
        pairs = lowest_eigenpairs(k, mass, dim, seed=seed, check=False)
        return KernelInfo(q, dim, np.inf, pairs.vectors, 0.0)

    window = min(dim, 8)
    while True:
        pairs = lowest_eigenpairs(k, mass, window, seed=seed)
        found = count_zero_eigenvalues(pairs.values, scale, tol_zero, min_ratio)
        if found is not None:
            zeros, ratio = found
            logger.debug("ker Δ^%d: dim %d, gap ratio %.3g", q, zeros, ratio)
            return KernelInfo(q, zeros, ratio, pairs.vectors[:, :zeros], scale)
        if window == dim:
            raise AmbiguousKernelError(0.0, f"no eigenvalue of Δ^{q} exceeds {tol_zero:g} times the norm estimate")
        window = min(dim, 2 * window)


def harmonic_basis(ipc: InnerProductComplex, q: int, tol_zero: float = DEFAULT_TOL_ZERO, seed: int = 0) -> np.ndarray:
    """M-orthonormal basis of the discrete harmonic q-forms."""
    return kernel_dimension(ipc, q, tol_zero=tol_zero, seed=seed).basis


def betti_numbers(ipc: InnerProductComplex, tol_zero: float = DEFAULT_TOL_ZERO, seed: int = 0) -> List[int]:
    return [kernel_dimension(ipc, q, tol_zero=tol_zero, seed=seed).dimension for q in range(ipc.length + 1)]


def euler_characteristic(ipc: InnerProductComplex) -> int:
    """Alternating sum of the cochain dimensions."""
    return int(sum((-1) ** q * ipc.dim(q) for q in range(ipc.length + 1)))


def harmonic_euler(ipc: InnerProductComplex, tol_zero: float = DEFAULT_TOL_ZERO, seed: int = 0) -> int:
    """Alternating sum of the numerically detected kernel dimensions."""
    return int(sum((-1) ** q * b for q, b in enumerate(betti_numbers(ipc, tol_zero, seed))))


def star_duality_defect(ipc: InnerProductComplex, q: int, count: int, seed: int = 0) -> float:
    """
    Relative distance between the lowest spectra of Δ^q and Δ^{n-q}.

    On flat tori the Hodge star intertwines the two Laplacians, so the defect is at round-off level.
    """
    n = ipc.length
    own = spectral_package(ipc, q, count, seed=seed).values
    dual = spectral_package(ipc, n - q, count, seed=seed).values
    m = min(len(own), len(dual))
    if m == 0:
        return 0.0
    top = max(float(np.max(np.abs(own[:m]))), float(np.max(np.abs(dual[:m]))), 1e-300)
    return float(np.max(np.abs(own[:m] - dual[:m])) / top)

