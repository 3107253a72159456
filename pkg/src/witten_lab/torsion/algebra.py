"""
Torsion of finite inner-product complexes, volumes of chain maps and the anomaly identity

    T(C_2) / T(C_1) = Vol(H(φ)) / Vol(φ)

for chain isomorphisms φ: C_1 -> C_2, with T(C) = Π_q (det'Δ^q)^{(-1)^{q+1} q/2}.
"""
import itertools
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from witten_lab.core.inner_product import InnerProductComplex, stiffness
from witten_lab.core.linalg import count_zero_eigenvalues, mass_apply, max_abs, to_dense
from witten_lab.derham.spectral import DEFAULT_MIN_RATIO, DEFAULT_TOL_ZERO, harmonic_basis
from witten_lab.errors import TorsionError

logger = logging.getLogger(__name__)

CHAIN_TOLERANCE = 1e-10
SINGULAR_GRAM = 1e-14


def _dense_mass(mass: np.ndarray) -> np.ndarray:
    return np.diag(mass) if np.ndim(mass) == 1 else np.asarray(mass, dtype=float)


@dataclass(frozen=True)
class ChainMap:
    """
    Degree-wise maps φ^q: C_1^q -> C_2^q commuting with the differentials.

    Attributes:
        source: C_1
        target: C_2
        maps: φ^q as dense matrices of shape (dim C_2^q, dim C_1^q)
    """

    source: InnerProductComplex
    target: InnerProductComplex
    maps: List[np.ndarray]

    def __post_init__(self) -> None:
        if len(self.maps) != self.source.length + 1 or self.source.length != self.target.length:
            raise TorsionError("chain map needs one matrix per degree of two complexes of equal length")
        for q, phi in enumerate(self.maps):
            if phi.shape != (self.target.dim(q), self.source.dim(q)):
                raise TorsionError(f"φ^{q} has shape {phi.shape}, expected {(self.target.dim(q), self.source.dim(q))}")

    def chain_defect(self) -> float:
        """Worst relative max-norm of d_2 φ^q - φ^{q+1} d_1 over degrees."""
        worst = 0.0
        for q in range(self.source.length):
            left = to_dense(self.target.differentials[q]) @ self.maps[q]
            right = self.maps[q + 1] @ to_dense(self.source.differentials[q])
            scale = max(max_abs(left), max_abs(right), 1e-300)
            worst = max(worst, max_abs(left - right) / scale)
        return worst

    def check(self, tolerance: float = CHAIN_TOLERANCE) -> "ChainMap":
        defect = self.chain_defect()
        if defect > tolerance:
            raise TorsionError(f"maps do not commute with the differentials (defect {defect:.3e})")
        return self


def _laplacian_spectrum(ipc: InnerProductComplex, q: int) -> np.ndarray:
    k = to_dense(stiffness(ipc, q))
    if k.size == 0:
        return np.zeros(0)
    return sla.eigh(0.5 * (k + k.T), _dense_mass(ipc.masses[q]), eigvals_only=True)


def log_detprime_laplacian(
    ipc: InnerProductComplex, q: int, tol_zero: float = DEFAULT_TOL_ZERO, min_ratio: float = DEFAULT_MIN_RATIO
) -> float:
    """log of the product of the nonzero eigenvalues of Δ^q (0 for an empty product)."""
    values = np.sort(_laplacian_spectrum(ipc, q))
    if values.size == 0:
        return 0.0
    scale = float(np.max(np.abs(values)))
    found = count_zero_eigenvalues(values, scale, tol_zero, min_ratio)
    zeros = values.size if found is None else found[0]
    return float(np.sum(np.log(values[zeros:])))


def detprime_laplacian(
    ipc: InnerProductComplex, q: int, tol_zero: float = DEFAULT_TOL_ZERO, min_ratio: float = DEFAULT_MIN_RATIO
) -> float:
    """
    det'Δ^q, the product of the eigenvalues above the zero threshold.

    Raises:
        AmbiguousKernelError: When the zero/nonzero split is not clear
    """
    return float(np.exp(log_detprime_laplacian(ipc, q, tol_zero, min_ratio)))


def log_torsion(ipc: InnerProductComplex, tol_zero: float = DEFAULT_TOL_ZERO) -> float:
    """log T(C) = Σ_q (-1)^{q+1} (q/2) log det'Δ^q."""
    return float(
        sum((-1) ** (q + 1) * 0.5 * q * log_detprime_laplacian(ipc, q, tol_zero) for q in range(1, ipc.length + 1))
    )


def torsion(ipc: InnerProductComplex, tol_zero: float = DEFAULT_TOL_ZERO) -> float:
    """T(C) = Π_q (det'Δ^q)^{(-1)^{q+1} q/2}."""
    return float(np.exp(log_torsion(ipc, tol_zero)))


def log_vol_map(phi: np.ndarray, source_mass: np.ndarray, target_mass: np.ndarray) -> float:
    """
    log Vol(φ) = ½ log det(φ^# φ) with φ^# the adjoint in the given inner products.

    Returns -inf for maps that are not injective and 0 for maps out of the zero space.
    """
    phi = np.asarray(phi, dtype=float)
    if phi.shape[1] == 0:
        return 0.0
    gram = phi.T @ mass_apply(target_mass, phi)
    w = np.linalg.eigvalsh(0.5 * (gram + gram.T))
    if w.min() <= SINGULAR_GRAM * max(float(w.max()), np.finfo(float).tiny):
        return -np.inf
    _, log_source = np.linalg.slogdet(_dense_mass(source_mass))
    return float(0.5 * (np.sum(np.log(w)) - log_source))


def vol_map(phi: np.ndarray, source_mass: np.ndarray, target_mass: np.ndarray) -> float:
    """Vol(φ) = det(φ^# φ)^{1/2}."""
    return float(np.exp(log_vol_map(phi, source_mass, target_mass)))


def _alternating(logs: Sequence[float], what: str) -> float:
    bad = [q for q, v in enumerate(logs) if not np.isfinite(v)]
    if bad:
        raise TorsionError(f"{what} vanishes in degrees {bad}; the alternating product is undefined")
    return float(sum((-1) ** q * v for q, v in enumerate(logs)))


def log_vol_alternating(phi: ChainMap) -> float:
    """log Vol(φ) = Σ_q (-1)^q log vol(φ^q)."""
    logs = [log_vol_map(m, phi.source.masses[q], phi.target.masses[q]) for q, m in enumerate(phi.maps)]
    return _alternating(logs, "vol(φ^q)")


def cohomology_maps(phi: ChainMap, tol_zero: float = DEFAULT_TOL_ZERO) -> List[np.ndarray]:
    """H^q(φ) in M-orthonormal harmonic bases of source and target."""
    out = []
    for q, m in enumerate(phi.maps):
        h_source = harmonic_basis(phi.source, q, tol_zero)
        h_target = harmonic_basis(phi.target, q, tol_zero)
        out.append(h_target.T @ mass_apply(phi.target.masses[q], m @ h_source))
    return out


def log_vol_cohomology(phi: ChainMap, tol_zero: float = DEFAULT_TOL_ZERO) -> float:
    """log Vol(H(φ)) = Σ_q (-1)^q log vol(H^q(φ)); 0 for acyclic complexes."""
    logs = []
    for h in cohomology_maps(phi, tol_zero):
        logs.append(log_vol_map(h, np.ones(h.shape[1]), np.ones(h.shape[0])))
    return _alternating(logs, "vol(H^q(φ))")


@dataclass(frozen=True)
class IdentityCheck:
    """Both sides of T(C_2)/T(C_1) = Vol(H(φ))/Vol(φ) and their relative mismatch."""

    lhs: float
    rhs: float
    relative_error: float
    seed: Optional[int] = None

    def to_json(self) -> dict:
        return {"seed": self.seed, "lhs": self.lhs, "rhs": self.rhs, "relative_error": self.relative_error}


def check_torsion_identity(
    c1: InnerProductComplex, c2: InnerProductComplex, phi: ChainMap, tol_zero: float = DEFAULT_TOL_ZERO
) -> IdentityCheck:
    """
    Evaluate both sides of the anomaly identity for a chain isomorphism φ: c1 -> c2.

    Raises:
        TorsionError: φ does not commute with the differentials or has a zero volume
    """
    if phi.source is not c1 or phi.target is not c2:
        phi = ChainMap(c1, c2, phi.maps)
    phi.check()
    log_lhs = log_torsion(c2, tol_zero) - log_torsion(c1, tol_zero)
    log_rhs = log_vol_cohomology(phi, tol_zero) - log_vol_alternating(phi)
    lhs, rhs = float(np.exp(log_lhs)), float(np.exp(log_rhs))
    error = float(abs(np.expm1(log_lhs - log_rhs)))
    return IdentityCheck(lhs, rhs, error)


def _well_conditioned(rng: np.random.Generator, size: int) -> np.ndarray:
    """Random matrix with singular values in [0.8, 1.25]."""
    if size == 0:
        return np.zeros((0, 0))
    u, _ = np.linalg.qr(rng.standard_normal((size, size)))
    v, _ = np.linalg.qr(rng.standard_normal((size, size)))
    return u @ np.diag(rng.uniform(0.8, 1.25, size)) @ v


def _random_spd(rng: np.random.Generator, size: int) -> np.ndarray:
    a = _well_conditioned(rng, size)
    return a @ a.T


def _random_ranks(rng: np.random.Generator, dims: Sequence[int]) -> List[int]:
    ranks = []
    used = 0
    for q in range(len(dims) - 1):
        top = min(dims[q] - used, dims[q + 1])
        r = int(rng.integers(0, top + 1)) if top > 0 else 0
        ranks.append(r)
        used = r
    return ranks


def _adapted_differential(dims: Sequence[int], ranks: Sequence[int], q: int, block: np.ndarray) -> np.ndarray:
    """Map the last r_q coordinates of C^q onto the first r_q coordinates of C^{q+1}."""
    r = ranks[q]
    d = np.zeros((dims[q + 1], dims[q]), dtype=block.dtype)
    if r:
        d[:r, dims[q] - r :] = block
    return d


def random_complex(
    rng: np.random.Generator, max_length: int = 4, max_dim: int = 5
) -> InnerProductComplex:
    """
    Random complex of length 1..max_length, dimensions 1..max_dim, SPD inner products.

    Differentials are G_{q+1} D_q G_q^{-1} with D_q of random rank in adapted coordinates, so
    d∘d vanishes up to round-off.
    """
    length = int(rng.integers(1, max_length + 1))
    dims = [int(v) for v in rng.integers(1, max_dim + 1, size=length + 1)]
    ranks = _random_ranks(rng, dims)
    frames = [_well_conditioned(rng, k) for k in dims]
    diffs = []
    for q in range(length):
        block = _well_conditioned(rng, ranks[q])
        d = frames[q + 1] @ _adapted_differential(dims, ranks, q, block) @ np.linalg.inv(frames[q])
        diffs.append(d)
    masses = [_random_spd(rng, k) for k in dims]
    return InnerProductComplex(masses, diffs)


def random_isomorphic_pair(
    rng: np.random.Generator, max_length: int = 4, max_dim: int = 5
) -> Tuple[InnerProductComplex, InnerProductComplex, ChainMap]:
    """C_1, a conjugate C_2 = Φ C_1 Φ^{-1} with fresh inner products, and the chain isomorphism Φ."""
    c1 = random_complex(rng, max_length, max_dim)
    maps = [_well_conditioned(rng, c1.dim(q)) for q in range(c1.length + 1)]
    diffs = [maps[q + 1] @ to_dense(d) @ np.linalg.inv(maps[q]) for q, d in enumerate(c1.differentials)]
    c2 = InnerProductComplex([_random_spd(rng, c1.dim(q)) for q in range(c1.length + 1)], diffs)
    return c1, c2, ChainMap(c1, c2, maps)


def identity_corpus(seed: int, cases: int = 200, max_length: int = 4, max_dim: int = 5) -> List[IdentityCheck]:
    """Anomaly-identity checks on `cases` random isomorphic pairs, case i seeded by (seed, i)."""
    results = []
    for i in range(cases):
        rng = np.random.default_rng([seed, i])
        c1, c2, phi = random_isomorphic_pair(rng, max_length, max_dim)
        check = check_torsion_identity(c1, c2, phi)
        results.append(IdentityCheck(check.lhs, check.rhs, check.relative_error, i))
    worst = max((r.relative_error for r in results), default=0.0)
    logger.info("torsion identity corpus: %d cases, worst relative error %.3e", cases, worst)
    return results


def _bareiss(matrix: List[List[int]]) -> Tuple[int, int]:
    """(rank, determinant of the leading full-rank part) by fraction-free elimination on Python ints."""
    a = [row[:] for row in matrix]
    rows = len(a)
    cols = len(a[0]) if rows else 0
    rank, previous, sign = 0, 1, 1
    for c in range(cols):
        pivot = next((r for r in range(rank, rows) if a[r][c] != 0), None)
        if pivot is None:
            continue
        if pivot != rank:
            a[rank], a[pivot] = a[pivot], a[rank]
            sign = -sign
        for r in range(rank + 1, rows):
            for j in range(c + 1, cols):
                a[r][j] = (a[r][j] * a[rank][c] - a[r][c] * a[rank][j]) // previous
            a[r][c] = 0
        previous = a[rank][c]
        rank += 1
        if rank == rows:
            break
    return rank, sign * previous


def integer_rank(matrix: np.ndarray) -> int:
    if matrix.size == 0:
        return 0
    return _bareiss([[int(v) for v in row] for row in np.asarray(matrix)])[0]


def integer_det(matrix: np.ndarray) -> int:
    """Exact determinant of a square integer matrix."""
    size = matrix.shape[0]
    if size == 0:
        return 1
    rank, det = _bareiss([[int(v) for v in row] for row in np.asarray(matrix)])
    return det if rank == size else 0


def detprime_gram(d: np.ndarray) -> int:
    """det'(dᵀd) as the sum of squared maximal nonzero minors (Cauchy–Binet), exactly."""
    d = np.asarray(d)
    r = integer_rank(d)
    if r == 0:
        return 1
    total = 0
    for rows in itertools.combinations(range(d.shape[0]), r):
        for cols in itertools.combinations(range(d.shape[1]), r):
            total += integer_det(d[np.ix_(rows, cols)]) ** 2
    return total


def reference_log_torsion(differentials: Sequence[np.ndarray]) -> float:
    """log T for integer differentials and standard bases: Σ_q (-1)^q ½ log det'(d_qᵀ d_q)."""
    return float(sum((-1) ** q * 0.5 * np.log(float(detprime_gram(d))) for q, d in enumerate(differentials)))


def random_unimodular(rng: np.random.Generator, size: int, steps: int = 6) -> Tuple[np.ndarray, np.ndarray]:
    """Integer matrix of determinant ±1 with its integer inverse, from random elementary row operations."""
    u = np.eye(size, dtype=np.int64)
    inv = np.eye(size, dtype=np.int64)
    if size < 2:
        return u, inv
    for _ in range(steps):
        i, j = rng.choice(size, size=2, replace=False)
        c = int(rng.choice([-1, 1]))
        u[i] += c * u[j]
        inv[:, j] -= c * inv[:, i]
    return u, inv


def random_integer_complex(
    rng: np.random.Generator, max_length: int = 3, max_dim: int = 4, entries: Sequence[int] = (1, -1, 2, -2)
) -> List[np.ndarray]:
    """Integer differentials U_{q+1} D_q U_q^{-1} with unimodular U_q and diagonal D_q blocks."""
    length = int(rng.integers(1, max_length + 1))
    dims = [int(v) for v in rng.integers(1, max_dim + 1, size=length + 1)]
    ranks = _random_ranks(rng, dims)
    frames = [random_unimodular(rng, k) for k in dims]
    diffs = []
    for q in range(length):
        block = np.diag(rng.choice(np.asarray(entries, dtype=np.int64), size=ranks[q])).astype(np.int64)
        d = frames[q + 1][0] @ _adapted_differential(dims, ranks, q, block) @ frames[q][1]
        diffs.append(d)
    return diffs


def integer_complex(differentials: Sequence[np.ndarray]) -> InnerProductComplex:
    """Inner-product complex with standard bases on integer differentials."""
    dims = [differentials[0].shape[1]] + [d.shape[0] for d in differentials]
    diffs = [sp.csr_matrix(np.asarray(d, dtype=float)) for d in differentials]
    return InnerProductComplex([np.ones(k) for k in dims], diffs)
