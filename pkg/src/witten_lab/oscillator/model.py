"""
Independent oracles for the model operator: truncated Hermite-basis diagonalization and
finite-difference checks in one and several variables.
"""
import itertools
import logging
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np
import scipy.linalg as sla

from witten_lab.oscillator.symbols import OscSymbol, axis_shift, enumerate_symbols, hermite_function

logger = logging.getLogger(__name__)

# Relative tolerance for reading an eigenvalue as 2tN.
LEVEL_TOLERANCE = 1e-8


def _ladder(size: int) -> np.ndarray:
    """Annihilation operator a with a e_p = √p e_{p-1} on the first `size` Hermite functions."""
    return np.diag(np.sqrt(np.arange(1, size, dtype=float)), k=1)


def oscillator_matrix(t: float, basis_size: int) -> np.ndarray:
    """
    Matrix of -d²/dx² + t² x² on the first basis_size Hermite functions of scale t.

    x = (a + a†)/√(2t) and d/dx = √(t/2)(a - a†) are squared in a basis two functions larger and
    then truncated, so every retained entry is exact.
    """
    big = basis_size + 2
    a = _ladder(big)
    x = (a + a.T) / np.sqrt(2.0 * t)
    dx = np.sqrt(0.5 * t) * (a - a.T)
    full = -(dx @ dx) + t**2 * (x @ x)
    return full[:basis_size, :basis_size]


def brute_force_model_spectrum(n: int, q: int, k: int, t: float, basis_size: int) -> np.ndarray:
    """
    Eigenvalues of the model operator in degree q at a critical point of index k.

    Every component dx_I decouples; on each one the operator is the Kronecker sum of the per-axis
    oscillators shifted by t λ_j (2[j in I] - 1).

    Args:
        n: Ambient dimension
        q: Form degree
        k: Morse index
        t: Deformation parameter, t > 0
        basis_size: Hermite functions per axis

    Returns:
        Ascending eigenvalues over all components
    """
    if t <= 0 or basis_size < 1:
        raise ValueError("brute-force spectrum needs t > 0 and a nonempty basis")
    single = oscillator_matrix(t, basis_size)
    eye = np.eye(basis_size)
    values: List[np.ndarray] = []
    for index_set in itertools.combinations(range(1, n + 1), q):
        shift = axis_shift(n, k, index_set)
        total = np.zeros((basis_size**n, basis_size**n))
        for axis in range(n):
            factors = [single + t * shift[axis] * eye if j == axis else eye for j in range(n)]
            term = factors[0]
            for factor in factors[1:]:
                term = np.kron(term, factor)
            total += term
        values.append(sla.eigvalsh(total))
    spectrum = np.sort(np.concatenate(values)) if values else np.zeros(0)
    logger.debug("brute-force spectrum n=%d q=%d k=%d t=%g: %d values", n, q, k, t, spectrum.size)
    return spectrum


def level_multiplicities(values: np.ndarray, t: float, max_order: int) -> Dict[int, int]:
    """Count eigenvalues at each level 2tN for N = 0..max_order."""
    counts = {}
    for order in range(max_order + 1):
        target = 2.0 * t * order
        counts[order] = int(np.count_nonzero(np.abs(values - target) <= LEVEL_TOLERANCE * max(1.0, target)))
    return counts


@dataclass(frozen=True)
class OracleVerdict:
    """Comparison of enumerated symbol counts with brute-force multiplicities for one (n, q, k)."""

    n: int
    q: int
    k: int
    enumerated: Dict[int, int]
    brute_force: Dict[int, int]

    @property
    def agrees(self) -> bool:
        return self.enumerated == self.brute_force

    def row(self) -> Tuple[int, int, int, str, str, int]:
        fmt = lambda d: " ".join(str(d[o]) for o in sorted(d))  # noqa: E731
        return (self.n, self.q, self.k, fmt(self.enumerated), fmt(self.brute_force), int(self.agrees))


def cross_check_symbols(n: int, q: int, k: int, max_order: int, t: float = 1.0) -> OracleVerdict:
    """Enumerate symbols up to max_order and compare against the brute-force spectrum."""
    _, enumerated = enumerate_symbols(n, q, k, max_order)
    values = brute_force_model_spectrum(n, q, k, t, max_order + 4)
    verdict = OracleVerdict(n, q, k, enumerated, level_multiplicities(values, t, max_order))
    if not verdict.agrees:
        logger.warning("symbol count mismatch n=%d q=%d k=%d: %s vs %s", n, q, k, enumerated, verdict.brute_force)
    return verdict


def finite_difference_oscillator(levels: int, h: float, half_width: float = 10.0) -> np.ndarray:
    """
    Lowest eigenvalues of -d²/dx² + x² on [-half_width, half_width] with Dirichlet ends.

    Args:
        levels: Number of eigenvalues
        h: Grid spacing
        half_width: Half the interval length

    Returns:
        Ascending eigenvalues, approximating 2p + 1 with O(h²) error
    """
    count = int(round(2.0 * half_width / h)) - 1
    x = -half_width + h * np.arange(1, count + 1)
    diagonal = 2.0 / h**2 + x**2
    off = -np.ones(count - 1) / h**2
    return sla.eigh_tridiagonal(diagonal, off, select="i", select_range=(0, levels - 1), eigvals_only=True)


@dataclass(frozen=True)
class RichardsonRow:
    level: int
    coarse: float
    fine: float
    extrapolated: float

    @property
    def exact(self) -> float:
        return 2.0 * self.level + 1.0

    @property
    def error(self) -> float:
        return abs(self.extrapolated - self.exact)


def richardson_oscillator(levels: int, h: float = 0.01, half_width: float = 10.0) -> List[RichardsonRow]:
    """Finite-difference oscillator levels at h and h/2 combined as (4λ(h/2) - λ(h)) / 3."""
    coarse = finite_difference_oscillator(levels, h, half_width)
    fine = finite_difference_oscillator(levels, h / 2.0, half_width)
    extrapolated = (4.0 * fine - coarse) / 3.0
    return [RichardsonRow(p, float(coarse[p]), float(fine[p]), float(extrapolated[p])) for p in range(levels)]


def _second_difference(values: np.ndarray, h: float) -> np.ndarray:
    padded = np.concatenate(([0.0], values, [0.0]))
    return (padded[:-2] - 2.0 * values + padded[2:]) / h**2


def eigenform_residual(sym: OscSymbol, t: float, h: float, half_width: float = 8.0) -> float:
    """
    Relative discrete L² residual of a model eigenform under the finite-difference model operator.

    The operator and the form are both separable, so the residual is assembled from per-axis
    residuals r_j = L_j φ_j - t(2p_j + 1) φ_j through Gram products without forming the n-D grid.

    Args:
        sym: Symbol
        t: Deformation parameter
        h: Grid spacing (in the rescaled variable √t x)
        half_width: Half width of the grid in √t x

    Returns:
        ‖(Δ_h - 2t o) φ‖ / ‖φ‖, which decays like h²
    """
    count = int(round(2.0 * half_width / h)) - 1
    y = -half_width + h * np.arange(1, count + 1)
    x = y / np.sqrt(t)
    hx = h / np.sqrt(t)
    phis, residuals = [], []
    for p in sym.p:
        phi = np.asarray(hermite_function(p, t, x))
        applied = -_second_difference(phi, hx) + t**2 * x**2 * phi
        phis.append(phi)
        residuals.append(applied - t * (2 * p + 1) * phi)
    norms = [float(phi @ phi) for phi in phis]
    cross = [float(phi @ r) for phi, r in zip(phis, residuals)]
    total = 0.0
    n = len(sym.p)
    for i in range(n):
        for j in range(n):
            others = np.prod([norms[m] for m in range(n) if m not in (i, j)])
            if i == j:
                total += float(residuals[i] @ residuals[i]) * others
            else:
                total += cross[i] * cross[j] * others
    return float(np.sqrt(max(total, 0.0) / np.prod(norms)))
