"""
Lattice volumes of integral harmonic forms.

The covolume of degree q is the volume of a fundamental domain of the lattice of harmonic q-forms
with integer periods over a basis of integral q-cycles, measured with the Hodge inner product.
V^q is normalized so that V^0 = 1 and V^n = vol(M); in between it is the covolume.
"""
import logging
from typing import List, Optional, Sequence

import numpy as np

from witten_lab.core.complexes import CellComplex
from witten_lab.core.inner_product import InnerProductComplex
from witten_lab.core.linalg import mass_apply
from witten_lab.derham.spectral import harmonic_basis
from witten_lab.errors import LatticeError

logger = logging.getLogger(__name__)


def coordinate_cycles(complex_: CellComplex, q: int) -> np.ndarray:
    """
    Integral basis of H_q as rows of a chain matrix (one row per cycle, one column per q-cell).

    Tori use coordinate subtori through the origin vertex, one per increasing axis tuple; the
    sphere has a point in degree 0 and the fundamental class in degree 2.
    """
    counts = complex_.counts
    if complex_.topology == "sphere":
        if q == 0:
            cycles = np.zeros((1, counts[0]))
            cycles[0, 0] = 1.0
            return cycles
        if q == complex_.dimension:
            return np.ones((1, counts[q]))
        return np.zeros((0, counts[q]))

    n = complex_.dimension
    res = complex_.resolution
    if res is None:
        raise LatticeError("no integral cycle basis is known for this complex")
    blocks = complex_.axes_blocks(q)
    cycles = np.zeros((len(blocks), counts[q]))
    for row, axes in enumerate(blocks):
        sub = np.indices((res,) * q).reshape(q, -1).T if q else np.zeros((1, 0), dtype=int)
        vertices = np.zeros((sub.shape[0], n), dtype=int)
        vertices[:, list(axes)] = sub
        cycles[row, complex_.cell_index(q, vertices, axes)] = 1.0
    return cycles


def log_lattice_volume_from_basis(gram: np.ndarray, periods: np.ndarray) -> float:
    """
    ln sqrt(det(P^{-T} G P^{-1})) for a harmonic basis with Gram matrix G and period matrix P.

    Raises:
        LatticeError: When P is singular
    """
    if gram.shape[0] == 0:
        return 0.0
    if periods.shape[0] != periods.shape[1]:
        raise LatticeError(f"period matrix has shape {periods.shape}; cycle and harmonic counts differ")
    sign_p, logdet_p = np.linalg.slogdet(periods)
    sign_g, logdet_g = np.linalg.slogdet(0.5 * (gram + gram.T))
    if sign_p == 0 or not np.isfinite(logdet_p) or abs(np.linalg.cond(periods)) > 1e12:
        raise LatticeError("singular period matrix: harmonic basis does not pair with the cycle basis")
    if sign_g <= 0:
        raise LatticeError("Gram matrix of the harmonic basis is not positive definite")
    return 0.5 * float(logdet_g) - float(logdet_p)


def lattice_volume_from_basis(gram: np.ndarray, periods: np.ndarray) -> float:
    return float(np.exp(log_lattice_volume_from_basis(gram, periods)))


def lattice_covolume(
    ipc: InnerProductComplex,
    complex_: CellComplex,
    q: int,
    cycles: Optional[np.ndarray] = None,
    basis: Optional[np.ndarray] = None,
) -> float:
    """
    Covolume of the integral harmonic q-forms.

    Args:
        ipc: de Rham complex of `complex_`
        complex_: Cell complex carrying the cycle basis
        q: Degree
        cycles: Integral cycle basis (defaults to the coordinate cycles)
        basis: Harmonic basis as columns (defaults to the numerically detected one); any
            invertible recombination gives the same volume

    Returns:
        The covolume
    """
    cycles = coordinate_cycles(complex_, q) if cycles is None else cycles
    basis = harmonic_basis(ipc, q) if basis is None else basis
    if basis.shape[1] != cycles.shape[0]:
        raise LatticeError(f"degree {q}: {basis.shape[1]} harmonic forms but {cycles.shape[0]} integral cycles")
    gram = basis.T @ mass_apply(ipc.masses[q], basis)
    periods = cycles @ ipc.to_integrals(q, basis)
    covolume = lattice_volume_from_basis(gram, periods)
    logger.debug("covolume of degree %d = %.12g", q, covolume)
    return covolume


def lattice_volume(
    ipc: InnerProductComplex,
    complex_: CellComplex,
    q: int,
    cycles: Optional[np.ndarray] = None,
    basis: Optional[np.ndarray] = None,
) -> float:
    """
    Compute V^q: 1 in degree 0, the volume of M in the top degree and the covolume otherwise.

    The arguments are those of `lattice_covolume`.
    """
    if q == 0:
        return 1.0
    if q == complex_.dimension:
        return float(np.sum(complex_.primal_volumes[q]))
    return lattice_covolume(ipc, complex_, q, cycles, basis)


def lattice_volumes(ipc: InnerProductComplex, complex_: CellComplex) -> List[float]:
    return [lattice_volume(ipc, complex_, q) for q in range(ipc.length + 1)]


def lattice_covolumes(ipc: InnerProductComplex, complex_: CellComplex) -> List[float]:
    return [lattice_covolume(ipc, complex_, q) for q in range(ipc.length + 1)]


def volume_product(volumes: Sequence[float]) -> float:
    """Alternating product ∏ (V^i)^{(-1)^i}; the empty product is 1."""
    log_total = sum((-1) ** i * np.log(v) for i, v in enumerate(volumes))
    return float(np.exp(log_total))
