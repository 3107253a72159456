"""
Finite cochain complexes with per-degree inner products, adjoints and Hodge Laplacians.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp

from witten_lab.core.complexes import CellComplex
from witten_lab.core.linalg import Mass, Operator, is_diagonal_mass, mass_apply, mass_solve, max_abs, to_dense
from witten_lab.errors import ConstructionError

logger = logging.getLogger(__name__)

NORMALIZATIONS = ("integral", "component")


@dataclass(frozen=True)
class Cochain:
    """A degree-q cochain: one coefficient per q-cell."""

    degree: int
    values: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))

    def __add__(self, other: "Cochain") -> "Cochain":
        if other.degree != self.degree:
            raise ValueError("cochain degrees differ")
        return Cochain(self.degree, self.values + other.values)


@dataclass(frozen=True)
class InnerProductComplex:
    """
    Cochain complex 0 -> C^0 -> ... -> C^n -> 0 with an inner product on every C^q.

    Masses are 1-D arrays (diagonal Hodge stars) or dense SPD matrices; differentials are
    sparse or dense real matrices with `differentials[q]` mapping C^q to C^{q+1}.

    Attributes:
        masses: Per degree inner-product matrix M^q
        differentials: Per degree q < n, the matrix d^q
        normalization: "integral" (cochains are integrals over cells) or "component"
        primal_volumes: Cell measures when built from a mesh, used to convert point values
    """

    masses: List[Mass]
    differentials: List[Operator]
    normalization: str = "integral"
    primal_volumes: Optional[List[np.ndarray]] = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if len(self.differentials) != len(self.masses) - 1:
            raise ConstructionError("need exactly one differential per consecutive degree pair")
        for q, d in enumerate(self.differentials):
            if d.shape != (self.dim(q + 1), self.dim(q)):
                raise ConstructionError(f"d^{q} has shape {d.shape}, expected {(self.dim(q + 1), self.dim(q))}")

    @property
    def length(self) -> int:
        """Top degree n."""
        return len(self.masses) - 1

    def dim(self, q: int) -> int:
        if q < 0 or q > self.length:
            return 0
        return int(np.shape(self.masses[q])[0])

    def d(self, q: int) -> Optional[Operator]:
        """d^q, or None outside 0 <= q < n."""
        return self.differentials[q] if 0 <= q < self.length else None

    @property
    def is_diagonal(self) -> bool:
        return all(is_diagonal_mass(m) for m in self.masses)

    def inner(self, q: int, a: np.ndarray, b: np.ndarray) -> float:
        return float(np.asarray(a) @ mass_apply(self.masses[q], np.asarray(b)))

    def norm(self, q: int, a: np.ndarray) -> float:
        return float(np.sqrt(max(self.inner(q, a, a), 0.0)))

    def from_components(self, q: int, components: np.ndarray) -> np.ndarray:
        """Convert point values of a form at barycenters into cochain coefficients."""
        if self.normalization == "component" or self.primal_volumes is None:
            return components
        vol = self.primal_volumes[q]
        return vol[:, None] * components if components.ndim == 2 else vol * components

    def to_integrals(self, q: int, values: np.ndarray) -> np.ndarray:
        """Convert cochain coefficients into integrals over cells."""
        if self.normalization == "integral" or self.primal_volumes is None:
            return values
        vol = self.primal_volumes[q]
        return vol[:, None] * values if values.ndim == 2 else vol * values

    def nilpotency_defect(self) -> float:
        """Relative max-norm of d^{q+1} d^q, worst over degrees."""
        worst = 0.0
        for q in range(self.length - 1):
            a, b = self.differentials[q + 1], self.differentials[q]
            scale = max(max_abs(a) * max_abs(b), 1e-300)
            worst = max(worst, max_abs(a @ b) / scale)
        return worst


def hodge_inner_products(complex_: CellComplex, normalization: str = "integral") -> List[np.ndarray]:
    """
    Diagonal Hodge-star mass matrices from primal and dual cell measures.

    Args:
        complex_: Cell complex with dual volumes
        normalization: "integral" gives |⋆σ| / |σ|, "component" gives |σ| |⋆σ|

    Returns:
        Per degree, the diagonal of M^q as a 1-D array
    """
    if normalization not in NORMALIZATIONS:
        raise ConstructionError(f"unknown normalization {normalization!r}")
    masses = []
    for q in range(complex_.dimension + 1):
        primal, dual = complex_.primal_volumes[q], complex_.dual_volumes[q]
        bad = np.flatnonzero((dual <= 0) | (primal <= 0))
        if bad.size:
            raise ConstructionError(f"non-positive dual volume at {q}-cell {int(bad[0])}")
        masses.append(dual / primal if normalization == "integral" else dual * primal)
    return masses


def de_rham_complex(complex_: CellComplex, normalization: str = "integral") -> InnerProductComplex:
    """
    Discrete de Rham complex of a cell complex.

    With integral cochains d^q is the coboundary D^q itself; component cochains use
    diag(1/|τ|) D^q diag(|σ|).
    """
    masses = hodge_inner_products(complex_, normalization)
    differentials = []
    for q, coboundary in enumerate(complex_.coboundaries):
        d = coboundary.astype(float)
        if normalization == "component":
            d = sp.diags(1.0 / complex_.primal_volumes[q + 1]) @ d @ sp.diags(complex_.primal_volumes[q])
        differentials.append(sp.csr_matrix(d))
    return InnerProductComplex(masses, differentials, normalization, complex_.primal_volumes)


def adjoint_differential(ipc: InnerProductComplex, q: int) -> Operator:
    """
    Formal adjoint δ^q = (M^{q-1})^{-1} (d^{q-1})ᵀ M^q, mapping C^q to C^{q-1}.

    Args:
        ipc: Inner-product complex
        q: Degree, 1 <= q <= n

    Returns:
        Matrix of δ^q (sparse for diagonal masses)
    """
    if not 1 <= q <= ipc.length:
        raise ValueError(f"adjoint needs 1 <= q <= {ipc.length}, got {q}")
    d = ipc.differentials[q - 1]
    lower, upper = ipc.masses[q - 1], ipc.masses[q]
    if is_diagonal_mass(lower) and is_diagonal_mass(upper) and sp.issparse(d):
        return sp.csr_matrix(sp.diags(1.0 / lower) @ d.T @ sp.diags(upper))
    return mass_solve(lower, to_dense(d).T @ _dense_mass(upper))


def _dense_mass(mass: Mass) -> np.ndarray:
    return np.diag(mass) if is_diagonal_mass(mass) else np.asarray(mass)


def stiffness(ipc: InnerProductComplex, q: int) -> Operator:
    """
    Symmetric form K^q = M^q Δ^q = (d^q)ᵀ M^{q+1} d^q + M^q d^{q-1} (M^{q-1})^{-1} (d^{q-1})ᵀ M^q.
    """
    n = ipc.length
    sparse = ipc.is_diagonal and all(sp.issparse(d) for d in ipc.differentials)
    dim = ipc.dim(q)
    total: Union[np.ndarray, sp.spmatrix] = sp.csr_matrix((dim, dim)) if sparse else np.zeros((dim, dim))
    if q < n:
        d = ipc.differentials[q]
        if sparse:
            total = total + d.T @ sp.diags(ipc.masses[q + 1]) @ d
        else:
            dd = to_dense(d)
            total = total + dd.T @ _dense_mass(ipc.masses[q + 1]) @ dd
    if q > 0:
        d = ipc.differentials[q - 1]
        if sparse:
            md = sp.diags(ipc.masses[q]) @ d
            total = total + md @ sp.diags(1.0 / ipc.masses[q - 1]) @ md.T
        else:
            md = _dense_mass(ipc.masses[q]) @ to_dense(d)
            total = total + md @ mass_solve(ipc.masses[q - 1], md.T)
    return sp.csr_matrix(total) if sparse else np.asarray(total)


def laplacian(ipc: InnerProductComplex, q: int) -> Operator:
    """
    Hodge Laplacian Δ^q = δ^{q+1} d^q + d^{q-1} δ^q.

    Args:
        ipc: Inner-product complex
        q: Degree 0 <= q <= n

    Returns:
        Matrix of Δ^q; M^q Δ^q is symmetric
    """
    if not 0 <= q <= ipc.length:
        raise ValueError(f"degree {q} outside 0..{ipc.length}")
    k = stiffness(ipc, q)
    mass = ipc.masses[q]
    if sp.issparse(k):
        return sp.csr_matrix(sp.diags(1.0 / mass) @ k)
    return mass_solve(mass, k)


def zero_differential_complex(dims: Sequence[int]) -> InnerProductComplex:
    """Complex with identity inner products and all differentials zero."""
    masses = [np.ones(k) for k in dims]
    diffs = [sp.csr_matrix((dims[q + 1], dims[q])) for q in range(len(dims) - 1)]
    return InnerProductComplex(masses, diffs)
