"""
Comparison maps between the small eigenspaces of Δ^q(t) and the geometric complex.

    Q^q(t)  M-orthogonal projector onto the eigenvectors below the detected gap
    I^q(t)  Q^q(t) J^q(t), the projected oscillator placement
    R^q(t)  I (I^# I)^{-1/2}, the polar factor of I
    L^q(t)  S^q(t) Int^q(t), integration twisted by e^{tf} and rescaled

a^q(t) is the Gram volume of Int^q(t) restricted to the tracked small branches; it and the lattice
volumes assemble into the right-hand side of the torsion formula.
"""
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from witten_lab.core.complexes import CellComplex
from witten_lab.core.inner_product import InnerProductComplex
from witten_lab.core.linalg import inverse_sqrt_spd, log_gram_volume, lowest_eigenpairs, mass_apply, norm_estimate
from witten_lab.derham.spectral import DEFAULT_TOL_GROUP, group_eigenvalues
from witten_lab.errors import TorsionError
from witten_lab.morse.complex import MorseData
from witten_lab.morse.functions import MorseFunction
from witten_lab.morse.integration import integration_matrix
from witten_lab.oscillator.placement import JMap, place_on_mesh
from witten_lab.witten.branches import BranchFamily, VirtuallySmallPackage, virtually_small_package
from witten_lab.witten.deform import deform, witten_stiffness
from witten_lab.witten.gaps import DEFAULT_GAP_RATIO, FLOOR_REL, largest_ratio_gap

logger = logging.getLogger(__name__)

SINGULAR_INCLUSION = 1e-8


@dataclass(frozen=True)
class ComparisonBundle:
    """
    Comparison maps of one degree at one t.

    Attributes:
        degree: q
        t: Deformation parameter
        jmap: J^q(t)
        basis: M-orthonormal eigenvectors of Δ^q(t) below the gap (Q = V Vᵀ M)
        values: Their eigenvalues
        gap_ratio: Ratio across the gap Q was cut at
        inclusion: I^q(t), shape (#q-cells, c_q)
        polar: R^q(t), same shape, M-orthonormal columns
        scaled_integration: L^q(t), shape (c_q, #q-cells)
        smallest_singular: Smallest M-singular value of I^q(t)
        condition: Ratio of the largest to the smallest M-singular value of I^q(t)
    """

    degree: int
    t: float
    jmap: JMap
    basis: np.ndarray
    values: np.ndarray
    gap_ratio: float
    inclusion: np.ndarray
    polar: np.ndarray
    scaled_integration: np.ndarray
    smallest_singular: float
    condition: float
    mass: np.ndarray

    @property
    def size(self) -> int:
        return self.basis.shape[1]

    @property
    def projector_defect(self) -> float:
        """Max-norm of VᵀMV - Id; Q² - Q = V (VᵀMV - Id) VᵀM, so this bounds its idempotency defect."""
        if not self.size:
            return 0.0
        gram = self.basis.T @ mass_apply(self.mass, self.basis)
        return float(np.max(np.abs(gram - np.eye(self.size))))

    @property
    def polar_defect(self) -> float:
        """Max-norm of RᵀMR - Id."""
        if not self.size:
            return 0.0
        gram = self.polar.T @ mass_apply(self.mass, self.polar)
        return float(np.max(np.abs(gram - np.eye(self.size))))

    @property
    def isometry_defect(self) -> float:
        """Spectral norm of L^q(t) R^q(t) - Id."""
        if not self.size:
            return 0.0
        product = self.scaled_integration @ self.polar
        return float(np.linalg.norm(product - np.eye(self.size), 2))


def _empty_bundle(jmap: JMap, mass: np.ndarray, q: int, t: float, cells: int) -> ComparisonBundle:
    empty = np.zeros((cells, 0))
    no_rows = np.zeros((0, cells))
    return ComparisonBundle(q, t, jmap, empty, np.zeros(0), np.inf, empty, empty, no_rows, np.inf, 1.0, mass)


def build_comparison(
    complex_: CellComplex,
    ipc: InnerProductComplex,
    mf: MorseFunction,
    md: MorseData,
    q: int,
    t: float,
    m: Optional[int] = None,
    eta: Optional[float] = None,
    min_ratio: float = DEFAULT_GAP_RATIO,
    jmap: Optional[JMap] = None,
    seed: int = 0,
) -> ComparisonBundle:
    """
    Assemble Q, I, R and L in degree q at parameter t.

    Args:
        complex_: Cubical torus mesh
        ipc: Its inner-product complex
        mf: Morse function
        md: Morse data of mf (critical points in the order of the geometric complex)
        q: Degree
        t: Deformation parameter, past the localization threshold
        m: Eigenvalue window for the gap search (default c_q + 6)
        eta: Placement cutoff radius (default from the critical-point separation)
        min_ratio: Smallest acceptable gap ratio
        jmap: Precomputed J^q(t)
        seed: Eigensolver seed

    Raises:
        TorsionError: No gap, a gap at the wrong count, or a numerically singular I^q(t)
    """
    c_q = md.counts[q]
    mass = ipc.masses[q]
    if jmap is None:
        jmap = place_on_mesh(mf, complex_, ipc, md.critical_points, q, t, eta)
    if c_q == 0:
        return _empty_bundle(jmap, mass, q, float(t), ipc.dim(q))

    f_samples = mf.sample_on(complex_)
    k = witten_stiffness(deform(ipc, f_samples, t), q)
    window = min(ipc.dim(q), c_q + 6 if m is None else m)
    pairs = lowest_eigenpairs(k, mass, window, seed=seed)
    values = np.maximum(pairs.values, 0.0)
    if values.size < 2:
        raise TorsionError(f"eigenvalue window of Δ^{q}({t:g}) too small for a gap search")
    i, ratio = largest_ratio_gap(values, FLOOR_REL * norm_estimate(k, mass))
    count = i + 1
    if ratio < min_ratio or count != c_q:
        raise TorsionError(
            f"Δ^{q}({t:g}): gap after {count} eigenvalues with ratio {ratio:.3g}, "
            f"need {c_q} with ratio >= {min_ratio:g}"
        )

    basis = pairs.vectors[:, :count]
    inclusion = basis @ (basis.T @ mass_apply(mass, jmap.matrix))
    gram = inclusion.T @ mass_apply(mass, inclusion)
    inv_sqrt, smallest = inverse_sqrt_spd(gram)
    largest = float(np.max(np.linalg.eigvalsh(0.5 * (gram + gram.T))))
    smallest_singular = float(np.sqrt(max(smallest, 0.0)))
    if smallest_singular < SINGULAR_INCLUSION:
        raise TorsionError(
            f"I^{q}({t:g}) is numerically singular (smallest singular value {smallest_singular:.3e}); "
            "raise t or refine the mesh"
        )
    polar = inclusion @ inv_sqrt
    prefactor = (np.pi / t) ** ((md.dimension - 2 * q) / 4.0)
    scaled = prefactor * integration_matrix(complex_, ipc, md, q, t, centered=True)
    bundle = ComparisonBundle(
        q,
        float(t),
        jmap,
        basis,
        values[:count],
        ratio,
        inclusion,
        polar,
        scaled,
        smallest_singular,
        float(np.sqrt(largest)) / smallest_singular,
        mass,
    )
    logger.debug(
        "comparison q=%d t=%g: gap ratio %.3g, σ_min(I) %.4f, |LR - Id| %.3e",
        q,
        t,
        ratio,
        smallest_singular,
        bundle.isometry_defect,
    )
    return bundle


@dataclass(frozen=True)
class IsometryRow:
    degree: int
    t: float
    defect: float

    @property
    def scaled(self) -> float:
        return self.t * self.defect

    def row(self) -> Tuple[int, float, float, float]:
        return (self.degree, self.t, self.defect, self.scaled)


def isometry_table(
    complex_: CellComplex,
    ipc: InnerProductComplex,
    mf: MorseFunction,
    md: MorseData,
    t_values: Sequence[float],
    degrees: Optional[Sequence[int]] = None,
    eta: Optional[float] = None,
    seed: int = 0,
) -> List[IsometryRow]:
    """‖L^q(t) R^q(t) - Id‖ and t times it, for every requested degree and t."""
    chosen = range(md.dimension + 1) if degrees is None else degrees
    rows = []
    for q in chosen:
        for t in t_values:
            bundle = build_comparison(complex_, ipc, mf, md, q, t, eta=eta, seed=seed)
            rows.append(IsometryRow(q, float(t), bundle.isometry_defect))
    return rows


def isometry_bounded(rows: Sequence[IsometryRow], factor: float = 10.0) -> Dict[int, bool]:
    """Per degree: t·‖LR - Id‖ never exceeds `factor` times its value at the smallest t."""
    verdicts = {}
    for q in sorted({r.degree for r in rows}):
        own = sorted((r for r in rows if r.degree == q), key=lambda r: r.t)
        first = own[0].scaled
        verdicts[q] = all(r.scaled <= factor * max(first, 1e-14) for r in own)
    return verdicts


@dataclass(frozen=True)
class ATrace:
    """
    a^q(t) over a t-grid, stored as logarithms (-inf marks a zero).

    Attributes:
        t_grid: Sample points
        log_a: Shape (n + 1, len(t_grid))
        sizes: Number of small branches per degree
    """

    t_grid: np.ndarray
    log_a: np.ndarray
    sizes: Tuple[int, ...]

    @property
    def a_q(self) -> np.ndarray:
        return np.exp(self.log_a)

    @property
    def log_alternating(self) -> np.ndarray:
        """log a(t) = Σ_q (-1)^q log a^q(t)."""
        signs = np.array([(-1) ** q for q in range(self.log_a.shape[0])], dtype=float)
        with np.errstate(invalid="ignore"):
            return np.sum(signs[:, None] * self.log_a, axis=0)

    @property
    def log_reciprocal_q(self) -> np.ndarray:
        """log of Π_{q>=1} a^q(t)^{-1/q}, the other printed convention."""
        if self.log_a.shape[0] < 2:
            return np.zeros(self.t_grid.size)
        weights = np.array([-1.0 / q for q in range(1, self.log_a.shape[0])])
        with np.errstate(invalid="ignore"):
            return np.sum(weights[:, None] * self.log_a[1:], axis=0)

    def zeros(self) -> List[Tuple[int, float]]:
        """(q, t) samples where a^q vanished."""
        qs, js = np.nonzero(~np.isfinite(self.log_a))
        return [(int(q), float(self.t_grid[j])) for q, j in zip(qs, js)]

    def log_at(self, t: float) -> float:
        hits = np.flatnonzero(np.isclose(self.t_grid, t, rtol=1e-12, atol=1e-12))
        if not hits.size:
            raise ValueError(f"t={t:g} is not a sample of the a-trace")
        return float(self.log_alternating[hits[0]])

    def rows(self) -> List[Tuple[float, ...]]:
        """(t, a^0, ..., a^n, a, a_reciprocal_q) per sample."""
        a = np.exp(self.log_alternating)
        reciprocal = np.exp(self.log_reciprocal_q)
        return [
            (float(t), *(float(v) for v in self.a_q[:, j]), float(a[j]), float(reciprocal[j]))
            for j, t in enumerate(self.t_grid)
        ]


def log_a_q(
    complex_: CellComplex,
    ipc: InnerProductComplex,
    md: MorseData,
    package: VirtuallySmallPackage,
) -> float:
    """log Vol(Int^q(t) restricted to the span of the package), t = package.t (0 gives the plain integral)."""
    q = package.degree
    c_q = md.counts[q]
    if package.count != c_q:
        logger.warning("degree %d: %d small branches for %d critical points", q, package.count, c_q)
    if c_q == 0 and package.count == 0:
        return 0.0
    twisted = integration_matrix(complex_, ipc, md, q, package.t or None)
    return log_gram_volume(twisted @ package.vectors)


def a_functions(
    complex_: CellComplex,
    ipc: InnerProductComplex,
    md: MorseData,
    families: Sequence[BranchFamily],
    betti: Sequence[int],
    t_values: Optional[Sequence[float]] = None,
) -> ATrace:
    """
    a^q(t) for every degree over the common grid of classified branch families.

    Args:
        complex_: Mesh
        ipc: Its inner-product complex
        md: Morse data
        families: One classified BranchFamily per degree, all on the same t-grid
        betti: dim ker Δ^q, splitting each small package into its harmonic and positive parts
        t_values: Subset of the grid (default all of it)

    Returns:
        ATrace; vanishing volumes are recorded as -inf, not raised
    """
    if len(families) != md.dimension + 1:
        raise ValueError(f"need {md.dimension + 1} branch families, got {len(families)}")
    grid = families[0].t_grid if t_values is None else np.asarray(t_values, dtype=float)
    log_a = np.zeros((len(families), grid.size))
    sizes = []
    for q, bf in enumerate(families):
        for j, t in enumerate(grid):
            package = virtually_small_package(bf, float(t), betti[q])
            log_a[q, j] = log_a_q(complex_, ipc, md, package)
        sizes.append(sum(1 for label in bf.labels if label == 0))
    trace = ATrace(np.asarray(grid, dtype=float), log_a, tuple(sizes))
    if trace.zeros():
        logger.warning("a^q vanishes at %s", trace.zeros())
    return trace


@dataclass(frozen=True)
class TorsionRHS:
    """
    ½ Σ_q (-1)^{q+1} q Σ ln λ_{vs,+}^q(0) + ln a(0) - Σ_i (-1)^i ln V^i, term by term.
    """

    eigenvalue_term: float
    a_term: float
    volume_term: float

    @property
    def total(self) -> float:
        return self.eigenvalue_term + self.a_term - self.volume_term

    def within(self, tolerance: float) -> bool:
        return bool(abs(self.total) <= tolerance)

    def to_json(self) -> dict:
        return {
            "eigenvalue_term": self.eigenvalue_term,
            "a_term": self.a_term,
            "volume_term": self.volume_term,
            "total": self.total,
        }


def torsion_rhs(packages: Sequence[VirtuallySmallPackage], log_a0: float, volumes: Sequence[float]) -> TorsionRHS:
    """
    Assemble the right-hand side of the torsion formula at t = 0.

    Args:
        packages: Small packages per degree at t = 0
        log_a0: ln a(0)
        volumes: Lattice volumes V^0, ..., V^n

    Raises:
        TorsionError: A vs,+ eigenvalue or lattice volume is not positive, or a(0) vanishes
    """
    eigen = 0.0
    for package in packages:
        q = package.degree
        positive = package.positive_values
        if np.any(positive <= 0):
            raise TorsionError(f"degree {q}: non-positive vs,+ eigenvalue at t=0")
        eigen += 0.5 * (-1) ** (q + 1) * q * float(np.sum(np.log(positive)))
    if not np.isfinite(log_a0):
        raise TorsionError("a(0) vanishes; the right-hand side is undefined")
    vols = np.asarray(volumes, dtype=float)
    if np.any(vols <= 0):
        raise TorsionError("lattice volumes must be positive")
    volume_term = float(sum((-1) ** i * np.log(v) for i, v in enumerate(vols)))
    rhs = TorsionRHS(eigen, float(log_a0), volume_term)
    logger.info(
        "torsion right-hand side %.6g (eigen %.6g, a %.6g, volumes %.6g)", rhs.total, eigen, log_a0, volume_term
    )
    return rhs


def multiplicity_one_check(bf: BranchFamily, tol_group: float = DEFAULT_TOL_GROUP) -> Dict[int, List[List[int]]]:
    """Clusters whose branches are numerically multiple at the largest t: label -> groups of branch ids."""
    values = bf.values[:, -1]
    found: Dict[int, List[List[int]]] = {}
    for label in sorted({lab for lab in bf.labels if lab is not None}):
        members = [b for b, lab in enumerate(bf.labels) if lab == label]
        order = sorted(members, key=lambda b: values[b])
        groups = group_eigenvalues(values[order], tol_group)
        multiple = [[order[i] for i in g] for g in groups if len(g) > 1]
        if multiple:
            found[label] = multiple
    return found


def nonvanishing_check(trace: ATrace) -> Dict[int, bool]:
    """Per degree: every sampled a^q(t) is nonzero."""
    return {q: bool(np.all(np.isfinite(trace.log_a[q]))) for q in range(trace.log_a.shape[0])}
