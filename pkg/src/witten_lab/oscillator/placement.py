"""
Placement map J^q(t): critical points of index q to cut-off oscillator ground forms on the mesh.

Each E_y is sent to the normalized ground form of the local model, written in the Morse chart
z = |Λ|^{1/2} Qᵀ (x - y) of the Hessian at y:

    ω_y = β(t)^{-1} (t/π)^{n/4} Π|λ_i|^{1/4} γ_η(|z|) e^{-t|z|²/2} ξ_1 ∧ ... ∧ ξ_q

with ξ_j the unit unstable eigen-covectors. For unit Hessians this is the model ground form.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from witten_lab.core.complexes import CellComplex
from witten_lab.core.inner_product import InnerProductComplex
from witten_lab.core.linalg import mass_apply
from witten_lab.errors import ConstructionError, ResolutionCapError
from witten_lab.morse.critical import CriticalPoint
from witten_lab.morse.functions import MorseFunction
from witten_lab.oscillator.cutoff import CutoffProfile

logger = logging.getLogger(__name__)

ISOMETRY_TOLERANCE = 0.02
# Default η keeps the chart balls of every pair this far inside their separation
ETA_FRACTION = 0.45


@dataclass(frozen=True)
class JMap:
    """
    J^q(t) as a dense matrix with its Gram diagnostics.

    Attributes:
        degree: q
        t: Deformation parameter
        eta: Cutoff radius in chart coordinates
        points: The index-q critical points, one per column
        matrix: Shape (#q-cells, c_q); column y holds the cochain of ω_y
        gram: Jᵀ M J
    """

    degree: int
    t: float
    eta: float
    points: Tuple[CriticalPoint, ...]
    matrix: np.ndarray
    gram: np.ndarray

    @property
    def gram_deviation(self) -> float:
        if self.gram.size == 0:
            return 0.0
        return float(np.max(np.abs(self.gram - np.eye(self.gram.shape[0]))))

    @property
    def within_tolerance(self) -> bool:
        return self.gram_deviation <= ISOMETRY_TOLERANCE

    @property
    def rank(self) -> int:
        return int(np.linalg.matrix_rank(self.matrix)) if self.matrix.size else 0

    def apply(self, coefficients: np.ndarray) -> np.ndarray:
        """Cochain J(Σ a_y E_y)."""
        return self.matrix @ np.asarray(coefficients, dtype=float)

    def supports(self) -> List[np.ndarray]:
        return [np.flatnonzero(self.matrix[:, j]) for j in range(self.matrix.shape[1])]


def chart_radius(cp: CriticalPoint, eta: float) -> float:
    """Radius of the support of ω_y in the manifold metric."""
    return eta / float(np.sqrt(cp.min_curvature))


def default_eta(mf: MorseFunction, points: Sequence[CriticalPoint]) -> float:
    """Largest η (up to ETA_FRACTION) for which the chart balls of all critical points are disjoint."""
    best = np.inf
    for i, a in enumerate(points):
        for b in points[:i]:
            gap = float(mf.distance(a.location, b.location))
            scale = np.sqrt(min(a.min_curvature, b.min_curvature))
            best = min(best, ETA_FRACTION * gap * scale)
    return float(best) if np.isfinite(best) else 1.0


def overlapping_pairs(mf: MorseFunction, points: Sequence[CriticalPoint], eta: float) -> List[Tuple[int, int]]:
    """Pairs (i, j), j < i, of critical points whose chart balls meet."""
    pairs = []
    for i, a in enumerate(points):
        for j, b in enumerate(points[:i]):
            if float(mf.distance(a.location, b.location)) < chart_radius(a, eta) + chart_radius(b, eta):
                pairs.append((i, j))
    return pairs


def _component_blocks(complex_: CellComplex, q: int, cp: CriticalPoint) -> np.ndarray:
    """Coefficient of dx_J in ξ_1 ∧ ... ∧ ξ_q for every q-cell (J its axis tuple)."""
    per_block = complex_.counts[q] // len(complex_.axes_blocks(q))
    coefficients = []
    for axes in complex_.axes_blocks(q):
        value = float(np.linalg.det(cp.frame[list(axes), :q])) if q else 1.0
        coefficients.append(np.full(per_block, value))
    return np.concatenate(coefficients)


def ground_form_values(
    mf: MorseFunction, complex_: CellComplex, cp: CriticalPoint, t: float, cutoff: CutoffProfile
) -> np.ndarray:
    """Point values of ω_y at the barycenters of the q-cells, q = ind(y)."""
    n, q = mf.dimension, cp.index
    centers = complex_.barycenters[q]
    delta = mf.displacement(cp.location[None, :], centers)
    curvature = np.abs(cp.eigenvalues)
    z = (delta @ cp.frame) * np.sqrt(curvature)
    r = np.linalg.norm(z, axis=1)
    amplitude = (t / np.pi) ** (n / 4.0) * float(np.prod(curvature ** 0.25))
    radial = np.asarray(cutoff(r)) * np.exp(-0.5 * t * r**2)
    return amplitude * radial / cutoff.normalization(n, t) * _component_blocks(complex_, q, cp)


def place_on_mesh(
    mf: MorseFunction,
    complex_: CellComplex,
    ipc: InnerProductComplex,
    critical_points: Sequence[CriticalPoint],
    q: int,
    t: float,
    eta: Optional[float] = None,
    profile: str = "bump",
) -> JMap:
    """
    Build J^q(t) on a cubical torus mesh.

    Args:
        mf: Morse function the points belong to
        complex_: Cubical torus mesh
        ipc: Inner products on its cochains (gives the normalization and the Gram matrix)
        critical_points: All critical points (chart balls of every pair must be disjoint)
        q: Degree
        t: Deformation parameter, within the resolution cap of the mesh
        eta: Chart cutoff radius (defaults to default_eta)
        profile: Cutoff profile name

    Returns:
        JMap with images of the index-q points in order

    Raises:
        ConstructionError: Non-flat manifold, or overlapping chart balls (pairs listed)
        ResolutionCapError: t beyond (0.5/h)²
    """
    if complex_.topology != "torus" or mf.manifold != "torus":
        raise ConstructionError("oscillator placement needs a flat torus; the sphere has no flat Morse charts")
    if t <= 0:
        raise ValueError("placement needs t > 0")
    if t > complex_.t_cap():
        raise ResolutionCapError("t_grid.t_max", t, complex_.spacing)
    eta = default_eta(mf, critical_points) if eta is None else eta
    pairs = overlapping_pairs(mf, critical_points, eta)
    if pairs:
        listed = ", ".join(
            f"{np.round(critical_points[i].location, 4).tolist()}~{np.round(critical_points[j].location, 4).tolist()}"
            for i, j in pairs
        )
        raise ConstructionError(f"chart balls of radius η={eta:g} overlap for critical points {listed}")

    cutoff = CutoffProfile(eta, profile)
    chosen = tuple(cp for cp in critical_points if cp.index == q)
    columns = [ipc.from_components(q, ground_form_values(mf, complex_, cp, t, cutoff)) for cp in chosen]
    matrix = np.column_stack(columns) if columns else np.zeros((ipc.dim(q), 0))
    gram = matrix.T @ mass_apply(ipc.masses[q], matrix)
    jmap = JMap(q, float(t), float(eta), chosen, matrix, gram)
    if not jmap.within_tolerance:
        logger.warning(
            "J^%d(t=%g) Gram deviation %.3g exceeds %.2g; refine the mesh or raise t",
            q,
            t,
            jmap.gram_deviation,
            ISOMETRY_TOLERANCE,
        )
    logger.debug("J^%d(t=%g): %d columns, Gram deviation %.3e", q, t, len(chosen), jmap.gram_deviation)
    return jmap
