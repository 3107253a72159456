"""
Diagnostics on tracked branches: growth bounds, localization near critical points, cluster
windows, geometric constants of f and the f / -f duality of Witten spectra.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import polynomial as P

from witten_lab.core.complexes import CellComplex
from witten_lab.core.inner_product import InnerProductComplex
from witten_lab.core.linalg import lowest_eigenpairs, mass_apply, mass_matrix, norm_estimate
from witten_lab.morse.critical import CriticalPoint
from witten_lab.morse.functions import MorseFunction
from witten_lab.witten.branches import BranchFamily
from witten_lab.witten.deform import deform, quadratic_decomposition, witten_stiffness

logger = logging.getLogger(__name__)

LOCALIZATION_THRESHOLD = 0.05


@dataclass(frozen=True)
class GrowthFit:
    """
    Quadratic upper bound λ(t) <= c_1 + c_2 t + c_3 t² for one branch.

    The least-squares quadratic is lifted by its largest undershoot so that it bounds every sample.
    """

    branch: int
    coefficients: Tuple[float, float, float]
    lift: float

    def bound(self, t: np.ndarray) -> np.ndarray:
        c1, c2, c3 = self.coefficients
        return c1 + c2 * t + c3 * t**2


def fit_growth_bound(bf: BranchFamily) -> List[GrowthFit]:
    """Fit λ ≤ c_1 + c_2 t + c_3 t² per branch of the family."""
    t = bf.t_grid
    deg = min(2, t.size - 1)
    fits = []
    for b in range(bf.m):
        coef = np.zeros(3)
        coef[: deg + 1] = P.polyfit(t, bf.values[b], deg)
        lift = max(float(np.max(bf.values[b] - P.polyval(t, coef))), 0.0)
        coef[0] += lift
        fits.append(GrowthFit(b, (float(coef[0]), float(coef[1]), float(coef[2])), lift))
    return fits


def _cell_points(complex_: CellComplex, q: int, mf: MorseFunction) -> np.ndarray:
    centers = complex_.barycenters[q]
    if mf.manifold == "sphere":
        centers = centers / np.linalg.norm(centers, axis=1, keepdims=True)
    return centers


def outside_mask(
    complex_: CellComplex, q: int, mf: MorseFunction, points: Sequence[CriticalPoint], radius: float
) -> np.ndarray:
    """True for q-cells whose barycenter lies at distance >= radius from every critical point."""
    centers = _cell_points(complex_, q, mf)
    outside = np.ones(centers.shape[0], dtype=bool)
    for cp in points:
        outside &= mf.distance(centers, cp.location[None, :]) >= radius
    return outside


def localization_profile(
    bf: BranchFamily,
    complex_: CellComplex,
    ipc: InnerProductComplex,
    mf: MorseFunction,
    points: Sequence[CriticalPoint],
    radius: float,
    branches: Optional[Sequence[int]] = None,
) -> np.ndarray:
    """
    M-mass fraction of each branch eigenvector outside the radius-balls around the critical points.

    Returns:
        Array of shape (len(branches), len(t_grid))
    """
    chosen = list(range(bf.m)) if branches is None else list(branches)
    outside = outside_mask(complex_, bf.degree, mf, points, radius)
    mass = ipc.masses[bf.degree]
    profile = np.zeros((len(chosen), bf.t_grid.size))
    for j, vectors in enumerate(bf.vectors):
        v = vectors[:, chosen]
        weighted = v * mass_apply(mass, v)
        total = weighted.sum(axis=0)
        profile[:, j] = weighted[outside].sum(axis=0) / np.where(total > 0, total, 1.0)
    return profile


def is_monotone_localized(
    profile: np.ndarray,
    t_grid: np.ndarray,
    t_start: float,
    threshold: float = LOCALIZATION_THRESHOLD,
    slack: float = 1e-9,
) -> bool:
    """Outside mass nonincreasing for t >= t_start and below threshold at the last grid point."""
    row = np.asarray(profile, dtype=float)
    tail = row[np.asarray(t_grid) >= t_start]
    if tail.size == 0:
        return False
    return bool(np.all(np.diff(tail) <= slack) and tail[-1] < threshold)


@dataclass(frozen=True)
class GeometricConstants:
    """
    Attributes:
        min_gradient: inf |grad f| over sample points outside the balls
        max_hessian: sup of the Hessian operator norm over all sample points
        b_norm: Norm estimate of the t-coefficient B of Δ^q(t), when a complex was supplied
        samples: Number of sample points used
    """

    min_gradient: float
    max_hessian: float
    b_norm: Optional[float]
    samples: int


def _sample_points(mf: MorseFunction, resolution: int) -> np.ndarray:
    if mf.manifold == "sphere":
        count = resolution**2
        k = np.arange(count) + 0.5
        z = 1.0 - 2.0 * k / count
        phi = np.pi * (1.0 + 5.0**0.5) * k
        r = np.sqrt(1.0 - z**2)
        return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    grid = np.indices((resolution,) * mf.dimension).reshape(mf.dimension, -1).T
    return (grid + 0.5) * (mf.periods / resolution)


def geometric_constants(
    mf: MorseFunction,
    points: Sequence[CriticalPoint],
    radius: float,
    resolution: int = 64,
    ipc: Optional[InnerProductComplex] = None,
    f_samples: Optional[Sequence[np.ndarray]] = None,
    q: int = 0,
) -> GeometricConstants:
    """
    Sampled constants governing the gap: the gradient bound off the balls and the size of B.

    Args:
        mf: Morse function
        points: Its critical points
        radius: Ball radius around each critical point
        resolution: Sample points per axis (resolution² on the sphere)
        ipc, f_samples, q: When given, also estimate the norm of the t-coefficient B of Δ^q(t)
    """
    pts = _sample_points(mf, resolution)
    far = np.ones(pts.shape[0], dtype=bool)
    for cp in points:
        far &= mf.distance(pts, cp.location[None, :]) >= radius
    grad = np.linalg.norm(mf.riemannian_gradient(pts), axis=1)
    min_gradient = float(grad[far].min()) if far.any() else float("nan")
    max_hessian = 0.0
    for x in pts:
        h = mf.riemannian_hessian(x, mf.tangent_basis(x))
        max_hessian = max(max_hessian, float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (h + h.T))))))
    b_norm = None
    if ipc is not None and f_samples is not None:
        decomposition = quadratic_decomposition(ipc, f_samples, q)
        b_norm = norm_estimate(mass_matrix(ipc.masses[q]) @ decomposition.B, ipc.masses[q])
    logger.debug("geometric constants: inf|grad f| = %.4g, sup|Hess f| = %.4g", min_gradient, max_hessian)
    return GeometricConstants(min_gradient, max_hessian, b_norm, int(pts.shape[0]))


@dataclass(frozen=True)
class ClusterWindow:
    """
    Normalized eigenvalues λ/t of cluster k lie in (2k - δ, 2k + δ); `free_above` is the
    eigenvalue-free interval between this cluster and the next one, None when they touch.
    """

    label: int
    count: int
    delta: float
    interval: Tuple[float, float]
    free_above: Optional[Tuple[float, float]]


def cluster_windows(bf: BranchFamily, t: float) -> List[ClusterWindow]:
    """Per-cluster windows of the classified family at grid point t (t > 0)."""
    if t <= 0:
        raise ValueError("cluster windows need t > 0")
    normalized = bf.values_at(t) / t
    labels = sorted({label for label in bf.labels if label is not None})
    spans = []
    for k in labels:
        members = [b for b, label in enumerate(bf.labels) if label == k]
        delta = float(np.max(np.abs(normalized[members] - 2 * k)))
        spans.append((k, len(members), delta, ((2 * k - delta) * t, (2 * k + delta) * t)))
    windows = []
    for i, (k, count, delta, interval) in enumerate(spans):
        free = None
        if i + 1 < len(spans):
            lo, hi = interval[1], spans[i + 1][3][0]
            free = (lo, hi) if hi > lo else None
        windows.append(ClusterWindow(k, count, delta, interval, free))
    return windows


def witten_duality_defect(
    ipc: InnerProductComplex,
    f_samples: Sequence[np.ndarray],
    neg_samples: Sequence[np.ndarray],
    q: int,
    t: float,
    count: int,
    seed: int = 0,
) -> float:
    """
    Relative distance between the lowest spectra of Δ^{q}(t) for f and Δ^{n-q}(t) for -f.

    Args:
        ipc: Base complex
        f_samples: f per degree
        neg_samples: -f per degree (sampled on the same complex)
        q: Degree
        t: Deformation parameter
        count: Number of eigenvalues compared
    """
    n = ipc.length
    own = lowest_eigenpairs(witten_stiffness(deform(ipc, f_samples, t), q), ipc.masses[q], count, seed=seed)
    dual = lowest_eigenpairs(
        witten_stiffness(deform(ipc, neg_samples, t), n - q), ipc.masses[n - q], count, seed=seed
    )
    m = min(own.values.size, dual.values.size)
    if m == 0:
        return 0.0
    top = max(float(np.max(np.abs(own.values[:m]))), float(np.max(np.abs(dual.values[:m]))), 1e-300)
    defect = float(np.max(np.abs(own.values[:m] - dual.values[:m])) / top)
    logger.debug("f/-f duality of Δ^%d at t=%g: %.3e", q, t, defect)
    return defect
