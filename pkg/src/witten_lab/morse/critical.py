"""
Critical points of Morse functions: Newton search from a seed lattice, deduplication and
Hessian eigen-frames.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from witten_lab.errors import DegenerateCriticalPointError, MorseError
from witten_lab.morse.functions import MorseFunction

logger = logging.getLogger(__name__)

GRADIENT_TOLERANCE = 1e-10
DEGENERACY_TOLERANCE = 1e-6
DEDUP_DISTANCE = 1e-6
# Irrational seed offset keeps seeds off symmetry lines of the catalog functions.
SEED_OFFSET = 1.0 / np.pi


@dataclass(frozen=True)
class CriticalPoint:
    """
    Nondegenerate critical point with its Hessian frame.

    Attributes:
        location: Point in the fundamental domain (ambient coordinates on the sphere)
        index: Number of negative Hessian eigenvalues
        value: f(location)
        eigenvalues: Hessian eigenvalues, ascending
        frame: Ambient eigenvectors as columns, same order; the first `index` columns are the
            ordered unstable frame that orients W^-
    """

    location: np.ndarray
    index: int
    value: float
    eigenvalues: np.ndarray
    frame: np.ndarray

    @property
    def unstable(self) -> np.ndarray:
        return self.frame[:, : self.index]

    @property
    def stable(self) -> np.ndarray:
        return self.frame[:, self.index :]

    @property
    def orientation(self) -> int:
        """Sign of det[unstable | stable] against the coordinate orientation (tori only)."""
        return int(np.sign(np.linalg.det(self.frame))) if self.frame.shape[0] == self.frame.shape[1] else 1

    @property
    def min_curvature(self) -> float:
        return float(np.min(np.abs(self.eigenvalues)))

    def row(self) -> Tuple[float, ...]:
        return (self.index, *[float(v) for v in self.location], self.value)


def _normalize_columns(frame: np.ndarray) -> np.ndarray:
    """Flip every column so that its largest-magnitude entry is positive."""
    out = frame.copy()
    for j in range(out.shape[1]):
        i = int(np.argmax(np.abs(out[:, j])))
        if out[i, j] < 0:
            out[:, j] = -out[:, j]
    return out


def hessian_frame(mf: MorseFunction, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Ascending Hessian eigenvalues and ambient eigenvector columns at a point.

    Diagonal Hessians give coordinate frames ordered by (eigenvalue, axis).
    """
    basis = mf.tangent_basis(x)
    h = mf.riemannian_hessian(x, basis)
    h = 0.5 * (h + h.T)
    if mf.manifold == "torus" and np.all(h == np.diag(np.diag(h))):
        diag = np.diag(h)
        order = np.lexsort((np.arange(diag.size), diag))
        return diag[order], np.eye(diag.size)[:, order]
    values, vectors = np.linalg.eigh(h)
    return values, _normalize_columns(basis @ vectors)


def _seeds(mf: MorseFunction, resolution: int) -> np.ndarray:
    if mf.manifold == "sphere":
        count = resolution**2
        k = np.arange(count) + 0.5
        z = 1.0 - 2.0 * k / count
        phi = np.pi * (1.0 + 5.0**0.5) * k
        r = np.sqrt(1.0 - z**2)
        return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    grid = np.indices((resolution,) * mf.dimension).reshape(mf.dimension, -1).T
    return (grid + SEED_OFFSET) * (mf.periods / resolution)


def _newton_torus(
    mf: MorseFunction, seeds: np.ndarray, max_iter: int, max_step: float
) -> Tuple[np.ndarray, np.ndarray]:
    x = seeds.copy()
    for _ in range(max_iter):
        g = mf.gradient(x)
        step = -np.einsum("kij,kj->ki", np.linalg.pinv(mf.hessian(x)), g)
        length = np.linalg.norm(step, axis=1, keepdims=True)
        x = x + step * np.minimum(1.0, max_step / np.maximum(length, 1e-300))
    converged = np.linalg.norm(mf.gradient(x), axis=1) <= GRADIENT_TOLERANCE
    wrapped = mf.wrap(x)
    # Points a rounding error below a period belong at 0
    wrapped = np.where(mf.periods - wrapped < 1e-9 * mf.periods, 0.0, wrapped)
    return wrapped, converged


def _newton_sphere(
    mf: MorseFunction, seeds: np.ndarray, max_iter: int, max_step: float
) -> Tuple[np.ndarray, np.ndarray]:
    points, ok = [], []
    for seed in seeds:
        x = seed / np.linalg.norm(seed)
        for _ in range(max_iter):
            basis = mf.tangent_basis(x)
            g = basis.T @ mf.riemannian_gradient(x[None, :])[0]
            step = -np.linalg.pinv(mf.riemannian_hessian(x, basis)) @ g
            length = float(np.linalg.norm(step))
            if length > max_step:
                step *= max_step / length
            x = x + basis @ step
            x = x / np.linalg.norm(x)
        points.append(x)
        ok.append(np.linalg.norm(mf.riemannian_gradient(x[None, :])[0]) <= GRADIENT_TOLERANCE)
    return np.array(points), np.array(ok)


def _expected_euler(mf: MorseFunction) -> int:
    return 2 if mf.manifold == "sphere" else 0


def find_critical_points(
    mf: MorseFunction,
    seed_resolution: int = 8,
    max_iter: int = 60,
    expected_euler: Optional[int] = None,
) -> List[CriticalPoint]:
    """
    Locate every critical point by Newton iteration from a seed lattice.

    Args:
        mf: Morse function
        seed_resolution: Seeds per axis on tori (seed_resolution² Fibonacci seeds on the sphere)
        max_iter: Newton iterations per seed
        expected_euler: Euler characteristic the alternating index count must match
            (defaults to the manifold's)

    Returns:
        Critical points sorted by (index, value, location)

    Raises:
        DegenerateCriticalPointError: A Hessian eigenvalue below 1e-6 in magnitude
        MorseError: No critical point found, or the index counts miss the Euler characteristic
    """
    if seed_resolution < 8:
        raise MorseError(f"seed resolution {seed_resolution} < 8 per axis")
    seeds = _seeds(mf, seed_resolution)
    if mf.manifold == "sphere":
        points, converged = _newton_sphere(mf, seeds, max_iter, 0.5)
    else:
        points, converged = _newton_torus(mf, seeds, max_iter, 0.5 * float(np.min(mf.periods)) / seed_resolution)

    failed = seeds[~converged]
    if failed.size:
        lo, hi = failed.min(axis=0), failed.max(axis=0)
        logger.warning(
            "Newton diverged from %d of %d seeds in the region %s..%s",
            failed.shape[0],
            seeds.shape[0],
            np.round(lo, 4).tolist(),
            np.round(hi, 4).tolist(),
        )

    unique: List[np.ndarray] = []
    for x in points[converged]:
        if all(float(mf.distance(x, y)) >= DEDUP_DISTANCE for y in unique):
            unique.append(x)
    if not unique:
        raise MorseError("no critical points found; a function on a closed manifold has at least two")

    found = []
    for x in unique:
        values, frame = hessian_frame(mf, x)
        weakest = int(np.argmin(np.abs(values)))
        if abs(values[weakest]) < DEGENERACY_TOLERANCE:
            raise DegenerateCriticalPointError(np.round(x, 8).tolist(), float(values[weakest]))
        index = int(np.count_nonzero(values < 0))
        found.append(CriticalPoint(x, index, float(mf(x)), values, frame))
    found.sort(key=ordering_key)

    counts = index_counts(found, mf.dimension)
    alternating = sum((-1) ** k * c for k, c in enumerate(counts))
    euler = _expected_euler(mf) if expected_euler is None else expected_euler
    if alternating != euler:
        raise MorseError(f"index counts {counts} give Euler characteristic {alternating}, expected {euler}")
    logger.info("%s: %d critical points, index counts %s", mf.name, len(found), counts)
    return found


def ordering_key(cp: CriticalPoint) -> Tuple:
    """Sort key (index, value, location) used for every critical-point list."""
    return (cp.index, round(cp.value, 12), tuple(float(v) for v in np.round(cp.location, 9)))


def index_counts(points: List[CriticalPoint], n: int) -> List[int]:
    """c_k = number of critical points of index k, for k = 0..n."""
    counts = [0] * (n + 1)
    for cp in points:
        counts[cp.index] += 1
    return counts


def by_index(points: List[CriticalPoint], k: int) -> List[int]:
    """Positions (in `points`) of the critical points of index k, in order."""
    return [i for i, cp in enumerate(points) if cp.index == k]
