"""
Integration of mesh cochains over unstable cells, the map Int^q from cochains to Maps(Cr_q, R).

Unstable cells are realized as mesh chains. Separable functions on cubical tori have axis-aligned
box cells that are exact chains, so Int commutes with the differentials exactly. Otherwise index 0
uses the nearest vertex, index 1 the two separatrices paired through cubical Whitney
interpolation, and index n the whole manifold when f has a single maximum.
"""
import itertools
import logging
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
from numpy.polynomial.legendre import leggauss

from witten_lab.core.complexes import CellComplex
from witten_lab.core.inner_product import Cochain, InnerProductComplex
from witten_lab.errors import OverflowGuardError, UnrepresentableCellError
from witten_lab.morse.complex import MorseData
from witten_lab.morse.critical import CriticalPoint, by_index
from witten_lab.witten.deform import MAX_EXPONENT

logger = logging.getLogger(__name__)

GRID_TOLERANCE = 1e-6
# Polyline pieces are at most this fraction of the mesh spacing
SUBSEGMENT = 0.25
GAUSS_NODES = 2


@dataclass(frozen=True)
class UnstableChain:
    """
    Mesh chain representing the unstable cell of one critical point.

    Attributes:
        point: Position of the critical point in the Morse data
        degree: Its index q
        kind: "box", "vertex", "polyline" or "manifold"
        weights: Dense coefficients over the q-cells; Int(ω)(x) = weights · (integrals of ω)
    """

    point: int
    degree: int
    kind: str
    weights: np.ndarray

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.weights)


def _twist(mf_values: np.ndarray, t: Optional[float], shift: float) -> np.ndarray:
    if not t:
        return np.ones_like(mf_values)
    exponent = t * (mf_values - shift)
    worst = float(np.max(np.abs(exponent))) if exponent.size else 0.0
    if worst > MAX_EXPONENT:
        raise OverflowGuardError(worst)
    return np.exp(exponent)


def _require_torus(complex_: CellComplex, md: MorseData, kind: str) -> None:
    if complex_.topology != "torus" or complex_.resolution is None:
        raise UnrepresentableCellError(f"{kind} cells need a cubical torus mesh")
    if md.function.periods is None or not np.allclose(md.function.periods, complex_.periods):
        raise UnrepresentableCellError("function periods differ from the mesh periods")


def _grid_index(coordinate: float, spacing: float, what: str) -> int:
    u = coordinate / spacing
    k = int(np.round(u))
    if abs(u - k) > GRID_TOLERANCE:
        raise UnrepresentableCellError(
            f"{what} at {coordinate:.6g} is not a mesh node (spacing {spacing:.6g}); "
            "use a resolution divisible by twice every frequency"
        )
    return k


def _box_chain(complex_: CellComplex, md: MorseData, x: int, t: Optional[float], shift: float) -> np.ndarray:
    """Signed indicator of the product of the unstable axis intervals, twisted cell by cell."""
    mf, cp = md.function, md.critical_points[x]
    n, q = mf.dimension, cp.index
    h = complex_.periods / complex_.resolution
    axes = tuple(int(np.argmax(np.abs(cp.unstable[:, j]))) for j in range(q))
    ordered = tuple(sorted(axes))

    ranges = []
    for i in range(n):
        profile = mf.axes[i]
        here = _grid_index(float(cp.location[i]), float(h[i]), f"critical coordinate x_{i}")
        if i not in ordered:
            ranges.append(np.array([here]))
            continue
        crit = np.sort(np.asarray(profile.critical, dtype=float))
        offset = (crit - cp.location[i] + 0.5 * mf.periods[i]) % mf.periods[i] - 0.5 * mf.periods[i]
        k = int(np.argmin(np.abs(offset)))
        lower = crit[k - 1] if k > 0 else crit[-1] - mf.periods[i]
        upper = crit[k + 1] if k + 1 < crit.size else crit[0] + mf.periods[i]
        a = _grid_index(float(lower), float(h[i]), f"neighbouring critical coordinate x_{i}")
        b = _grid_index(float(upper), float(h[i]), f"neighbouring critical coordinate x_{i}")
        ranges.append(np.arange(a, b))
    base = np.array(list(itertools.product(*ranges)), dtype=np.int64).reshape(-1, n)
    cells = complex_.cell_index(q, base, ordered)

    # Orientation of the unstable frame against e_{I_1} ∧ ... ∧ e_{I_q}
    sign = int(np.sign(np.linalg.det(cp.unstable[list(ordered), :]))) if q else 1
    weights = np.zeros(complex_.counts[q])
    centers = complex_.barycenters[q][cells]
    weights[cells] = sign * _twist(np.asarray(mf.value(centers)), t, shift)
    return weights


def _nearest_vertex(complex_: CellComplex, md: MorseData, cp: CriticalPoint) -> int:
    if complex_.topology == "sphere":
        return int(np.argmin(np.linalg.norm(complex_.vertex_positions - cp.location, axis=1)))
    h = complex_.periods / complex_.resolution
    return int(complex_.cell_index(0, np.round(cp.location / h).astype(np.int64), ())[0])


def _vertex_chain(complex_: CellComplex, md: MorseData, x: int, t: Optional[float], shift: float) -> np.ndarray:
    v = _nearest_vertex(complex_, md, md.critical_points[x])
    weights = np.zeros(complex_.counts[0])
    position = complex_.barycenters[0][v][None, :]
    weights[v] = _twist(np.asarray(md.function.value(position)), t, shift)[0]
    return weights


def _manifold_chain(complex_: CellComplex, md: MorseData, x: int, t: Optional[float], shift: float) -> np.ndarray:
    """Every top cell, signed by the orientation of the unstable frame of the only maximum."""
    n = md.dimension
    cp = md.critical_points[x]
    if len(md.of_index(n)) != 1:
        raise UnrepresentableCellError(f"{len(md.of_index(n))} points of index {n}; full-manifold cells need one")
    if complex_.topology == "sphere":
        sign = int(np.sign(np.linalg.det(np.column_stack([cp.location, cp.unstable]))))
        centers = complex_.barycenters[n]
        centers = centers / np.linalg.norm(centers, axis=1, keepdims=True)
    else:
        sign = cp.orientation
        centers = complex_.barycenters[n]
    return sign * _twist(np.asarray(md.function.value(centers)), t, shift)


def whitney_stencil(complex_: CellComplex, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Cubical Whitney interpolation of 1-cochains at points.

    Component i of the interpolated form at P is Σ_c coef[P, i, c] · ω(ids[P, i, c]) with the
    2^{n-1} edges along axis i of the cube containing P.

    Returns:
        (ids, coef), both of shape (m, n, 2^{n-1})
    """
    n = complex_.dimension
    h = complex_.periods / complex_.resolution
    u = np.atleast_2d(points) / h
    base = np.floor(u).astype(np.int64)
    frac = u - base
    ids, coef = [], []
    for i in range(n):
        others = [j for j in range(n) if j != i]
        ids_i, coef_i = [], []
        for bits in itertools.product((0, 1), repeat=n - 1):
            corner = base.copy()
            w = np.full(u.shape[0], 1.0 / h[i])
            for j, b in zip(others, bits):
                corner[:, j] += b
                w = w * (frac[:, j] if b else 1.0 - frac[:, j])
            ids_i.append(complex_.cell_index(1, corner, (i,)))
            coef_i.append(w)
        ids.append(np.stack(ids_i, axis=1))
        coef.append(np.stack(coef_i, axis=1))
    return np.stack(ids, axis=1), np.stack(coef, axis=1)


def _refine(polyline: np.ndarray, max_length: float) -> Tuple[np.ndarray, np.ndarray]:
    """Split every segment into pieces no longer than max_length; returns piece starts and ends."""
    a, b = polyline[:-1], polyline[1:]
    lengths = np.linalg.norm(b - a, axis=1)
    reps = np.maximum(1, np.ceil(lengths / max_length)).astype(np.int64)
    seg = np.repeat(np.arange(a.shape[0]), reps)
    k = np.arange(seg.size) - np.repeat(np.cumsum(reps) - reps, reps)
    step = (b - a)[seg] / reps[seg][:, None]
    starts = a[seg] + step * k[:, None]
    return starts, starts + step


def polyline_weights(
    complex_: CellComplex,
    md: MorseData,
    polyline: np.ndarray,
    t: Optional[float] = None,
    shift: float = 0.0,
) -> np.ndarray:
    """Coefficients over the edges of ∫_polyline e^{t(f - shift)} W(ω), W the Whitney interpolant."""
    h = complex_.periods / complex_.resolution
    starts, ends = _refine(np.asarray(polyline, dtype=float), SUBSEGMENT * float(np.min(h)))
    nodes, gauss = leggauss(GAUSS_NODES)
    weights = np.zeros(complex_.counts[1])
    tangent = ends - starts
    for node, gw in zip(nodes, gauss):
        pts = 0.5 * (starts + ends) + 0.5 * node * tangent
        ids, coef = whitney_stencil(complex_, pts)
        scale = 0.5 * gw * _twist(np.asarray(md.function.value(pts)), t, shift)
        contrib = coef * tangent[:, :, None] * scale[:, None, None]
        np.add.at(weights, ids.ravel(), contrib.ravel())
    return weights


def _separatrix_chain(complex_: CellComplex, md: MorseData, x: int, t: Optional[float], shift: float) -> np.ndarray:
    """The two descending separatrices of an index-1 point, oriented along its unstable direction."""
    branches = [c for c in md.connections if c.source == x and md.critical_points[c.target].index == 0]
    if len(branches) != 2:
        raise UnrepresentableCellError(f"index-1 point {x} has {len(branches)} recorded separatrices, expected 2")
    weights = np.zeros(complex_.counts[1])
    for conn in branches:
        target = md.critical_points[conn.target].location
        end = conn.trajectory.end + md.function.displacement(conn.trajectory.end, target)
        path = np.vstack([conn.trajectory.points, end[None, :]])
        weights += conn.sign * polyline_weights(complex_, md, path, t, shift)
    return weights


def unstable_chain(
    complex_: CellComplex,
    md: MorseData,
    x: int,
    t: Optional[float] = None,
    centered: bool = False,
) -> UnstableChain:
    """
    Mesh chain of the unstable cell of critical point x, optionally twisted by e^{tf}.

    Args:
        complex_: Mesh the cochains live on
        md: Morse data (index-1 separatrices are taken from its connections)
        x: Position of the critical point in md.critical_points
        t: Twist parameter; None or 0 for the plain integral
        centered: Twist by e^{t(f - f(x))} instead, the form used with the scaling S^q(t)

    Raises:
        UnrepresentableCellError: The cell cannot be realized on this mesh
    """
    cp = md.critical_points[x]
    q, n = cp.index, md.dimension
    shift = cp.value if centered else 0.0
    if md.function.separable:
        _require_torus(complex_, md, "box")
        return UnstableChain(x, q, "box", _box_chain(complex_, md, x, t, shift))
    if q == 0:
        return UnstableChain(x, q, "vertex", _vertex_chain(complex_, md, x, t, shift))
    if q == n:
        return UnstableChain(x, q, "manifold", _manifold_chain(complex_, md, x, t, shift))
    if q == 1:
        _require_torus(complex_, md, "separatrix")
        return UnstableChain(x, q, "polyline", _separatrix_chain(complex_, md, x, t, shift))
    raise UnrepresentableCellError(f"no mesh realization of a {q}-dimensional unstable cell in dimension {n}")


def _cell_weights(ipc: Optional[InnerProductComplex], q: int, weights: np.ndarray) -> np.ndarray:
    """Chain coefficients acting on cochain coefficients instead of cell integrals."""
    if ipc is None:
        return weights
    return ipc.to_integrals(q, weights)


def integrate_over_unstable(
    complex_: CellComplex,
    ipc: Optional[InnerProductComplex],
    md: MorseData,
    omega: Union[Cochain, np.ndarray],
    x: int,
    t: Optional[float] = None,
) -> float:
    """
    Int(ω)(x): pairing of a degree-q cochain with the unstable cell of an index-q point.

    With t the integrand is multiplied by e^{t f}.
    """
    chain = unstable_chain(complex_, md, x, t)
    values = omega.values if isinstance(omega, Cochain) else np.asarray(omega, dtype=float)
    if isinstance(omega, Cochain) and omega.degree != chain.degree:
        raise ValueError(f"cochain of degree {omega.degree} paired with an index-{chain.degree} cell")
    return float(_cell_weights(ipc, chain.degree, chain.weights) @ values)


def integration_matrix(
    complex_: CellComplex,
    ipc: Optional[InnerProductComplex],
    md: MorseData,
    q: int,
    t: Optional[float] = None,
    centered: bool = False,
) -> np.ndarray:
    """
    Int^q as a dense matrix: rows are the index-q points in order, columns the q-cells.

    Returns:
        Array of shape (c_q, #q-cells)
    """
    rows = [
        _cell_weights(ipc, q, unstable_chain(complex_, md, x, t, centered).weights)
        for x in by_index(md.critical_points, q)
    ]
    if not rows:
        return np.zeros((0, complex_.counts[q]))
    return np.vstack(rows)


def chain_map_defect(
    complex_: CellComplex,
    ipc: InnerProductComplex,
    md: MorseData,
    q: int,
    rng: np.random.Generator,
    samples: int = 4,
) -> float:
    """
    Relative defect max |Int^{q+1}(dω) - ∂ Int^q(ω)| over random cochains ω.

    Returns:
        The worst defect divided by the worst |Int^{q+1}(dω)| (absolute when that vanishes)
    """
    lower = integration_matrix(complex_, ipc, md, q)
    upper = integration_matrix(complex_, ipc, md, q + 1)
    d = ipc.differentials[q]
    worst, scale = 0.0, 0.0
    for _ in range(samples):
        omega = rng.standard_normal(ipc.dim(q))
        lhs = upper @ (d @ omega)
        rhs = md.incidence[q] @ (lower @ omega)
        worst = max(worst, float(np.max(np.abs(lhs - rhs), initial=0.0)))
        scale = max(scale, float(np.max(np.abs(lhs), initial=0.0)))
    logger.debug("Int chain-map defect in degree %d: %.3e (scale %.3e)", q, worst, scale)
    return worst / scale if scale > 0 else worst
