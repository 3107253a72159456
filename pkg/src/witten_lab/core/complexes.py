"""
Oriented cell complexes of discretized closed manifolds: cubical flat tori and icospheres.
"""
import itertools
import json
import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from witten_lab.errors import ConstructionError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CellComplex:
    """
    Oriented cell complex with integer coboundaries and placement data.

    Cells of degree q are stored in blocks; `coboundaries[q]` is D^q with shape
    (#cells_{q+1}, #cells_q). For cubical tori each q-cell is a base vertex multi-index plus an
    increasing axis tuple; for the icosphere a sorted vertex tuple (edges) or an outward
    oriented vertex triple (faces).

    Attributes:
        dimension: Manifold dimension n
        topology: "torus" or "sphere"
        barycenters: Per degree, array (#cells_q, ambient dimension)
        coboundaries: Per degree q < n, sparse integer D^q
        primal_volumes: Per degree, measure of each cell (vertices have measure 1)
        dual_volumes: Per degree, measure of the dual cell (top cells have measure 1)
        cell_data: Per degree, integer orientation data (see above)
        periods: Torus periods, None for the sphere
        resolution: Cells per axis (torus)
        subdivisions: Subdivision level (sphere)
    """

    dimension: int
    topology: str
    barycenters: List[np.ndarray]
    coboundaries: List[sp.csr_matrix]
    primal_volumes: List[np.ndarray]
    dual_volumes: List[np.ndarray]
    cell_data: List[np.ndarray]
    periods: Optional[np.ndarray] = None
    resolution: Optional[int] = None
    subdivisions: Optional[int] = None
    vertex_positions: Optional[np.ndarray] = None

    @property
    def counts(self) -> List[int]:
        return [b.shape[0] for b in self.barycenters]

    @property
    def euler_characteristic(self) -> int:
        return int(sum((-1) ** q * c for q, c in enumerate(self.counts)))

    @property
    def spacing(self) -> float:
        """Largest edge length h, the mesh width used by the resolution cap."""
        if self.periods is not None and self.resolution is not None:
            return float(np.max(self.periods) / self.resolution)
        return float(np.max(self.primal_volumes[1]))

    @property
    def diameter(self) -> float:
        if self.periods is not None:
            return float(np.linalg.norm(self.periods) / 2.0)
        return 2.0

    def t_cap(self) -> float:
        """Largest t allowed by the rule h <= 0.5 / sqrt(t)."""
        return (0.5 / self.spacing) ** 2

    def describe(self) -> Dict[str, Any]:
        """JSON-ready description of the complex."""
        return {
            "dimension": self.dimension,
            "topology": self.topology,
            "resolution": self.resolution,
            "subdivisions": self.subdivisions,
            "periods": None if self.periods is None else [float(p) for p in self.periods],
            "cell_counts": self.counts,
        }

    def to_json(self) -> str:
        return json.dumps(self.describe(), sort_keys=True, indent=2)

    def coboundary_triplets(self, q: int) -> List[Tuple[int, int, int]]:
        """Coordinate-format (row, col, value) triplets of D^q."""
        coo = self.coboundaries[q].tocoo()
        order = np.lexsort((coo.col, coo.row))
        return [(int(coo.row[i]), int(coo.col[i]), int(coo.data[i])) for i in order]

    def nilpotency_defect(self) -> int:
        """Max-norm of D^{q+1} D^q over all degrees (integer arithmetic)."""
        worst = 0
        for q in range(self.dimension - 1):
            product = self.coboundaries[q + 1] @ self.coboundaries[q]
            if product.nnz:
                worst = max(worst, int(np.abs(product.data).max()))
        return worst

    def wrap(self, points: np.ndarray) -> np.ndarray:
        """Map covering-space points into the fundamental domain (torus only)."""
        if self.periods is None:
            return points
        return np.mod(points, self.periods)

    def axes_blocks(self, q: int) -> Tuple[Tuple[int, ...], ...]:
        """Axis tuples of the q-cell blocks of a cubical torus, in storage order."""
        return tuple(itertools.combinations(range(self.dimension), q))

    def cell_index(self, q: int, vertices: np.ndarray, axes: Tuple[int, ...]) -> np.ndarray:
        """
        Storage indices of cubical q-cells.

        Args:
            q: Degree
            vertices: Base vertex multi-indices, shape (m, n); wrapped modulo the resolution
            axes: Increasing axis tuple shared by all cells

        Returns:
            Integer array of length m
        """
        if self.resolution is None:
            raise ConstructionError("cell_index needs a cubical torus")
        block = self.axes_blocks(q).index(tuple(axes))
        res = self.resolution
        flat = np.ravel_multi_index(tuple(np.mod(np.atleast_2d(vertices), res).T), (res,) * self.dimension)
        return block * res**self.dimension + flat


def _validate(complex_: CellComplex) -> CellComplex:
    defect = complex_.nilpotency_defect()
    if defect != 0:
        raise ConstructionError(f"coboundary composition is not zero (max entry {defect})")
    for q in range(complex_.dimension):
        faces = np.diff(complex_.coboundaries[q].indptr)
        expected = 2 * (q + 1) if complex_.topology == "torus" else q + 2
        bad = np.flatnonzero(faces != expected)
        if bad.size:
            raise ConstructionError(f"{q + 1}-cell {int(bad[0])} has {int(faces[bad[0]])} faces, expected {expected}")
    return complex_


def build_torus_grid(n: int, resolution: int, periods: Optional[Sequence[float]] = None) -> CellComplex:
    """
    Build the cubical complex of the flat torus R^n / (periods Z^n).

    A q-cell is a base vertex v with an increasing axis tuple I; its boundary is
    Σ_a (-1)^a [(v + e_{I_a}, I \\ I_a) - (v, I \\ I_a)].

    Args:
        n: Dimension, 1 to 3
        resolution: Cells per axis, at least 4
        periods: Period per axis (defaults to the unit torus)

    Returns:
        The validated CellComplex
    """
    if n not in (1, 2, 3):
        raise ConstructionError(f"torus dimension must be 1..3, got {n}")
    if resolution < 4:
        raise ConstructionError(f"resolution {resolution} < 4 gives degenerate stencils")
    periods_arr = np.ones(n) if periods is None else np.asarray(periods, dtype=float)
    if periods_arr.shape != (n,) or np.any(periods_arr <= 0):
        raise ConstructionError(f"periods must be {n} positive numbers, got {periods}")

    h = periods_arr / resolution
    shape = (resolution,) * n
    n_vertices = resolution**n
    grid = np.indices(shape).reshape(n, -1).T  # (n_vertices, n), C order

    axes_by_degree = [tuple(itertools.combinations(range(n), q)) for q in range(n + 1)]
    barycenters, primal, dual, data = [], [], [], []
    for q, axes_list in enumerate(axes_by_degree):
        centers, pv, dv, cells = [], [], [], []
        for axes in axes_list:
            offset = np.zeros(n)
            offset[list(axes)] = 0.5
            centers.append((grid + offset) * h)
            inside = np.prod(h[list(axes)]) if axes else 1.0
            outside = np.prod([h[i] for i in range(n) if i not in axes]) if len(axes) < n else 1.0
            pv.append(np.full(n_vertices, inside))
            dv.append(np.full(n_vertices, outside))
            mask = np.zeros((n_vertices, n), dtype=np.int64)
            mask[:, list(axes)] = 1
            cells.append(np.hstack([grid, mask]))
        barycenters.append(np.vstack(centers))
        primal.append(np.concatenate(pv))
        dual.append(np.concatenate(dv))
        data.append(np.vstack(cells))

    def flat(idx: np.ndarray) -> np.ndarray:
        return np.ravel_multi_index(tuple(np.mod(idx, resolution).T), shape)

    vertex_ids = np.arange(n_vertices)
    coboundaries = []
    for q in range(n):
        block_of = {axes: k for k, axes in enumerate(axes_by_degree[q])}
        rows, cols, vals = [], [], []
        for j, big in enumerate(axes_by_degree[q + 1]):
            row_ids = j * n_vertices + vertex_ids
            for a, axis in enumerate(big):
                face = tuple(x for x in big if x != axis)
                base = block_of[face] * n_vertices
                sign = -1 if a % 2 else 1
                shifted = grid.copy()
                shifted[:, axis] += 1
                rows += [row_ids, row_ids]
                cols += [base + flat(shifted), base + vertex_ids]
                vals += [np.full(n_vertices, sign), np.full(n_vertices, -sign)]
        shape_q = (len(axes_by_degree[q + 1]) * n_vertices, len(axes_by_degree[q]) * n_vertices)
        matrix = sp.coo_matrix(
            (np.concatenate(vals).astype(np.int64), (np.concatenate(rows), np.concatenate(cols))), shape=shape_q
        ).tocsr()
        matrix.sum_duplicates()
        coboundaries.append(matrix)

    logger.debug("torus n=%d resolution=%d counts=%s", n, resolution, [b.shape[0] for b in barycenters])
    return _validate(
        CellComplex(
            dimension=n,
            topology="torus",
            barycenters=barycenters,
            coboundaries=coboundaries,
            primal_volumes=primal,
            dual_volumes=dual,
            cell_data=data,
            periods=periods_arr,
            resolution=resolution,
        )
    )


_PHI = (1.0 + 5.0**0.5) / 2.0
_ICOSAHEDRON_VERTICES = [
    (-1, _PHI, 0), (1, _PHI, 0), (-1, -_PHI, 0), (1, -_PHI, 0),
    (0, -1, _PHI), (0, 1, _PHI), (0, -1, -_PHI), (0, 1, -_PHI),
    (_PHI, 0, -1), (_PHI, 0, 1), (-_PHI, 0, -1), (-_PHI, 0, 1),
]  # fmt: skip
_ICOSAHEDRON_FACES = [
    (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
    (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
    (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
    (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
]  # fmt: skip


def _subdivide(vertices: List[np.ndarray], faces: List[Tuple[int, int, int]]) -> List[Tuple[int, int, int]]:
    cache: Dict[Tuple[int, int], int] = {}

    def midpoint(a: int, b: int) -> int:
        key = (min(a, b), max(a, b))
        if key not in cache:
            m = vertices[a] + vertices[b]
            vertices.append(m / np.linalg.norm(m))
            cache[key] = len(vertices) - 1
        return cache[key]

    refined = []
    for a, b, c in faces:
        ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
        refined += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
    return refined


def _cot(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    u, v = a - p, b - p
    return float(np.dot(u, v) / np.linalg.norm(np.cross(u, v)))


def build_icosphere(subdivisions: int) -> CellComplex:
    """
    Triangulated unit 2-sphere from repeated 1-to-4 splits of the icosahedron.

    Duals are circumcentric: edge duals from the cotangent formula, vertex duals as the sum of
    |e| |⋆e| / 4 over incident edges.

    Args:
        subdivisions: Number of refinement steps, 0 to 6

    Returns:
        The validated CellComplex
    """
    if not 0 <= subdivisions <= 6:
        raise ConstructionError(f"subdivisions must lie in 0..6, got {subdivisions}")
    vertices = [np.asarray(v, dtype=float) / np.linalg.norm(v) for v in _ICOSAHEDRON_VERTICES]
    faces = list(_ICOSAHEDRON_FACES)
    for _ in range(subdivisions):
        faces = _subdivide(vertices, faces)
    pos = np.array(vertices)

    # Orient every face outward
    oriented = []
    for a, b, c in faces:
        normal = np.cross(pos[b] - pos[a], pos[c] - pos[a])
        oriented.append((a, b, c) if np.dot(normal, pos[a] + pos[b] + pos[c]) > 0 else (a, c, b))

    edge_index: Dict[Tuple[int, int], int] = {}
    edge_opposite: Dict[Tuple[int, int], List[int]] = {}
    for a, b, c in oriented:
        for u, v, w in ((a, b, c), (b, c, a), (c, a, b)):
            key = (min(u, v), max(u, v))
            if key not in edge_index:
                edge_index[key] = len(edge_index)
            edge_opposite.setdefault(key, []).append(w)
    edges = sorted(edge_index, key=edge_index.get)

    n_v, n_e, n_f = len(pos), len(edges), len(oriented)
    d0 = sp.coo_matrix(
        (
            np.tile([-1, 1], n_e),
            (np.repeat(np.arange(n_e), 2), np.array(edges).ravel()),
        ),
        shape=(n_e, n_v),
    ).tocsr()
    rows, cols, vals = [], [], []
    for f, (a, b, c) in enumerate(oriented):
        for u, v in ((a, b), (b, c), (c, a)):
            rows.append(f)
            cols.append(edge_index[(min(u, v), max(u, v))])
            vals.append(1 if u < v else -1)
    d1 = sp.coo_matrix((vals, (rows, cols)), shape=(n_f, n_e)).tocsr()

    edge_len = np.array([np.linalg.norm(pos[u] - pos[v]) for u, v in edges])
    edge_dual = np.zeros(n_e)
    for k, (u, v) in enumerate(edges):
        cot = sum(_cot(pos[w], pos[u], pos[v]) for w in edge_opposite[(u, v)])
        edge_dual[k] = 0.5 * cot * edge_len[k]
        if edge_dual[k] <= 0:
            raise ConstructionError(f"non-positive dual volume {edge_dual[k]:.3e} at edge {k} {(u, v)}")
    vertex_dual = np.zeros(n_v)
    for k, (u, v) in enumerate(edges):
        share = 0.25 * edge_len[k] * edge_dual[k]
        vertex_dual[u] += share
        vertex_dual[v] += share
    tri = pos[np.array(oriented)]
    areas = 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)

    logger.debug("icosphere subdivisions=%d counts=(%d, %d, %d)", subdivisions, n_v, n_e, n_f)
    return _validate(
        CellComplex(
            dimension=2,
            topology="sphere",
            barycenters=[pos, 0.5 * (pos[[u for u, _ in edges]] + pos[[v for _, v in edges]]), tri.mean(axis=1)],
            coboundaries=[d0, d1],
            primal_volumes=[np.ones(n_v), edge_len, areas],
            dual_volumes=[vertex_dual, edge_dual, np.ones(n_f)],
            cell_data=[np.arange(n_v)[:, None], np.array(edges), np.array(oriented)],
            subdivisions=subdivisions,
            vertex_positions=pos,
        )
    )
