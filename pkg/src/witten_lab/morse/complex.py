"""
Signed connecting trajectories and the geometric (Morse) complex with its t-scaling.

I(x, y) for ind x = k + 1, ind y = k counts the flow lines from x to y with sign
ε(γ) = sign det[v, O_y] in the orientation O_x of W^-_x, where v is the direction of motion as
γ reaches y. This is the Stokes orientation, so Int^{k+1} d = ∂ Int^k on unstable cells.
"""
import logging
from math import comb
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import scipy.sparse as sp

from witten_lab.core.inner_product import InnerProductComplex
from witten_lab.core.linalg import numerical_rank
from witten_lab.errors import FlowError, MorseComplexError
from witten_lab.morse.critical import (
    CriticalPoint,
    by_index,
    find_critical_points,
    hessian_frame,
    index_counts,
    ordering_key,
)
from witten_lab.morse.flow import FlowControls, Trajectory, shoot
from witten_lab.morse.functions import MorseFunction, negated

logger = logging.getLogger(__name__)

DEFAULT_CIRCLE_SAMPLES = 64
BISECTION_STEPS = 80
# Fraction of an angular step between the Hessian axes and the first circle sample
SAMPLE_OFFSET = 0.5


@dataclass(frozen=True)
class Connection:
    """Flow line from critical point `source` (index k+1) to `target` (index k), positions in the point list."""

    source: int
    target: int
    sign: int
    trajectory: Trajectory


@dataclass
class MorseData:
    """
    Critical points, signed incidences and the connecting trajectories they were counted from.

    Attributes:
        function: The Morse function
        critical_points: Sorted by (index, value, location)
        incidence: incidence[k][r, c] = I(x, y) with x the r-th point of index k+1, y the c-th of index k
        connections: Every connecting trajectory found
        controls: Flow settings used
    """

    function: MorseFunction
    critical_points: List[CriticalPoint]
    incidence: List[np.ndarray]
    connections: List[Connection] = field(default_factory=list)
    controls: Optional[FlowControls] = None

    @property
    def dimension(self) -> int:
        return self.function.dimension

    @property
    def counts(self) -> List[int]:
        return index_counts(self.critical_points, self.dimension)

    def of_index(self, k: int) -> List[CriticalPoint]:
        return [self.critical_points[i] for i in by_index(self.critical_points, k)]

    def incidence_rows(self) -> List[Tuple[int, int, int, int]]:
        """(k, source position among index k+1, target position among index k, I) for nonzero entries."""
        rows = []
        for k, matrix in enumerate(self.incidence):
            for r, c in zip(*np.nonzero(matrix)):
                rows.append((k, int(r), int(c), int(matrix[r, c])))
        return rows


def manifold_diameter(mf: MorseFunction) -> float:
    if mf.periods is not None:
        return float(np.linalg.norm(mf.periods) / 2.0)
    return 2.0


def _forward(
    mf: MorseFunction, points: List[CriticalPoint], x: int, k: int, controls: FlowControls
) -> List[Connection]:
    """Two shots along ±u from an index-1 point; the sign is the side of the shot."""
    source = points[x]
    found = []
    for side in (1, -1):
        traj = shoot(mf, source, side * source.unstable[:, 0], 1, points, controls)
        if points[traj.limit].index != k:
            raise FlowError(
                f"shot from index-{source.index} point landed on index {points[traj.limit].index}",
                state=traj.end.tolist(),
            )
        found.append(Connection(x, traj.limit, side, traj))
    return found


def _approach_sign(v: np.ndarray, target: CriticalPoint) -> int:
    return int(np.sign(np.linalg.det(np.column_stack([v, target.unstable]))))


def _backward(
    mf: MorseFunction, points: List[CriticalPoint], y: int, n: int, controls: FlowControls
) -> List[Connection]:
    """Two ascending shots along the one stable direction of an index-(n-1) point."""
    target = points[y]
    direction = target.stable[:, 0]
    found = []
    for side in (1, -1):
        traj = shoot(mf, target, side * direction, -1, points, controls)
        source = points[traj.limit]
        if source.index != n:
            raise FlowError(
                f"ascending shot from index-{n - 1} point reached index {source.index}", state=traj.end.tolist()
            )
        forward = Trajectory(traj.points[::-1], traj.values[::-1], y, 1)
        sign = _approach_sign(-side * direction, target) * source.orientation
        found.append(Connection(traj.limit, y, sign, forward))
    return found


def _side(mf: MorseFunction, traj: Trajectory, target: CriticalPoint, radius: float) -> Optional[int]:
    """Side of the unstable direction of `target` on which the trajectory leaves its radius-ball."""
    dist = mf.distance(traj.points, target.location[None, :])
    inside = np.flatnonzero(dist < radius)
    if inside.size == 0:
        return None
    after = np.flatnonzero((np.arange(dist.size) > inside[0]) & (dist >= radius))
    if after.size == 0:
        return None
    delta = mf.displacement(target.location, traj.points[after[0]])
    return int(np.sign(delta @ target.unstable[:, 0]))


@dataclass(frozen=True)
class _Sample:
    theta: float
    trajectory: Trajectory
    sides: Dict[int, Optional[int]]


def _circle(
    mf: MorseFunction,
    points: List[CriticalPoint],
    x: int,
    k: int,
    controls: FlowControls,
    samples: int,
) -> List[Connection]:
    """
    Connections from an index-2 point by sampling its unstable circle.

    A connection to y lies between neighbouring angles whose trajectories leave the ball around y
    on opposite sides of its unstable direction; it is located by bisection until the flow is
    captured at y. Its sign is the exit side of the larger angle. Sample angles sit half a step off
    the Hessian axes, which carry the separatrices of separable functions; a sample captured at an
    index-k point anyway is recorded as a connection with the exit side of a slightly larger angle.
    """
    source = points[x]
    u1, u2 = source.unstable[:, 0], source.unstable[:, 1]
    targets = by_index(points, k)
    locations = np.array([cp.location for cp in points])
    gaps = [float(mf.distance(locations[i], locations[j])) for i in range(len(points)) for j in range(i)]
    radius = 0.25 * min(gaps)
    step = 2.0 * np.pi / samples

    def run(theta: float) -> _Sample:
        traj = shoot(mf, source, np.cos(theta) * u1 + np.sin(theta) * u2, 1, points, controls)
        return _Sample(theta, traj, {y: _side(mf, traj, points[y], radius) for y in targets})

    ring = [run(step * (j + SAMPLE_OFFSET)) for j in range(samples)]
    found = []
    for sample in ring:
        y = sample.trajectory.limit
        if y in targets:
            side = run(sample.theta + 0.25 * step).sides[y]
            if side is None:
                raise FlowError(f"no exit side next to the direct connection at θ={sample.theta:.4f}")
            found.append(Connection(x, y, int(side), sample.trajectory))
    for j in range(samples):
        lo, hi = ring[j], ring[(j + 1) % samples]
        hi_theta = hi.theta + (2.0 * np.pi if j == samples - 1 else 0.0)
        if lo.trajectory.limit in targets or hi.trajectory.limit in targets:
            continue
        crossing = [
            y for y in targets if None not in (lo.sides[y], hi.sides[y]) and lo.sides[y] != hi.sides[y]
        ]
        if not crossing:
            if lo.trajectory.limit != hi.trajectory.limit:
                raise FlowError(
                    f"landing changes between θ={lo.theta:.4f} and θ={hi_theta:.4f} without a resolved crossing; "
                    "increase the circle samples"
                )
            continue
        if len(crossing) > 1:
            raise FlowError(f"several crossings between θ={lo.theta:.4f} and θ={hi_theta:.4f}")
        y = crossing[0]
        a, b = lo.theta, hi_theta
        side_a, side_b = lo.sides[y], hi.sides[y]
        connection = None
        for _ in range(BISECTION_STEPS):
            mid = run(0.5 * (a + b))
            if mid.trajectory.limit == y:
                connection = Connection(x, y, int(side_b), mid.trajectory)
                break
            if mid.sides[y] == side_a:
                a = mid.theta
            elif mid.sides[y] == side_b:
                b = mid.theta
            else:
                raise FlowError(f"lost the crossing towards critical point {y} during bisection", state=[a, b])
        if connection is None:
            raise FlowError(f"bisection towards critical point {y} was never captured", state=[a, b])
        found.append(connection)
    return found


def _strategy(k: int, n: int) -> str:
    if k + 1 == 1:
        return "forward"
    if k == n - 1:
        return "backward"
    if k + 1 == 2:
        return "circle"
    raise FlowError(f"no trajectory search for index pair ({k + 1}, {k}) in dimension {n}")


def connections_for_degree(
    mf: MorseFunction,
    points: List[CriticalPoint],
    k: int,
    controls: FlowControls,
    samples: int = DEFAULT_CIRCLE_SAMPLES,
) -> List[Connection]:
    """Every connecting trajectory from index k+1 to index k."""
    n = mf.dimension
    sources, targets = by_index(points, k + 1), by_index(points, k)
    if not sources or not targets:
        return []
    strategy = _strategy(k, n)
    found: List[Connection] = []
    if strategy == "forward":
        for x in sources:
            found += _forward(mf, points, x, k, controls)
    elif strategy == "backward":
        for y in targets:
            found += _backward(mf, points, y, n, controls)
    else:
        for x in sources:
            found += _circle(mf, points, x, k, controls, samples)
    logger.debug("degree %d: %d connections by %s search", k, len(found), strategy)
    return found


def _incidence(points: List[CriticalPoint], k: int, connections: List[Connection]) -> np.ndarray:
    rows = {p: r for r, p in enumerate(by_index(points, k + 1))}
    cols = {p: c for c, p in enumerate(by_index(points, k))}
    matrix = np.zeros((len(rows), len(cols)), dtype=np.int64)
    for conn in connections:
        matrix[rows[conn.source], cols[conn.target]] += conn.sign
    return matrix


def count_signed_trajectories(
    mf: MorseFunction,
    x: int,
    y: int,
    points: List[CriticalPoint],
    controls: FlowControls,
    samples: int = DEFAULT_CIRCLE_SAMPLES,
) -> Tuple[int, List[Connection]]:
    """
    I(x, y) and the connecting trajectories from point x (index k+1) to point y (index k).

    Args:
        mf: Morse function
        x, y: Positions in the critical point list
        points: All critical points
        controls: Flow settings
        samples: Circle samples for index-2 sources

    Returns:
        (signed count, connections)
    """
    k = points[y].index
    if points[x].index != k + 1:
        raise ValueError(f"index difference must be 1, got {points[x].index} and {k}")
    found = connections_for_degree(mf, points, k, controls, samples)
    connections = [c for c in found if c.source == x and c.target == y]
    return int(sum(c.sign for c in connections)), connections


def manifold_betti(mf: MorseFunction) -> List[int]:
    """Betti numbers of the flat torus (binomial) or the 2-sphere."""
    if mf.manifold == "sphere":
        return [1, 0, 1]
    return [comb(mf.dimension, q) for q in range(mf.dimension + 1)]


def compute_morse_data(
    mf: MorseFunction,
    seed_resolution: int = 8,
    controls: Optional[FlowControls] = None,
    samples: int = DEFAULT_CIRCLE_SAMPLES,
    verify_samples: bool = False,
) -> MorseData:
    """
    Find critical points, count signed trajectories and validate the resulting complex.

    Args:
        mf: Morse function
        seed_resolution: Newton seeds per axis
        controls: Flow settings (defaults from the manifold diameter)
        samples: Circle samples for index-2 sources
        verify_samples: Recount circle searches with doubled samples and compare

    Raises:
        MorseComplexError: ∂∘∂ ≠ 0, or cohomology ranks differ from the manifold's Betti numbers
        FlowError: Trajectory search failed or is unstable under sample refinement
    """
    points = find_critical_points(mf, seed_resolution)
    controls = controls or FlowControls.for_diameter(manifold_diameter(mf))
    n = mf.dimension
    incidence, connections = [], []
    for k in range(n):
        found = connections_for_degree(mf, points, k, controls, samples)
        matrix = _incidence(points, k, found)
        if verify_samples and found and _strategy(k, n) == "circle":
            again = _incidence(points, k, connections_for_degree(mf, points, k, controls, 2 * samples))
            if not np.array_equal(matrix, again):
                raise FlowError(f"incidences of degree {k} change when the circle samples double")
        incidence.append(matrix)
        connections += found
    md = MorseData(mf, points, incidence, connections, controls)
    _validate(md)
    logger.info("Morse complex of %s: counts %s, cohomology %s", mf.name, md.counts, cohomology_ranks(md))
    return md


def _validate(md: MorseData) -> None:
    for k in range(len(md.incidence) - 1):
        product = md.incidence[k + 1] @ md.incidence[k]
        if product.size and np.any(product != 0):
            raise MorseComplexError(f"∂^{k + 1}∘∂^{k} has entry {int(np.abs(product).max())}")
    ranks = cohomology_ranks(md)
    expected = manifold_betti(md.function)
    if ranks != expected:
        raise MorseComplexError(f"Morse cohomology {ranks} differs from the Betti numbers {expected}")


def geometric_complex(md: MorseData) -> InnerProductComplex:
    """(C^*, ∂) with C^k = Maps(Cr_k, R) and the E_x basis orthonormal."""
    counts = md.counts
    masses = [np.ones(c) for c in counts]
    diffs = [sp.csr_matrix(m.astype(float).reshape(counts[k + 1], counts[k])) for k, m in enumerate(md.incidence)]
    return InnerProductComplex(masses, diffs)


def cohomology_ranks(md: MorseData) -> List[int]:
    counts = md.counts
    ranks = [numerical_rank(m) if m.size else 0 for m in md.incidence]
    outgoing = ranks + [0]
    incoming = [0] + ranks
    return [counts[q] - outgoing[q] - incoming[q] for q in range(len(counts))]


def morse_inequalities(md: MorseData, betti: List[int]) -> List[bool]:
    return [c >= b for c, b in zip(md.counts, betti)]


def scaling_map(md: MorseData, q: int, t: float) -> np.ndarray:
    """
    Diagonal of S^q(t): E_x -> (π/t)^{(n-2q)/4} e^{-t f(x)} E_x.

    Args:
        md: Morse data
        q: Degree
        t: Deformation parameter, t > 0

    Returns:
        1-D array over the index-q points
    """
    if t <= 0:
        raise ValueError("scaling needs t > 0")
    values = np.array([cp.value for cp in md.of_index(q)])
    return (np.pi / t) ** ((md.dimension - 2 * q) / 4.0) * np.exp(-t * values)


def scaled_complex(md: MorseData, t: float) -> InnerProductComplex:
    """Complex with ∂^q(t) = S^{q+1}(t) ∂^q S^q(t)^{-1}."""
    base = geometric_complex(md)
    diffs = []
    for q, d in enumerate(base.differentials):
        upper, lower = scaling_map(md, q + 1, t), scaling_map(md, q, t)
        diffs.append(sp.csr_matrix(sp.diags(upper) @ d @ sp.diags(1.0 / lower)))
    return InnerProductComplex(list(base.masses), diffs)


def _frame_sign(cp_f: CriticalPoint, unstable_neg: np.ndarray) -> int:
    """sign det[O^-_f | O^-_{-f}] at a point, with the outward normal first on the sphere."""
    columns = [cp_f.unstable, unstable_neg]
    if cp_f.frame.shape[0] > cp_f.frame.shape[1]:
        columns.insert(0, cp_f.location[:, None])
    return int(np.sign(np.linalg.det(np.column_stack(columns))))


def dual_incidence(
    md: MorseData, dual_points: Optional[List[CriticalPoint]] = None
) -> Tuple[List[CriticalPoint], List[np.ndarray]]:
    """
    Incidences of -f predicted from those of f.

    Reversing a flow line from x (index k+1) to y (index k) gives
    I^{-f}(y, x) = (-1)^{k+1} κ_x κ_y I^f(x, y) with κ_p = sign det[O^-_f(p) | O^-_{-f}(p)].

    Args:
        md: Morse data of f
        dual_points: Critical points of -f to order the result by (defaults to the same locations
            with -f Hessian frames, sorted the usual way)

    Returns:
        (critical points of -f, incidence matrices of -f)
    """
    neg = negated(md.function)
    n = md.dimension
    if dual_points is None:
        dual_points = []
        for cp in md.critical_points:
            values, frame = hessian_frame(neg, cp.location)
            dual_points.append(CriticalPoint(cp.location, n - cp.index, -cp.value, values, frame))
        dual_points.sort(key=ordering_key)
    match = {}
    for i, cp in enumerate(md.critical_points):
        dist = [float(neg.distance(cp.location, d.location)) for d in dual_points]
        match[i] = int(np.argmin(dist))
    kappa = {i: _frame_sign(cp, dual_points[match[i]].unstable) for i, cp in enumerate(md.critical_points)}

    incidence = []
    for j in range(n):
        rows = {p: r for r, p in enumerate(by_index(dual_points, j + 1))}
        cols = {p: c for c, p in enumerate(by_index(dual_points, j))}
        incidence.append(np.zeros((len(rows), len(cols)), dtype=np.int64))
    for k, matrix in enumerate(md.incidence):
        xs, ys = by_index(md.critical_points, k + 1), by_index(md.critical_points, k)
        j = n - k - 1
        rows = {p: r for r, p in enumerate(by_index(dual_points, j + 1))}
        cols = {p: c for c, p in enumerate(by_index(dual_points, j))}
        for r, x in enumerate(xs):
            for c, y in enumerate(ys):
                if matrix[r, c]:
                    sign = (-1) ** (k + 1) * kappa[x] * kappa[y]
                    incidence[j][rows[match[y]], cols[match[x]]] = sign * int(matrix[r, c])
    return dual_points, incidence
