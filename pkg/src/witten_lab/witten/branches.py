"""
Continuation of eigenvalue branches of Witten Laplacians over a t-grid.

Branches are anchored at the largest t, where the lowest eigenpairs sort into oscillator
clusters, and continued toward smaller t inside a padded window of lowest eigenpairs. Consecutive
steps are matched by optimal assignment on |M-inner products|; nearly degenerate groups are first
rotated onto each other (principal angles). A matched overlap is measured against the whole cluster
of the candidate (eigenvalues within a relative `cluster_gap`), so near-degenerate clusters are matched
as subspaces. A step is halved while some overlap stays below `overlap_min` and halving still helps.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from witten_lab.core.inner_product import InnerProductComplex
from witten_lab.core.linalg import Mass, lowest_eigenpairs, mass_apply, norm_estimate
from witten_lab.derham.spectral import DEFAULT_TOL_GROUP, group_eigenvalues
from witten_lab.errors import BranchError, ConvergenceError
from witten_lab.witten.deform import deform, witten_stiffness

logger = logging.getLogger(__name__)

# Above this many branches the assignment is greedy.
ASSIGNMENT_LIMIT = 64
LABEL_TOLERANCE = 0.25
# Relative eigenvalue gap below which candidates count as one cluster in the overlap test.
CLUSTER_GAP = 1e-3
# Least gain in the worst overlap for a halving to count as progress.
HALVING_GAIN = 1e-3


@dataclass(frozen=True)
class BranchFamily:
    """
    Tracked eigenpair curves t -> (λ_α(t), ω_α(t)) of Δ^q(t).

    Attributes:
        degree: Form degree q
        t_grid: Increasing grid
        values: Eigenvalues, shape (m, len(t_grid))
        vectors: Per grid point, M-orthonormal eigenvectors as columns in branch order
        min_overlap: Worst matched cluster overlap on the way into each grid point (1 at the anchor)
        resolved: False for branches whose matching stayed below overlap_min after refinement
        labels: Cluster label per branch, None while unclassified or unresolved
        refinements: Number of step halvings used
        window: Number of eigenpairs solved per t
        scale: Norm estimate of the operator at the anchor
    """

    degree: int
    t_grid: np.ndarray
    values: np.ndarray
    vectors: List[np.ndarray] = field(repr=False)
    min_overlap: np.ndarray
    resolved: np.ndarray
    labels: Tuple[Optional[int], ...]
    refinements: int = 0
    window: int = 0
    scale: float = 0.0

    @property
    def m(self) -> int:
        return int(self.values.shape[0])

    def index_of(self, t: float) -> int:
        hits = np.flatnonzero(np.isclose(self.t_grid, t, rtol=1e-12, atol=1e-12))
        if not hits.size:
            raise ValueError(f"t={t:g} is not a grid point")
        return int(hits[0])

    def values_at(self, t: float) -> np.ndarray:
        return self.values[:, self.index_of(t)]

    def unresolved_count(self) -> int:
        return int(np.count_nonzero(~self.resolved))

    def rows(self) -> List[Tuple[int, int, float, float, str, float]]:
        """(degree, branch_id, t, eigenvalue, cluster_label, min_overlap) rows."""
        out = []
        for b in range(self.m):
            label = "unresolved" if self.labels[b] is None else str(self.labels[b])
            for j, t in enumerate(self.t_grid):
                out.append((self.degree, b, float(t), float(self.values[b, j]), label, float(self.min_overlap[b, j])))
        return out


@dataclass
class _State:
    t: float
    values: np.ndarray
    vectors: np.ndarray


def _procrustes(block: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Rotation R of the columns of a group maximizing the diagonal of block[rows] @ R.

    Returns:
        (rows, R) with rows the best-aligned partners of the group, sorted by weight
    """
    g = block.shape[1]
    weights = np.sum(block**2, axis=1)
    rows = np.argsort(-weights, kind="stable")[: min(g, block.shape[0])]
    u, _, wt = np.linalg.svd(block[rows], full_matrices=True)
    r = len(rows)
    pad = np.eye(g)
    pad[:r, :r] = u.T
    return rows, wt.T @ pad


def _align_groups(
    prev: _State,
    cand_values: np.ndarray,
    cand_vectors: np.ndarray,
    mass: Mass,
    tol_group: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """Rotate degenerate groups of both sides toward each other; returns (prev_vectors, cand_vectors)."""
    prev_vectors = prev.vectors.copy()
    cand_vectors = cand_vectors.copy()
    for group in group_eigenvalues(prev.values, tol_group):
        if len(group) < 2:
            continue
        block = cand_vectors.T @ mass_apply(mass, prev_vectors[:, group])
        _, rotation = _procrustes(block)
        prev_vectors[:, group] = prev_vectors[:, group] @ rotation
    for group in group_eigenvalues(cand_values, tol_group):
        if len(group) < 2:
            continue
        block = prev_vectors.T @ mass_apply(mass, cand_vectors[:, group])
        _, rotation = _procrustes(block)
        cand_vectors[:, group] = cand_vectors[:, group] @ rotation
    return prev_vectors, cand_vectors


def _assign(overlap: np.ndarray) -> np.ndarray:
    """Column assigned to each row, maximizing total overlap."""
    if overlap.shape[0] <= ASSIGNMENT_LIMIT:
        rows, cols = linear_sum_assignment(-overlap)
        assigned = np.empty(overlap.shape[0], dtype=int)
        assigned[rows] = cols
        return assigned
    assigned = np.full(overlap.shape[0], -1)
    work = overlap.copy()
    for _ in range(overlap.shape[0]):
        i, j = np.unravel_index(np.argmax(work), work.shape)
        assigned[i] = j
        work[i, :] = -1.0
        work[:, j] = -1.0
    return assigned


def cluster_overlaps(overlap: np.ndarray, cand_values: np.ndarray, cols: np.ndarray, cluster_gap: float) -> np.ndarray:
    """
    Norm of the projection of each previous vector onto the cluster of its assigned candidate.

    Args:
        overlap: |M-inner products|, previous vectors as rows, candidates as columns
        cand_values: Candidate eigenvalues, increasing
        cols: Candidate assigned to each row
        cluster_gap: Relative gap chaining candidates into one cluster

    Returns:
        Overlaps in [0, 1], at least the single-vector overlap of the assignment
    """
    member = np.empty(len(cand_values), dtype=int)
    for k, group in enumerate(group_eigenvalues(cand_values, cluster_gap)):
        member[group] = k
    out = np.array([np.linalg.norm(overlap[b, member == member[c]]) for b, c in enumerate(cols)])
    return np.minimum(out, 1.0)


def _match(
    prev: _State,
    t: float,
    cand_values: np.ndarray,
    cand_vectors: np.ndarray,
    mass: Mass,
    tol_group: float,
    cluster_gap: float,
) -> Tuple[_State, np.ndarray, np.ndarray]:
    prev_vectors, cand_vectors = _align_groups(prev, cand_values, cand_vectors, mass, tol_group)
    signed = prev_vectors.T @ mass_apply(mass, cand_vectors)
    overlap = np.abs(signed)
    cols = _assign(overlap)
    rows = np.arange(len(cols))
    signs = np.where(signed[rows, cols] < 0, -1.0, 1.0)
    nxt = _State(t, cand_values[cols], cand_vectors[:, cols] * signs[None, :])
    return nxt, cluster_overlaps(overlap, cand_values, cols, max(cluster_gap, tol_group)), prev_vectors


class _Solver:
    """Lowest eigenpairs of Δ^q(t) in a fixed window."""

    def __init__(self, ipc: InnerProductComplex, f_samples: Sequence[np.ndarray], q: int, window: int, seed: int):
        self.ipc = ipc
        self.f_samples = f_samples
        self.q = q
        self.window = window
        self.seed = seed
        self.solves = 0

    def __call__(self, t: float) -> Tuple[np.ndarray, np.ndarray]:
        dc = deform(self.ipc, self.f_samples, t)
        pairs = lowest_eigenpairs(witten_stiffness(dc, self.q), self.ipc.masses[self.q], self.window, seed=self.seed)
        self.solves += 1
        return pairs.values, pairs.vectors


def _continue(
    state: _State,
    t_target: float,
    target: Tuple[np.ndarray, np.ndarray],
    solve: Callable[[float], Tuple[np.ndarray, np.ndarray]],
    mass: Mass,
    overlap_min: float,
    max_depth: int,
    tol_group: float,
    cluster_gap: float,
    resolved: np.ndarray,
) -> Tuple[_State, np.ndarray, np.ndarray, int]:
    """
    Carry the branches from state.t to t_target, halving the step while matching is poor.

    A poor step is accepted, and its branches marked unresolved, once the step reaches the depth
    limit or a halving fails to raise the worst overlap by HALVING_GAIN.

    Returns:
        (state at t_target, worst overlaps per branch, rotated vectors at the start, halvings)
    """
    span = t_target - state.t
    min_step = abs(span) / 2**max_depth
    step = span
    worst = np.ones(state.values.shape[0])
    start_vectors = None
    halvings = 0
    failed: Optional[float] = None
    current = state
    while True:
        remaining = t_target - current.t
        final = abs(remaining) <= abs(step) * (1.0 + 1e-12)
        t_next = t_target if final else current.t + step
        cand_values, cand_vectors = target if final else solve(t_next)
        nxt, overlaps, rotated = _match(current, t_next, cand_values, cand_vectors, mass, tol_group, cluster_gap)
        low = float(overlaps.min())
        stalled = failed is not None and low < failed + HALVING_GAIN
        if low >= overlap_min or stalled or abs(step) <= min_step * (1.0 + 1e-9):
            poor = overlaps < overlap_min
            if poor.any():
                resolved[poor] = False
                logger.warning(
                    "branches %s unresolved between t=%g and t=%g (overlap %.3f%s)",
                    np.flatnonzero(poor).tolist(),
                    current.t,
                    t_next,
                    low,
                    ", halving stalled" if stalled else "",
                )
            if start_vectors is None:
                start_vectors = rotated
            worst = np.minimum(worst, overlaps)
            current = nxt
            failed = None
            if final:
                return current, worst, start_vectors, halvings
            step = np.sign(span) * min(abs(step) * 2.0, abs(span))
        else:
            failed = low
            step *= 0.5
            halvings += 1
            logger.debug("halving step to %.3e at t=%g (overlap %.3f)", abs(step), current.t, low)


def track_branches(
    ipc: InnerProductComplex,
    f_samples: Sequence[np.ndarray],
    q: int,
    t_grid: Sequence[float],
    m: int,
    overlap_min: float = 0.8,
    tol_group: float = DEFAULT_TOL_GROUP,
    max_depth: int = 12,
    pad: Optional[int] = None,
    seed: int = 0,
    threads: int = 1,
    cluster_gap: float = CLUSTER_GAP,
) -> BranchFamily:
    """
    Track the m lowest eigenpairs of Δ^q(t) at max(t_grid) across the grid.

    Args:
        ipc: Base complex
        f_samples: f per degree
        q: Degree
        t_grid: Increasing t values
        m: Number of branches
        overlap_min: Required overlap between a previous vector and its matched cluster, in (0.5, 1)
        tol_group: Relative tolerance for treating eigenvalues as degenerate
        max_depth: Maximal number of step halvings between consecutive grid points
        pad: Extra eigenpairs solved beyond m (default max(4, m // 2))
        seed: Eigensolver seed
        threads: Worker threads for the grid solves
        cluster_gap: Relative eigenvalue gap chaining candidates into one cluster for the overlap test

    Returns:
        BranchFamily with unclassified labels
    """
    grid = np.asarray(t_grid, dtype=float)
    dim = ipc.dim(q)
    if grid.ndim != 1 or grid.size == 0 or np.any(np.diff(grid) <= 0):
        raise ValueError("t_grid must be a non-empty increasing sequence")
    if not 0 < m <= dim:
        raise ValueError(f"branch count {m} outside 1..{dim}")
    if not 0.5 < overlap_min < 1.0:
        raise ValueError(f"overlap_min {overlap_min} outside (0.5, 1)")
    window = min(dim, m + (max(4, m // 2) if pad is None else pad))
    solver = _Solver(ipc, f_samples, q, window, seed)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        solutions = list(pool.map(solver, grid))

    mass = ipc.masses[q]
    scale = norm_estimate(witten_stiffness(deform(ipc, f_samples, grid[-1]), q), mass)
    count = len(grid)
    values = np.zeros((m, count))
    vectors: List[np.ndarray] = [np.zeros((dim, m))] * count
    min_overlap = np.ones((m, count))
    resolved = np.ones(m, dtype=bool)

    top_values, top_vectors = solutions[-1]
    state = _State(grid[-1], top_values[:m], top_vectors[:, :m])
    values[:, -1], vectors[-1] = state.values, state.vectors
    halvings = 0
    for j in range(count - 2, -1, -1):
        state, worst, rotated, used = _continue(
            state, grid[j], solutions[j], solver, mass, overlap_min, max_depth, tol_group, cluster_gap, resolved
        )
        vectors[j + 1] = rotated
        values[:, j], vectors[j] = state.values, state.vectors
        min_overlap[:, j] = worst
        halvings += used

    if values.min() < -1e-10 * max(scale, 1.0):
        raise ConvergenceError(f"negative eigenvalue {values.min():.3e} in degree {q}", module="witten")
    logger.info(
        "tracked %d branches of Δ^%d over %d grid points (%d extra solves, %d unresolved)",
        m,
        q,
        count,
        solver.solves - count,
        int(np.count_nonzero(~resolved)),
    )
    return BranchFamily(q, grid, values, vectors, min_overlap, resolved, (None,) * m, halvings, window, scale)


def classify_clusters(bf: BranchFamily, tolerance: float = LABEL_TOLERANCE) -> BranchFamily:
    """
    Label every resolved branch by its asymptotic slope λ(t) / (2t).

    The slope is the finite difference (λ(t_2) - λ(t_1)) / (2 (t_2 - t_1)) of the two largest grid
    points, which removes the constant term of λ ≈ 2kt + c. A branch gets label round(s) when s is
    within `tolerance` of an integer, and stays unresolved otherwise.
    """
    if bf.t_grid.size >= 2:
        t1, t2 = bf.t_grid[-2], bf.t_grid[-1]
        slopes = (bf.values[:, -1] - bf.values[:, -2]) / (2.0 * (t2 - t1))
    else:
        slopes = bf.values[:, -1] / (2.0 * bf.t_grid[-1])
    labels: List[Optional[int]] = []
    for b, s in enumerate(slopes):
        k = int(round(float(s)))
        if bf.resolved[b] and abs(s - k) < tolerance and k >= 0:
            labels.append(k)
        else:
            labels.append(None)
    logger.debug("cluster labels of Δ^%d: %s", bf.degree, labels)
    return replace(bf, labels=tuple(labels))


def label_counts(bf: BranchFamily) -> dict:
    """Number of branches per cluster label; unresolved ones under the key None."""
    counts: dict = {}
    for label in bf.labels:
        counts[label] = counts.get(label, 0) + 1
    return counts


@dataclass(frozen=True)
class VirtuallySmallPackage:
    """
    Label-0 branches at one grid point, sorted by eigenvalue.

    The first `zero_count` pairs span the harmonic part (vs,0); the rest are the exponentially
    small but nonzero vs,+ pairs.
    """

    degree: int
    t: float
    values: np.ndarray
    vectors: np.ndarray
    branch_ids: Tuple[int, ...]
    zero_count: int

    @property
    def count(self) -> int:
        return len(self.values)

    @property
    def zero_values(self) -> np.ndarray:
        return self.values[: self.zero_count]

    @property
    def positive_values(self) -> np.ndarray:
        return self.values[self.zero_count :]

    @property
    def zero_vectors(self) -> np.ndarray:
        return self.vectors[:, : self.zero_count]

    @property
    def positive_vectors(self) -> np.ndarray:
        return self.vectors[:, self.zero_count :]


def virtually_small_package(bf: BranchFamily, at_t: float, zero_count: int) -> VirtuallySmallPackage:
    """
    Restrict a classified family to its label-0 branches at a grid point.

    Args:
        bf: Classified branch family
        at_t: Grid point (t = 0 included when on the grid)
        zero_count: dim ker Δ^q, which does not depend on t

    Raises:
        BranchError: When a label-0 branch is unresolved or the package is smaller than the kernel
    """
    if all(label is None for label in bf.labels) and bf.resolved.any():
        raise BranchError("branch family has not been classified")
    ids = [b for b, label in enumerate(bf.labels) if label == 0]
    broken = [b for b in ids if not bf.resolved[b]]
    if broken:
        raise BranchError(f"label-0 branches {broken} are unresolved; the package is incomplete")
    j = bf.index_of(at_t)
    if zero_count > len(ids):
        raise BranchError(f"{len(ids)} label-0 branches cannot contain a {zero_count}-dimensional kernel")
    values = bf.values[ids, j]
    order = np.argsort(values, kind="stable")
    ordered = [ids[i] for i in order]
    return VirtuallySmallPackage(
        bf.degree, float(bf.t_grid[j]), values[order], bf.vectors[j][:, ordered], tuple(ordered), zero_count
    )
