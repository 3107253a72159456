"""
Unit tests for the Witten deformation, gap detection and branch tracking.
"""
import time

import numpy as np
import pytest

from witten_lab.core.complexes import build_torus_grid
from witten_lab.core.inner_product import de_rham_complex, laplacian
from witten_lab.core.linalg import max_abs, numerical_rank, to_dense
from witten_lab.errors import BranchError, DecompositionError, OverflowGuardError
from witten_lab.morse.critical import find_critical_points
from witten_lab.morse.functions import constant, product_cosine
from witten_lab.oscillator.symbols import cluster_cardinalities
from witten_lab.witten.branches import (
    _continue,
    _State,
    classify_clusters,
    cluster_overlaps,
    label_counts,
    track_branches,
    virtually_small_package,
)
from witten_lab.witten.deform import STRICT_TOLERANCE, deform, quadratic_decomposition, witten_laplacian
from witten_lab.witten.diagnostics import (
    cluster_windows,
    fit_growth_bound,
    geometric_constants,
    is_monotone_localized,
    localization_profile,
    witten_duality_defect,
)
from witten_lab.witten.gaps import detect_gap, largest_ratio_gap

TWO_PI = 2.0 * np.pi


def test_constant_function_leaves_differentials_unchanged(unit_torus):
    """Test d(t) = d when f is constant."""
    ipc = de_rham_complex(unit_torus)
    samples = constant(2, level=0.7).sample_on(unit_torus)
    dc = deform(ipc, samples, 4.0)

    # Conjugation by a constant cancels entry by entry
    for q in range(2):
        assert max_abs(dc.d(q) - ipc.differentials[q]) == 0.0
    assert max_abs(witten_laplacian(dc, 1) - laplacian(ipc, 1)) == 0.0


def test_deformation_at_zero_is_hodge_laplacian(unit_torus):
    """Test Δ^q(0) = Δ^q."""
    ipc = de_rham_complex(unit_torus)
    samples = product_cosine([1.0, 1.0], [1, 1]).sample_on(unit_torus)
    dc = deform(ipc, samples, 0.0)

    # e^{0} = 1 exactly
    for q in range(3):
        assert max_abs(witten_laplacian(dc, q) - laplacian(ipc, q)) == 0.0


def test_deformed_differentials_square_to_zero(unit_torus):
    """Test nilpotency of d(t) on the 2-torus."""
    ipc = de_rham_complex(unit_torus)
    samples = product_cosine([1.0, 1.0], [2, 1]).sample_on(unit_torus)
    dc = deform(ipc, samples, 6.0)

    # Both the multiplied-out and the factored products vanish
    assert dc.complex.nilpotency_defect() <= 1e-12
    assert dc.factored_nilpotency_defect() == 0.0


def test_rank_of_deformed_differential():
    """Test rank d^0(5) = rank d^0(0) = N - 1 on the circle."""
    mesh = build_torus_grid(1, 64)
    ipc = de_rham_complex(mesh)
    samples = product_cosine([1.0], [1], amplitudes=[1.0]).sample_on(mesh)
    dc = deform(ipc, samples, 5.0)

    # Conjugation does not change the rank
    assert numerical_rank(ipc.differentials[0]) == 63
    assert numerical_rank(dc.d(0)) == 63


def test_overflow_guard():
    """Test that |t f| > 300 is refused."""
    mesh = build_torus_grid(1, 16)
    ipc = de_rham_complex(mesh)
    samples = product_cosine([1.0], [1], amplitudes=[10.0]).sample_on(mesh)

    # |t f| reaches 400
    with pytest.raises(OverflowGuardError):
        deform(ipc, samples, 40.0)


def test_quadratic_decomposition_of_constant_function(unit_torus):
    """Test B = C = 0 for constant f."""
    ipc = de_rham_complex(unit_torus)
    samples = constant(2, level=1.5).sample_on(unit_torus)
    decomposition = quadratic_decomposition(ipc, samples, 1, tolerance=1e-12)

    # No t dependence at all
    assert max_abs(decomposition.B) == 0.0
    assert max_abs(decomposition.C) == 0.0
    assert decomposition.residual == 0.0


def test_quadratic_decomposition_check_is_opt_in(unit_torus):
    """Test that a non-quadratic family raises only when a tolerance is passed."""
    ipc = de_rham_complex(unit_torus)
    samples = product_cosine([1.0, 1.0], [2, 1], amplitudes=[1.0, 1.0]).sample_on(unit_torus)
    decomposition = quadratic_decomposition(ipc, samples, 1)

    # The default reports the residual; the strict bound turns it into an error
    assert decomposition.residual > STRICT_TOLERANCE
    with pytest.raises(DecompositionError):
        quadratic_decomposition(ipc, samples, 1, tolerance=STRICT_TOLERANCE)


def test_largest_ratio_gap():
    """Test the ratio-gap search with a round-off floor."""
    values = np.array([0.0, 1e-9, 3.0, 4.0, 9.0])

    # The jump from 1e-9 to 3 dominates
    index, ratio = largest_ratio_gap(values, floor=1e-12)
    assert index == 1
    assert ratio == pytest.approx(3e9)


def test_gap_counts_on_circle(circle, circle_ipc, cosine):
    """Test one small eigenvalue per degree for cos x at t = 5."""
    samples = cosine.sample_on(circle)

    # c_0 = c_1 = 1
    for q in (0, 1):
        report = detect_gap(circle_ipc, samples, q, 5.0, 8)
        assert report.count == 1
        assert not report.no_gap
        assert report.upper > 5.0


def test_gap_counts_with_two_minima(circle, circle_ipc, double_cosine):
    """Test two small eigenvalues when f has two minima and two maxima."""
    samples = double_cosine.sample_on(circle)

    # c_0 = c_1 = 2
    for q in (0, 1):
        assert detect_gap(circle_ipc, samples, q, 12.0, 8).count == 2


def test_branch_labels_on_circle(circle, circle_ipc, cosine):
    """Test cluster labels of the lowest branches of Δ^0(t) for cos x."""
    samples = cosine.sample_on(circle)
    bf = classify_clusters(track_branches(circle_ipc, samples, 0, [0.0, 2.0, 4.0, 6.0, 8.0, 10.0], 3))

    # Harmonic branch, then one excited branch per critical point
    assert bf.labels[:3] == (0, 1, 1)
    assert bf.resolved[:3].all()
    assert abs(bf.values[0]).max() < 1e-8
    assert label_counts(bf)[0] == 1


def test_branches_of_constant_function_are_flat(circle, circle_ipc):
    """Test that every branch is constant in t for constant f."""
    samples = constant(1, level=0.0, periods=[2.0 * np.pi]).sample_on(circle)
    bf = classify_clusters(track_branches(circle_ipc, samples, 0, [0.0, 1.0, 2.0], 3))

    # Δ(t) does not depend on t, and flat branches get label 0
    assert np.allclose(bf.values, bf.values[:, :1], atol=1e-10)
    assert bf.labels == (0, 0, 0)


def test_virtually_small_package(circle, circle_ipc, double_cosine):
    """Test the split of the label-0 branches into kernel and exponentially small parts."""
    samples = double_cosine.sample_on(circle)
    bf = classify_clusters(track_branches(circle_ipc, samples, 0, [0.0, 2.0, 4.0, 6.0, 8.0, 10.0], 6))
    package = virtually_small_package(bf, 10.0, 1)

    # Two minima: one harmonic branch, one small positive branch
    assert bf.labels[:2] == (0, 0)
    assert package.count == 2
    assert package.zero_values.size == 1
    assert package.positive_values.size == 1
    assert 0.0 < package.positive_values[0] < 1e-2
    assert package.vectors.shape == (circle_ipc.dim(0), 2)
    assert package.zero_vectors.shape == (circle_ipc.dim(0), 1)
    assert package.positive_vectors.shape == (circle_ipc.dim(0), 1)


def test_virtually_small_package_needs_classification(circle, circle_ipc, cosine):
    """Test that an unclassified family is refused."""
    samples = cosine.sample_on(circle)
    bf = track_branches(circle_ipc, samples, 0, [1.0, 2.0], 3)

    # Labels are still all None
    with pytest.raises(BranchError):
        virtually_small_package(bf, 2.0, 1)


def test_track_branches_validates_grid(circle_ipc, circle, cosine):
    """Test the argument checks of the tracker."""
    samples = cosine.sample_on(circle)

    # Decreasing grid and an out-of-range overlap threshold
    with pytest.raises(ValueError):
        track_branches(circle_ipc, samples, 0, [2.0, 1.0], 2)
    with pytest.raises(ValueError):
        track_branches(circle_ipc, samples, 0, [1.0, 2.0], 2, overlap_min=0.4)


def _rotated_pair(gap: float):
    values = np.array([1.0, 1.0 + gap, 5.0])
    vectors = np.array([[0.6, -0.8, 0.0], [0.8, 0.6, 0.0], [0.0, 0.0, 1.0]])
    return values, vectors


def test_cluster_overlaps_measure_subspaces():
    """Test that near-degenerate candidates count as one cluster."""
    overlap = np.array([[0.6, 0.8, 0.0], [0.8, 0.6, 0.0]])
    values, _ = _rotated_pair(1e-4)
    cols = np.array([1, 0])

    # The pair spans the previous plane; split apart each vector keeps 0.8
    assert cluster_overlaps(overlap, values, cols, 1e-3) == pytest.approx([1.0, 1.0])
    assert cluster_overlaps(overlap, values, cols, 1e-8) == pytest.approx([0.8, 0.8])


def test_halving_stops_without_progress():
    """Test that a halving which does not raise the worst overlap ends the refinement."""
    values, vectors = _rotated_pair(1.0)
    calls = []

    def solve(t):
        calls.append(t)
        return values, vectors

    state = _State(1.0, np.array([1.0, 2.0]), np.eye(3)[:, :2])
    resolved = np.ones(2, dtype=bool)
    end, worst, _, halvings = _continue(state, 0.0, (values, vectors), solve, np.ones(3), 0.9, 12, 1e-8, 1e-3, resolved)

    # Every step mixes the two separated branches alike, so one halving is enough to tell
    assert halvings == 1
    assert calls == [0.5]
    assert not resolved.any()
    assert worst == pytest.approx([0.8, 0.8])
    assert end.t == 0.0


def test_rotated_cluster_needs_no_halving():
    """Test that a rotation inside a near-degenerate cluster is matched in one step."""
    values, vectors = _rotated_pair(1e-4)
    calls = []

    def solve(t):
        calls.append(t)
        return values, vectors

    state = _State(1.0, values[:2].copy(), np.eye(3)[:, :2])
    resolved = np.ones(2, dtype=bool)
    _, worst, _, halvings = _continue(state, 0.0, (values, vectors), solve, np.ones(3), 0.9, 12, 1e-8, 1e-3, resolved)

    # Both previous vectors lie in the span of the candidate pair
    assert halvings == 0
    assert calls == []
    assert resolved.all()
    assert worst == pytest.approx([1.0, 1.0])


@pytest.mark.slow
def test_torus_branches_track_within_budget():
    """Test the cost of tracking degree-0 branches of cos 2x + cos y over t in [0, 30]."""
    mesh = build_torus_grid(2, 48, [TWO_PI, TWO_PI])
    ipc = de_rham_complex(mesh)
    samples = product_cosine([TWO_PI, TWO_PI], [2, 1]).sample_on(mesh)
    start = time.perf_counter()
    bf = classify_clusters(track_branches(ipc, samples, 0, np.linspace(0.0, 30.0, 31), 6))
    elapsed = time.perf_counter() - start

    # A few halvings per interval at most; two minima give two branches near zero at t = 30
    assert bf.refinements <= 4 * 30
    assert elapsed < 180.0
    assert bf.values[:2, -1].max() < 1e-6
    assert bf.values[2, -1] > 1.0


def test_branch_rows_layout(circle, circle_ipc, cosine):
    """Test the export rows of a branch family."""
    samples = cosine.sample_on(circle)
    bf = classify_clusters(track_branches(circle_ipc, samples, 1, [4.0, 5.0], 3))
    rows = bf.rows()

    # One row per (branch, t)
    assert len(rows) == 6
    assert rows[0][:3] == (1, 0, 4.0)


def test_growth_bound_and_cluster_windows(circle, circle_ipc, cosine):
    """Test the quadratic growth fit and the cluster windows."""
    samples = cosine.sample_on(circle)
    bf = classify_clusters(track_branches(circle_ipc, samples, 0, [0.0, 2.0, 4.0, 6.0, 8.0, 10.0], 3))
    fits = fit_growth_bound(bf)
    windows = cluster_windows(bf, 10.0)

    # Every branch lies below its fitted bound; clusters are ordered
    for fit in fits:
        assert np.all(bf.values[fit.branch] <= fit.bound(bf.t_grid) + 1e-9)
    assert [w.label for w in windows] == sorted(w.label for w in windows)
    assert windows[0].label == 0


def test_ground_branch_localizes_at_the_minimum(circle, circle_ipc, cosine):
    """Test that the harmonic branch of Δ^0(t) concentrates near the critical points."""
    samples = cosine.sample_on(circle)
    points = find_critical_points(cosine)
    bf = classify_clusters(track_branches(circle_ipc, samples, 0, [0.0, 2.0, 4.0, 6.0, 8.0, 10.0], 3))
    profile = localization_profile(bf, circle, circle_ipc, cosine, points, 1.0, [0])

    # e^{-t f} is constant at t = 0 and a Gaussian of width (2t)^{-1/2} around π later
    assert profile.shape == (1, 6)
    assert profile[0, 0] == pytest.approx(1.0 - 4.0 / (2.0 * np.pi), abs=0.02)
    assert profile[0, -1] < 0.05
    assert is_monotone_localized(profile[0], bf.t_grid, 0.0)


def test_monotone_localization_check():
    """Test the tail and threshold conditions of the localization check."""
    t = np.array([0.0, 1.0, 2.0, 3.0])

    # Rising after t_start, and decreasing but still spread out
    assert is_monotone_localized(np.array([0.5, 0.9, 0.04, 0.01]), t, 2.0)
    assert not is_monotone_localized(np.array([0.5, 0.2, 0.01, 0.02]), t, 1.0)
    assert not is_monotone_localized(np.array([0.5, 0.4, 0.3, 0.2]), t, 0.0)
    assert not is_monotone_localized(np.array([0.5, 0.4, 0.3, 0.2]), t, 5.0)


def test_geometric_constants_of_cosine(cosine):
    """Test inf |f'| off the balls and sup |f''| for cos x."""
    points = find_critical_points(cosine)
    constants = geometric_constants(cosine, points, 0.5)

    # |sin x| >= sin 0.5 at distance 0.5 from 0 and π; |cos x| peaks near the critical points
    assert constants.samples == 64
    assert np.sin(0.5) - 1e-12 <= constants.min_gradient < np.sin(0.6)
    assert constants.max_hessian == pytest.approx(1.0, abs=0.01)
    assert constants.b_norm is None


def test_duality_of_undeformed_circle(circle, circle_ipc):
    """Test that Δ^0 and Δ^1 share their spectrum on the circle."""
    samples = constant(1, level=0.0, periods=[2.0 * np.pi]).sample_on(circle)
    negated = [-s for s in samples]

    # Both are D Dᵀ / h² up to transposition
    assert witten_duality_defect(circle_ipc, samples, negated, 0, 1.0, 8) < 1e-8


@pytest.mark.slow
def test_small_branch_decays_exponentially():
    """Test the decay of the positive label-0 branch of Δ^0(t) for the two-well function cos(2x)/8."""
    mesh = build_torus_grid(1, 512, [TWO_PI])
    ipc = de_rham_complex(mesh)
    samples = product_cosine([TWO_PI], [2], amplitudes=[0.125]).sample_on(mesh)
    grid = np.linspace(10.0, 30.0, 21)
    bf = classify_clusters(track_branches(ipc, samples, 0, grid, 6))
    package = virtually_small_package(bf, 30.0, 1)
    branch = package.branch_ids[1]
    slope = np.polyfit(grid, np.log(bf.values[branch]), 1)[0]

    # Tunnelling through barriers of height 1/4 gives roughly e^{-t/2}
    assert package.positive_values.size == 1
    assert bf.values[branch, -1] / 30.0 <= 0.05
    assert slope <= -0.1


@pytest.mark.slow
@pytest.mark.parametrize("q", [0, 1])
def test_circle_clusters_match_oscillator_counts(cosine, q):
    """Test the branch clusters of cos x at t = 30 against the oscillator cluster sizes."""
    mesh = build_torus_grid(1, 512, [TWO_PI])
    ipc = de_rham_complex(mesh)
    bf = classify_clusters(track_branches(ipc, cosine.sample_on(mesh), q, [20.0, 25.0, 30.0], 7))
    ratios = bf.values[:, -1] / (2.0 * 30.0)
    counts = label_counts(bf)

    # Excited branches sit near 2tk, and clusters 0 to 2 hold as many branches as the model predicts
    for b, label in enumerate(bf.labels):
        if label:
            assert abs(ratios[b] - label) <= 0.15
    assert [counts.get(k, 0) for k in range(3)] == cluster_cardinalities([0, 1], 1, q, 2)
