"""
Unit tests for torsion, volumes of chain maps and the comparison maps.
"""
import time
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from witten_lab.core.complexes import build_torus_grid
from witten_lab.core.inner_product import de_rham_complex, zero_differential_complex
from witten_lab.derham.lattice import lattice_volumes
from witten_lab.derham.spectral import betti_numbers, harmonic_basis
from witten_lab.errors import TorsionError
from witten_lab.morse.complex import compute_morse_data
from witten_lab.morse.functions import product_cosine
from witten_lab.torsion.algebra import (
    ChainMap,
    check_torsion_identity,
    detprime_gram,
    detprime_laplacian,
    identity_corpus,
    integer_complex,
    integer_det,
    integer_rank,
    log_torsion,
    random_integer_complex,
    random_isomorphic_pair,
    random_unimodular,
    reference_log_torsion,
    torsion,
    vol_map,
)
from witten_lab.torsion.comparison import (
    ATrace,
    IsometryRow,
    a_functions,
    build_comparison,
    isometry_bounded,
    isometry_table,
    log_a_q,
    nonvanishing_check,
    torsion_rhs,
)
from witten_lab.witten.branches import (
    VirtuallySmallPackage,
    classify_clusters,
    track_branches,
    virtually_small_package,
)

TWO_PI = 2.0 * np.pi


def test_torsion_of_one_step_complex():
    """Test T = |c| and det'Δ^1 = c² for 0 -> R -c-> R -> 0."""
    ipc = integer_complex([np.array([[3]])])

    # Δ^1 = c²
    assert detprime_laplacian(ipc, 1) == pytest.approx(9.0)
    assert torsion(ipc) == pytest.approx(3.0)


def test_torsion_of_zero_complex():
    """Test that all-zero differentials have torsion 1."""
    # Every det' is an empty product
    assert torsion(zero_differential_complex([2, 3, 1])) == 1.0


def test_vol_map_of_scalar():
    """Test Vol(s) = |s| in standard inner products."""
    # det(sᵀ s)^{1/2}
    assert vol_map(np.array([[-2.5]]), np.ones(1), np.ones(1)) == pytest.approx(2.5)
    assert vol_map(np.zeros((1, 1)), np.ones(1), np.ones(1)) == 0.0


def test_identity_on_scalar_complexes():
    """Test T(C_2)/T(C_1) = Vol(H(φ))/Vol(φ) for d_1 = 1, d_2 = 2."""
    c1 = integer_complex([np.array([[1]])])
    c2 = integer_complex([np.array([[2]])])
    phi = ChainMap(c1, c2, [np.array([[1.0]]), np.array([[2.0]])])
    check = check_torsion_identity(c1, c2, phi)

    # Acyclic, so Vol(H(φ)) = 1 and Vol(φ) = 1/2
    assert check.lhs == pytest.approx(2.0)
    assert check.rhs == pytest.approx(2.0)
    assert check.relative_error < 1e-12


def test_identity_rejects_non_chain_maps():
    """Test that a map not commuting with d is refused."""
    c1 = integer_complex([np.array([[1]])])
    c2 = integer_complex([np.array([[2]])])
    phi = ChainMap(c1, c2, [np.array([[1.0]]), np.array([[1.0]])])

    # d_2 φ^0 = 2 but φ^1 d_1 = 1
    with pytest.raises(TorsionError):
        check_torsion_identity(c1, c2, phi)


def test_chain_map_shape_check():
    """Test the per-degree shape check of ChainMap."""
    c1 = integer_complex([np.array([[1]])])

    # φ^0 must be 1 x 1
    with pytest.raises(TorsionError):
        ChainMap(c1, c1, [np.eye(2), np.eye(1)])


def test_identity_corpus_small():
    """Test the anomaly identity on twenty random isomorphic pairs."""
    results = identity_corpus(seed=0, cases=20)

    # Both sides agree to round-off
    assert len(results) == 20
    assert max(r.relative_error for r in results) <= 1e-9
    assert [r.seed for r in results] == list(range(20))


@pytest.mark.slow
def test_identity_corpus_full():
    """Test the anomaly identity on two hundred random isomorphic pairs."""
    results = identity_corpus(seed=0, cases=200)

    # Worst case stays at round-off level
    assert max(r.relative_error for r in results) <= 1e-9


@settings(max_examples=10, deadline=None, derandomize=True)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_identity_holds_for_random_pairs(seed):
    """Test the identity for hypothesis-chosen seeds."""
    c1, c2, phi = random_isomorphic_pair(np.random.default_rng(seed))

    # Conjugate complexes with fresh inner products
    assert check_torsion_identity(c1, c2, phi).relative_error <= 1e-9


def test_exact_integer_helpers():
    """Test fraction-free rank and determinant."""
    # Singular, unimodular and a scaled identity
    assert integer_rank(np.array([[1, 2], [2, 4]])) == 1
    assert integer_det(np.array([[2, 1], [1, 1]])) == 1
    assert integer_det(np.array([[1, 2], [2, 4]])) == 0
    assert integer_det(3 * np.eye(3, dtype=int)) == 27


def test_random_unimodular_has_exact_inverse(rng):
    """Test U · U^{-1} = 1 and |det U| = 1 in integer arithmetic."""
    u, inv = random_unimodular(rng, 4)

    # Elementary row operations and their inverse column operations
    assert np.array_equal(u @ inv, np.eye(4, dtype=np.int64))
    assert abs(integer_det(u)) == 1


@pytest.mark.parametrize("seed", range(5))
def test_random_integer_complex_is_exact(seed):
    """Test d_{q+1} d_q = 0 exactly for random integer complexes."""
    diffs = random_integer_complex(np.random.default_rng(seed))

    # Adapted blocks fit side by side, so ranks never exceed the middle dimension
    for d_q, d_next in zip(diffs, diffs[1:]):
        assert not (d_next @ d_q).any()
        assert integer_rank(d_q) + integer_rank(d_next) <= d_q.shape[0]
    assert all(d.dtype == np.int64 for d in diffs)


def test_cauchy_binet_reference():
    """Test det'(dᵀd) = 12 and the matching torsion."""
    d = np.array([[1, 1], [1, -1], [0, 2]])

    # Squared 2 x 2 minors: 4 + 4 + 4
    assert detprime_gram(d) == 12
    assert reference_log_torsion([d]) == pytest.approx(0.5 * np.log(12.0))
    assert log_torsion(integer_complex([d])) == pytest.approx(0.5 * np.log(12.0))


def test_two_step_integer_complex():
    """Test log T = 0 for R -> R² -> R with d_0 = (1, 1)ᵀ and d_1 = (1, -1)."""
    diffs = [np.array([[1], [1]]), np.array([[1, -1]])]

    # det'Δ^1 = 4 and det'Δ^2 = 2 cancel in the alternating sum
    assert reference_log_torsion(diffs) == pytest.approx(0.0, abs=1e-14)
    assert log_torsion(integer_complex(diffs)) == pytest.approx(0.0, abs=1e-12)


def test_torsion_rhs_terms():
    """Test the assembly of eigenvalue, a(0) and volume terms."""
    package = VirtuallySmallPackage(1, 0.0, np.array([0.0, np.e]), np.zeros((4, 2)), (0, 1), 1)
    rhs = torsion_rhs([package], 0.0, [1.0, 1.0, 1.0])

    # ½ (-1)^2 · 1 · ln e = ½
    assert rhs.eigenvalue_term == pytest.approx(0.5)
    assert rhs.volume_term == 0.0
    assert rhs.total == pytest.approx(0.5)
    assert torsion_rhs([], 0.0, [1.0, 1.0]).within(1e-12)


def test_torsion_rhs_rejects_bad_inputs():
    """Test the positivity checks of the right-hand side."""
    zero = VirtuallySmallPackage(1, 0.0, np.array([0.0, 0.0]), np.zeros((4, 2)), (0, 1), 1)

    # A vanishing vs,+ eigenvalue, a vanishing a(0), a negative volume
    with pytest.raises(TorsionError):
        torsion_rhs([zero], 0.0, [1.0, 1.0])
    with pytest.raises(TorsionError):
        torsion_rhs([], -np.inf, [1.0, 1.0])
    with pytest.raises(TorsionError):
        torsion_rhs([], 0.0, [1.0, -1.0])


def test_a_trace_bookkeeping():
    """Test the alternating product and the zero log of an a-trace."""
    trace = ATrace(np.array([0.0, 1.0]), np.array([[0.0, -np.inf], [np.log(2.0), 0.0]]), (1, 1))

    # a = a^0 / a^1
    assert trace.log_at(0.0) == pytest.approx(-np.log(2.0))
    assert trace.zeros() == [(0, 1.0)]
    assert nonvanishing_check(trace) == {0: False, 1: True}
    with pytest.raises(ValueError):
        trace.log_at(0.5)


def test_isometry_bounded():
    """Test the t·defect growth check."""
    rows = [IsometryRow(0, 1.0, 0.1), IsometryRow(0, 2.0, 0.04), IsometryRow(1, 1.0, 0.01), IsometryRow(1, 4.0, 1.0)]

    # Degree 1 grows a hundredfold
    assert isometry_bounded(rows) == {0: True, 1: False}


def test_comparison_maps_on_circle(circle, circle_ipc, cosine):
    """Test the projector, polar factor and scaled integration for cos x at t = 10."""
    md = compute_morse_data(cosine)
    bundle = build_comparison(circle, circle_ipc, cosine, md, 0, 10.0)

    # One small eigenvalue, an M-orthonormal polar factor, L R close to 1
    assert bundle.size == 1
    assert bundle.projector_defect < 1e-10
    assert bundle.polar_defect < 1e-10
    assert bundle.isometry_defect < 0.5
    assert bundle.smallest_singular > 0.9


@pytest.fixture(scope="module")
def torus_model():
    """cos(2x)/4 + cos y on a 96 x 96 torus of side 2π, with critical counts (2, 4, 2)."""
    mesh = build_torus_grid(2, 96, [TWO_PI, TWO_PI])
    mf = product_cosine([TWO_PI, TWO_PI], [2, 1])
    return mesh, de_rham_complex(mesh), mf, compute_morse_data(mf)


@pytest.mark.slow
def test_isometry_defect_does_not_grow(torus_model):
    """Test that t·‖L R - Id‖ stays within ten times its t = 15 value up to t = 30."""
    mesh, ipc, mf, md = torus_model
    start = time.perf_counter()
    rows = isometry_table(mesh, ipc, mf, md, [15.0, 20.0, 25.0, 30.0])
    elapsed = time.perf_counter() - start

    # One row per degree and t, all finite and bounded
    assert md.counts == [2, 4, 2]
    assert len(rows) == 12
    assert all(np.isfinite(r.scaled) for r in rows)
    assert isometry_bounded(rows) == {0: True, 1: True, 2: True}
    assert elapsed < 180.0


@pytest.mark.slow
def test_a_functions_positive_and_basis_independent(torus_model, rng):
    """Test a^q(t) > 0 on t in [15, 30] and its invariance under a change of orthonormal small basis."""
    mesh, ipc, mf, md = torus_model
    samples = mf.sample_on(mesh)
    betti = betti_numbers(ipc)
    grid = [15.0, 20.0, 25.0, 30.0]
    families = [classify_clusters(track_branches(ipc, samples, q, grid, md.counts[q] + 4)) for q in range(3)]
    trace = a_functions(mesh, ipc, md, families, betti)
    package = virtually_small_package(families[1], 20.0, betti[1])
    rotation, _ = np.linalg.qr(rng.standard_normal((package.count, package.count)))
    rotated = replace(package, vectors=package.vectors @ rotation)

    # Gram determinants do not see an orthogonal recombination of M-orthonormal columns
    assert betti == [1, 2, 1]
    assert trace.zeros() == []
    assert np.all(trace.a_q > 0.0)
    assert log_a_q(mesh, ipc, md, rotated) == pytest.approx(log_a_q(mesh, ipc, md, package), abs=1e-10)


@pytest.mark.slow
def test_torsion_rhs_on_three_torus():
    """Test the torsion right-hand side for the product cosine on a 12³ unit torus."""
    mesh = build_torus_grid(3, 12)
    ipc = de_rham_complex(mesh)
    md = compute_morse_data(product_cosine([1.0] * 3, [1, 1, 1]))
    packages = []
    for q in range(4):
        basis = harmonic_basis(ipc, q)
        size = basis.shape[1]
        packages.append(VirtuallySmallPackage(q, 0.0, np.zeros(size), basis, tuple(range(size)), size))
    log_a0 = sum((-1) ** q * log_a_q(mesh, ipc, md, package) for q, package in enumerate(packages))
    rhs = torsion_rhs(packages, log_a0, lattice_volumes(ipc, mesh))

    # A perfect Morse function leaves no vs,+ eigenvalues, and the unit torus has unit volumes
    assert md.counts == [1, 3, 3, 1]
    assert [p.count for p in packages] == [1, 3, 3, 1]
    assert rhs.eigenvalue_term == 0.0
    assert rhs.volume_term == pytest.approx(0.0, abs=1e-8)
    assert abs(rhs.total) <= 0.2
