"""
Unit tests for the harmonic-oscillator model: symbols, oracles, cutoffs, certificates and placement.
"""
import numpy as np
import pytest

from witten_lab.core.complexes import build_icosphere
from witten_lab.core.inner_product import de_rham_complex
from witten_lab.errors import ConstructionError
from witten_lab.morse.critical import find_critical_points
from witten_lab.morse.functions import sphere_height
from witten_lab.oscillator.certificate import certify_gap, gap_certificate
from witten_lab.oscillator.cutoff import CutoffProfile, cutoff_normalization
from witten_lab.oscillator.model import (
    brute_force_model_spectrum,
    cross_check_symbols,
    eigenform_residual,
    richardson_oscillator,
)
from witten_lab.oscillator.placement import place_on_mesh
from witten_lab.oscillator.symbols import (
    OscSymbol,
    cluster_cardinalities,
    enumerate_symbols,
    epsilon_coeff,
    hermite,
    hermite_function,
    model_eigenform,
    model_eigenvalue,
)


def test_hermite_recurrence():
    """Test low-degree Hermite polynomials."""
    x = np.linspace(-2.0, 2.0, 9)

    # H_0 = 1, H_1 = 2x, H_3 = 8x³ - 12x
    assert hermite(0, 2.0) == 1.0
    assert np.allclose(hermite(1, x), 2.0 * x)
    assert np.allclose(hermite(3, x), 8.0 * x**3 - 12.0 * x)
    with pytest.raises(ValueError):
        hermite(-1, x)


@pytest.mark.parametrize("p", [0, 1, 4])
def test_hermite_functions_are_normalized(p):
    """Test ∫ h_p² = 1 at t = 2."""
    x = np.linspace(-10.0, 10.0, 4001)
    values = hermite_function(p, 2.0, x)

    # Riemann sum of a Gaussian-decaying integrand
    assert np.sum(values**2) * (x[1] - x[0]) == pytest.approx(1.0, abs=1e-10)


def test_epsilon_coefficients():
    """Test ε for the scalar oscillator and a one-form in the plane."""
    # Minimum, maximum, and the unstable direction of a saddle
    assert epsilon_coeff(1, 0, 0, ()) == -1
    assert epsilon_coeff(1, 0, 1, ()) == 1
    assert epsilon_coeff(2, 1, 1, (1,)) == -2
    with pytest.raises(ValueError):
        epsilon_coeff(2, 1, 1, ())


def test_enumerate_symbols_in_one_variable():
    """Test one symbol per order for functions at a minimum."""
    symbols, counts = enumerate_symbols(1, 0, 0, 3)

    # P = (p,) with order p
    assert counts == {0: 1, 1: 1, 2: 1, 3: 1}
    assert [sym.p for sym in symbols] == [(0,), (1,), (2,), (3,)]


@pytest.mark.parametrize("n,q,k", [(1, 0, 0), (1, 0, 1), (2, 1, 1), (2, 0, 1), (3, 2, 1), (3, 2, 2)])
def test_single_ground_state_only_in_matching_degree(n, q, k):
    """Test that order 0 occurs exactly when q equals the Morse index."""
    _, counts = enumerate_symbols(n, q, k, 2)

    # One ground form, on dx_1 ∧ ... ∧ dx_k
    assert counts[0] == (1 if q == k else 0)


def test_model_eigenvalue():
    """Test λ = 2 t o."""
    sym = OscSymbol(2, 1, 0, 0, (), (2,))

    # Order 2 at t = 3
    assert model_eigenvalue(sym, 3.0) == 12.0


def test_inconsistent_symbol_is_rejected():
    """Test the order check of OscSymbol."""
    # p = (1,) at a minimum has order 1, not 2
    with pytest.raises(ValueError):
        OscSymbol(2, 1, 0, 0, (), (1,))


def test_ground_eigenform_at_origin():
    """Test the peak value (t/π)^{n/2·1/2} of the ground form."""
    sym = OscSymbol(0, 2, 0, 0, (), (0, 0))

    # Product of two one-dimensional ground functions at 0
    assert model_eigenform(sym, 3.0, np.zeros(2)) == pytest.approx(np.sqrt(3.0 / np.pi))


def test_brute_force_scalar_spectrum():
    """Test the scalar model at a minimum: 0, 2t, 4t, ..."""
    values = brute_force_model_spectrum(1, 0, 0, 1.0, 8)

    # The Hermite basis diagonalizes the oscillator exactly
    assert np.allclose(values[:4], [0.0, 2.0, 4.0, 6.0], atol=1e-10)


def test_brute_force_saddle_one_forms():
    """Test a simple zero and the first level 2t for 1-forms at a planar saddle."""
    values = brute_force_model_spectrum(2, 1, 1, 2.0, 6)

    # Ground form on dx_1, then two order-1 symbols
    assert abs(values[0]) < 1e-10
    assert values[1] == pytest.approx(4.0, abs=1e-10)
    assert values[2] == pytest.approx(4.0, abs=1e-10)


@pytest.mark.parametrize("n,q,k", [(1, 0, 0), (1, 1, 1), (2, 1, 1), (2, 2, 0), (3, 1, 2)])
def test_symbol_counts_match_brute_force(n, q, k):
    """Test the enumerated multiplicities against the truncated diagonalization."""
    verdict = cross_check_symbols(n, q, k, 3)

    # Every level up to order 3
    assert verdict.agrees
    assert verdict.row()[-1] == 1


def test_cluster_cardinalities():
    """Test symbol counts summed over critical points."""
    # A minimum and a maximum on the circle, functions
    assert cluster_cardinalities([0, 1], 1, 0, 1) == [1, 2]
    assert cluster_cardinalities([], 1, 0, 2) == [0, 0, 0]


def test_cutoff_profile_values():
    """Test γ on its three regions."""
    gamma = CutoffProfile(1.0)

    # Flat, transition, vanished
    assert gamma(0.2) == 1.0
    assert gamma(0.75) == pytest.approx(np.exp(-1.0 / 3.0))
    assert gamma(1.0) == 0.0
    with pytest.raises(ValueError):
        CutoffProfile(-1.0)
    with pytest.raises(ValueError):
        CutoffProfile(1.0, "sharp")


def test_cutoff_normalization_limits():
    """Test β → 1 for large t and β < 1 for wide Gaussians."""
    gamma = CutoffProfile(1.0)

    # e^{-t η²/4} controls the lost mass
    assert cutoff_normalization(2, 1.0, 200.0, gamma) == pytest.approx(1.0, abs=1e-6)
    assert cutoff_normalization(2, 1.0, 1.0, gamma) < 1.0
    assert cutoff_normalization(2, 1.0, 1.0, CutoffProfile(1.0, "none")) == 1.0


def test_gap_certificate_on_diagonal_matrices():
    """Test certificates for spectra that do and do not miss the interval."""
    e1 = np.array([[1.0], [0.0]])
    theta = np.pi / 4.0
    rotation = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    mixed = rotation @ np.diag([0.1, 7.0]) @ rotation.T

    # e1 spans the low eigenvector only for the unrotated matrices
    assert gap_certificate(np.diag([0.1, 7.0]), np.ones(2), e1, 0.5, 5.0)
    assert gap_certificate(np.diag([1.0, 2.0]), np.ones(2), e1, 1.5, 1.9)
    assert not gap_certificate(mixed, np.ones(2), e1, 0.5, 5.0)


def test_certificate_report_and_bounds_check():
    """Test the Rayleigh bounds in the report and the a < b guard."""
    report = certify_gap(np.diag([0.1, 7.0]), np.ones(2), np.array([[1.0], [0.0]]), 0.5, 5.0)

    # Span maximum and complement minimum are the two eigenvalues
    assert report.holds and report.verified
    assert report.upper_on_span == pytest.approx(0.1)
    assert report.lower_on_complement == pytest.approx(7.0)
    with pytest.raises(ValueError):
        gap_certificate(np.eye(2), np.ones(2), np.array([[1.0], [0.0]]), 2.0, 1.0)


def test_richardson_extrapolation():
    """Test the extrapolated finite-difference oscillator levels."""
    rows = richardson_oscillator(4)

    # 2p + 1 to fourth order in h
    for row in rows:
        assert row.error < 1e-6
        assert abs(row.fine - row.exact) < abs(row.coarse - row.exact)


def test_eigenform_residual_is_second_order():
    """Test that the finite-difference residual of h_1 shrinks like h²."""
    sym = OscSymbol(1, 1, 0, 0, (), (1,))
    coarse = eigenform_residual(sym, 1.0, 0.1)
    fine = eigenform_residual(sym, 1.0, 0.05)

    # Halving h divides the residual by about four
    assert fine < 1e-2
    assert coarse / fine == pytest.approx(4.0, rel=0.1)


def test_placement_is_nearly_isometric(circle, circle_ipc, cosine):
    """Test Jᵀ M J ≈ 1 for the minimum of cos x."""
    points = find_critical_points(cosine)
    jmap = place_on_mesh(cosine, circle, circle_ipc, points, 0, 10.0)

    # One index-0 point, ground form of unit norm
    assert jmap.matrix.shape == (circle_ipc.dim(0), 1)
    assert jmap.gram[0, 0] == pytest.approx(1.0, abs=0.02)
    assert jmap.rank == 1


def test_placement_supports_are_disjoint(circle, circle_ipc, double_cosine):
    """Test that two minima get forms with disjoint supports."""
    points = find_critical_points(double_cosine)
    jmap = place_on_mesh(double_cosine, circle, circle_ipc, points, 0, 10.0)
    first, second = jmap.supports()

    # Chart balls do not meet, so the Gram matrix is diagonal
    assert np.intersect1d(first, second).size == 0
    assert jmap.gram[0, 1] == 0.0
    assert jmap.within_tolerance


def test_placement_refuses_the_sphere():
    """Test that placement needs a flat torus."""
    mesh = build_icosphere(1)

    # No flat Morse charts on the sphere
    with pytest.raises(ConstructionError):
        place_on_mesh(sphere_height(), mesh, de_rham_complex(mesh), [], 0, 1.0)
