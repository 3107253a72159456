"""
Unit tests for Morse functions, critical points, gradient flow and the Morse complex.
"""
import numpy as np
import pytest

from witten_lab.core.complexes import build_torus_grid
from witten_lab.core.inner_product import Cochain, de_rham_complex
from witten_lab.errors import MorseError
from witten_lab.morse.complex import (
    cohomology_ranks,
    compute_morse_data,
    count_signed_trajectories,
    dual_incidence,
    manifold_diameter,
    morse_inequalities,
    scaled_complex,
    scaling_map,
)
from witten_lab.morse.critical import find_critical_points
from witten_lab.morse.flow import FlowControls, integrate_flow
from witten_lab.morse.functions import product_cosine, sphere_height
from witten_lab.morse.integration import integrate_over_unstable, integration_matrix
from witten_lab.witten.gaps import detect_gap

TWO_PI = 2.0 * np.pi


def test_unit_torus_critical_points():
    """Test indices of cos 2πx + cos 2πy."""
    mf = product_cosine([1.0, 1.0], [1, 1], normalization="common")
    points = find_critical_points(mf)

    # Minimum, two saddles, maximum
    assert [cp.index for cp in points] == [0, 1, 1, 2]
    assert np.allclose(points[0].location, [0.5, 0.5], atol=1e-10)


def test_critical_counts_with_higher_frequency():
    """Test (2, 4, 2) critical points for frequencies (2, 1)."""
    mf = product_cosine([1.0, 1.0], [2, 1], normalization="common")
    points = find_critical_points(mf)

    # 2 x 2 products of axis critical points per index pattern
    counts = [sum(1 for cp in points if cp.index == k) for k in range(3)]
    assert counts == [2, 4, 2]


def test_critical_point_seed_guard():
    """Test the minimum seed lattice."""
    mf = product_cosine([1.0, 1.0], [1, 1])

    # Fewer than 8 seeds per axis is refused
    with pytest.raises(MorseError):
        find_critical_points(mf, seed_resolution=4)


def test_flow_descends_to_the_minimum():
    """Test that -grad f carries a generic point to the minimum."""
    mf = product_cosine([1.0, 1.0], [1, 1], normalization="common")
    points = find_critical_points(mf)
    controls = FlowControls.for_diameter(manifold_diameter(mf))
    trajectory = integrate_flow(mf, np.array([0.3, 0.2]), 1, points, controls)

    # Captured at the index-0 point with f decreasing
    assert points[trajectory.limit].index == 0
    assert trajectory.is_monotone()
    with pytest.raises(ValueError):
        integrate_flow(mf, np.array([0.3, 0.2]), 0, points, controls)


def test_circle_morse_complex(cosine):
    """Test the Morse complex of cos x on the circle."""
    md = compute_morse_data(cosine)

    # The two flow lines from the maximum cancel
    assert md.counts == [1, 1]
    assert md.incidence[0].tolist() == [[0]]
    assert cohomology_ranks(md) == [1, 1]
    assert morse_inequalities(md, [1, 1]) == [True, True]


def test_signed_trajectory_count_on_circle(cosine):
    """Test I(max, min) = 0 with two connecting lines."""
    md = compute_morse_data(cosine)
    maximum = next(i for i, cp in enumerate(md.critical_points) if cp.index == 1)
    minimum = next(i for i, cp in enumerate(md.critical_points) if cp.index == 0)
    signed, connections = count_signed_trajectories(cosine, maximum, minimum, md.critical_points, md.controls)

    # One line each way around
    assert signed == 0
    assert len(connections) == 2
    assert sorted(c.sign for c in connections) == [-1, 1]


def test_sphere_height_morse_complex():
    """Test the height function on the sphere."""
    md = compute_morse_data(sphere_height())

    # A minimum and a maximum, no saddles
    assert md.counts == [1, 0, 1]
    assert cohomology_ranks(md) == [1, 0, 1]


def test_unit_torus_morse_complex():
    """Test ∂ = 0 for the product cosine on the unit torus."""
    mf = product_cosine([1.0, 1.0], [1, 1], normalization="common")
    md = compute_morse_data(mf)

    # Perfect Morse function: counts equal Betti numbers
    assert md.counts == [1, 2, 1]
    assert cohomology_ranks(md) == [1, 2, 1]
    assert all(not m.any() for m in md.incidence)


@pytest.mark.slow
def test_three_torus_morse_complex():
    """Test the Morse complex of cos x + cos y + cos z, whose separatrices lie on the Hessian axes."""
    md = compute_morse_data(product_cosine([TWO_PI] * 3, [1, 1, 1]))
    from_saddles = [c for c in md.connections if md.critical_points[c.source].index == 2]

    # Each index-2 point reaches two index-1 points along two opposite lines each
    assert md.counts == [1, 3, 3, 1]
    assert all(not (md.incidence[k + 1] @ md.incidence[k]).any() for k in range(2))
    assert cohomology_ranks(md) == [1, 3, 3, 1]
    assert len(from_saddles) == 12


def test_dual_incidence_of_perfect_function(cosine):
    """Test that -f of a perfect function has vanishing incidences too."""
    md = compute_morse_data(cosine)
    dual_points, incidence = dual_incidence(md)

    # Indices flip and ∂ stays zero
    assert sorted(cp.index for cp in dual_points) == [0, 1]
    assert incidence[0].tolist() == [[0]]


def test_scaling_map_is_exponential(cosine):
    """Test S^0(π) = e^{-π f} on the circle."""
    md = compute_morse_data(cosine)
    values = np.array([cp.value for cp in md.of_index(0)])

    # (π/t)^{(n - 2q)/4} = 1 at t = π
    assert np.allclose(scaling_map(md, 0, np.pi), np.exp(-np.pi * values))
    with pytest.raises(ValueError):
        scaling_map(md, 0, 0.0)


def test_scaled_complex_is_a_complex():
    """Test that the scaled differentials still compose to zero."""
    mf = product_cosine([1.0, 1.0], [1, 1], normalization="common")
    md = compute_morse_data(mf)

    # Diagonal conjugation preserves ∂∘∂ = 0
    assert scaled_complex(md, 3.0).nilpotency_defect() == 0.0


def test_integration_of_constant_one_form(circle, circle_ipc, cosine):
    """Test that the unstable cell of the maximum is the whole circle."""
    md = compute_morse_data(cosine)
    omega = np.full(circle_ipc.dim(1), 1.0 / circle_ipc.dim(1))

    # Integral cochain of a 1-form with total integral 1
    assert abs(integration_matrix(circle, circle_ipc, md, 1) @ omega)[0] == pytest.approx(1.0)


def test_integration_kills_exact_forms(circle, circle_ipc, cosine, rng):
    """Test Int^1(dω) = 0 on the circle, where ∂ = 0."""
    md = compute_morse_data(cosine)
    omega = rng.standard_normal(circle_ipc.dim(0))
    image = integration_matrix(circle, circle_ipc, md, 1) @ (circle_ipc.differentials[0] @ omega)

    # Telescoping sum around the circle
    assert np.allclose(image, 0.0, atol=1e-10)


def test_integration_of_functions_reads_the_minimum(circle, circle_ipc, cosine, rng):
    """Test Int^0(ω) = ω(minimum)."""
    md = compute_morse_data(cosine)
    omega = rng.standard_normal(circle_ipc.dim(0))
    vertex = int(np.argmin(np.abs(circle.barycenters[0][:, 0] - np.pi)))

    # The unstable cell of a minimum is the point itself
    assert (integration_matrix(circle, circle_ipc, md, 0) @ omega)[0] == pytest.approx(omega[vertex])


@pytest.mark.slow
def test_small_eigenvalues_count_critical_points():
    """Test #small eigenvalues of Δ^q(t) = c_q for frequencies (2, 1) on the 2π torus."""
    mf = product_cosine([TWO_PI, TWO_PI], [2, 1])
    mesh = build_torus_grid(2, 64, [TWO_PI, TWO_PI])
    ipc = de_rham_complex(mesh)
    samples = mf.sample_on(mesh)
    md = compute_morse_data(mf)

    # Two minima, four saddles, two maxima; cohomology of the torus
    assert [detect_gap(ipc, samples, q, 25.0, 8).count for q in range(3)] == [2, 4, 2]
    assert md.counts == [2, 4, 2]
    assert cohomology_ranks(md) == [1, 2, 1]


def test_integrate_over_unstable_cell(circle, circle_ipc, cosine):
    """Test the pairing of cochains with single unstable cells."""
    md = compute_morse_data(cosine)
    maximum = next(i for i, cp in enumerate(md.critical_points) if cp.index == 1)
    ones = Cochain(1, np.full(circle_ipc.dim(1), 1.0 / circle_ipc.dim(1)))

    # The whole circle, once; a 0-cochain cannot be paired with a 1-cell
    assert abs(integrate_over_unstable(circle, circle_ipc, md, ones, maximum)) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        integrate_over_unstable(circle, circle_ipc, md, Cochain(0, np.ones(circle_ipc.dim(0))), maximum)


def test_analytic_derivatives_match_differences(rng):
    """Test gradient and Hessian of the product cosine against central differences."""
    mf = product_cosine([TWO_PI, TWO_PI], [2, 1])
    gradient, asymmetry = mf.derivative_defect(rng)

    # Second-order differences with step 1e-5; separable Hessians are diagonal
    assert gradient < 1e-6
    assert asymmetry == 0.0
