"""
Unit tests for cell complexes, inner products and Hodge Laplacians.
"""
import numpy as np
import pytest
import scipy.sparse as sp

from witten_lab.core.complexes import build_icosphere, build_torus_grid
from witten_lab.core.inner_product import (
    InnerProductComplex,
    adjoint_differential,
    de_rham_complex,
    laplacian,
    zero_differential_complex,
)
from witten_lab.core.linalg import to_dense
from witten_lab.errors import ConstructionError


def test_circle_coboundary_is_cyclic_difference():
    """Test that the circle coboundary maps vertex values to forward differences."""
    circle = build_torus_grid(1, 8)
    d0 = circle.coboundaries[0].toarray()

    # Edge i runs from vertex i to vertex i + 1 (mod 8)
    assert circle.counts == [8, 8]
    expected = -np.eye(8, dtype=int) + np.roll(np.eye(8, dtype=int), 1, axis=1)
    assert np.array_equal(d0, expected)


def test_torus_counts_and_euler_characteristic():
    """Test cell counts of the 4x4 torus."""
    torus = build_torus_grid(2, 4)

    # 16 vertices, 32 edges, 16 faces
    assert torus.counts == [16, 32, 16]
    assert torus.euler_characteristic == 0


@pytest.mark.parametrize("n,resolution", [(2, 4), (2, 7), (3, 4)])
def test_torus_coboundaries_square_to_zero(n, resolution):
    """Test exact nilpotency of the integer coboundaries."""
    torus = build_torus_grid(n, resolution)

    # Integer arithmetic, so the composition is exactly zero
    assert torus.nilpotency_defect() == 0


def test_torus_faces_per_cell():
    """Test that every cube has 2(q+1) faces."""
    torus = build_torus_grid(3, 4)

    # Rows of D^q list the faces of each (q+1)-cell
    for q in range(3):
        faces = np.diff(torus.coboundaries[q].indptr)
        assert np.all(faces == 2 * (q + 1))


def test_icosphere_counts():
    """Test the icosahedron and its first subdivision."""
    base = build_icosphere(0)
    refined = build_icosphere(1)

    # Euler characteristic of the sphere is 2
    assert base.counts == [12, 30, 20]
    assert base.euler_characteristic == 2
    assert refined.counts == [42, 120, 80]
    assert refined.nilpotency_defect() == 0


def test_invalid_constructions_raise():
    """Test the construction guards."""
    # Too coarse, unsupported dimension, bad subdivision level
    with pytest.raises(ConstructionError):
        build_torus_grid(2, 3)
    with pytest.raises(ConstructionError):
        build_torus_grid(4, 8)
    with pytest.raises(ConstructionError):
        build_icosphere(7)


def test_circle_masses_in_both_conventions():
    """Test the Hodge stars of the uniform unit circle."""
    circle = build_torus_grid(1, 8)
    component = de_rham_complex(circle, "component")
    integral = de_rham_complex(circle, "integral")

    # Component cochains: |σ| |⋆σ| = 1/8 in both degrees
    assert np.allclose(component.masses[0], 1.0 / 8.0)
    assert np.allclose(component.masses[1], 1.0 / 8.0)

    # Integral cochains: |⋆σ| / |σ|
    assert np.allclose(integral.masses[0], 1.0 / 8.0)
    assert np.allclose(integral.masses[1], 8.0)


def test_constant_function_has_unit_norm_on_unit_torus(unit_torus):
    """Test that the constant 0-form has norm one on the unit torus."""
    ipc = de_rham_complex(unit_torus)
    one = np.ones(ipc.dim(0))

    # Total volume is 1
    assert ipc.inner(0, one, one) == pytest.approx(1.0)


def test_icosphere_masses_positive():
    """Test that circumcentric duals of the icosphere are positive."""
    ipc = de_rham_complex(build_icosphere(2))

    # Every Hodge star entry is positive
    for mass in ipc.masses:
        assert np.all(mass > 0)


def test_adjoint_of_identity_inner_products_is_transpose():
    """Test δ = dᵀ for identity inner products."""
    d = sp.csr_matrix(np.array([[1.0, -1.0, 0.0], [0.0, 2.0, 1.0]]))
    ipc = InnerProductComplex([np.ones(3), np.ones(2)], [d])

    # δ^1 maps C^1 back to C^0
    assert np.allclose(to_dense(adjoint_differential(ipc, 1)), d.toarray().T)


def test_adjoint_of_scalar_masses(unit_torus):
    """Test δ^1 = (c_1 / c_0) (d^0)ᵀ for scalar masses."""
    ipc = de_rham_complex(unit_torus)
    c0, c1 = ipc.masses[0][0], ipc.masses[1][0]
    expected = (c1 / c0) * ipc.differentials[0].toarray().T

    # Uniform grid: each mass is a multiple of the identity
    assert np.allclose(to_dense(adjoint_differential(ipc, 1)), expected)


def test_adjoint_identity_with_random_spd_masses(rng):
    """Test <dα, β> = <α, δβ> for dense SPD inner products."""
    a0 = rng.standard_normal((3, 3))
    a1 = rng.standard_normal((4, 4))
    m0 = a0 @ a0.T + 3.0 * np.eye(3)
    m1 = a1 @ a1.T + 4.0 * np.eye(4)
    d = rng.standard_normal((4, 3))
    ipc = InnerProductComplex([m0, m1], [d])
    delta = adjoint_differential(ipc, 1)
    alpha, beta = rng.standard_normal(3), rng.standard_normal(4)

    # Adjointness in the given inner products
    lhs = (d @ alpha) @ m1 @ beta
    rhs = alpha @ m0 @ (delta @ beta)
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


def test_circle_laplacian_spectrum_closed_form():
    """Test Δ^0 eigenvalues (2N sin(πk/N))² on the unit circle."""
    n = 16
    ipc = de_rham_complex(build_torus_grid(1, n))
    values = np.sort(np.linalg.eigvals(to_dense(laplacian(ipc, 0))).real)
    expected = np.sort((2.0 * n * np.sin(np.pi * np.arange(n) / n)) ** 2)

    # Discrete Fourier modes diagonalize the cyclic Laplacian
    assert np.allclose(values, expected, atol=1e-9)


def test_zero_differential_complex_shapes():
    """Test the all-zero complex helper."""
    ipc = zero_differential_complex([2, 3, 1])

    # Dimensions and zero differentials
    assert ipc.length == 2
    assert [ipc.dim(q) for q in range(3)] == [2, 3, 1]
    assert ipc.nilpotency_defect() == 0.0


def test_mismatched_differential_shape_raises():
    """Test that a differential of the wrong shape is rejected."""
    # d^0 must map C^0 (2-dimensional) to C^1 (3-dimensional)
    with pytest.raises(ConstructionError):
        InnerProductComplex([np.ones(2), np.ones(3)], [np.zeros((2, 2))])
