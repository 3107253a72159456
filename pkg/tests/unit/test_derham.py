"""
Unit tests for spectral packages, Hodge decomposition and lattice volumes.
"""
import numpy as np
import pytest

from witten_lab.core.complexes import build_icosphere, build_torus_grid
from witten_lab.core.inner_product import Cochain, de_rham_complex
from witten_lab.core.linalg import count_zero_eigenvalues
from witten_lab.derham.hodge import hodge_decompose
from witten_lab.derham.lattice import lattice_covolumes, lattice_volume, lattice_volumes, volume_product
from witten_lab.derham.spectral import (
    betti_numbers,
    euler_characteristic,
    group_eigenvalues,
    harmonic_basis,
    harmonic_euler,
    spectral_package,
    star_duality_defect,
)
from witten_lab.errors import AmbiguousKernelError


def test_circle_spectral_package():
    """Test the lowest eigenvalues of the N = 64 circle."""
    n = 64
    ipc = de_rham_complex(build_torus_grid(1, n))
    package = spectral_package(ipc, 0, 5)
    first = (2.0 * n * np.sin(np.pi / n)) ** 2

    # Simple zero, then a double eigenvalue
    assert abs(package.values[0]) < 1e-8
    assert package.values[1] == pytest.approx(first, rel=1e-10)
    assert package.values[2] == pytest.approx(first, rel=1e-10)
    assert package.groups[:2] == [[0], [1, 2]]
    assert package.multiplicities()[:2] == [1, 2]


def test_spectral_package_vectors_are_orthonormal():
    """Test M-orthonormality of the returned eigenvectors."""
    ipc = de_rham_complex(build_torus_grid(2, 8))
    package = spectral_package(ipc, 1, 6)
    gram = package.vectors.T @ (ipc.masses[1][:, None] * package.vectors)

    # Generalized eigenvectors are mass-orthonormal
    assert np.allclose(gram, np.eye(6), atol=1e-10)


def test_torus_betti_numbers():
    """Test harmonic-form counts of the 2-torus and 3-torus."""
    two = de_rham_complex(build_torus_grid(2, 8))
    three = de_rham_complex(build_torus_grid(3, 4))

    # Binomial Betti numbers
    assert betti_numbers(two) == [1, 2, 1]
    assert betti_numbers(three) == [1, 3, 3, 1]
    assert harmonic_euler(three) == euler_characteristic(three) == 0


def test_icosphere_betti_numbers():
    """Test harmonic-form counts of the sphere."""
    ipc = de_rham_complex(build_icosphere(1))

    # One harmonic function and one harmonic area form
    assert betti_numbers(ipc) == [1, 0, 1]
    assert harmonic_euler(ipc) == euler_characteristic(ipc) == 2


def test_star_duality_on_torus():
    """Test that Δ^q and Δ^{n-q} share their spectra on a flat torus."""
    ipc = de_rham_complex(build_torus_grid(2, 8))

    # Hodge star intertwines degrees 0 and 2
    assert star_duality_defect(ipc, 0, 6) < 1e-9


def test_group_eigenvalues_chains_close_values():
    """Test multiplicity grouping."""
    values = np.array([0.0, 1.0, 1.0 + 1e-12, 2.0])

    # Only the nearly equal pair merges
    assert group_eigenvalues(values) == [[0], [1, 2], [3]]


def test_ambiguous_kernel_raises():
    """Test that an eigenvalue between the zero and nonzero scales is refused."""
    values = np.array([1e-12, 1e-5, 1.0])

    # 1e-5 is above tol_zero * scale but the ratio across it is small
    with pytest.raises(AmbiguousKernelError):
        count_zero_eigenvalues(values, scale=1.0, tol_zero=1e-6, min_ratio=1e8)


def test_hodge_decomposition_of_exact_form():
    """Test that an exact cochain has no coexact or harmonic part."""
    ipc = de_rham_complex(build_torus_grid(2, 8))
    alpha = np.random.default_rng(1).standard_normal(ipc.dim(0))
    omega = Cochain(1, ipc.differentials[0] @ alpha)
    split = hodge_decompose(ipc, omega)
    norm = ipc.norm(1, omega.values)

    # Everything lands in the exact part
    assert ipc.norm(1, split.coexact.values) <= 1e-10 * norm
    assert ipc.norm(1, split.harmonic.values) <= 1e-10 * norm


def test_hodge_decomposition_of_harmonic_form():
    """Test that a harmonic cochain is its own harmonic part."""
    ipc = de_rham_complex(build_torus_grid(2, 8))
    omega = Cochain(1, harmonic_basis(ipc, 1)[:, 0])
    split = hodge_decompose(ipc, omega)

    # Exact and coexact parts vanish
    assert ipc.norm(1, split.exact.values) < 1e-10
    assert ipc.norm(1, split.coexact.values) < 1e-10


def test_hodge_decomposition_of_random_form():
    """Test reconstruction and orthogonality for a random 1-cochain."""
    ipc = de_rham_complex(build_torus_grid(2, 8))
    omega = Cochain(1, np.random.default_rng(2).standard_normal(ipc.dim(1)))
    split = hodge_decompose(ipc, omega)
    parts = [split.exact.values, split.coexact.values, split.harmonic.values]

    # Parts sum to ω and are pairwise M-orthogonal
    assert np.allclose(split.total().values, omega.values, atol=1e-12)
    for i in range(3):
        for j in range(i):
            assert abs(ipc.inner(1, parts[i], parts[j])) <= 1e-10 * ipc.norm(1, omega.values) ** 2


def test_unit_torus_lattice_volumes():
    """Test that every lattice volume of the unit torus is 1."""
    mesh = build_torus_grid(2, 8)
    volumes = lattice_volumes(de_rham_complex(mesh), mesh)

    # Coordinate forms dx_I have unit norm and unit periods
    assert np.allclose(volumes, [1.0, 1.0, 1.0], rtol=1e-8)
    assert volume_product(volumes) == pytest.approx(1.0, rel=1e-8)


def test_rectangular_torus_lattice_volumes():
    """Test the (2, 1) torus: V^0 = 1, V^1 = 1 and V^2 = 2."""
    mesh = build_torus_grid(2, 8, [2.0, 1.0])
    volumes = lattice_volumes(de_rham_complex(mesh), mesh)

    # V^0 is normalized to 1 and V^2 is the area
    assert volumes[0] == 1.0
    assert volumes[2] == pytest.approx(2.0, rel=1e-6)
    assert volumes[1] == pytest.approx(1.0, rel=1e-8)
    assert volume_product(volumes) == pytest.approx(2.0, rel=1e-8)


def test_rectangular_torus_covolumes():
    """Test the (2, 1) torus covolumes (√2, 1, 1/√2)."""
    mesh = build_torus_grid(2, 8, [2.0, 1.0])
    covolumes = lattice_covolumes(de_rham_complex(mesh), mesh)

    # Forms with unit periods: 1, dx/2 and dy, vol/2
    assert np.allclose(covolumes, [np.sqrt(2.0), 1.0, 1.0 / np.sqrt(2.0)], rtol=1e-8)
    assert volume_product(covolumes) == pytest.approx(1.0, rel=1e-8)


def test_lattice_volume_ignores_basis_choice():
    """Test that a recombined harmonic basis gives the same volume."""
    mesh = build_torus_grid(2, 8, [2.0, 1.0])
    ipc = de_rham_complex(mesh)
    basis = harmonic_basis(ipc, 1)
    mixed = basis @ np.array([[2.0, 1.0], [1.0, 3.0]])

    # V^1 depends only on the lattice
    assert lattice_volume(ipc, mesh, 1, basis=mixed) == pytest.approx(1.0, rel=1e-8)


def test_empty_volume_product():
    """Test the product over a single-point complex."""
    # One degree with volume 1
    assert volume_product([1.0]) == 1.0
