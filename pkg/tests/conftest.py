"""
Shared fixtures: small meshes and Morse functions that solve in well under a second.
"""
import numpy as np
import pytest

from witten_lab.core.complexes import build_torus_grid
from witten_lab.core.inner_product import de_rham_complex
from witten_lab.morse.functions import product_cosine

TWO_PI = 2.0 * np.pi


@pytest.fixture
def circle():
    """Circle of length 2π with 128 cells."""
    return build_torus_grid(1, 128, [TWO_PI])


@pytest.fixture
def circle_ipc(circle):
    return de_rham_complex(circle)


@pytest.fixture
def cosine():
    """f = cos x: one minimum, one maximum, Hessians ±1."""
    return product_cosine([TWO_PI], [1])


@pytest.fixture
def double_cosine():
    """f = cos(2x)/4: two minima, two maxima, Hessians ±1."""
    return product_cosine([TWO_PI], [2])


@pytest.fixture
def unit_torus():
    return build_torus_grid(2, 8)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
