"""
Symbols (k; I, P) of the multivariable harmonic oscillator on forms and their orders.

The model operator of degree q at a critical point of Morse index k is
Σ_j (-∂_j² + t² x_j²) + t ε_I^{q,k} acting on φ dx_I, with f = ½(-Σ_{j<=k} x_j² + Σ_{j>k} x_j²).
"""
import itertools
import logging
from dataclasses import dataclass
from typing import Dict, Iterator, List, Sequence, Tuple, Union

import numpy as np
from scipy.special import factorial

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]


def hermite(j: int, x: ArrayLike) -> ArrayLike:
    """
    Physicists' Hermite polynomial by H_{j+1} = 2x H_j - 2j H_{j-1}.

    Args:
        j: Degree, j >= 0
        x: Scalar or array

    Returns:
        H_j(x) with the shape of x
    """
    if j < 0:
        raise ValueError(f"Hermite degree must be nonnegative, got {j}")
    x = np.asarray(x, dtype=float)
    previous, current = np.ones_like(x), 2.0 * x
    if j == 0:
        return previous if previous.ndim else float(previous)
    for i in range(1, j):
        previous, current = current, 2.0 * x * current - 2.0 * i * previous
    return current if current.ndim else float(current)


def hermite_function(p: int, t: float, x: ArrayLike) -> ArrayLike:
    """L²-normalized eigenfunction (t/π)^{1/4} (2^p p!)^{-1/2} H_p(√t x) e^{-t x²/2} of -∂² + t² x²."""
    norm = (t / np.pi) ** 0.25 / np.sqrt(2.0**p * float(factorial(p, exact=True)))
    x = np.asarray(x, dtype=float)
    return norm * hermite(p, np.sqrt(t) * x) * np.exp(-0.5 * t * x**2)


def count_unstable(index_set: Sequence[int], k: int) -> int:
    """#{j in I | j <= k}."""
    return sum(1 for j in index_set if j <= k)


def epsilon_coeff(n: int, q: int, k: int, index_set: Sequence[int]) -> int:
    """
    Coefficient of t in the zeroth-order term of the model operator on dx_I.

    ε = -n + 2k - 2q + 4 #{j in I | k+1 <= j <= n}.
    """
    if len(index_set) != q:
        raise ValueError(f"|I| = {len(index_set)} but q = {q}")
    if any(not 1 <= j <= n for j in index_set):
        raise ValueError(f"index set {tuple(index_set)} not inside 1..{n}")
    stable = sum(1 for j in index_set if k + 1 <= j <= n)
    return -n + 2 * k - 2 * q + 4 * stable


def axis_shift(n: int, k: int, index_set: Sequence[int]) -> np.ndarray:
    """Per-axis share λ_j (2[j in I] - 1) of ε, with λ_j = -1 on the first k axes and +1 after."""
    lam = np.where(np.arange(1, n + 1) <= k, -1.0, 1.0)
    inside = np.array([1.0 if j in index_set else 0.0 for j in range(1, n + 1)])
    return lam * (2.0 * inside - 1.0)


def symbol_order(q: int, k: int, index_set: Sequence[int], p: Sequence[int]) -> int:
    """o^k(I, P) = Σ p_i + q + k - 2 #{j in I | j <= k}."""
    return int(sum(p)) + q + k - 2 * count_unstable(index_set, k)


@dataclass(frozen=True, order=True)
class OscSymbol:
    """Eigenform label of the model operator: Morse index k, index set I, multi-index P and order o."""

    order: int
    n: int
    q: int
    k: int
    index_set: Tuple[int, ...]
    p: Tuple[int, ...]

    def __post_init__(self) -> None:
        expected = symbol_order(self.q, self.k, self.index_set, self.p)
        if expected != self.order or self.order < 0:
            raise ValueError(f"inconsistent order {self.order} for symbol, expected {expected}")

    def row(self) -> Tuple[int, int, int, str, str, int]:
        """(n, q, k, I, P, o) for symbol tables."""
        return (
            self.n,
            self.q,
            self.k,
            " ".join(str(j) for j in self.index_set),
            " ".join(str(v) for v in self.p),
            self.order,
        )


def _compositions(total: int, parts: int) -> Iterator[Tuple[int, ...]]:
    """All tuples of `parts` nonnegative integers summing to `total`."""
    if parts == 0:
        if total == 0:
            yield ()
        return
    for bars in itertools.combinations(range(total + parts - 1), parts - 1):
        edges = (-1,) + bars + (total + parts - 1,)
        yield tuple(edges[i + 1] - edges[i] - 1 for i in range(parts))


def enumerate_symbols(n: int, q: int, k: int, max_order: int) -> Tuple[List[OscSymbol], Dict[int, int]]:
    """
    List every symbol of degree q and Morse index k with order <= max_order.

    Returns:
        (symbols sorted by order then I then P, count per order 0..max_order)
    """
    if max_order < 0:
        raise ValueError("max_order must be nonnegative")
    symbols = []
    for index_set in itertools.combinations(range(1, n + 1), q):
        base = q + k - 2 * count_unstable(index_set, k)
        for total in range(0, max_order - base + 1):
            for p in _compositions(total, n):
                symbols.append(OscSymbol(total + base, n, q, k, index_set, p))
    symbols.sort()
    counts = {order: 0 for order in range(max_order + 1)}
    for sym in symbols:
        counts[sym.order] += 1
    return symbols, counts


def model_eigenvalue(sym: OscSymbol, t: float) -> float:
    return 2.0 * t * sym.order


def model_eigenform(sym: OscSymbol, t: float, x: np.ndarray) -> np.ndarray:
    """
    Coefficient of dx_I of the normalized model eigenform at points x.

    Args:
        sym: Symbol
        t: Deformation parameter, t > 0
        x: Points, shape (n,) or (m, n)

    Returns:
        Π_i h_{p_i}(x_i) with h_p the normalized Hermite functions; for the ground symbol
        this is (t/π)^{n/4} e^{-t|x|²/2}
    """
    if t <= 0:
        raise ValueError("model eigenforms need t > 0")
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    values = np.ones(pts.shape[0])
    for axis, p in enumerate(sym.p):
        values = values * hermite_function(p, t, pts[:, axis])
    return values if np.ndim(x) == 2 else float(values[0])


def cluster_cardinalities(critical_indices: Sequence[int], n: int, q: int, max_k: int) -> List[int]:
    """
    Number of symbols of order k in degree q summed over the critical points, for k = 0..max_k.

    At k = 0 this is the number of critical points of index q.
    """
    totals = [0] * (max_k + 1)
    cache: Dict[int, Dict[int, int]] = {}
    for index in critical_indices:
        if index not in cache:
            cache[index] = enumerate_symbols(n, q, index, max_k)[1]
        for order, count in cache[index].items():
            totals[order] += count
    return totals
