"""
Ratio-gap detection in the low spectrum of Witten Laplacians.
"""
import logging
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from witten_lab.core.inner_product import InnerProductComplex
from witten_lab.core.linalg import lowest_eigenpairs, norm_estimate
from witten_lab.witten.deform import deform, witten_stiffness

logger = logging.getLogger(__name__)

DEFAULT_GAP_RATIO = 10.0
FLOOR_REL = 1e-10


@dataclass(frozen=True)
class GapReport:
    """
    Largest multiplicative gap among the lowest eigenvalues of Δ^q(t).

    Attributes:
        degree: Form degree q
        t: Deformation parameter
        lower: Last eigenvalue below the gap (a)
        upper: First eigenvalue above the gap (b)
        count: Number of eigenvalues <= a
        ratio: b / max(a, floor)
        no_gap: True when the ratio is below the required minimum
        values: The eigenvalues the gap was read from
    """

    degree: int
    t: float
    lower: float
    upper: float
    count: int
    ratio: float
    no_gap: bool
    values: np.ndarray

    def row(self) -> Tuple[int, float, int, float, float, float, int]:
        return (self.degree, self.t, self.count, self.lower, self.upper, self.ratio, int(self.no_gap))


def largest_ratio_gap(values: np.ndarray, floor: float) -> Tuple[int, float]:
    """Index i maximizing λ_{i+1} / max(λ_i, floor), and that ratio."""
    clipped = np.maximum(values[:-1], floor)
    ratios = values[1:] / clipped
    i = int(np.argmax(ratios))
    return i, float(ratios[i])


def detect_gap(
    ipc: InnerProductComplex,
    f_samples: Sequence[np.ndarray],
    q: int,
    t: float,
    m: int,
    min_ratio: float = DEFAULT_GAP_RATIO,
    seed: int = 0,
) -> GapReport:
    """
    Find the spectral gap of Δ^q(t) among its lowest m eigenvalues.

    Eigenvalues below 1e-10 times the norm estimate are treated as zero when forming ratios.

    Args:
        ipc: Base complex
        f_samples: f per degree
        q: Degree
        t: Deformation parameter
        m: Window size (at least c_q + 5)
        min_ratio: Ratio below which the report carries the no-gap flag

    Returns:
        GapReport
    """
    dc = deform(ipc, f_samples, t)
    k = witten_stiffness(dc, q)
    mass = ipc.masses[q]
    pairs = lowest_eigenpairs(k, mass, m, seed=seed)
    values = np.maximum(pairs.values, 0.0)
    if values.size < 2:
        return GapReport(q, float(t), 0.0, 0.0, int(values.size), 0.0, True, values)
    floor = FLOOR_REL * norm_estimate(k, mass)
    i, ratio = largest_ratio_gap(values, floor)
    report = GapReport(q, float(t), float(values[i]), float(values[i + 1]), i + 1, ratio, ratio < min_ratio, values)
    if report.no_gap:
        logger.warning("no ratio gap >= %g for Δ^%d at t=%g (best %.3g)", min_ratio, q, t, ratio)
    else:
        logger.debug("gap of Δ^%d at t=%g: %d below, ratio %.3g", q, t, report.count, ratio)
    return report
