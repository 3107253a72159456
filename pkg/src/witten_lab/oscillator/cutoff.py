"""
Radial cutoff profile γ_η and the normalization of cut-off Gaussian forms.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Tuple, Union

import numpy as np
from scipy.integrate import quad
from scipy.special import gamma

from witten_lab.errors import ConvergenceError

logger = logging.getLogger(__name__)

PROFILES = ("bump", "none")
QUAD_EPSREL = 1e-10

ArrayLike = Union[float, np.ndarray]


def sphere_surface(n: int) -> float:
    """Area of the unit sphere S^{n-1} in R^n (2 for n = 1)."""
    return float(2.0 * np.pi ** (n / 2.0) / gamma(n / 2.0))


@dataclass
class CutoffProfile:
    """
    Smooth radial cutoff: 1 on [0, η/2], 0 on [η, ∞).

    On (η/2, η) the profile is exp(1 - 1/(1 - s²)) with s = (u - η/2)/(η/2).

    Attributes:
        eta: Outer radius η
        profile: "bump", or "none" for γ ≡ 1
    """

    eta: float
    profile: str = "bump"
    _cache: Dict[Tuple[int, float], float] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.eta <= 0:
            raise ValueError(f"cutoff radius must be positive, got {self.eta}")
        if self.profile not in PROFILES:
            raise ValueError(f"unknown cutoff profile {self.profile!r}")

    def _s(self, u: np.ndarray) -> np.ndarray:
        half = 0.5 * self.eta
        return (u - half) / half

    def __call__(self, u: ArrayLike) -> ArrayLike:
        arr = np.asarray(u, dtype=float)
        if self.profile == "none":
            out = np.ones_like(arr)
        else:
            s = self._s(arr)
            inside = (s > 0) & (s < 1)
            out = np.where(s <= 0, 1.0, 0.0)
            safe = np.where(inside, s, 0.5)
            out = np.where(inside, np.exp(1.0 - 1.0 / (1.0 - safe**2)), out)
        return out if out.ndim else float(out)

    def derivative(self, u: ArrayLike, order: int = 1) -> ArrayLike:
        """First or second radial derivative of γ."""
        arr = np.asarray(u, dtype=float)
        if self.profile == "none":
            out = np.zeros_like(arr)
            return out if out.ndim else float(out)
        s = self._s(arr)
        inside = (s > 0) & (s < 1)
        safe = np.where(inside, s, 0.5)
        w = 1.0 - safe**2
        g = 1.0 - 1.0 / w
        g1 = -2.0 * safe / w**2
        scale = 2.0 / self.eta
        if order == 1:
            value = np.exp(g) * g1 * scale
        elif order == 2:
            g2 = -2.0 / w**2 - 8.0 * safe**2 / w**3
            value = np.exp(g) * (g1**2 + g2) * scale**2
        else:
            raise ValueError("only first and second derivatives are available")
        out = np.where(inside, value, 0.0)
        return out if out.ndim else float(out)

    def normalization(self, n: int, t: float) -> float:
        """Cached β(t) in dimension n."""
        key = (n, float(t))
        if key not in self._cache:
            self._cache[key] = cutoff_normalization(n, self.eta, t, self)
        return self._cache[key]


def cutoff_normalization(n: int, eta: float, t: float, profile: CutoffProfile) -> float:
    """
    L² norm of the cut-off normalized Gaussian γ_η(|x|) (t/π)^{n/4} e^{-t|x|²/2} on R^n.

    Args:
        n: Dimension
        eta: Cutoff radius
        t: Deformation parameter, t > 0
        profile: Cutoff profile

    Returns:
        β(t) in (0, 1]

    Raises:
        ConvergenceError: When the radial quadrature misses relative tolerance 1e-10
    """
    if t <= 0 or eta <= 0:
        raise ValueError("cutoff normalization needs t > 0 and η > 0")
    if profile.profile == "none":
        return 1.0

    def integrand(r: float) -> float:
        return float(profile(r)) ** 2 * np.exp(-t * r * r) * r ** (n - 1)

    # γ is only C¹ at η/2, which is kept on a subinterval endpoint.
    total = 0.0
    for lo, hi in ((0.0, 0.5 * eta), (0.5 * eta, eta)):
        epsabs = 1e-2 * QUAD_EPSREL * total
        result = quad(integrand, lo, hi, epsrel=QUAD_EPSREL, epsabs=epsabs, limit=200, full_output=1)
        if len(result) > 3:
            raise ConvergenceError(
                f"radial quadrature on [{lo:g}, {hi:g}] failed: {result[3]}", residual=result[1], module="oscillator"
            )
        total += result[0]
    beta = (t / np.pi) ** (n / 4.0) * np.sqrt(sphere_surface(n) * total)
    logger.debug("β(n=%d, η=%g, t=%g) = %.12f", n, eta, t, beta)
    return float(min(beta, 1.0))
