"""
Morse functions on the test manifolds and the catalog they are selected from by name.
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from witten_lab.core.complexes import CellComplex
from witten_lab.errors import ConfigError
from witten_lab.oscillator.cutoff import CutoffProfile

logger = logging.getLogger(__name__)

Field = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class AxisProfile:
    """
    One summand g(x_i) of a separable function.

    Attributes:
        value, first, second: g, g', g'' on 1-D arrays
        critical: Critical points of g in [0, L)
        unstable: True where g has a maximum
    """

    value: Callable[[np.ndarray], np.ndarray]
    first: Callable[[np.ndarray], np.ndarray]
    second: Callable[[np.ndarray], np.ndarray]
    critical: np.ndarray
    unstable: np.ndarray


@dataclass(frozen=True)
class MorseFunction:
    """
    Smooth function with gradient and Hessian oracles on a flat torus or the unit sphere.

    Torus functions take covering-space coordinates. Sphere functions are restrictions of an
    ambient function F on R^3; `value`, `gradient` and `hessian` are those of F, and the
    Riemannian versions are derived from them.

    Attributes:
        name: Catalog key
        dimension: Manifold dimension n
        manifold: "torus" or "sphere"
        value: (k, d) -> (k,)
        gradient: (k, d) -> (k, d)
        hessian: (k, d) -> (k, d, d)
        periods: Torus periods
        axes: Per-axis summands when f = Σ g_i(x_i)
        params: Parameters the function was built from
    """

    name: str
    dimension: int
    manifold: str
    value: Field
    gradient: Field
    hessian: Field
    periods: Optional[np.ndarray] = None
    axes: Optional[Tuple[AxisProfile, ...]] = None
    params: Dict[str, Any] = field(default_factory=dict)

    @property
    def ambient_dimension(self) -> int:
        return 3 if self.manifold == "sphere" else self.dimension

    @property
    def separable(self) -> bool:
        return self.axes is not None

    def __call__(self, x: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        values = self.value(pts)
        return values if np.ndim(x) == 2 else values[0]

    def displacement(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """b - a, reduced to the minimum image on a torus."""
        delta = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
        if self.periods is not None:
            delta = delta - self.periods * np.round(delta / self.periods)
        return delta

    def distance(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return np.linalg.norm(self.displacement(a, b), axis=-1)

    def wrap(self, x: np.ndarray) -> np.ndarray:
        if self.periods is not None:
            return np.mod(x, self.periods)
        return x / np.linalg.norm(x, axis=-1, keepdims=True)

    def riemannian_gradient(self, x: np.ndarray) -> np.ndarray:
        """grad f as ambient vectors; tangential projection on the sphere."""
        g = self.gradient(x)
        if self.manifold == "sphere":
            g = g - np.sum(g * x, axis=1, keepdims=True) * x
        return g

    def riemannian_hessian(self, x: np.ndarray, basis: np.ndarray) -> np.ndarray:
        """
        Hessian at a single point in an orthonormal tangent basis (columns).

        On the unit sphere this is Eᵀ (∇²F - (x·∇F) Id) E.
        """
        h = self.hessian(x[None, :])[0]
        if self.manifold == "sphere":
            h = h - float(self.gradient(x[None, :])[0] @ x) * np.eye(3)
        return basis.T @ h @ basis

    def tangent_basis(self, x: np.ndarray) -> np.ndarray:
        if self.manifold != "sphere":
            return np.eye(self.dimension)
        # Orthonormal complement of the normal x
        _, _, vt = np.linalg.svd(x[None, :])
        return vt[1:].T

    def sample_on(self, complex_: CellComplex) -> List[np.ndarray]:
        """f at the barycenter of every cell, per degree (barycenters projected onto the sphere)."""
        samples = []
        for centers in complex_.barycenters:
            pts = centers
            if self.manifold == "sphere":
                pts = centers / np.linalg.norm(centers, axis=1, keepdims=True)
            samples.append(np.asarray(self.value(pts), dtype=float))
        return samples

    def derivative_defect(self, rng: np.random.Generator, count: int = 16, step: float = 1e-5) -> Tuple[float, float]:
        """
        Relative mismatch of the gradient against central differences and Hessian asymmetry.

        Returns:
            (gradient defect, Hessian asymmetry), both as worst-case relative values
        """
        d = self.ambient_dimension
        scale = np.ones(d) if self.periods is None else self.periods
        pts = rng.uniform(0.0, 1.0, size=(count, d)) * scale
        if self.manifold == "sphere":
            pts = pts - 0.5
            pts = pts / np.linalg.norm(pts, axis=1, keepdims=True)
        grad = self.gradient(pts)
        numeric = np.zeros_like(grad)
        for i in range(d):
            e = np.zeros(d)
            e[i] = step
            numeric[:, i] = (self.value(pts + e) - self.value(pts - e)) / (2.0 * step)
        gscale = max(float(np.abs(grad).max()), 1e-12)
        hess = self.hessian(pts)
        hscale = max(float(np.abs(hess).max()), 1e-12)
        asym = float(np.abs(hess - np.swapaxes(hess, 1, 2)).max()) / hscale
        return float(np.abs(grad - numeric).max()) / gscale, asym


def _separable(
    name: str, profiles: Sequence[AxisProfile], periods: np.ndarray, params: Dict[str, Any]
) -> MorseFunction:
    n = len(profiles)

    def value(x: np.ndarray) -> np.ndarray:
        return sum(p.value(x[:, i]) for i, p in enumerate(profiles))

    def gradient(x: np.ndarray) -> np.ndarray:
        return np.stack([p.first(x[:, i]) for i, p in enumerate(profiles)], axis=1)

    def hessian(x: np.ndarray) -> np.ndarray:
        out = np.zeros((x.shape[0], n, n))
        for i, p in enumerate(profiles):
            out[:, i, i] = p.second(x[:, i])
        return out

    return MorseFunction(name, n, "torus", value, gradient, hessian, periods, tuple(profiles), params)


def _cosine_axis(amplitude: float, omega: float, frequency: int) -> AxisProfile:
    k = np.arange(2 * frequency)
    return AxisProfile(
        value=lambda u: amplitude * np.cos(omega * u),
        first=lambda u: -amplitude * omega * np.sin(omega * u),
        second=lambda u: -amplitude * omega**2 * np.cos(omega * u),
        critical=k * np.pi / omega,
        unstable=(k % 2 == 0),
    )


def _cosine_parameters(
    periods: np.ndarray, frequencies: Sequence[int], normalization: str, amplitudes: Optional[Sequence[float]]
) -> Tuple[np.ndarray, np.ndarray]:
    m = np.asarray(frequencies, dtype=int)
    if m.shape != periods.shape or np.any(m < 1):
        raise ConfigError("function.frequencies", f"need {periods.size} positive integers, got {list(frequencies)}")
    omega = 2.0 * np.pi * m / periods
    if amplitudes is not None:
        amp = np.asarray(amplitudes, dtype=float)
        if amp.shape != periods.shape or np.any(amp <= 0):
            raise ConfigError("function.amplitudes", f"need {periods.size} positive numbers")
    elif normalization == "unit":
        amp = 1.0 / omega**2
    elif normalization == "common":
        amp = np.full(periods.shape, 1.0 / (4.0 * np.pi**2))
    else:
        raise ConfigError("function.normalization", f"unknown normalization {normalization!r}")
    return omega, amp


def product_cosine(
    periods: Sequence[float],
    frequencies: Sequence[int],
    normalization: str = "unit",
    amplitudes: Optional[Sequence[float]] = None,
) -> MorseFunction:
    """
    f(x) = Σ_i A_i cos(2π m_i x_i / L_i).

    normalization "unit" picks A_i = (L_i / 2π m_i)² so every critical point has Hessian ±Id;
    "common" uses A_i = 1/(4π²) throughout.
    """
    per = np.asarray(periods, dtype=float)
    omega, amp = _cosine_parameters(per, frequencies, normalization, amplitudes)
    profiles = [_cosine_axis(float(a), float(w), int(m)) for a, w, m in zip(amp, omega, frequencies)]
    params = {"frequencies": [int(m) for m in frequencies], "amplitudes": [float(a) for a in amp]}
    return _separable("product_cosine", profiles, per, params)


def _chart_axis(amplitude: float, omega: float, frequency: int, fraction: float) -> AxisProfile:
    """Cosine replaced by its quadratic Taylor polynomial on a plateau around every critical point."""
    spacing = np.pi / omega
    bump = CutoffProfile(fraction * 0.5 * spacing)

    def local(u: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        k = np.round(u / spacing)
        s = u - k * spacing
        top = amplitude * np.cos(k * np.pi)
        return s, top, np.abs(s)

    def value(u: np.ndarray) -> np.ndarray:
        s, top, r = local(u)
        g = amplitude * np.cos(omega * u)
        taylor = top * (1.0 - 0.5 * (omega * s) ** 2)
        return g + bump(r) * (taylor - g)

    def first(u: np.ndarray) -> np.ndarray:
        s, top, r = local(u)
        g, g1 = amplitude * np.cos(omega * u), -amplitude * omega * np.sin(omega * u)
        taylor, t1 = top * (1.0 - 0.5 * (omega * s) ** 2), -top * omega**2 * s
        return g1 + bump.derivative(r) * np.sign(s) * (taylor - g) + bump(r) * (t1 - g1)

    def second(u: np.ndarray) -> np.ndarray:
        s, top, r = local(u)
        g, g1 = amplitude * np.cos(omega * u), -amplitude * omega * np.sin(omega * u)
        g2 = -amplitude * omega**2 * np.cos(omega * u)
        taylor, t1, t2 = top * (1.0 - 0.5 * (omega * s) ** 2), -top * omega**2 * s, -top * omega**2
        return (
            g2
            + bump.derivative(r, order=2) * (taylor - g)
            + 2.0 * bump.derivative(r) * np.sign(s) * (t1 - g1)
            + bump(r) * (t2 - g2)
        )

    k = np.arange(2 * frequency)
    return AxisProfile(value, first, second, k * spacing, k % 2 == 0)


def exact_chart(
    periods: Sequence[float], frequencies: Sequence[int], normalization: str = "unit", fraction: float = 0.5
) -> MorseFunction:
    """
    Product cosine made exactly quadratic near every critical point.

    On each axis the cosine is glued to its Taylor polynomial by the radial bump with outer
    radius fraction * (half the critical-point spacing).
    """
    if not 0 < fraction < 1:
        raise ConfigError("function.fraction", f"chart fraction must lie in (0, 1), got {fraction}")
    per = np.asarray(periods, dtype=float)
    omega, amp = _cosine_parameters(per, frequencies, normalization, None)
    profiles = [_chart_axis(float(a), float(w), int(m), fraction) for a, w, m in zip(amp, omega, frequencies)]
    params = {"frequencies": [int(m) for m in frequencies], "fraction": fraction}
    return _separable("exact_chart", profiles, per, params)


def coupled_cosine(
    periods: Sequence[float], frequencies: Sequence[int], coupling: float = 0.2, normalization: str = "unit"
) -> MorseFunction:
    """
    Product cosine plus ε √(A_1 A_2) sin(ω_1 x_1) sin(ω_2 x_2).

    The coupling vanishes with its gradient at every product critical point, so the critical set
    is unchanged while the Hessian frames rotate; it is Morse for |ε| < 1 under unit normalization.
    """
    per = np.asarray(periods, dtype=float)
    if per.size < 2:
        raise ConfigError("manifold.dimension", "coupled_cosine needs dimension >= 2")
    base = product_cosine(per, frequencies, normalization)
    omega, amp = _cosine_parameters(per, frequencies, normalization, None)
    w1, w2 = float(omega[0]), float(omega[1])
    c = coupling * float(np.sqrt(amp[0] * amp[1]))

    def value(x: np.ndarray) -> np.ndarray:
        return base.value(x) + c * np.sin(w1 * x[:, 0]) * np.sin(w2 * x[:, 1])

    def gradient(x: np.ndarray) -> np.ndarray:
        g = base.gradient(x)
        s1, c1 = np.sin(w1 * x[:, 0]), np.cos(w1 * x[:, 0])
        s2, c2 = np.sin(w2 * x[:, 1]), np.cos(w2 * x[:, 1])
        g[:, 0] += c * w1 * c1 * s2
        g[:, 1] += c * w2 * s1 * c2
        return g

    def hessian(x: np.ndarray) -> np.ndarray:
        h = base.hessian(x)
        s1, c1 = np.sin(w1 * x[:, 0]), np.cos(w1 * x[:, 0])
        s2, c2 = np.sin(w2 * x[:, 1]), np.cos(w2 * x[:, 1])
        h[:, 0, 0] -= c * w1**2 * s1 * s2
        h[:, 1, 1] -= c * w2**2 * s1 * s2
        h[:, 0, 1] += c * w1 * w2 * c1 * c2
        h[:, 1, 0] += c * w1 * w2 * c1 * c2
        return h

    params = {"frequencies": [int(m) for m in frequencies], "coupling": coupling}
    return MorseFunction("coupled_cosine", per.size, "torus", value, gradient, hessian, per, None, params)


def sphere_height(direction: Sequence[float] = (0.0, 0.0, 1.0)) -> MorseFunction:
    """Height f(x) = <e, x> on the unit sphere: one minimum, one maximum."""
    e = np.asarray(direction, dtype=float)
    e = e / np.linalg.norm(e)

    return MorseFunction(
        "sphere_height",
        2,
        "sphere",
        value=lambda x: x @ e,
        gradient=lambda x: np.broadcast_to(e, x.shape).copy(),
        hessian=lambda x: np.zeros((x.shape[0], 3, 3)),
        params={"direction": [float(v) for v in e]},
    )


def constant(
    dimension: int, manifold: str = "torus", level: float = 0.0, periods: Optional[Sequence[float]] = None
) -> MorseFunction:
    """f ≡ level; not Morse, used for flat-branch checks of the deformation."""
    d = 3 if manifold == "sphere" else dimension
    per = None if manifold == "sphere" else np.asarray(periods if periods is not None else np.ones(d), dtype=float)
    return MorseFunction(
        "constant",
        dimension,
        manifold,
        value=lambda x: np.full(x.shape[0], float(level)),
        gradient=lambda x: np.zeros_like(x),
        hessian=lambda x: np.zeros((x.shape[0], d, d)),
        periods=per,
        params={"level": float(level)},
    )


def negated(mf: MorseFunction) -> MorseFunction:
    """-f with the same manifold data."""
    axes = None
    if mf.axes is not None:
        axes = tuple(
            AxisProfile(
                value=(lambda g: lambda u: -g(u))(p.value),
                first=(lambda g: lambda u: -g(u))(p.first),
                second=(lambda g: lambda u: -g(u))(p.second),
                critical=p.critical,
                unstable=~p.unstable,
            )
            for p in mf.axes
        )
    return MorseFunction(
        f"-{mf.name}",
        mf.dimension,
        mf.manifold,
        value=lambda x: -mf.value(x),
        gradient=lambda x: -mf.gradient(x),
        hessian=lambda x: -mf.hessian(x),
        periods=mf.periods,
        axes=axes,
        params=dict(mf.params, negated=True),
    )


FUNCTION_CATALOG = ("product_cosine", "exact_chart", "coupled_cosine", "sphere_height", "constant")


def build_function(
    name: str, manifold: str, dimension: int, periods: Optional[Sequence[float]], params: Dict[str, Any]
) -> MorseFunction:
    """
    Instantiate a catalog function for a manifold.

    Raises:
        ConfigError: Unknown name, or a family that does not live on the manifold
    """
    if name not in FUNCTION_CATALOG:
        raise ConfigError("function.name", f"unknown function {name!r}; choose one of {', '.join(FUNCTION_CATALOG)}")
    if name == "constant":
        return constant(dimension, manifold, params.get("level", 0.0), periods)
    if name == "sphere_height":
        if manifold != "sphere":
            raise ConfigError("function.name", "sphere_height lives on the sphere")
        return sphere_height(params.get("direction", (0.0, 0.0, 1.0)))
    if manifold != "torus":
        raise ConfigError("function.name", f"{name} lives on a torus")
    per = list(periods) if periods is not None else [1.0] * dimension
    frequencies = params.get("frequencies", [1] * dimension)
    normalization = params.get("normalization", "unit")
    if name == "product_cosine":
        return product_cosine(per, frequencies, normalization, params.get("amplitudes"))
    if name == "exact_chart":
        return exact_chart(per, frequencies, normalization, params.get("fraction", 0.5))
    return coupled_cosine(per, frequencies, params.get("coupling", 0.2), normalization)
