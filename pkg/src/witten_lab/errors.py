"""
Exception hierarchy shared by every module of the laboratory.
"""
from typing import Any, Optional


class WittenLabError(Exception):
    """Root of all errors raised by the package."""

    module = "witten_lab"

    def __init__(self, message: str, module: Optional[str] = None):
        if module is not None:
            self.module = module
        super().__init__(f"{self.module}: {message}")
        self.message = message


class ConfigError(WittenLabError):
    """
    Invalid experiment configuration.

    The CLI maps this branch of the hierarchy to exit code 2.
    """

    module = "config"

    def __init__(self, path: str, message: str):
        self.path = path or "<root>"
        super().__init__(f"{self.path}: {message}")


class ResolutionCapError(ConfigError):
    """Requested t_max exceeds what the mesh spacing can resolve."""

    def __init__(self, path: str, t_max: float, spacing: float):
        cap = (0.5 / spacing) ** 2
        self.t_max = t_max
        self.cap = cap
        super().__init__(
            path,
            f"t_max={t_max:g} violates the resolution cap h <= 0.5/sqrt(t_max) "
            f"(h={spacing:.6g}, so t_max <= (0.5/h)^2 = {cap:.6g})",
        )


class NumericalError(WittenLabError):
    """An invariant was violated or a numerical procedure failed (exit code 1)."""


class ConstructionError(NumericalError):
    module = "complexes"


class ConvergenceError(NumericalError):
    """Iterative solver or quadrature stopped short of its tolerance."""

    def __init__(self, message: str, residual: Optional[float] = None, module: Optional[str] = None):
        self.residual = residual
        if residual is not None:
            message = f"{message} (achieved residual {residual:.3e})"
        super().__init__(message, module)


class AmbiguousKernelError(NumericalError):
    """Kernel threshold could not separate zero from nonzero eigenvalues."""

    module = "derham"

    def __init__(self, ratio: float, message: str = ""):
        self.ratio = ratio
        super().__init__(
            f"ambiguous kernel threshold, gap ratio {ratio:.3g} < 10; refine the mesh"
            + (f" ({message})" if message else "")
        )


class LatticeError(NumericalError):
    module = "derham"


class OverflowGuardError(NumericalError):
    module = "witten"

    def __init__(self, max_exponent: float):
        self.max_exponent = max_exponent
        super().__init__(f"|t*f| reaches {max_exponent:.4g} > 300; normalize f or reduce t")


class DecompositionError(NumericalError):
    module = "witten"

    def __init__(self, residual: float, tolerance: float):
        self.residual = residual
        super().__init__(f"quadratic interpolation residual {residual:.3e} exceeds {tolerance:.1e} at t=2")


class BranchError(NumericalError):
    module = "witten"


class MorseError(NumericalError):
    module = "morse"


class DegenerateCriticalPointError(MorseError):
    def __init__(self, location: Any, eigenvalue: float):
        self.location = location
        super().__init__(f"degenerate Hessian at {location} (|eigenvalue| = {abs(eigenvalue):.3e} < 1e-6)")


class FlowError(MorseError):
    """Flow integration or trajectory search failed; carries the final state."""

    def __init__(self, message: str, state: Any = None):
        self.state = state
        if state is not None:
            message = f"{message}; final state {state}"
        super().__init__(message)


class UnrepresentableCellError(MorseError):
    pass


class MorseComplexError(MorseError):
    pass


class OscillatorError(NumericalError):
    module = "oscillator"


class TorsionError(NumericalError):
    module = "torsion"
