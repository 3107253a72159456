"""
Experiment configuration: frozen dataclasses, validation with dotted error paths, the published
JSON schema and the canonical hash every artifact carries.
"""
import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

from witten_lab.errors import ConfigError, ResolutionCapError

logger = logging.getLogger(__name__)

TOPOLOGIES = ("torus", "sphere")
NORMALIZATIONS = ("integral", "component")
FUNCTION_NAMES = ("product_cosine", "exact_chart", "coupled_cosine", "sphere_height", "constant")


def canonical_json(value: Any) -> str:
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def _number(
    data: Mapping[str, Any],
    key: str,
    path: str,
    default: float,
    low: Optional[float] = None,
    high: Optional[float] = None,
    strict_low: bool = False,
) -> float:
    value = data.get(key, default)
    where = f"{path}.{key}"
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(where, f"expected a number, got {value!r}")
    value = float(value)
    if low is not None and (value <= low if strict_low else value < low):
        raise ConfigError(where, f"must be {'>' if strict_low else '>='} {low:g}, got {value:g}")
    if high is not None and value > high:
        raise ConfigError(where, f"must be <= {high:g}, got {value:g}")
    return value


def _integer(
    data: Mapping[str, Any], key: str, path: str, default: int, low: Optional[int] = None, high: Optional[int] = None
) -> int:
    value = data.get(key, default)
    where = f"{path}.{key}"
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(where, f"expected an integer, got {value!r}")
    if low is not None and value < low:
        raise ConfigError(where, f"must be >= {low}, got {value}")
    if high is not None and value > high:
        raise ConfigError(where, f"must be <= {high}, got {value}")
    return value


def _boolean(data: Mapping[str, Any], key: str, path: str, default: bool) -> bool:
    value = data.get(key, default)
    if not isinstance(value, bool):
        raise ConfigError(f"{path}.{key}", f"expected true or false, got {value!r}")
    return value


def _choice(data: Mapping[str, Any], key: str, path: str, default: str, choices: Tuple[str, ...]) -> str:
    value = data.get(key, default)
    if value not in choices:
        raise ConfigError(f"{path}.{key}", f"expected one of {', '.join(choices)}, got {value!r}")
    return value


def _section(data: Mapping[str, Any], key: str, allowed: Tuple[str, ...]) -> Mapping[str, Any]:
    value = data.get(key, {})
    if not isinstance(value, Mapping):
        raise ConfigError(key, "expected an object")
    unknown = sorted(set(value) - set(allowed))
    if unknown:
        raise ConfigError(f"{key}.{unknown[0]}", "unknown field")
    return value


def _numbers(value: Any, path: str, positive: bool = False) -> List[float]:
    if not isinstance(value, list) or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value):
        raise ConfigError(path, f"expected a list of numbers, got {value!r}")
    if positive and any(v <= 0 for v in value):
        raise ConfigError(path, "entries must be positive")
    return [float(v) for v in value]


@dataclass(frozen=True)
class ManifoldSpec:
    """
    Attributes:
        topology: "torus" or "sphere"
        dimension: 1..3 for tori, 2 for the sphere
        resolution: Cells per axis (torus) or subdivision level (sphere)
        periods: Torus periods, defaults to the unit torus
        normalization: Cochain convention, "integral" or "component"
    """

    topology: str = "torus"
    dimension: int = 2
    resolution: int = 32
    periods: Optional[Tuple[float, ...]] = None
    normalization: str = "integral"

    FIELDS = ("topology", "dimension", "resolution", "periods", "normalization")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ManifoldSpec":
        path = "manifold"
        topology = _choice(data, "topology", path, "torus", TOPOLOGIES)
        if topology == "sphere":
            dimension = _integer(data, "dimension", path, 2, 2, 2)
            resolution = _integer(data, "resolution", path, 3, 0, 6)
        else:
            dimension = _integer(data, "dimension", path, 2, 1, 3)
            resolution = _integer(data, "resolution", path, 32, 4)
        periods = None
        if data.get("periods") is not None:
            if topology == "sphere":
                raise ConfigError(f"{path}.periods", "the sphere has no periods")
            periods = tuple(_numbers(data["periods"], f"{path}.periods", positive=True))
            if len(periods) != dimension:
                raise ConfigError(f"{path}.periods", f"need {dimension} periods, got {len(periods)}")
        normalization = _choice(data, "normalization", path, "integral", NORMALIZATIONS)
        return cls(topology, dimension, resolution, periods, normalization)

    @property
    def spacing(self) -> Optional[float]:
        """Mesh width of a torus grid; None for the sphere (known only once the mesh is built)."""
        if self.topology != "torus":
            return None
        return max(self.periods or (1.0,) * self.dimension) / self.resolution


@dataclass(frozen=True)
class FunctionSpec:
    name: str = "product_cosine"
    params: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "FunctionSpec":
        name = _choice(data, "name", "function", "product_cosine", FUNCTION_NAMES)
        params = data.get("params", {})
        if not isinstance(params, Mapping):
            raise ConfigError("function.params", "expected an object")
        return cls(name, dict(params))


@dataclass(frozen=True)
class GridSpec:
    """
    Attributes:
        t_min, t_max, count: Uniform grid of `count` points
        adaptive: Allow step halving between grid points during branch tracking
        samples: Times that get a gap report and an eigenvector snapshot (default: t_max)
    """

    t_min: float = 0.0
    t_max: float = 25.0
    count: int = 26
    adaptive: bool = True
    samples: Tuple[float, ...] = ()

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "GridSpec":
        path = "t_grid"
        t_min = _number(data, "t_min", path, 0.0, 0.0)
        t_max = _number(data, "t_max", path, 25.0, t_min, strict_low=True)
        count = _integer(data, "count", path, 26, 2)
        adaptive = _boolean(data, "adaptive", path, True)
        samples = tuple(_numbers(data.get("samples", []), f"{path}.samples"))
        for i, s in enumerate(samples):
            if not t_min <= s <= t_max:
                raise ConfigError(f"{path}.samples[{i}]", f"{s:g} outside [{t_min:g}, {t_max:g}]")
        return cls(t_min, t_max, count, adaptive, samples)

    def values(self) -> List[float]:
        step = (self.t_max - self.t_min) / (self.count - 1)
        return [self.t_min + i * step for i in range(self.count - 1)] + [self.t_max]

    def sample_points(self) -> List[float]:
        return list(self.samples) if self.samples else [self.t_max]


@dataclass(frozen=True)
class SolverSettings:
    eigencount: int = 16
    seed: int = 0
    tol_zero: float = 1e-6
    min_ratio: float = 10.0
    tol_group: float = 1e-8
    overlap_min: float = 0.8
    max_depth: int = 12
    threads: int = 1
    cluster_gap: float = 1e-3

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SolverSettings":
        path = "solver"
        overlap = _number(data, "overlap_min", path, 0.8, 0.5, 1.0, strict_low=True)
        if overlap >= 1.0:
            raise ConfigError(f"{path}.overlap_min", "must be < 1")
        return cls(
            eigencount=_integer(data, "eigencount", path, 16, 1),
            seed=_integer(data, "seed", path, 0, 0, 2**64 - 1),
            tol_zero=_number(data, "tol_zero", path, 1e-6, 0.0, 1.0, strict_low=True),
            min_ratio=_number(data, "min_ratio", path, 10.0, 1.0, strict_low=True),
            tol_group=_number(data, "tol_group", path, 1e-8, 0.0, strict_low=True),
            overlap_min=overlap,
            max_depth=_integer(data, "max_depth", path, 12, 0, 30),
            threads=_integer(data, "threads", path, 1, 1),
            cluster_gap=_number(data, "cluster_gap", path, 1e-3, 0.0, 1.0, strict_low=True),
        )


@dataclass(frozen=True)
class MorseSettings:
    seed_resolution: int = 8
    r_cap_rel: float = 1e-4
    r_shoot_rel: float = 1e-3
    rtol: float = 1e-9
    atol: float = 1e-12
    circle_samples: int = 64
    verify_samples: bool = False

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "MorseSettings":
        path = "morse"
        r_cap = _number(data, "r_cap_rel", path, 1e-4, 0.0, 0.1, strict_low=True)
        r_shoot = _number(data, "r_shoot_rel", path, 1e-3, 0.0, 0.1, strict_low=True)
        if r_shoot <= r_cap:
            raise ConfigError(f"{path}.r_shoot_rel", "must exceed r_cap_rel")
        return cls(
            seed_resolution=_integer(data, "seed_resolution", path, 8, 8),
            r_cap_rel=r_cap,
            r_shoot_rel=r_shoot,
            rtol=_number(data, "rtol", path, 1e-9, 0.0, 1e-3, strict_low=True),
            atol=_number(data, "atol", path, 1e-12, 0.0, 1e-3, strict_low=True),
            circle_samples=_integer(data, "circle_samples", path, 64, 8),
            verify_samples=_boolean(data, "verify_samples", path, False),
        )


@dataclass(frozen=True)
class TorsionSettings:
    """
    Attributes:
        corpus_cases: Random complexes in the identity check
        identity_tolerance: Largest accepted relative error of the identity
        isometry_t: t values of the L·R isometry table
        tolerance: Largest accepted |right-hand side| of the torsion formula
        eta: Placement cutoff radius (None: from the critical-point separation)
        extra_branches: Branches tracked beyond the critical-point count per degree
    """

    corpus_cases: int = 200
    identity_tolerance: float = 1e-9
    isometry_t: Tuple[float, ...] = (15.0, 20.0, 25.0, 30.0)
    tolerance: float = 0.2
    eta: Optional[float] = None
    extra_branches: int = 4

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "TorsionSettings":
        path = "torsion"
        eta = data.get("eta")
        if eta is not None:
            eta = _number(data, "eta", path, 1.0, 0.0, strict_low=True)
        isometry_t = tuple(_numbers(data.get("isometry_t", [15.0, 20.0, 25.0, 30.0]), f"{path}.isometry_t", True))
        return cls(
            corpus_cases=_integer(data, "corpus_cases", path, 200, 1),
            identity_tolerance=_number(data, "identity_tolerance", path, 1e-9, 0.0, strict_low=True),
            isometry_t=isometry_t,
            tolerance=_number(data, "tolerance", path, 0.2, 0.0, strict_low=True),
            eta=eta,
            extra_branches=_integer(data, "extra_branches", path, 4, 1),
        )


@dataclass(frozen=True)
class OscillatorSettings:
    max_dimension: int = 3
    max_order: int = 3
    richardson_levels: int = 6
    richardson_h: float = 0.01

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "OscillatorSettings":
        path = "oscillator"
        return cls(
            max_dimension=_integer(data, "max_dimension", path, 3, 1, 4),
            max_order=_integer(data, "max_order", path, 3, 0, 6),
            richardson_levels=_integer(data, "richardson_levels", path, 6, 1, 20),
            richardson_h=_number(data, "richardson_h", path, 0.01, 0.0, 0.5, strict_low=True),
        )


_SECTIONS = {
    "manifold": (ManifoldSpec, ManifoldSpec.FIELDS),
    "function": (FunctionSpec, ("name", "params")),
    "t_grid": (GridSpec, ("t_min", "t_max", "count", "adaptive", "samples")),
    "solver": (
        SolverSettings,
        (
            "eigencount",
            "seed",
            "tol_zero",
            "min_ratio",
            "tol_group",
            "overlap_min",
            "max_depth",
            "threads",
            "cluster_gap",
        ),
    ),
    "morse": (
        MorseSettings,
        ("seed_resolution", "r_cap_rel", "r_shoot_rel", "rtol", "atol", "circle_samples", "verify_samples"),
    ),
    "torsion": (
        TorsionSettings,
        ("corpus_cases", "identity_tolerance", "isometry_t", "tolerance", "eta", "extra_branches"),
    ),
    "oscillator": (OscillatorSettings, ("max_dimension", "max_order", "richardson_levels", "richardson_h")),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated configuration of one experiment run."""

    name: str = "experiment"
    manifold: ManifoldSpec = field(default_factory=ManifoldSpec)
    function: FunctionSpec = field(default_factory=FunctionSpec)
    t_grid: GridSpec = field(default_factory=GridSpec)
    solver: SolverSettings = field(default_factory=SolverSettings)
    morse: MorseSettings = field(default_factory=MorseSettings)
    torsion: TorsionSettings = field(default_factory=TorsionSettings)
    oscillator: OscillatorSettings = field(default_factory=OscillatorSettings)
    output: Optional[str] = None

    @classmethod
    def from_dict(cls, data: Any) -> "ExperimentConfig":
        """
        Validate a parsed JSON document.

        Raises:
            ConfigError: With the dotted path of the first offending field
            ResolutionCapError: t_max beyond (0.5/h)² on a torus grid
        """
        if not isinstance(data, Mapping):
            raise ConfigError("", "configuration must be a JSON object")
        unknown = sorted(set(data) - set(_SECTIONS) - {"name", "output"})
        if unknown:
            raise ConfigError(unknown[0], "unknown field")
        name = data.get("name", "experiment")
        if not isinstance(name, str) or not name:
            raise ConfigError("name", "expected a non-empty string")
        output = data.get("output")
        if output is not None and not isinstance(output, str):
            raise ConfigError("output", "expected a directory path")
        sections = {key: spec.from_dict(_section(data, key, allowed)) for key, (spec, allowed) in _SECTIONS.items()}
        config = cls(name=name, output=output, **sections)
        config.check_resolution_cap()
        return config

    def check_resolution_cap(self, spacing: Optional[float] = None) -> None:
        """h <= 0.5/sqrt(t_max); the spacing defaults to the torus grid width."""
        h = self.manifold.spacing if spacing is None else spacing
        if h is None:
            return
        if self.t_grid.t_max > (0.5 / h) ** 2 * (1.0 + 1e-12):
            raise ResolutionCapError("t_grid.t_max", self.t_grid.t_max, h)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        if seed < 0 or seed >= 2**64:
            raise ConfigError("solver.seed", f"seed {seed} outside the unsigned 64-bit range")
        return replace(self, solver=replace(self.solver, seed=seed))

    def with_threads(self, threads: int) -> "ExperimentConfig":
        if threads < 1:
            raise ConfigError("solver.threads", "need at least one thread")
        return replace(self, solver=replace(self.solver, threads=threads))

    def to_dict(self) -> Dict[str, Any]:
        """JSON-ready nested dictionary (tuples become lists)."""
        return json.loads(canonical_json(asdict(self)))

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON of the effective configuration."""
        return hashlib.sha256(canonical_json(self.to_dict()).encode("utf-8")).hexdigest()


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """
    Read and validate a JSON configuration file.

    Raises:
        ConfigError: Unreadable file, malformed JSON (path <root>) or invalid content
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("", f"cannot read {path}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    config = ExperimentConfig.from_dict(data)
    logger.info("loaded configuration %r from %s (hash %s)", config.name, path, config.config_hash()[:12])
    return config


def _properties(**fields: Dict[str, Any]) -> Dict[str, Any]:
    return {"type": "object", "additionalProperties": False, "properties": fields}


_NUMBER = {"type": "number"}
_POSITIVE = {"type": "number", "exclusiveMinimum": 0}

CONFIG_SCHEMA: Dict[str, Any] = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "witten-lab experiment configuration",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string", "minLength": 1},
        "output": {"type": "string"},
        "manifold": _properties(
            topology={"enum": list(TOPOLOGIES)},
            dimension={"type": "integer", "minimum": 1, "maximum": 3},
            resolution={"type": "integer", "minimum": 0},
            periods={"type": ["array", "null"], "items": _POSITIVE},
            normalization={"enum": list(NORMALIZATIONS)},
        ),
        "function": _properties(name={"enum": list(FUNCTION_NAMES)}, params={"type": "object"}),
        "t_grid": _properties(
            t_min={"type": "number", "minimum": 0},
            t_max=_POSITIVE,
            count={"type": "integer", "minimum": 2},
            adaptive={"type": "boolean"},
            samples={"type": "array", "items": _NUMBER},
        ),
        "solver": _properties(
            eigencount={"type": "integer", "minimum": 1},
            seed={"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
            tol_zero={"type": "number", "exclusiveMinimum": 0, "maximum": 1},
            min_ratio={"type": "number", "exclusiveMinimum": 1},
            tol_group=_POSITIVE,
            overlap_min={"type": "number", "exclusiveMinimum": 0.5, "exclusiveMaximum": 1},
            max_depth={"type": "integer", "minimum": 0, "maximum": 30},
            threads={"type": "integer", "minimum": 1},
            cluster_gap={"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        ),
        "morse": _properties(
            seed_resolution={"type": "integer", "minimum": 8},
            r_cap_rel={"type": "number", "exclusiveMinimum": 0, "maximum": 0.1},
            r_shoot_rel={"type": "number", "exclusiveMinimum": 0, "maximum": 0.1},
            rtol={"type": "number", "exclusiveMinimum": 0, "maximum": 1e-3},
            atol={"type": "number", "exclusiveMinimum": 0, "maximum": 1e-3},
            circle_samples={"type": "integer", "minimum": 8},
            verify_samples={"type": "boolean"},
        ),
        "torsion": _properties(
            corpus_cases={"type": "integer", "minimum": 1},
            identity_tolerance=_POSITIVE,
            isometry_t={"type": "array", "items": _POSITIVE},
            tolerance=_POSITIVE,
            eta={"type": ["number", "null"], "exclusiveMinimum": 0},
            extra_branches={"type": "integer", "minimum": 1},
        ),
        "oscillator": _properties(
            max_dimension={"type": "integer", "minimum": 1, "maximum": 4},
            max_order={"type": "integer", "minimum": 0, "maximum": 6},
            richardson_levels={"type": "integer", "minimum": 1, "maximum": 20},
            richardson_h={"type": "number", "exclusiveMinimum": 0, "maximum": 0.5},
        ),
    },
}


def write_schema(path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(CONFIG_SCHEMA, indent=2, sort_keys=True) + "\n", encoding="utf-8")
