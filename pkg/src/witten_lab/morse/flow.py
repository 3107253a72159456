"""
Negative gradient flow integration with capture at critical points.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from scipy.integrate import solve_ivp

from witten_lab.errors import FlowError
from witten_lab.morse.critical import CriticalPoint
from witten_lab.morse.functions import MorseFunction

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FlowControls:
    """
    Attributes:
        r_cap: Capture radius around critical points
        r_shoot: Distance from a critical point at which shots start
        rtol, atol: RK45 tolerances
        chunk_time: Flow time integrated per solve_ivp call
        max_steps: Accepted RK steps before giving up
    """

    r_cap: float
    r_shoot: float
    rtol: float = 1e-9
    atol: float = 1e-12
    chunk_time: float = 4.0
    max_steps: int = 20000

    @classmethod
    def for_diameter(
        cls, diameter: float, r_cap_rel: float = 1e-4, r_shoot_rel: float = 1e-3, **kwargs
    ) -> "FlowControls":
        return cls(r_cap=r_cap_rel * diameter, r_shoot=r_shoot_rel * diameter, **kwargs)

    def refined(self) -> "FlowControls":
        """Same radii with both tolerances halved."""
        return FlowControls(self.r_cap, self.r_shoot, self.rtol / 2, self.atol / 2, self.chunk_time, self.max_steps)


@dataclass(frozen=True)
class Trajectory:
    """
    Integrated flow line.

    Attributes:
        points: Polyline in covering coordinates, shape (k, d)
        values: f along the polyline
        limit: Position of the capturing critical point in the point list, None if uncaptured
        direction: +1 for the flow of -grad f, -1 for +grad f
    """

    points: np.ndarray
    values: np.ndarray
    limit: Optional[int]
    direction: int

    @property
    def end(self) -> np.ndarray:
        return self.points[-1]

    def is_monotone(self, slack: float = 1e-12) -> bool:
        """f decreases along forward trajectories and increases along backward ones."""
        steps = np.diff(self.values) * self.direction
        scale = max(float(np.abs(self.values).max()), 1.0)
        return bool(np.all(steps <= slack * scale))

    def to_json(self) -> dict:
        return {"direction": self.direction, "limit": self.limit, "points": self.points.tolist()}


def integrate_flow(
    mf: MorseFunction,
    x0: np.ndarray,
    direction: int,
    critical_points: List[CriticalPoint],
    controls: FlowControls,
) -> Trajectory:
    """
    Integrate dx/dt = -direction · grad f from x0 until capture by a critical point.

    Args:
        mf: Morse function
        x0: Start point, not a critical point
        direction: +1 descends, -1 ascends
        critical_points: Capture targets
        controls: Radii and tolerances

    Returns:
        Trajectory ending within r_cap of a critical point

    Raises:
        FlowError: Step budget exhausted, or the flow stalls away from every critical point
    """
    if direction not in (1, -1):
        raise ValueError("direction must be +1 or -1")
    locations = np.array([cp.location for cp in critical_points])
    sphere = mf.manifold == "sphere"

    def rhs(_t: float, y: np.ndarray) -> np.ndarray:
        return -direction * mf.riemannian_gradient(y[None, :])[0]

    def capture(_t: float, y: np.ndarray) -> float:
        return float(np.min(mf.distance(locations, y[None, :]))) - controls.r_cap

    capture.terminal = True  # type: ignore[attr-defined]
    capture.direction = -1  # type: ignore[attr-defined]

    y = np.asarray(x0, dtype=float).copy()
    pieces = [y[None, :]]
    steps = 0
    while True:
        sol = solve_ivp(
            rhs, (0.0, controls.chunk_time), y, method="RK45", rtol=controls.rtol, atol=controls.atol, events=capture
        )
        if sol.status == -1:
            raise FlowError(f"integration failed: {sol.message}", state=y.tolist())
        pieces.append(sol.y[:, 1:].T)
        steps += sol.t.size - 1
        y = sol.y[:, -1]
        if sphere:
            y = y / np.linalg.norm(y)
        if sol.status == 1:
            break
        if steps > controls.max_steps:
            raise FlowError(f"no capture within {controls.max_steps} steps (suspected tangency)", state=y.tolist())
        if np.linalg.norm(mf.riemannian_gradient(y[None, :])[0]) < 1e-14:
            raise FlowError("flow stalled away from the known critical points", state=y.tolist())

    points = np.vstack(pieces)
    dist = mf.distance(locations, y[None, :])
    limit = int(np.argmin(dist))
    trajectory = Trajectory(points, np.asarray(mf.value(points)), limit, direction)
    logger.debug("flow from %s captured at critical point %d after %d steps", np.round(x0, 6).tolist(), limit, steps)
    return trajectory


def shoot(
    mf: MorseFunction,
    source: CriticalPoint,
    vector: np.ndarray,
    direction: int,
    critical_points: List[CriticalPoint],
    controls: FlowControls,
) -> Trajectory:
    """Integrate from source + r_shoot · vector; the start point is prepended to the polyline."""
    start = source.location + controls.r_shoot * vector
    if mf.manifold == "sphere":
        start = start / np.linalg.norm(start)
    traj = integrate_flow(mf, start, direction, critical_points, controls)
    points = np.vstack([source.location[None, :], traj.points])
    values = np.concatenate([[source.value], traj.values])
    return Trajectory(points, values, traj.limit, direction)
