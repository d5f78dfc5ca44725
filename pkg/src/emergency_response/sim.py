"""Desk-scale vehicle world with a synthetic observation-uncertainty signal.

Stands in for a 3-D driving simulator plus a trained auto-encoder: a planar
kinematic bicycle drives along a straight or circular-arc road toward a
stationary disc obstacle, and the "reconstruction error" it reports rises as
the obstacle gets closer and nearer the center of view.

Conventions
-----------
* World frame: x forward at the road start, y to the left, heading
  counter-clockwise from +x.
* Steering angle is positive to the RIGHT (so action ``a2 = 1`` is full
  right), hence yaw rate ``= -v / L * tan(steer)``.
* Road lateral offset is positive to the left of the centerline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import TerminalStateError

DT = 0.05  # 20 frames per second
WHEELBASE = 2.5
A_MAX = 3.0
B_MAX = 8.0
C_DRAG = 0.1
DELTA_MAX = math.radians(35.0)
R_VEHICLE = 1.0
LANE_WIDTH = 3.5
OFF_ROAD_OFFSET = 2 * LANE_WIDTH
LOOKAHEAD = 6.0
SPEED_GAIN = 0.5

KMH_20 = 20 / 3.6
KMH_30 = 30 / 3.6

ROADS = ("straight", "arc_left", "arc_right")


@dataclass(frozen=True)
class ActionVector:
    """Two channels in [0, 1]: acceleration (0 brake .. 0.5 coast .. 1 throttle)
    and steering (0 full left .. 0.5 straight .. 1 full right)."""

    a1: float = 0.5
    a2: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "a1", min(max(float(self.a1), 0.0), 1.0))
        object.__setattr__(self, "a2", min(max(float(self.a2), 0.0), 1.0))

    @classmethod
    def from_array(cls, a) -> "ActionVector":
        a = np.asarray(a, dtype=float).reshape(-1)
        return cls(a[0], a[1])


def decode_action(a: ActionVector) -> tuple[float, float, float]:
    """``(throttle, brake, steer_angle)`` for an action vector."""
    if a.a1 < 0.5:
        throttle, brake = 0.0, 1.0 - 2.0 * a.a1
    else:
        throttle, brake = 2.0 * a.a1 - 1.0, 0.0
    steer = (2.0 * a.a2 - 1.0) * DELTA_MAX
    return throttle, brake, steer


@dataclass(frozen=True)
class ErrorModelParams:
    """Synthetic error ``e_base + amplitude * vis * max(0, 1 - d/d_vis)**p_exp + noise``.

    ``vis = cos(bearing * (pi/2) / fov)**2`` inside the field of view and 0
    outside it. The shipped scenario presets shorten ``d_vis`` to 9 m so that
    detection happens a few meters before impact at 20 km/h.
    """

    e_base: float = 20.0
    amplitude: float = 40.0
    d_vis: float = 40.0
    fov: float = math.radians(45.0)
    p_exp: float = 2.0
    noise_sd: float = 0.5

    def __post_init__(self):
        for name in ("e_base", "amplitude", "d_vis", "fov", "p_exp"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be nonnegative")
        if self.fov > math.pi / 2:
            raise ValueError("fov half-angle must not exceed pi/2")


@dataclass(frozen=True)
class ScenarioSpec:
    name: str = "straight"
    road: str = "straight"
    radius: float = 0.0
    obstacle_offset: float = 30.0
    obstacle_half_width: float = 1.0
    approach_speed: float = KMH_20
    error_model: ErrorModelParams = field(default_factory=ErrorModelParams)
    seed: int = 0
    has_obstacle: bool = True

    def __post_init__(self):
        if self.road not in ROADS:
            raise ValueError(f"road must be one of {ROADS}, got {self.road!r}")
        if self.road != "straight" and not self.radius > 10.0:
            raise ValueError(f"arc radius must exceed 10 m, got {self.radius}")
        if not self.obstacle_offset > 0:
            raise ValueError("obstacle_offset must be positive")
        if self.obstacle_half_width < 0 or self.approach_speed < 0:
            raise ValueError("obstacle_half_width and approach_speed must be nonnegative")

    def without_obstacle(self) -> "ScenarioSpec":
        return replace(self, has_obstacle=False)

    # -- road geometry ------------------------------------------------------

    @property
    def _turn(self) -> int:
        return {"straight": 0, "arc_left": 1, "arc_right": -1}[self.road]

    def centerline(self, s: float) -> tuple[float, float, float]:
        """Point ``(x, y, heading)`` at arc length ``s`` along the centerline."""
        if self._turn == 0:
            return s, 0.0, 0.0
        R, sign = self.radius, self._turn
        phi = s / R
        return R * math.sin(phi), sign * R * (1.0 - math.cos(phi)), sign * phi

    def project(self, x: float, y: float) -> tuple[float, float]:
        """``(arc_length, lateral_offset)`` of a world point."""
        if self._turn == 0:
            return x, y
        R, sign = self.radius, self._turn
        cy = sign * R
        phi = math.atan2(x, sign * (cy - y))
        rho = math.hypot(x, y - cy)
        return R * phi, sign * (R - rho)

    @property
    def obstacle_xy(self) -> tuple[float, float]:
        x, y, _ = self.centerline(self.obstacle_offset)
        return x, y


@dataclass(frozen=True)
class WorldState:
    x: float = 0.0
    y: float = 0.0
    heading: float = 0.0
    speed: float = 0.0
    t: int = 0
    collided: bool = False
    off_road: bool = False


def initial_world(spec: ScenarioSpec) -> WorldState:
    x, y, h = spec.centerline(0.0)
    return WorldState(x=x, y=y, heading=h, speed=spec.approach_speed)


def obstacle_distance(w: WorldState, spec: ScenarioSpec) -> float:
    """Center-to-center distance; ``inf`` when the scenario has no obstacle."""
    if not spec.has_obstacle:
        return math.inf
    ox, oy = spec.obstacle_xy
    return math.hypot(ox - w.x, oy - w.y)


def obstacle_bearing(w: WorldState, spec: ScenarioSpec) -> float:
    """Angle from the heading to the obstacle, wrapped to (-pi, pi]."""
    ox, oy = spec.obstacle_xy
    ang = math.atan2(oy - w.y, ox - w.x) - w.heading
    return math.atan2(math.sin(ang), math.cos(ang))


def step_world(w: WorldState, spec: ScenarioSpec, a: ActionVector) -> WorldState:
    """Advance one frame with explicit Euler integration."""
    if w.collided:
        raise TerminalStateError("cannot step a world after a collision")
    throttle, brake, steer = decode_action(a)
    v = w.speed
    x = w.x + v * math.cos(w.heading) * DT
    y = w.y + v * math.sin(w.heading) * DT
    heading = w.heading - (v / WHEELBASE) * math.tan(steer) * DT
    dv = throttle * A_MAX - brake * B_MAX - C_DRAG * v
    speed = max(0.0, v + dv * DT)
    nxt = WorldState(x=x, y=y, heading=heading, speed=speed, t=w.t + 1)
    collided = obstacle_distance(nxt, spec) < R_VEHICLE + spec.obstacle_half_width
    off_road = w.off_road or abs(spec.project(x, y)[1]) > OFF_ROAD_OFFSET
    return replace(nxt, collided=collided, off_road=off_road)


def error_signal(d: float, bearing: float, params: ErrorModelParams, eta: float = 0.0) -> float:
    """Noise-free error model plus an externally drawn noise value ``eta``."""
    if abs(bearing) <= params.fov and math.isfinite(d):
        vis = math.cos(bearing * (math.pi / 2) / params.fov) ** 2
        prox = max(0.0, 1.0 - d / params.d_vis) ** params.p_exp
    else:
        vis, prox = 0.0, 0.0
    return max(0.0, params.e_base + params.amplitude * vis * prox + eta)


def synthetic_error(w: WorldState, spec: ScenarioSpec, rng: np.random.Generator) -> float:
    """One noisy error sample; always consumes exactly one normal draw."""
    params = spec.error_model
    eta = float(rng.normal()) * params.noise_sd
    if not spec.has_obstacle:
        return error_signal(math.inf, 0.0, params, eta)
    return error_signal(obstacle_distance(w, spec), obstacle_bearing(w, spec), params, eta)


def autopilot_action(w: WorldState, spec: ScenarioSpec) -> ActionVector:
    """Lane-following pure pursuit with proportional speed hold.

    It ignores the obstacle entirely.
    """
    s, _ = spec.project(w.x, w.y)
    tx, ty, _ = spec.centerline(s + LOOKAHEAD)
    alpha = math.atan2(ty - w.y, tx - w.x) - w.heading
    alpha = math.atan2(math.sin(alpha), math.cos(alpha))
    ld = math.hypot(tx - w.x, ty - w.y)
    # pure-pursuit curvature is left-positive; steering is right-positive
    steer = -math.atan2(2.0 * WHEELBASE * math.sin(alpha), ld)
    a2 = 0.5 + 0.5 * steer / DELTA_MAX
    a1 = 0.5 + SPEED_GAIN * (spec.approach_speed - w.speed)
    return ActionVector(a1, a2)


def make_rngs(seed: int, run_index: int) -> tuple[np.random.Generator, np.random.Generator]:
    """Independent counter-based streams for sensor noise and policy draws.

    Keeping them separate makes the sensor noise identical across policies
    for the same ``(seed, run_index)``.
    """
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int(run_index)])
    noise_ss, policy_ss = ss.spawn(2)
    return np.random.Generator(np.random.Philox(noise_ss)), np.random.Generator(np.random.Philox(policy_ss))
