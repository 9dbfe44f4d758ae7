"""Vehicle physics and low-level controllers.

Heading convention: ``psi = 0`` points along +y and ``psi`` grows clockwise,
so the velocity components are ``v_x = v sin(psi + beta)`` and
``v_y = v cos(psi + beta)``.

The scalar cores (``*_core``) are compiled with numba and shared by the
public dataclass API below and by the fleet kernel in :mod:`trldrive.world`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from numba import njit

DEFAULT_LENGTH = 5.0
DEFAULT_WIDTH = 2.0
DEFAULT_DELTA_MAX = math.pi / 3
DEFAULT_V_EPS = 0.1
DEFAULT_B_HARD = 9.0
NO_LEADER_GAP = 1e6


@njit(cache=True)
def wrap_angle(angle):
    """Map an angle into (-pi, pi]."""
    return math.pi - (math.pi - angle) % (2.0 * math.pi)


@njit(cache=True)
def clamp(x, lo, hi):
    return min(max(x, lo), hi)


@njit(cache=True)
def kinematics_core(s_x, s_y, v, psi, length, accel, delta, dt, v_max):
    """One tick of the kinematic bicycle model; returns (s_x, s_y, v, psi, beta).

    Yaw rate uses the speed before the update, displacement the speed after
    it; the direction of travel uses the heading before the update.
    """
    v_next = min(max(v + accel * dt, 0.0), v_max)
    beta = math.atan(0.5 * math.tan(delta))
    omega = 2.0 * v * math.sin(beta) / length
    psi_next = wrap_angle(psi + omega * dt)
    v_x = v_next * math.sin(beta + psi)
    v_y = v_next * math.cos(beta + psi)
    return s_x + v_x * dt, s_y + v_y * dt, v_next, psi_next, beta


@njit(cache=True)
def steering_core(offset, lane_heading, psi, v, length, kp_psi, kp_lat, delta_max, v_eps):
    """Position/heading cascade; ``offset`` is positive right of the direction of travel."""
    v_safe = max(v, v_eps)
    v_lat = -kp_lat * offset
    dpsi = math.asin(clamp(v_lat / v_safe, -1.0, 1.0))
    psi_target = lane_heading + dpsi
    psi_rate = kp_psi * wrap_angle(psi_target - psi)
    delta = math.asin(clamp(length * psi_rate / (2.0 * v_safe), -1.0, 1.0))
    return clamp(delta, -delta_max, delta_max)


@njit(cache=True)
def idm_core(v, delta_v, gap, a_max, b_abs, time_gap, d0, lam, v_desired, b_hard):
    d_des = d0 + time_gap * v + v * delta_v / (2.0 * math.sqrt(a_max * b_abs))
    a = a_max * (1.0 - (v / v_desired) ** lam - (d_des / gap) ** 2)
    return clamp(a, -b_hard, a_max)


@dataclass(frozen=True)
class VehicleState:
    s_x: float
    s_y: float
    v: float
    psi: float
    length_l: float = DEFAULT_LENGTH
    width: float = DEFAULT_WIDTH

    def __post_init__(self):
        if self.length_l <= 0 or self.width <= 0:
            raise ValueError("vehicle length and width must be positive")
        if self.v < 0:
            raise ValueError(f"speed must be non-negative, got {self.v}")

    def velocity(self, beta: float = 0.0) -> tuple[float, float]:
        return velocity_components(self.v, self.psi, beta)


@dataclass(frozen=True)
class ControlCommand:
    accel: float
    delta: float = 0.0


@dataclass(frozen=True)
class LateralGains:
    kp_psi: float = 8.0
    kp_lat: float = 2.0
    delta_max: float = DEFAULT_DELTA_MAX
    v_eps: float = DEFAULT_V_EPS

    def __post_init__(self):
        if self.kp_psi <= 0 or self.kp_lat <= 0:
            raise ValueError("lateral gains must be positive")


@dataclass(frozen=True)
class IdmParams:
    """Car-following parameters; defaults are the published model constants."""

    a_max: float = 6.0
    b_max_abs: float = 3.0
    time_gap_T: float = 1.5
    d0: float = 7.0
    lambda_exp: float = 4.0
    v_desired: float = 10.0
    b_hard: float = DEFAULT_B_HARD

    def __post_init__(self):
        for name in ("a_max", "b_max_abs", "time_gap_T", "d0", "lambda_exp", "v_desired", "b_hard"):
            if getattr(self, name) <= 0:
                raise ValueError(f"IdmParams.{name} must be positive")


def velocity_components(v: float, psi: float, beta: float = 0.0) -> tuple[float, float]:
    """Horizontal and vertical velocity of a vehicle moving at speed ``v``."""
    return v * math.sin(beta + psi), v * math.cos(beta + psi)


def slip_angle(delta: float) -> float:
    return math.atan(0.5 * math.tan(delta))


def step_kinematics(state: VehicleState, cmd: ControlCommand, dt: float, v_max: float = math.inf) -> VehicleState:
    if dt <= 0:
        raise ValueError("dt must be positive")
    s_x, s_y, v, psi, _ = kinematics_core(
        state.s_x, state.s_y, state.v, state.psi, state.length_l, cmd.accel, cmd.delta, dt, v_max
    )
    return replace(state, s_x=s_x, s_y=s_y, v=v, psi=psi)


def lateral_control(state: VehicleState, lane, gains: LateralGains = LateralGains()) -> float:
    """Steering angle that brings ``state`` onto ``lane`` (a :class:`~trldrive.road.LaneRef`)."""
    proj = lane.project(state.s_x, state.s_y)
    return steering_core(
        proj.offset, proj.heading, state.psi, state.v, state.length_l,
        gains.kp_psi, gains.kp_lat, gains.delta_max, gains.v_eps,
    )


def idm_acceleration(v: float, delta_v: float, gap_d: float, params: IdmParams = IdmParams()) -> float:
    if gap_d <= 0:
        raise ValueError("gap must be positive")
    p = params
    return idm_core(v, delta_v, gap_d, p.a_max, p.b_max_abs, p.time_gap_T, p.d0, p.lambda_exp, p.v_desired, p.b_hard)
