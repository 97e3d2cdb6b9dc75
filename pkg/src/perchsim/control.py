"""Setpoint-tracking controller and the gentle-perch thrust decay schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import quat
from .sim_core import VehicleParams, VehicleState


@dataclass(frozen=True)
class ControlCommand:
    collective_thrust: float  # N
    attitude_command: np.ndarray  # unit quaternion (w, x, y, z)
    timestamp: float = 0.0


@dataclass(frozen=True)
class GainSet:
    kp_pos: tuple = (6.0, 6.0, 8.0)
    kd_pos: tuple = (4.5, 4.5, 5.0)
    yaw_gain: float = 1.0

    def __post_init__(self):
        if any(g < 0.0 for g in (*self.kp_pos, *self.kd_pos, self.yaw_gain)):
            raise ValueError("gains must be non-negative")


class DecayProfile(Enum):
    LINEAR = "linear"


@dataclass(frozen=True)
class GentlePerchConfig:
    duration: float = 4.0  # s, hover thrust to zero
    rate: float = 100.0  # Hz, command grid
    profile: DecayProfile = DecayProfile.LINEAR

    def __post_init__(self):
        if not self.duration > 0.0:
            raise ValueError("duration must be positive")
        if not self.rate > 0.0:
            raise ValueError("rate must be positive")


def track(state: VehicleState, sp, gains: GainSet, params: VehicleParams, g: float = 9.8) -> ControlCommand:
    """PD position/velocity tracking with gravity compensation.

    Desired acceleration maps to a collective thrust along the commanded
    body-z; the attitude command tilts body-z onto the desired acceleration
    with the setpoint yaw.
    """
    kp, kd = gains.kp_pos, gains.kd_pos
    p, v = state.position, state.velocity
    ax = kp[0] * (sp.position[0] - p[0]) + kd[0] * (sp.velocity[0] - v[0])
    ay = kp[1] * (sp.position[1] - p[1]) + kd[1] * (sp.velocity[1] - v[1])
    az = kp[2] * (sp.position[2] - p[2]) + kd[2] * (sp.velocity[2] - v[2]) + g
    norm = math.sqrt(ax * ax + ay * ay + az * az)
    thrust = min(max(params.mass * norm, 0.0), params.max_thrust)
    if norm < 1e-9:
        attitude = quat.from_yaw(sp.yaw)
    else:
        zx, zy, zz = ax / norm, ay / norm, az / norm
        cx, cy = math.cos(sp.yaw), math.sin(sp.yaw)
        # y_b = z_b x x_c, x_b = y_b x z_b (scalar cross products)
        yx, yy, yz = -zz * cy, zz * cx, zx * cy - zy * cx
        y_norm = math.sqrt(yx * yx + yy * yy + yz * yz)
        if y_norm < 1e-9:
            # desired thrust parallel to the yaw direction: fall back to level yaw
            attitude = quat.from_yaw(sp.yaw)
        else:
            yx, yy, yz = yx / y_norm, yy / y_norm, yz / y_norm
            xx, xy, xz = yy * zz - yz * zy, yz * zx - yx * zz, yx * zy - yy * zx
            attitude = quat.from_matrix(
                np.array([[xx, yx, zx], [xy, yy, zy], [xz, yz, zz]])
            )
    return ControlCommand(collective_thrust=thrust, attitude_command=attitude)


def hover_command(state: VehicleState, params: VehicleParams, g: float = 9.8) -> ControlCommand:
    return ControlCommand(
        collective_thrust=params.mass * g,
        attitude_command=quat.from_yaw(quat.yaw_of(state.attitude)),
    )


def gentle_perch_thrust(elapsed: float, hover_thrust: float, cfg: GentlePerchConfig) -> float:
    """Thrust for the post-grasp power-down, evaluated on the command grid."""
    if elapsed < 0.0:
        raise ValueError("elapsed must be non-negative")
    # quantize to the command grid so repeated calls within a tick agree
    t = math.floor(elapsed * cfg.rate + 1e-9) / cfg.rate
    return hover_thrust * max(0.0, 1.0 - t / cfg.duration)
