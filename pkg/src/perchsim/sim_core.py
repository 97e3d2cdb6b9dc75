"""Deterministic fixed-step quadrotor physics plus simulated IMU and ToF sensors.

The vehicle moves through four phases: free flight (thrust + first-order
attitude tracking), a perched single-degree-of-freedom pivot about the grasp
point, unpowered free fall, and a frozen grounded state. Free flight and free
fall use an exact constant-acceleration update per step; the perched pivot
integrates its one angular DOF with RK4. Identical inputs produce bit-identical
outputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Optional, Union

import numpy as np

from . import quat

if TYPE_CHECKING:  # pragma: no cover - import cycle guard, typing only
    from .control import ControlCommand
    from .gripper import GripperState

UP = np.array([0.0, 0.0, 1.0])


class InvalidCommand(ValueError):
    """Raised when a control command is non-finite or out of the thrust range."""


@dataclass(frozen=True)
class PhysicalConstants:
    g: float = 9.8  # m/s^2

    def __post_init__(self):
        if not self.g > 0.0:
            raise ValueError("g must be positive")


@dataclass(frozen=True)
class VehicleParams:
    mass: float = 1.2  # kg, takeoff mass including perching hardware
    max_thrust: float = 30.0  # N
    attitude_time_constant: float = 0.15  # s, first-order attitude tracking
    physics_rate: float = 1000.0  # Hz
    control_rate: float = 100.0  # Hz
    pivot_offset_angle: float = math.radians(35.0)  # rad, grasp pivot below CoM line
    pivot_damping: float = 0.8  # N*m*s/rad, viscous damping of the perched pivot
    pitch_inertia: float = 0.02  # kg*m^2, body pitch inertia about its CoM

    def __post_init__(self):
        if not self.mass > 0.0:
            raise ValueError("mass must be positive")
        if not self.max_thrust > self.mass * 9.8:
            raise ValueError("max_thrust must exceed hover weight")
        if not (self.physics_rate > 0.0 and self.control_rate > 0.0):
            raise ValueError("rates must be positive")
        ratio = self.physics_rate / self.control_rate
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("physics_rate must be an integer multiple of control_rate")
        if self.pivot_damping < 0.0:
            raise ValueError("pivot_damping must be non-negative")

    @property
    def physics_dt(self) -> float:
        return 1.0 / self.physics_rate

    @property
    def substeps_per_control_tick(self) -> int:
        return int(round(self.physics_rate / self.control_rate))


@dataclass
class VehicleState:
    position: np.ndarray
    velocity: np.ndarray
    attitude: np.ndarray  # unit quaternion (w, x, y, z), body -> world
    angular_velocity: np.ndarray  # rad/s, body frame

    def copy(self) -> "VehicleState":
        return VehicleState(
            self.position.copy(),
            self.velocity.copy(),
            self.attitude.copy(),
            self.angular_velocity.copy(),
        )

    def validate(self):
        for v in (self.position, self.velocity, self.attitude, self.angular_velocity):
            if not np.all(np.isfinite(v)):
                raise ValueError("non-finite vehicle state")
        if abs(float(np.linalg.norm(self.attitude)) - 1.0) > 1e-9:
            raise ValueError("attitude quaternion not unit norm")


def make_vehicle_state(position, velocity=(0.0, 0.0, 0.0), yaw: float = 0.0) -> VehicleState:
    return VehicleState(
        np.asarray(position, dtype=float).copy(),
        np.asarray(velocity, dtype=float).copy(),
        quat.from_yaw(yaw),
        np.zeros(3),
    )


@dataclass(frozen=True)
class TreeModel:
    base_point: np.ndarray
    axis_direction: np.ndarray  # unit, near-vertical
    radius: float
    height: float
    bark_soft: bool = True

    def __post_init__(self):
        object.__setattr__(self, "base_point", np.asarray(self.base_point, dtype=float))
        axis = np.asarray(self.axis_direction, dtype=float)
        object.__setattr__(self, "axis_direction", axis)
        if not self.radius > 0.0:
            raise ValueError("radius must be positive")
        if not self.height > 0.0:
            raise ValueError("height must be positive")
        if abs(float(np.linalg.norm(axis)) - 1.0) > 1e-9:
            raise ValueError("axis_direction must be unit length")

    def axis_distance(self, point) -> float:
        """Perpendicular distance from a point to the (infinite) trunk axis."""
        w = np.asarray(point, dtype=float) - self.base_point
        along = float(np.dot(w, self.axis_direction))
        perp = w - along * self.axis_direction
        return float(np.linalg.norm(perp))


def ray_cylinder_first_hit(origin, direction, tree: TreeModel) -> Optional[float]:
    """Distance along a unit-direction ray to the first lateral-surface hit.

    Returns None when the ray misses the trunk or hits outside its height span.
    """
    ox, oy, oz = float(origin[0]), float(origin[1]), float(origin[2])
    dx, dy, dz = float(direction[0]), float(direction[1]), float(direction[2])
    bx, by, bz = tree.base_point
    ux, uy, uz = tree.axis_direction
    wx, wy, wz = ox - bx, oy - by, oz - bz

    d_u = dx * ux + dy * uy + dz * uz
    w_u = wx * ux + wy * uy + wz * uz
    # components perpendicular to the axis
    px, py, pz = dx - d_u * ux, dy - d_u * uy, dz - d_u * uz
    qx, qy, qz = wx - w_u * ux, wy - w_u * uy, wz - w_u * uz

    a = px * px + py * py + pz * pz
    b = 2.0 * (px * qx + py * qy + pz * qz)
    c = qx * qx + qy * qy + qz * qz - tree.radius * tree.radius
    if a < 1e-15:
        return None  # ray parallel to the axis: no lateral hit from outside
    disc = b * b - 4.0 * a * c
    if disc < 0.0:
        return None
    root = math.sqrt(disc)
    for t in ((-b - root) / (2.0 * a), (-b + root) / (2.0 * a)):
        if t <= 1e-9:
            continue
        s = w_u + t * d_u
        if 0.0 <= s <= tree.height:
            return t
    return None


# --- simulation phases -----------------------------------------------------


@dataclass
class FreeFlight:
    pass


@dataclass
class PerchedPivot:
    """Single-DOF pendulum about the grasp pivot, driven by gravity and thrust.

    pitch_angle 0 is the pose at engagement; the angle grows as the vehicle
    pitches down onto the trunk and is clamped to [0, pitch_limit] with an
    inelastic stop at the limit (the mechanical brace).
    """

    pivot_point: np.ndarray
    pivot_axis: np.ndarray  # unit, horizontal; positive rotation pitches down
    pitch_angle: float
    pitch_rate: float
    arm_length: float  # m, pivot-to-CoM distance
    offset_angle: float  # rad, CoM arm above horizontal at engagement
    pitch_limit: float  # rad, brace hard stop
    arm_dir0: np.ndarray = field(default=None)  # unit arm direction at pitch 0
    attitude0: np.ndarray = field(default=None)  # vehicle attitude at engagement
    axis_cross_arm0: np.ndarray = field(default=None)  # pivot_axis x arm_dir0, cached


@dataclass
class FreeFall:
    pass


@dataclass
class Grounded:
    pass


SimPhase = Union[FreeFlight, PerchedPivot, FreeFall, Grounded]


@dataclass(frozen=True)
class ImuParams:
    noise_std: float = 0.05  # m/s^2 per axis, zero-mean Gaussian


@dataclass(frozen=True)
class TofParams:
    min_range: float = 0.02  # m
    max_range: float = 4.0  # m


@dataclass(frozen=True)
class ImuSample:
    specific_force: np.ndarray  # m/s^2, body frame
    timestamp: float

    @property
    def magnitude(self) -> float:
        return float(np.linalg.norm(self.specific_force))


@dataclass(frozen=True)
class TofSample:
    range: float
    valid: bool
    timestamp: float


@dataclass
class WorldState:
    """Full simulation truth for one instant."""

    vehicle: VehicleState
    tree: TreeModel
    phase: SimPhase
    time: float = 0.0
    accel_world: np.ndarray = field(default_factory=lambda: np.zeros(3))
    gripper: Optional["GripperState"] = None
    constants: PhysicalConstants = field(default_factory=PhysicalConstants)
    params: VehicleParams = field(default_factory=VehicleParams)

    def copy(self) -> "WorldState":
        # PerchedPivot carries mutable integration state; never share it
        phase = replace(self.phase) if isinstance(self.phase, PerchedPivot) else self.phase
        return replace(
            self, vehicle=self.vehicle.copy(), phase=phase, accel_world=self.accel_world.copy()
        )


def _pivot_accel(theta, omega, thrust, world: WorldState, pv: PerchedPivot) -> float:
    m = world.params.mass
    g = world.constants.g
    L = pv.arm_length
    inertia = world.params.pitch_inertia + m * L * L
    # thrust moment arm assumes a level attitude at engagement
    torque = (
        m * g * L * math.cos(theta - pv.offset_angle)
        - thrust * L * math.cos(pv.offset_angle)
        - world.params.pivot_damping * omega
    )
    return torque / inertia


def pivot_resting(world: WorldState, thrust: float) -> bool:
    """True when a perched pivot sits motionless against a stop.

    In that condition a physics step is a pure clock advance, which lets
    callers batch substeps during the long perched hold.
    """
    pv = world.phase
    if not isinstance(pv, PerchedPivot) or pv.pitch_rate != 0.0:
        return False
    if pv.pitch_angle >= pv.pitch_limit:
        return _pivot_accel(pv.pitch_angle, 0.0, thrust, world, pv) >= 0.0
    if pv.pitch_angle <= 0.0:
        return _pivot_accel(pv.pitch_angle, 0.0, thrust, world, pv) <= 0.0
    return False


def _attitude_relax(veh: VehicleState, q_cmd, alpha: float, dt: float) -> None:
    """First-order slerp toward the commanded attitude, scalar hot path."""
    q = veh.attitude
    w0, x0, y0, z0 = q[0], q[1], q[2], q[3]
    w1, x1, y1, z1 = q_cmd[0], q_cmd[1], q_cmd[2], q_cmd[3]
    dot = w0 * w1 + x0 * x1 + y0 * y1 + z0 * z1
    if dot < 0.0:
        w1, x1, y1, z1 = -w1, -x1, -y1, -z1
        dot = -dot
    if dot > 0.9999995:
        nw = w0 + alpha * (w1 - w0)
        nx = x0 + alpha * (x1 - x0)
        ny = y0 + alpha * (y1 - y0)
        nz = z0 + alpha * (z1 - z0)
    else:
        theta = math.acos(min(1.0, dot))
        s = math.sin(theta)
        a = math.sin((1.0 - alpha) * theta) / s
        b = math.sin(alpha * theta) / s
        nw = a * w0 + b * w1
        nx = a * x0 + b * x1
        ny = a * y0 + b * y1
        nz = a * z0 + b * z1
    n = math.sqrt(nw * nw + nx * nx + ny * ny + nz * nz)
    nw, nx, ny, nz = nw / n, nx / n, ny / n, nz / n
    # body-frame rotation vector of q_old^-1 * q_new over dt
    dw = w0 * nw + x0 * nx + y0 * ny + z0 * nz
    dx = w0 * nx - x0 * nw - y0 * nz + z0 * ny
    dy = w0 * ny + x0 * nz - y0 * nw - z0 * nx
    dz = w0 * nz - x0 * ny + y0 * nx - z0 * nw
    if dw < 0.0:
        dw, dx, dy, dz = -dw, -dx, -dy, -dz
    vn = math.sqrt(dx * dx + dy * dy + dz * dz)
    om = veh.angular_velocity
    if vn < 1e-12:
        scale = 2.0 / dt
    else:
        scale = 2.0 * math.atan2(vn, dw) / (vn * dt)
    om[0] = dx * scale
    om[1] = dy * scale
    om[2] = dz * scale
    q[0], q[1], q[2], q[3] = nw, nx, ny, nz


def step_world(world: WorldState, command: "ControlCommand", dt: float) -> None:
    """Advance the world one physics step in place (hot path for trial loops)."""
    params = world.params
    if abs(dt - params.physics_dt) > 1e-12:
        raise ValueError("dt must equal 1/physics_rate")
    thrust = command.collective_thrust
    qc = command.attitude_command
    if not (
        math.isfinite(thrust)
        and math.isfinite(qc[0])
        and math.isfinite(qc[1])
        and math.isfinite(qc[2])
        and math.isfinite(qc[3])
    ):
        raise InvalidCommand("non-finite control command")
    if thrust < -1e-9 or thrust > params.max_thrust + 1e-9:
        raise InvalidCommand(f"thrust {thrust} outside [0, {params.max_thrust}]")
    thrust = min(max(thrust, 0.0), params.max_thrust)

    g = world.constants.g
    veh = world.vehicle
    v = veh.velocity
    vx0, vy0, vz0 = v[0], v[1], v[2]

    if isinstance(world.phase, FreeFlight):
        q = veh.attitude
        qw, qx, qy, qz = q[0], q[1], q[2], q[3]
        k = thrust / params.mass
        # body z axis straight from the quaternion
        ax = k * 2.0 * (qx * qz + qw * qy)
        ay = k * 2.0 * (qy * qz - qw * qx)
        az = k * (1.0 - 2.0 * (qx * qx + qy * qy)) - g
        # exact update for piecewise-constant acceleration over the step
        p = veh.position
        hdt2 = 0.5 * dt * dt
        p[0] += v[0] * dt + ax * hdt2
        p[1] += v[1] * dt + ay * hdt2
        p[2] += v[2] * dt + az * hdt2
        v[0] += ax * dt
        v[1] += ay * dt
        v[2] += az * dt
        alpha = 1.0 - math.exp(-dt / params.attitude_time_constant)
        _attitude_relax(veh, qc, alpha, dt)
        if p[2] <= 0.0:
            p[2] = 0.0
            v[:] = 0.0
            veh.angular_velocity[:] = 0.0
            world.phase = Grounded()
    elif isinstance(world.phase, PerchedPivot):
        pv = world.phase
        theta, omega = pv.pitch_angle, pv.pitch_rate
        if pivot_resting(world, thrust):
            # pressed against a stop with the net torque holding it there
            world.time += dt
            world.accel_world[:] = 0.0
            return
        # classic RK4 on the single pivot DOF
        k1t = omega
        k1w = _pivot_accel(theta, omega, thrust, world, pv)
        k2t = omega + 0.5 * dt * k1w
        k2w = _pivot_accel(theta + 0.5 * dt * k1t, omega + 0.5 * dt * k1w, thrust, world, pv)
        k3t = omega + 0.5 * dt * k2w
        k3w = _pivot_accel(theta + 0.5 * dt * k2t, omega + 0.5 * dt * k2w, thrust, world, pv)
        k4t = omega + dt * k3w
        k4w = _pivot_accel(theta + dt * k3t, omega + dt * k3w, thrust, world, pv)
        theta += dt / 6.0 * (k1t + 2.0 * k2t + 2.0 * k3t + k4t)
        omega += dt / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w)
        if theta >= pv.pitch_limit:
            theta, omega = pv.pitch_limit, min(omega, 0.0)
        elif theta <= 0.0:
            theta, omega = 0.0, max(omega, 0.0)
        if theta == pv.pitch_angle and omega == 0.0 == pv.pitch_rate:
            # resting against the brace stop (or held level): nothing moves
            world.time += dt
            world.accel_world[:] = 0.0
            return
        pv.pitch_angle, pv.pitch_rate = theta, omega
        # arm and its rate from cached perpendicular components: for the
        # planar pivot, axis x (axis x arm0) = -arm0
        c, s = math.cos(theta), math.sin(theta)
        L = pv.arm_length
        u0, xu0 = pv.arm_dir0, pv.axis_cross_arm0
        veh.position = pv.pivot_point + L * (c * u0 + s * xu0)
        veh.velocity = (omega * L) * (c * xu0 - s * u0)
        veh.attitude = quat.normalize(
            quat.multiply(quat.from_axis_angle(pv.pivot_axis, theta), pv.attitude0)
        )
        veh.angular_velocity = quat.rotate_inv(veh.attitude, omega * pv.pivot_axis)
        v = veh.velocity
    elif isinstance(world.phase, FreeFall):
        p = veh.position
        p[0] += v[0] * dt
        p[1] += v[1] * dt
        p[2] += v[2] * dt - 0.5 * g * dt * dt
        v[2] -= g * dt
        veh.angular_velocity[:] = 0.0
        if p[2] <= 0.0:
            p[2] = 0.0
            v[:] = 0.0
            world.phase = Grounded()
    elif isinstance(world.phase, Grounded):
        world.time += dt
        world.accel_world[:] = 0.0
        return
    else:  # pragma: no cover - exhaustive phase union
        raise TypeError(f"unknown phase {world.phase!r}")

    world.time += dt
    inv_dt = 1.0 / dt
    acc = world.accel_world
    acc[0] = (v[0] - vx0) * inv_dt
    acc[1] = (v[1] - vy0) * inv_dt
    acc[2] = (v[2] - vz0) * inv_dt


def step_dynamics(world: WorldState, command: "ControlCommand", dt: float) -> WorldState:
    """Advance the world one physics step. Pure: returns a new WorldState."""
    out = world.copy()
    step_world(out, command, dt)
    return out


def enter_perched_pivot(
    world: WorldState,
    approach_normal: np.ndarray,
    surface_range: float,
    pitch_limit: float,
) -> WorldState:
    """Attach the vehicle to the trunk: switch phase to a perched pivot.

    The effective pivot sits below the grasp point by the configured offset
    angle so the vehicle settles onto the brace stop, and is placed so the
    CoM does not jump at engagement.
    """
    n = np.asarray(approach_normal, dtype=float)
    n = n / np.linalg.norm(n)
    axis = np.cross(UP, n)
    axis = axis / np.linalg.norm(axis)
    phi0 = world.params.pivot_offset_angle
    arm_length = surface_range / math.cos(phi0)
    arm_dir0 = math.cos(phi0) * n + math.sin(phi0) * UP
    out = world.copy()
    out.phase = PerchedPivot(
        pivot_point=world.vehicle.position - arm_length * arm_dir0,
        pivot_axis=axis,
        pitch_angle=0.0,
        pitch_rate=0.0,
        arm_length=arm_length,
        offset_angle=phi0,
        pitch_limit=pitch_limit,
        arm_dir0=arm_dir0,
        attitude0=world.vehicle.attitude.copy(),
        axis_cross_arm0=np.cross(axis, arm_dir0),
    )
    out.vehicle.velocity = np.zeros(3)
    out.vehicle.angular_velocity = np.zeros(3)
    return out


def release_to_freefall(world: WorldState) -> WorldState:
    """Detach from the trunk (slip): the vehicle carries its pivot velocity."""
    out = world.copy()
    out.phase = FreeFall()
    return out


def pivot_energy(world: WorldState) -> float:
    """Mechanical energy of the perched pivot (kinetic + potential), J."""
    pv = world.phase
    if not isinstance(pv, PerchedPivot):
        raise ValueError("vehicle is not perched")
    m, g, L = world.params.mass, world.constants.g, pv.arm_length
    inertia = world.params.pitch_inertia + m * L * L
    height = L * math.sin(pv.offset_angle - pv.pitch_angle)
    return 0.5 * inertia * pv.pitch_rate**2 + m * g * height


def read_imu(world: WorldState, rng: np.random.Generator, params: ImuParams = ImuParams()) -> ImuSample:
    """Specific force in the body frame: CoM acceleration minus gravity, plus noise."""
    f_world = world.accel_world + np.array([0.0, 0.0, world.constants.g])
    f_body = quat.rotate_inv(world.vehicle.attitude, f_world)
    if params.noise_std > 0.0:
        f_body = f_body + rng.normal(0.0, params.noise_std, 3)
    return ImuSample(specific_force=f_body, timestamp=world.time)


def read_tof(world: WorldState, params: TofParams = TofParams()) -> TofSample:
    """Range along the gripper axis (body +x) to the trunk surface."""
    origin = world.vehicle.position
    q = world.vehicle.attitude
    w, x, y, z = q[0], q[1], q[2], q[3]
    direction = (1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y + w * z), 2.0 * (x * z - w * y))
    t = ray_cylinder_first_hit(origin, direction, world.tree)
    if t is None or t < params.min_range or t > params.max_range:
        return TofSample(range=params.max_range, valid=False, timestamp=world.time)
    return TofSample(range=t, valid=True, timestamp=world.time)
