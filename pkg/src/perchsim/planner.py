"""Quintic perch-approach trajectories and the failure-recovery setpoint.

Each axis gets a degree-5 polynomial pinned by six boundary conditions:
start position/velocity with zero acceleration, and the target position with
a small terminal velocity directed into the perch surface and zero terminal
acceleration. Duration comes from the cruise speed and is inflated until the
sampled profile respects the velocity and acceleration limits.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .sim_core import VehicleState


class DegenerateTrajectory(ValueError):
    """Start and target coincide with zero start velocity: nothing to plan."""


class InfeasibleLimits(ValueError):
    """Duration inflation exceeded the cap without satisfying the limits."""


@dataclass(frozen=True)
class PlannerConfig:
    terminal_speed: float = 0.1  # m/s into the perch surface
    cruise_speed: float = 0.5  # m/s nominal approach speed
    v_max: float = 1.2  # m/s
    a_max: float = 2.0  # m/s^2
    min_duration: float = 1.0  # s
    duration_cap: float = 60.0  # s
    inflation: float = 1.2  # duration multiplier per limit violation

    def __post_init__(self):
        if not (0.0 < self.terminal_speed < self.cruise_speed <= self.v_max):
            raise ValueError("need 0 < terminal_speed < cruise_speed <= v_max")
        if self.a_max <= 0.0 or self.min_duration <= 0.0:
            raise ValueError("a_max and min_duration must be positive")


@dataclass(frozen=True)
class Setpoint:
    position: np.ndarray
    velocity: np.ndarray
    yaw: float = 0.0


@dataclass
class PolySegment:
    """Degree-5 polynomial per axis over t in [0, T]; coeffs shape (3, 6)."""

    coeffs: np.ndarray
    duration: float

    def __post_init__(self):
        if not self.duration > 0.0:
            raise ValueError("segment duration must be positive")
        if not np.all(np.isfinite(self.coeffs)):
            raise ValueError("non-finite polynomial coefficients")

    def position(self, t: float) -> np.ndarray:
        powers = np.array([1.0, t, t * t, t**3, t**4, t**5])
        return self.coeffs @ powers

    def velocity(self, t: float) -> np.ndarray:
        powers = np.array([0.0, 1.0, 2.0 * t, 3.0 * t * t, 4.0 * t**3, 5.0 * t**4])
        return self.coeffs @ powers

    def acceleration(self, t: float) -> np.ndarray:
        powers = np.array([0.0, 0.0, 2.0, 6.0 * t, 12.0 * t * t, 20.0 * t**3])
        return self.coeffs @ powers


@dataclass
class Trajectory:
    segments: list
    approach_normal: np.ndarray
    yaw: float
    duration: float = field(init=False)

    def __post_init__(self):
        if not self.segments:
            raise ValueError("trajectory needs at least one segment")
        self.duration = float(sum(s.duration for s in self.segments))
        # enforce continuity across joins
        for a, b in zip(self.segments, self.segments[1:]):
            if np.max(np.abs(a.position(a.duration) - b.position(0.0))) > 1e-9:
                raise ValueError("position discontinuity across segments")
            if np.max(np.abs(a.velocity(a.duration) - b.velocity(0.0))) > 1e-9:
                raise ValueError("velocity discontinuity across segments")

    def _locate(self, t: float):
        t = min(max(t, 0.0), self.duration)
        for seg in self.segments:
            if t <= seg.duration:
                return seg, t
            t -= seg.duration
        return self.segments[-1], self.segments[-1].duration


def _quintic_axis(p0, v0, a0, p1, v1, a1, T):
    """Coefficients of the unique quintic matching both endpoint triples."""
    T2, T3, T4, T5 = T * T, T**3, T**4, T**5
    c0, c1, c2 = p0, v0, 0.5 * a0
    dp = p1 - (p0 + v0 * T + 0.5 * a0 * T2)
    dv = v1 - (v0 + a0 * T)
    da = a1 - a0
    c3 = (20.0 * dp - 8.0 * dv * T + da * T2) / (2.0 * T3)
    c4 = (-30.0 * dp + 14.0 * dv * T - 2.0 * da * T2) / (2.0 * T4)
    c5 = (12.0 * dp - 6.0 * dv * T + da * T2) / (2.0 * T5)
    return np.array([c0, c1, c2, c3, c4, c5])


def plan_perch_trajectory(
    start: VehicleState,
    target_pose: np.ndarray,
    approach_normal: np.ndarray,
    cfg: PlannerConfig,
) -> Trajectory:
    """Plan a single quintic segment ending at the target moving into the surface.

    Boundary conditions: p(0)/v(0) from the start state with zero initial
    acceleration; p(T) at the target with velocity terminal_speed along the
    negated approach normal and zero terminal acceleration. Yaw faces the
    target throughout the approach.
    """
    target = np.asarray(target_pose, dtype=float)
    normal = np.asarray(approach_normal, dtype=float)
    if abs(np.linalg.norm(normal) - 1.0) > 1e-6:
        raise ValueError("approach_normal must be unit length")
    if abs(normal[2]) > 1e-6:
        raise ValueError("approach_normal must be horizontal")
    dist = float(np.linalg.norm(target - start.position))
    start_speed = float(np.linalg.norm(start.velocity))
    if dist < 1e-9 and start_speed < 1e-9:
        raise DegenerateTrajectory("start and target coincide with zero velocity")

    v_end = -cfg.terminal_speed * normal
    yaw = math.atan2(-normal[1], -normal[0])
    T = max(dist / cfg.cruise_speed, cfg.min_duration)
    while True:
        coeffs = np.stack(
            [
                _quintic_axis(start.position[i], start.velocity[i], 0.0, target[i], v_end[i], 0.0, T)
                for i in range(3)
            ]
        )
        seg = PolySegment(coeffs=coeffs, duration=T)
        if _within_limits(seg, cfg):
            return Trajectory(segments=[seg], approach_normal=normal.copy(), yaw=yaw)
        T *= cfg.inflation
        if T > cfg.duration_cap:
            raise InfeasibleLimits(f"no feasible duration below {cfg.duration_cap} s")


def _within_limits(seg: PolySegment, cfg: PlannerConfig, grid_hz: float = 1000.0) -> bool:
    n = max(2, int(math.ceil(seg.duration * grid_hz)) + 1)
    ts = np.linspace(0.0, seg.duration, n)
    powers_v = np.stack([np.zeros_like(ts), np.ones_like(ts), 2 * ts, 3 * ts**2, 4 * ts**3, 5 * ts**4])
    powers_a = np.stack([np.zeros_like(ts), np.zeros_like(ts), 2 * np.ones_like(ts), 6 * ts, 12 * ts**2, 20 * ts**3])
    v = seg.coeffs @ powers_v
    a = seg.coeffs @ powers_a
    v_norm = np.sqrt(np.sum(v * v, axis=0))
    a_norm = np.sqrt(np.sum(a * a, axis=0))
    return bool(v_norm.max() <= cfg.v_max + 1e-9 and a_norm.max() <= cfg.a_max + 1e-9)


def sample(traj: Trajectory, t: float) -> Setpoint:
    """Evaluate position and analytic velocity at clamp(t, 0, duration)."""
    if t < 0.0:
        raise ValueError("sample time must be non-negative")
    seg, local_t = traj._locate(t)
    return Setpoint(position=seg.position(local_t), velocity=seg.velocity(local_t), yaw=traj.yaw)


def recovery_setpoint(perch_pose, approach_normal, offset: float = 1.0) -> Setpoint:
    """Hover target offset away from the perch site, facing back at the tree."""
    perch = np.asarray(perch_pose, dtype=float)
    normal = np.asarray(approach_normal, dtype=float)
    yaw = math.atan2(-normal[1], -normal[0])
    return Setpoint(position=perch + offset * normal, velocity=np.zeros(3), yaw=yaw)


def export_csv(traj: Trajectory, path, rate: float = 100.0) -> None:
    """Write sampled (t, px, py, pz, vx, vy, vz) rows for plotting."""
    n = int(math.floor(traj.duration * rate)) + 1
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["t", "px", "py", "pz", "vx", "vy", "vz"])
        for k in range(n):
            t = k / rate
            sp = sample(traj, t)
            writer.writerow([f"{t:.6f}"] + [f"{x:.9f}" for x in (*sp.position, *sp.velocity)])
