"""Scenario files: one structured document with defaults for every knob.

A scenario is YAML (JSON works too) whose keys mirror ScenarioConfig. Every
field has a default, so an empty file or no file at all runs the nominal
indoor arena. The scenario hash is a SHA-256 over the canonical serialized
form: it changes exactly when a config field changes.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import yaml

from ..autonomy import (
    AutoAccept,
    AutoReject,
    AutonomyConfig,
    ConfirmPolicy,
    FailureDetectorConfig,
    Human,
)
from ..control import GainSet, GentlePerchConfig
from ..gripper import GraspModel, GripperParams
from ..perception import CameraModel, DetectorConfig, forward_mount
from ..planner import PlannerConfig
from ..sim_core import (
    FreeFlight,
    ImuParams,
    TofParams,
    TreeModel,
    VehicleParams,
    WorldState,
    make_vehicle_state,
)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class CameraConfig:
    width: int = 320
    height: int = 240
    fx: float = 200.0
    fy: float = 200.0
    cx: float = 160.0
    cy: float = 120.0
    depth_min: float = 0.3
    depth_max: float = 3.0
    body_offset: tuple = (0.0, 0.0, 0.0)  # camera position in the body frame
    # rectangles (col0, row0, col1, row1), end-exclusive, blocked by the gripper
    occlusion_rects: tuple = ((130, 200, 190, 240),)

    def build(self) -> CameraModel:
        mask = None
        if self.occlusion_rects:
            mask = np.zeros((self.height, self.width), dtype=bool)
            for c0, r0, c1, r1 in self.occlusion_rects:
                mask[r0:r1, c0:c1] = True
        return CameraModel(
            fx=self.fx,
            fy=self.fy,
            cx=self.cx,
            cy=self.cy,
            width=self.width,
            height=self.height,
            depth_min=self.depth_min,
            depth_max=self.depth_max,
            body_extrinsic=forward_mount(self.body_offset),
            occlusion_mask=mask,
        )


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 0
    arena: tuple = (16.0, 6.0, 3.0)  # m, indoor flight room
    tree_base: tuple = (10.0, 3.0, 0.0)
    tree_axis: tuple = (0.0, 0.0, 1.0)
    tree_radius: float = 0.15
    tree_height: float = 3.0
    bark_soft: bool = True
    start_position: tuple = (7.2, 3.0, 1.5)
    start_yaw: float = 0.0
    vehicle: VehicleParams = VehicleParams()
    imu: ImuParams = ImuParams()
    tof: TofParams = TofParams()
    camera: CameraConfig = CameraConfig()
    depth_noise_std: float = 0.0  # multiplicative rendering noise
    detector: DetectorConfig = DetectorConfig()
    planner: PlannerConfig = PlannerConfig()
    gains: GainSet = GainSet()
    gentle_perch: GentlePerchConfig = GentlePerchConfig()
    gripper: GripperParams = GripperParams()
    grasp: GraspModel = GraspModel()
    confirm_policy: ConfirmPolicy = AutoAccept()
    failure_detector: FailureDetectorConfig = FailureDetectorConfig()
    arrival_tolerance: float = 0.05  # m, at the standoff goal
    recovery_position_tolerance: float = 0.2
    recovery_speed_tolerance: float = 0.1
    recovery_offset: float = 1.0
    standoff_distance: float = 0.8  # m, confirm-gate hold point short of the trunk
    final_approach_speed: float = 0.2  # m/s, cruise for the contact leg
    perception_rate: float = 5.0  # Hz
    track_gate: float = 0.3  # m
    track_alpha: float = 0.3
    track_max_staleness: int = 25
    replan_threshold: float = 0.1  # m, tracked-target motion forcing a replan
    search_timeout: float = 10.0  # s
    trial_timeout: float = 60.0  # s

    def validate(self) -> None:
        ax, ay, az = self.arena
        bx, by, bz = self.tree_base
        r = self.tree_radius
        if not (r < bx < ax - r and r < by < ay - r and 0.0 <= bz < az):
            raise ConfigError("tree must stand inside the arena")
        sx, sy, sz = self.start_position
        if not (0.0 <= sx <= ax and 0.0 <= sy <= ay and 0.0 < sz <= az):
            raise ConfigError("start position outside the arena")
        if self.standoff_distance <= self.gripper.trigger_distance:
            raise ConfigError("standoff must sit beyond the trigger distance")
        if self.perception_rate <= 0 or self.vehicle.control_rate % self.perception_rate:
            raise ConfigError("perception_rate must divide the control rate")

    # --- builders -----------------------------------------------------------

    def make_tree(self) -> TreeModel:
        axis = np.asarray(self.tree_axis, dtype=float)
        return TreeModel(
            base_point=np.asarray(self.tree_base, dtype=float),
            axis_direction=axis / np.linalg.norm(axis),
            radius=self.tree_radius,
            height=self.tree_height,
            bark_soft=self.bark_soft,
        )

    def make_world(self) -> WorldState:
        return WorldState(
            vehicle=make_vehicle_state(self.start_position, yaw=self.start_yaw),
            tree=self.make_tree(),
            phase=FreeFlight(),
            params=self.vehicle,
        )

    def make_autonomy(self) -> AutonomyConfig:
        return AutonomyConfig(
            confirm_policy=self.confirm_policy,
            detector=self.failure_detector,
            arrival_tolerance=self.arrival_tolerance,
            recovery_position_tolerance=self.recovery_position_tolerance,
            recovery_speed_tolerance=self.recovery_speed_tolerance,
            recovery_offset=self.recovery_offset,
        )


# --- serialization ----------------------------------------------------------

_POLICY_KINDS = {"human": Human, "auto_accept": AutoAccept, "auto_reject": AutoReject}


def _policy_to_dict(policy: ConfirmPolicy) -> dict:
    if isinstance(policy, Human):
        return {"kind": "human"}
    if isinstance(policy, AutoAccept):
        return {"kind": "auto_accept", "delay": policy.delay}
    return {"kind": "auto_reject"}


def _policy_from_dict(d: dict) -> ConfirmPolicy:
    kind = d.get("kind")
    if kind not in _POLICY_KINDS:
        raise ConfigError(f"unknown confirm policy {kind!r}")
    if kind == "auto_accept":
        return AutoAccept(delay=float(d.get("delay", 0.0)))
    return _POLICY_KINDS[kind]()


_NESTED = {
    "vehicle": VehicleParams,
    "imu": ImuParams,
    "tof": TofParams,
    "camera": CameraConfig,
    "detector": DetectorConfig,
    "planner": PlannerConfig,
    "gains": GainSet,
    "gentle_perch": GentlePerchConfig,
    "gripper": GripperParams,
    "grasp": GraspModel,
    "failure_detector": FailureDetectorConfig,
}

_LIST_FIELDS = {
    "arena",
    "tree_base",
    "tree_axis",
    "start_position",
}


def _to_plain(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, (tuple, list)):
        return [_to_plain(v) for v in value]
    if isinstance(value, frozenset):
        return sorted(v.value if hasattr(v, "value") else v for v in value)
    if hasattr(value, "value") and not isinstance(value, (int, float, str, bool)):
        return value.value  # enums
    return value


def scenario_to_dict(cfg: ScenarioConfig) -> dict:
    out = {}
    for f in dataclasses.fields(cfg):
        value = getattr(cfg, f.name)
        if f.name == "confirm_policy":
            out[f.name] = _policy_to_dict(value)
        elif f.name in _NESTED:
            sub = {}
            for sf in dataclasses.fields(value):
                if sf.name == "texture_classifier":
                    continue  # callables live outside scenario files
                sub[sf.name] = _to_plain(getattr(value, sf.name))
            out[f.name] = sub
        else:
            out[f.name] = _to_plain(value)
    return out


def _build_nested(cls, data: dict, path: str):
    from ..autonomy import AutonomyState

    names = {f.name for f in dataclasses.fields(cls) if f.name != "texture_classifier"}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown field(s) {sorted(unknown)} in {path}")
    kwargs = {}
    for key, value in data.items():
        if key == "armed_states":
            kwargs[key] = frozenset(AutonomyState(v) for v in value)
        elif key == "occlusion_rects":
            kwargs[key] = tuple(tuple(r) for r in value)
        elif isinstance(value, list):
            kwargs[key] = tuple(value)
        else:
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {path}: {exc}") from exc


def scenario_from_dict(data: dict) -> ScenarioConfig:
    if data is None:
        data = {}
    names = {f.name for f in dataclasses.fields(ScenarioConfig)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown scenario field(s): {sorted(unknown)}")
    kwargs = {}
    for key, value in data.items():
        if key == "confirm_policy":
            kwargs[key] = _policy_from_dict(value)
        elif key in _NESTED:
            kwargs[key] = _build_nested(_NESTED[key], value, key)
        elif key in _LIST_FIELDS:
            kwargs[key] = tuple(value)
        elif isinstance(value, list):
            kwargs[key] = tuple(value)
        else:
            kwargs[key] = value
    try:
        cfg = ScenarioConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    cfg.validate()
    return cfg


def scenario_hash(cfg: ScenarioConfig) -> str:
    canonical = json.dumps(scenario_to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def load_scenario(path: Optional[str] = None) -> ScenarioConfig:
    """Load a scenario file; None returns the default scenario."""
    if path is None:
        return ScenarioConfig()
    with open(path) as f:
        data = yaml.safe_load(f)
    return scenario_from_dict(data)


def save_scenario(cfg: ScenarioConfig, path: str) -> None:
    with open(path, "w") as f:
        yaml.safe_dump(scenario_to_dict(cfg), f, sort_keys=True)
