"""Synthetic depth camera and geometric trunk detector.

Rendering casts one ray per pixel against the trunk cylinder and the ground
plane. Detection segments the largest vertically-contiguous stripe of
depth-smooth pixels column by column, then applies three acceptance filters:
metric diameter range, depth-profile overhang check, and a pluggable bark
texture verdict (a pass-through stub by default).
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, replace
from typing import Callable, Optional, Tuple

import numpy as np

from . import quat
from .sim_core import VehicleState, WorldState

# camera axes (x right, y down, z forward) expressed in the body frame
# (x forward, y left, z up): the default forward-looking mount
FORWARD_MOUNT = np.array(
    [
        [0.0, 0.0, 1.0],
        [-1.0, 0.0, 0.0],
        [0.0, -1.0, 0.0],
    ]
)


class EmptyFrame(ValueError):
    """Raised when a frame contains no valid depth at all."""


class DepthOutOfRange(ValueError):
    pass


class TrackLost(RuntimeError):
    """Raised when a tracked candidate has gone unobserved for too long."""


@dataclass(frozen=True)
class RigidTransform:
    """Rotation matrix plus translation; maps child-frame points to parent."""

    rotation: np.ndarray
    translation: np.ndarray

    def apply(self, points: np.ndarray) -> np.ndarray:
        return points @ self.rotation.T + self.translation


def forward_mount(offset=(0.0, 0.0, 0.0)) -> RigidTransform:
    return RigidTransform(FORWARD_MOUNT.copy(), np.asarray(offset, dtype=float))


@dataclass(frozen=True)
class CameraModel:
    fx: float = 400.0
    fy: float = 400.0
    cx: float = 320.0
    cy: float = 240.0
    width: int = 640
    height: int = 480
    depth_min: float = 0.3
    depth_max: float = 3.0
    body_extrinsic: RigidTransform = None
    occlusion_mask: Optional[np.ndarray] = None  # True where the gripper blocks the view

    def __post_init__(self):
        if self.body_extrinsic is None:
            object.__setattr__(self, "body_extrinsic", forward_mount())
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width):
            raise ValueError("principal point outside image")
        if not self.depth_min < self.depth_max:
            raise ValueError("depth_min must be below depth_max")
        if self.occlusion_mask is not None:
            if self.occlusion_mask.shape != (self.height, self.width):
                raise ValueError("occlusion mask shape must match image size")

    def pose_in_world(self, vehicle: VehicleState) -> Tuple[np.ndarray, np.ndarray]:
        """Camera center and camera->world rotation for a vehicle pose."""
        r_wb = quat.to_matrix(vehicle.attitude)
        center = vehicle.position + r_wb @ self.body_extrinsic.translation
        return center, r_wb @ self.body_extrinsic.rotation

    def pixel_rays(self) -> Tuple[np.ndarray, np.ndarray]:
        """Camera-frame ray grid with z=1 and its squared norms (pose invariant)."""
        cached = getattr(self, "_pixel_rays", None)
        if cached is None:
            u = (np.arange(self.width) - self.cx) / self.fx
            v = (np.arange(self.height) - self.cy) / self.fy
            dirs = np.empty((self.height, self.width, 3))
            dirs[..., 0] = u[None, :]
            dirs[..., 1] = v[:, None]
            dirs[..., 2] = 1.0
            cached = (dirs, np.einsum("hwi,hwi->hw", dirs, dirs))
            object.__setattr__(self, "_pixel_rays", cached)
        return cached


@dataclass
class DepthImage:
    data: np.ndarray  # (H, W) float meters, 0 marks invalid pixels
    timestamp: float = 0.0

    @property
    def valid(self) -> np.ndarray:
        return self.data > 0.0


@dataclass(frozen=True)
class DetectorConfig:
    diameter_range: Tuple[float, float] = (0.10, 0.60)  # m
    overhang_tilt_limit: float = math.radians(5.0)  # rad, lean toward the camera
    min_stripe_height: int = 24  # px
    depth_noise_gate: float = 0.05  # m, max step between adjacent rows in a run
    run_depth_window: float = 0.30  # m, max total depth spread within a run
    texture_stub_pass: bool = True
    texture_classifier: Optional[Callable[[DepthImage, tuple], bool]] = None

    def __post_init__(self):
        lo, hi = self.diameter_range
        if not (0.0 < lo < hi):
            raise ValueError("diameter_range must be positive and ordered")


@dataclass
class PerchCandidate:
    bbox: tuple  # (col_min, row_min, col_max, row_max), inclusive
    centroid_px: np.ndarray  # (u, v)
    centroid_depth: float
    diameter_est: float
    diameter_ok: bool
    texture_ok: bool
    overhang_ok: bool
    target_pose: Optional[np.ndarray] = None  # world frame, filled by localize_candidate
    approach_normal: Optional[np.ndarray] = None  # horizontal unit, trunk -> free space
    staleness: int = 0

    @property
    def accepted(self) -> bool:
        return self.diameter_ok and self.texture_ok and self.overhang_ok


def render_depth(
    camera: CameraModel,
    world: WorldState,
    rng: Optional[np.random.Generator] = None,
    noise_std: float = 0.0,
) -> DepthImage:
    """Ray-cast the trunk cylinder and ground plane into a z-depth image."""
    center, r_wc = camera.pose_in_world(world.vehicle)
    h, w = camera.height, camera.width
    # unnormalized camera-frame directions with z=1: the ray parameter is
    # z-depth; rotation preserves the cached squared norms
    dirs_cam, dirs_sq = camera.pixel_rays()
    dirs = dirs_cam @ r_wc.T

    tree = world.tree
    rel = center - tree.base_point
    axis = tree.axis_direction
    d_u = dirs @ axis
    w_u = float(np.dot(rel, axis))
    # perpendicular-component quadratic without materializing projections:
    # |d_perp|^2 = |d|^2 - (d.u)^2, d_perp.w_perp = d.w - (d.u)(w.u)
    a = dirs_sq - d_u * d_u
    b = 2.0 * ((dirs @ rel) - d_u * w_u)
    c = float(np.dot(rel, rel)) - w_u * w_u - tree.radius**2
    disc = b * b - 4.0 * a * c
    hit = (disc >= 0.0) & (a > 1e-15)
    sqrt_disc = np.sqrt(np.where(hit, disc, 0.0))
    safe_a = np.where(hit, a, 1.0)

    t_tree = np.full((h, w), np.inf)
    for sign in (-1.0, 1.0):  # near root first; far root fills where near missed
        t = (-b + sign * sqrt_disc) / (2.0 * safe_a)
        s = w_u + t * d_u
        ok = hit & (t > 1e-9) & (s >= 0.0) & (s <= tree.height)
        t_tree = np.where(ok & (t < t_tree), t, t_tree)

    dz = dirs[..., 2]
    t_ground = np.where(dz < -1e-12, -center[2] / np.where(dz < -1e-12, dz, -1.0), np.inf)
    t_ground = np.where(t_ground > 1e-9, t_ground, np.inf)

    depth = np.minimum(t_tree, t_ground)
    valid = np.isfinite(depth) & (depth >= camera.depth_min) & (depth <= camera.depth_max)
    depth = np.where(valid, depth, 0.0)

    if noise_std > 0.0:
        if rng is None:
            raise ValueError("noise requires an rng")
        depth = depth * (1.0 + noise_std * rng.standard_normal((h, w)))
        valid = (depth >= camera.depth_min) & (depth <= camera.depth_max)
        depth = np.where(valid, depth, 0.0)

    if camera.occlusion_mask is not None:
        depth = np.where(camera.occlusion_mask, 0.0, depth)

    return DepthImage(data=depth, timestamp=world.time)


def _column_runs(img: np.ndarray, valid: np.ndarray, cfg: DetectorConfig):
    """Per-column longest qualifying smooth run: list of (start, stop) or None.

    A run is a chain of valid pixels whose row-to-row depth steps stay below
    depth_noise_gate; it qualifies when at least min_stripe_height tall and
    its total depth spread stays within run_depth_window (ground pixels form
    smooth chains too, but their depth drifts quickly and fails the window).
    Vectorized over runs rather than pixels.
    """
    h, w = img.shape
    link = valid[1:] & valid[:-1] & (np.abs(np.diff(img, axis=0)) <= cfg.depth_noise_gate)
    runs = [None] * w
    if not link.any():
        return runs
    # flatten column-major with a separator row so runs never span columns
    flat = np.concatenate([link.T, np.zeros((w, 1), bool)], axis=1).ravel()
    starts = flat & ~np.concatenate(([False], flat[:-1]))
    first_pos = np.flatnonzero(starts)
    run_col = first_pos // h
    run_start = first_pos % h
    ids = np.cumsum(starts) - 1
    link_pos = np.flatnonzero(flat)
    link_ids = ids[link_pos]
    n_runs = len(first_pos)
    n_links = np.bincount(link_ids, minlength=n_runs)
    heights = n_links + 1

    rows_l = link_pos % h
    cols_l = link_pos // h
    d0 = img[rows_l, cols_l]
    d1 = img[rows_l + 1, cols_l]
    dmin = np.full(n_runs, np.inf)
    dmax = np.full(n_runs, -np.inf)
    np.minimum.at(dmin, link_ids, np.minimum(d0, d1))
    np.maximum.at(dmax, link_ids, np.maximum(d0, d1))

    good = (heights >= cfg.min_stripe_height) & ((dmax - dmin) <= cfg.run_depth_window)
    for idx in np.flatnonzero(good):
        col = int(run_col[idx])
        stop = int(run_start[idx] + heights[idx])
        if runs[col] is None or heights[idx] > runs[col][1] - runs[col][0]:
            runs[col] = (int(run_start[idx]), stop)
    return runs


def detect_perch_site(
    depth: DepthImage, camera: CameraModel, cfg: DetectorConfig
) -> Optional[PerchCandidate]:
    """Find the trunk stripe and apply the acceptance filters.

    Returns None when no stripe passes every filter. Raises EmptyFrame when
    the image has no valid pixels at all.
    """
    img = depth.data
    if img.shape != (camera.height, camera.width):
        raise ValueError("image dimensions do not match the camera model")
    valid = img > 0.0
    if camera.occlusion_mask is not None:
        valid = valid & ~camera.occlusion_mask
    if not valid.any():
        raise EmptyFrame("no valid depth pixels")

    runs = _column_runs(img, valid, cfg)

    # group contiguous columns that have qualifying runs; pick the largest
    # cluster by pixel count
    clusters = []
    start = None
    for j in range(camera.width + 1):
        has = j < camera.width and runs[j] is not None
        if has and start is None:
            start = j
        elif not has and start is not None:
            clusters.append((start, j))
            start = None
    if not clusters:
        return None
    sizes = [sum(runs[j][1] - runs[j][0] for j in range(c0, c1)) for c0, c1 in clusters]
    c0, c1 = clusters[int(np.argmax(sizes))]

    cols, rows, depths = [], [], []
    row_min, row_max = camera.height, -1
    for j in range(c0, c1):
        r0, r1 = runs[j]
        rr = np.arange(r0, r1)
        cols.append(np.full(r1 - r0, j))
        rows.append(rr)
        depths.append(img[r0:r1, j])
        row_min = min(row_min, r0)
        row_max = max(row_max, r1 - 1)
    cols = np.concatenate(cols)
    rows = np.concatenate(rows)
    depths = np.concatenate(depths)

    weights = depths
    centroid_u = float(np.sum(cols * weights) / np.sum(weights))
    centroid_v = float(np.sum(rows * weights) / np.sum(weights))

    # noise-robust depth at the centroid: median over a stripe neighborhood
    near = (np.abs(cols - centroid_u) <= 5) & (np.abs(rows - centroid_v) <= 5)
    centroid_depth = float(np.median(depths[near])) if near.any() else float(np.median(depths))

    stripe_width_px = c1 - c0
    diameter = estimate_diameter(stripe_width_px, centroid_depth, camera)
    lo, hi = cfg.diameter_range
    diameter_ok = lo <= diameter <= hi

    overhang_ok = _overhang_check(rows, depths, centroid_depth, camera, cfg)

    bbox = (c0, row_min, c1 - 1, row_max)
    if cfg.texture_classifier is not None:
        texture_ok = bool(cfg.texture_classifier(depth, bbox))
    else:
        texture_ok = cfg.texture_stub_pass

    if not (diameter_ok and overhang_ok and texture_ok):
        return None
    return PerchCandidate(
        bbox=bbox,
        centroid_px=np.array([centroid_u, centroid_v]),
        centroid_depth=centroid_depth,
        diameter_est=diameter,
        diameter_ok=diameter_ok,
        texture_ok=texture_ok,
        overhang_ok=overhang_ok,
    )


def _overhang_check(rows, depths, centroid_depth, camera: CameraModel, cfg: DetectorConfig) -> bool:
    """Depth-profile verticality test: reject stripes leaning toward the camera.

    Compares mean depth of the stripe's top and bottom row thirds; a top
    that is nearer than the bottom by more than the tilt limit fails.
    """
    r_lo, r_hi = rows.min(), rows.max()
    span = r_hi - r_lo + 1
    if span < 3:
        return True
    third = span / 3.0
    top = rows <= r_lo + third - 1
    bottom = rows >= r_hi - third + 1
    if not (top.any() and bottom.any()):
        return True
    d_top = float(np.mean(depths[top]))
    d_bot = float(np.mean(depths[bottom]))
    dv = float(np.mean(rows[bottom])) - float(np.mean(rows[top]))
    if dv <= 0:
        return True
    height_span = dv * centroid_depth / camera.fy  # world meters between thirds
    toward_slope = (d_bot - d_top) / height_span  # >0: top closer, leaning overhead
    return math.atan(toward_slope) <= cfg.overhang_tilt_limit


def estimate_diameter(stripe_width_px: float, depth: float, camera: CameraModel) -> float:
    """Invert the apparent angular width of a cylinder into a metric diameter.

    The stripe edges are tangent rays: half-angle theta gives sin(theta) =
    r / axis_distance, and the measured depth is the near-surface distance
    axis_distance - r.
    """
    if stripe_width_px <= 0:
        return 0.0
    theta = math.atan(stripe_width_px / (2.0 * camera.fx))
    s = math.sin(theta)
    if s >= 1.0:
        raise ValueError("stripe width implies an unphysical tangent angle")
    return 2.0 * depth * s / (1.0 - s)


def pixel_to_pose(
    centroid_px,
    centroid_depth: float,
    camera: CameraModel,
    vehicle: VehicleState,
) -> Tuple[np.ndarray, np.ndarray]:
    """Back-project an image point into the world and derive the approach normal."""
    if not (camera.depth_min <= centroid_depth <= camera.depth_max):
        raise DepthOutOfRange(f"depth {centroid_depth} outside camera range")
    u, v = float(centroid_px[0]), float(centroid_px[1])
    p_cam = centroid_depth * np.array([(u - camera.cx) / camera.fx, (v - camera.cy) / camera.fy, 1.0])
    p_body = camera.body_extrinsic.apply(p_cam)
    r_wb = quat.to_matrix(vehicle.attitude)
    target = vehicle.position + r_wb @ p_body
    normal = vehicle.position - target
    normal[2] = 0.0
    norm = float(np.linalg.norm(normal))
    if norm < 1e-9:
        raise ValueError("vehicle directly above target: approach normal undefined")
    return target, normal / norm


def localize_candidate(
    candidate: PerchCandidate, camera: CameraModel, vehicle: VehicleState
) -> PerchCandidate:
    """Return a copy of the candidate with world-frame pose fields filled."""
    target, normal = pixel_to_pose(candidate.centroid_px, candidate.centroid_depth, camera, vehicle)
    return replace(candidate, target_pose=target, approach_normal=normal)


def track_candidate(
    previous: PerchCandidate,
    fresh: Optional[PerchCandidate],
    gate: float,
    alpha: float = 0.3,
    max_staleness: int = 25,
) -> PerchCandidate:
    """Gated exponential smoothing of the tracked perch candidate.

    A fresh detection within `gate` meters of the previous target updates the
    track; anything else (spurious or missing) leaves the previous estimate
    and bumps the staleness counter until TrackLost.
    """
    if previous.target_pose is None:
        raise ValueError("previous candidate must be localized")
    if fresh is not None and fresh.target_pose is not None:
        dist = float(np.linalg.norm(fresh.target_pose - previous.target_pose))
        if dist <= gate:
            pose = previous.target_pose + alpha * (fresh.target_pose - previous.target_pose)
            normal = previous.approach_normal + alpha * (
                fresh.approach_normal - previous.approach_normal
            )
            normal = normal / np.linalg.norm(normal)
            return replace(
                fresh, target_pose=pose, approach_normal=normal, staleness=0
            )
    staleness = previous.staleness + 1
    if staleness > max_staleness:
        raise TrackLost(f"candidate unseen for {staleness} updates")
    return replace(previous, staleness=staleness)


# --- debug frame dump -------------------------------------------------------

FRAME_MAGIC = b"PSDP0001"


def write_depth_frame(depth: DepthImage, path) -> None:
    """Dump a frame as 16-bit little-endian millimeters with a 16-byte header.

    Header layout: 8-byte magic, uint32 width, uint32 height (both LE).
    Invalid pixels are written as 0.
    """
    h, w = depth.data.shape
    mm = np.clip(np.round(depth.data * 1000.0), 0, 65535).astype("<u2")
    with open(path, "wb") as f:
        f.write(FRAME_MAGIC)
        f.write(struct.pack("<II", w, h))
        f.write(mm.tobytes())


def read_depth_frame(path) -> DepthImage:
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != FRAME_MAGIC:
            raise ValueError("not a perchsim depth frame")
        w, h = struct.unpack("<II", f.read(8))
        mm = np.frombuffer(f.read(w * h * 2), dtype="<u2").reshape(h, w)
    return DepthImage(data=mm.astype(float) / 1000.0)
