"""Minimal unit-quaternion helpers.

Convention: q = (w, x, y, z), unit norm, representing a body->world rotation.
All functions take and return numpy arrays but compute scalar-wise, since the
simulation steps these at 1 kHz and small-array numpy overhead dominates there.
"""

from __future__ import annotations

import math

import numpy as np

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])


def normalize(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    n = math.sqrt(w * w + x * x + y * y + z * z)
    if n == 0.0:
        raise ValueError("zero-norm quaternion")
    return np.array([w / n, x / n, y / n, z / n])


def multiply(q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    w1, x1, y1, z1 = q1
    w2, x2, y2, z2 = q2
    return np.array(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ]
    )


def conjugate(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array([w, -x, -y, -z])


def rotate(q: np.ndarray, v) -> np.ndarray:
    """Rotate vector v by q (body frame -> world frame for an attitude q)."""
    w, x, y, z = q
    vx, vy, vz = v
    # v' = v + 2*w*(u x v) + 2*(u x (u x v)), u = (x, y, z)
    tx = 2.0 * (y * vz - z * vy)
    ty = 2.0 * (z * vx - x * vz)
    tz = 2.0 * (x * vy - y * vx)
    return np.array(
        [
            vx + w * tx + (y * tz - z * ty),
            vy + w * ty + (z * tx - x * tz),
            vz + w * tz + (x * ty - y * tx),
        ]
    )


def rotate_inv(q: np.ndarray, v) -> np.ndarray:
    """Rotate vector v by the inverse of q (world -> body)."""
    return rotate(conjugate(q), v)


def from_axis_angle(axis, angle: float) -> np.ndarray:
    ax, ay, az = axis
    n = math.sqrt(ax * ax + ay * ay + az * az)
    if n == 0.0:
        raise ValueError("zero rotation axis")
    h = 0.5 * angle
    s = math.sin(h) / n
    return np.array([math.cos(h), ax * s, ay * s, az * s])


def from_yaw(yaw: float) -> np.ndarray:
    h = 0.5 * yaw
    return np.array([math.cos(h), 0.0, 0.0, math.sin(h)])


def yaw_of(q: np.ndarray) -> float:
    """Heading of the body-x axis projected to the horizontal plane."""
    fwd = rotate(q, (1.0, 0.0, 0.0))
    return math.atan2(fwd[1], fwd[0])


def to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def from_matrix(m: np.ndarray) -> np.ndarray:
    """Shepperd's method; m must be a proper rotation matrix."""
    t = m[0, 0] + m[1, 1] + m[2, 2]
    if t > 0.0:
        s = math.sqrt(t + 1.0) * 2.0
        q = np.array(
            [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
        )
    elif m[0, 0] >= m[1, 1] and m[0, 0] >= m[2, 2]:
        s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
        q = np.array(
            [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
        )
    elif m[1, 1] >= m[2, 2]:
        s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
        q = np.array(
            [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
        )
    else:
        s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
        q = np.array(
            [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
        )
    return normalize(q)


def slerp(q0: np.ndarray, q1: np.ndarray, alpha: float) -> np.ndarray:
    """Spherical interpolation from q0 (alpha=0) to q1 (alpha=1), shortest arc."""
    w0, x0, y0, z0 = q0
    w1, x1, y1, z1 = q1
    dot = w0 * w1 + x0 * x1 + y0 * y1 + z0 * z1
    if dot < 0.0:
        w1, x1, y1, z1 = -w1, -x1, -y1, -z1
        dot = -dot
    if dot > 0.9999995:
        # nearly parallel: linear blend then renormalize
        q = np.array(
            [
                w0 + alpha * (w1 - w0),
                x0 + alpha * (x1 - x0),
                y0 + alpha * (y1 - y0),
                z0 + alpha * (z1 - z0),
            ]
        )
        return normalize(q)
    theta = math.acos(min(1.0, dot))
    s = math.sin(theta)
    a = math.sin((1.0 - alpha) * theta) / s
    b = math.sin(alpha * theta) / s
    return np.array([a * w0 + b * w1, a * x0 + b * x1, a * y0 + b * y1, a * z0 + b * z1])


def rotation_angle(q0: np.ndarray, q1: np.ndarray) -> float:
    """Angle of the relative rotation between two attitudes, in [0, pi]."""
    dot = abs(float(np.dot(q0, q1)))
    return 2.0 * math.acos(min(1.0, dot))


def log_map(q: np.ndarray) -> np.ndarray:
    """Rotation vector (axis * angle) of a unit quaternion."""
    w, x, y, z = q
    if w < 0.0:
        w, x, y, z = -w, -x, -y, -z
    vn = math.sqrt(x * x + y * y + z * z)
    if vn < 1e-12:
        return np.array([2.0 * x, 2.0 * y, 2.0 * z])
    angle = 2.0 * math.atan2(vn, w)
    k = angle / vn
    return np.array([x * k, y * k, z * k])
