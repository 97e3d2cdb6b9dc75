import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from perchsim import quat


unit_quats = st.builds(
    lambda w, x, y, z: (w, x, y, z),
    *[st.floats(-1.0, 1.0) for _ in range(4)],
).filter(lambda q: sum(c * c for c in q) > 1e-3).map(
    lambda q: quat.normalize(np.array(q))
)


def test_yaw_rotation_rotates_x_axis():
    q = quat.from_yaw(math.pi / 2)
    v = quat.rotate(q, (1.0, 0.0, 0.0))
    assert np.allclose(v, [0.0, 1.0, 0.0], atol=1e-12)


def test_axis_angle_matches_matrix():
    axis = np.array([0.3, -0.5, 0.8])
    q = quat.from_axis_angle(axis, 1.1)
    m = quat.to_matrix(q)
    v = np.array([0.2, 1.0, -0.4])
    assert np.allclose(m @ v, quat.rotate(q, v), atol=1e-12)


@given(unit_quats)
def test_matrix_round_trip(q):
    m = quat.to_matrix(q)
    q2 = quat.from_matrix(m)
    # q and -q encode the same rotation
    assert min(np.linalg.norm(q - q2), np.linalg.norm(q + q2)) < 1e-9


@given(unit_quats, st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5))
def test_rotation_preserves_norm(q, x, y, z):
    v = np.array([x, y, z])
    assert np.linalg.norm(quat.rotate(q, v)) == pytest.approx(np.linalg.norm(v), abs=1e-9)


@given(unit_quats, st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5))
def test_rotate_inv_inverts(q, x, y, z):
    v = np.array([x, y, z])
    assert np.allclose(quat.rotate_inv(q, quat.rotate(q, v)), v, atol=1e-9)


def test_slerp_endpoints_and_midpoint():
    q0 = quat.from_yaw(0.0)
    q1 = quat.from_yaw(1.0)
    assert np.allclose(quat.slerp(q0, q1, 0.0), q0, atol=1e-12)
    assert np.allclose(quat.slerp(q0, q1, 1.0), q1, atol=1e-12)
    assert np.allclose(quat.slerp(q0, q1, 0.5), quat.from_yaw(0.5), atol=1e-12)


def test_slerp_takes_shortest_arc():
    q0 = quat.from_yaw(0.1)
    q1 = -quat.from_yaw(0.2)  # same rotation as +from_yaw(0.2)
    mid = quat.slerp(q0, q1, 0.5)
    assert quat.rotation_angle(mid, quat.from_yaw(0.15)) < 1e-9


def test_log_map_recovers_axis_angle():
    axis = np.array([0.0, 1.0, 0.0])
    q = quat.from_axis_angle(axis, 0.7)
    rv = quat.log_map(q)
    assert np.allclose(rv, axis * 0.7, atol=1e-12)
