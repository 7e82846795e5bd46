import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heightlab.errors import DegenerateGeometryError
from heightlab.geometry import (
    CameraModel, RigidTransform, backproject, compose, invert, pinhole, project,
    road_frame_from_camera, road_frame_from_plane, rot_x, rot_y, rot_z, transform_points, translate,
)

angles = st.floats(-math.pi, math.pi, allow_nan=False)
offsets = st.floats(-50, 50, allow_nan=False)


def random_transform(a, b, c, x, y, z):
    return compose(translate(x, y, z), compose(rot_z(a), compose(rot_y(b), rot_x(c))))


@given(angles, angles, angles, offsets, offsets, offsets)
@settings(max_examples=60, deadline=None)
def test_compose_with_inverse_is_identity(a, b, c, x, y, z):
    T = random_transform(a, b, c, x, y, z)
    I = compose(T, invert(T))
    np.testing.assert_allclose(I.matrix(), np.eye(4), atol=1e-9)


def test_compose_applies_right_operand_first():
    T = compose(translate(1, 0, 0), rot_z(math.pi / 2))
    # rotate (1,0,0) to (0,1,0) then shift x by 1
    np.testing.assert_allclose(transform_points(T, [1.0, 0, 0]), [1.0, 1.0, 0.0], atol=1e-12)


def test_from_matrix_rejects_non_rotation():
    M = np.hstack([np.diag([1.0, 1.0, 1.1]), np.zeros((3, 1))])
    with pytest.raises(ValueError):
        RigidTransform.from_matrix(M)
    fixed = RigidTransform.from_matrix(M, reorthonormalize=True)
    np.testing.assert_allclose(fixed.rotation @ fixed.rotation.T, np.eye(3), atol=1e-12)


def level_camera(pitch=0.0):
    return CameraModel.mounted(100.0, 100.0, 64.0, 32.0, 128, 64, 1.5, pitch, 1.5)


def test_point_straight_ahead_hits_principal_point():
    cam = level_camera()
    uvw = project(cam, [[0.0, 11.5, 1.5]])
    np.testing.assert_allclose(uvw[0], [64.0, 32.0, 1.0], atol=1e-12)


def test_projection_known_pixel():
    cam = level_camera()
    # 10 m ahead, 1 m right, 0.5 m below the camera -> (64 + 10, 32 + 5)
    uvw = project(cam, [[1.0, 11.5, 1.0]])
    np.testing.assert_allclose(uvw[0], [74.0, 37.0, 1.0], atol=1e-12)


def test_points_behind_or_offimage_are_invalid():
    cam = level_camera()
    uvw = project(cam, [[0.0, -5.0, 1.5], [100.0, 2.5, 1.5]])
    assert list(uvw[:, 2]) == [0.0, 0.0]


@given(st.floats(0, 127), st.floats(0, 63), st.floats(0.5, 80))
@settings(max_examples=60, deadline=None)
def test_backproject_then_project_round_trips(u, v, d):
    cam = level_camera(0.05)
    p = backproject(cam, u, v, d)
    uu, vv, ok = pinhole(cam, p)
    assert ok
    assert abs(uu - u) < 1e-9 and abs(vv - v) < 1e-9


def test_road_frame_puts_camera_above_origin():
    cam = level_camera(math.radians(3))
    frame = road_frame_from_camera(cam, 1.5, math.radians(3))
    c_road = transform_points(frame.pose, cam.center_in_ego())
    np.testing.assert_allclose(c_road, [0.0, 0.0, 1.5], atol=1e-12)
    # the road y axis is the viewing direction projected into the plane
    y_in_cam = frame.camera_from_road(cam).rotation[:, 1]
    assert y_in_cam[2] > 0.99 and abs(y_in_cam[0]) < 1e-12


def test_plane_parallel_to_view_is_degenerate():
    cam = level_camera()
    with pytest.raises(DegenerateGeometryError):
        road_frame_from_plane(cam, np.array([0.0, 0.0, -1.0]), 1.5)
