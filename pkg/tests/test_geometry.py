import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_pose
from rgbdfuse.errors import BehindCameraError, InvalidArgumentError, ShapeError
from rgbdfuse.frames import ColorFrame, DepthFrame
from rgbdfuse.geometry import (
    CameraIntrinsics,
    PointCloud,
    Pose,
    compose_pose,
    invert_pose,
    look_at,
    project_point,
    rotation_about_axis,
    transform_point,
    transform_points,
    unproject_frame,
    unproject_pixel,
)

RZ90 = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])


class TestIntrinsics:
    def test_rejects_bad_values(self):
        with pytest.raises(InvalidArgumentError):
            CameraIntrinsics(0, 500, 10, 10, 20, 20)
        with pytest.raises(InvalidArgumentError):
            CameraIntrinsics(500, 500, 20, 10, 20, 20)  # cx == width
        with pytest.raises(InvalidArgumentError):
            CameraIntrinsics(500, 500, -0.1, 10, 20, 20)
        with pytest.raises(InvalidArgumentError):
            CameraIntrinsics(500, 500, 1, 1, 0, 20)
        with pytest.raises(InvalidArgumentError):
            CameraIntrinsics(math.nan, 500, 1, 1, 2, 2)

    def test_downscaled_pixel_centers(self, intr):
        small = intr.downscaled(4)
        assert (small.width, small.height) == (160, 120)
        assert small.fx == 125.0
        # coarse pixel 0 covers fine pixels 0..3, centered at 1.5
        assert small.cx == pytest.approx((320.5) / 4 - 0.5)
        with pytest.raises(InvalidArgumentError):
            intr.downscaled(7)


def test_unproject_examples(intr):
    np.testing.assert_array_equal(unproject_pixel(intr, (320, 240), 1000), [0, 0, 1000])
    np.testing.assert_array_equal(unproject_pixel(intr, (820, 240), 2000), [2000, 0, 2000])
    np.testing.assert_array_equal(unproject_pixel(intr, (17.3, 401.9), 0), [0, 0, 0])


def test_unproject_rejects_bad_input(intr):
    for px, d in [((1, 1), math.nan), ((math.inf, 1), 5), ((1, 1), -1.0)]:
        with pytest.raises(InvalidArgumentError):
            unproject_pixel(intr, px, d)


def test_project_examples(intr):
    assert project_point(intr, (0, 0, 1000)) == ((320, 240), 1000)
    assert project_point(intr, (2000, 0, 2000)) == ((820, 240), 2000)
    for z in (0.0, -5.0):
        with pytest.raises(BehindCameraError):
            project_point(intr, (1, 1, z))


@given(
    u=st.floats(0, 639.999),
    v=st.floats(0, 479.999),
    d=st.floats(1e-3, 1e5),
)
def test_round_trip(u, v, d):
    intr = CameraIntrinsics(500.0, 480.0, 320.0, 240.0, 640, 480)
    (u2, v2), d2 = project_point(intr, unproject_pixel(intr, (u, v), d))
    assert abs(u2 - u) < 1e-6 and abs(v2 - v) < 1e-6 and abs(d2 - d) < 1e-6


@given(u=st.floats(0, 639), v=st.floats(0, 479), d=st.floats(1e-3, 1e5) | st.just(0.0))
def test_linear_in_depth(u, v, d):
    intr = CameraIntrinsics(500.0, 480.0, 320.0, 240.0, 640, 480)
    np.testing.assert_array_equal(unproject_pixel(intr, (u, v), 2 * d), 2 * unproject_pixel(intr, (u, v), d))


class TestPose:
    def test_validation(self):
        with pytest.raises(InvalidArgumentError):
            Pose(np.diag([1.0, 1.0, -1.0]))  # reflection
        with pytest.raises(InvalidArgumentError):
            Pose(np.eye(3) * 1.001)
        with pytest.raises(ShapeError):
            Pose(np.eye(2))
        Pose(np.eye(3) * (1 + 2e-7))  # inside tolerance

    def test_immutable(self):
        p = Pose()
        with pytest.raises(ValueError):
            p.rotation[0, 0] = 2.0

    def test_transform_examples(self):
        np.testing.assert_array_equal(transform_point(Pose(), (1, 2, 3)), [1, 2, 3])
        np.testing.assert_array_equal(transform_point(Pose(RZ90), (1, 0, 0)), [0, 1, 0])
        np.testing.assert_array_equal(transform_point(Pose(RZ90, [10, 0, 0]), (1, 0, 0)), [10, 1, 0])

    def test_compose_two_45s(self):
        r45 = Pose(rotation_about_axis([0, 0, 1], math.pi / 4))
        both = compose_pose(r45, r45)
        np.testing.assert_allclose(both.rotation, RZ90, atol=1e-15)

    def test_group_laws(self, rng):
        b = random_pose(rng)
        assert compose_pose(Pose.identity(), b).allclose(b, atol=0)
        a = random_pose(rng)
        assert compose_pose(a, invert_pose(a)).allclose(Pose.identity(), atol=1e-9)
        assert invert_pose(Pose.identity()) == Pose.identity()
        np.testing.assert_array_equal(invert_pose(Pose(translation=[0, 0, 5])).translation, [0, 0, -5])

    def test_inverse_round_trip(self, rng):
        a = random_pose(rng)
        inv = invert_pose(a)
        pts = rng.uniform(-1e4, 1e4, (1000, 3))
        back = transform_points(inv, transform_points(a, pts))
        assert np.abs(back - pts).max() <= 1e-9 * 1e4

    def test_compose_semantics(self, rng):
        a, b = random_pose(rng), random_pose(rng)
        p = rng.normal(size=3) * 100
        np.testing.assert_allclose(
            transform_point(compose_pose(a, b), p), transform_point(a, transform_point(b, p)), atol=1e-9
        )

    def test_matrix_round_trip(self, rng):
        a = random_pose(rng)
        assert Pose.from_matrix(a.matrix()) == a

    def test_look_at(self):
        p = look_at([0, 0, -500], [0, 0, 0])
        assert p.allclose(Pose(translation=[0, 0, -500]), atol=1e-15)
        p = look_at([500, 0, 0], [0, 0, 0])
        np.testing.assert_allclose(p.rotation[:, 2], [-1, 0, 0], atol=1e-15)
        with pytest.raises(InvalidArgumentError):
            look_at([0, -5, 0], [0, 0, 0])


@given(seed=st.integers(0, 2**32 - 1))
def test_isometry(seed):
    rng = np.random.default_rng(seed)
    pose = random_pose(rng)
    a, b = rng.uniform(-1e4, 1e4, (2, 3))
    d0 = np.linalg.norm(a - b)
    d1 = np.linalg.norm(transform_point(pose, a) - transform_point(pose, b))
    assert abs(d1 - d0) <= 1e-6 * d0


def test_transform_points_matches_scalar(rng):
    pose = random_pose(rng)
    pts = rng.normal(size=(50, 3)) * 1000
    many = transform_points(pose, pts)
    for p, q in zip(pts, many):
        np.testing.assert_allclose(q, transform_point(pose, p), rtol=0, atol=1e-9)


class TestUnprojectFrame:
    def test_all_invalid(self, intr):
        cloud = unproject_frame(intr, DepthFrame.zeros(640, 480))
        assert len(cloud) == 0

    def test_single_pixel(self):
        intr = CameraIntrinsics(2.0, 2.0, 0.5, 0.5, 2, 2)
        depth = np.zeros((2, 2))
        depth[1, 0] = 100.0
        cloud = unproject_frame(intr, DepthFrame(depth))
        assert len(cloud) == 1
        np.testing.assert_array_equal(cloud.points[0], unproject_pixel(intr, (0, 1), 100.0))
        np.testing.assert_array_equal(cloud.points[0], [-25.0, 25.0, 100.0])
        np.testing.assert_array_equal(cloud.colors[0], [255, 255, 255])

    def test_stride_lattice(self):
        intr = CameraIntrinsics(2.0, 2.0, 1.5, 1.5, 4, 4)
        cloud = unproject_frame(intr, DepthFrame(np.full((4, 4), 10.0)), stride=2)
        assert len(cloud) == 4
        uv = [project_point(intr, p)[0] for p in cloud.points]
        np.testing.assert_allclose(uv, [(0, 0), (2, 0), (0, 2), (2, 2)], atol=1e-12)

    def test_matches_scalar_path(self, rng):
        intr = CameraIntrinsics(50.0, 45.0, 15.2, 11.7, 32, 24)
        depth = rng.uniform(100, 5000, (24, 32))
        depth[rng.random((24, 32)) < 0.3] = 0
        color = rng.integers(0, 256, (24, 32, 3), dtype=np.uint8)
        pose = random_pose(rng)
        cloud = unproject_frame(intr, DepthFrame(depth), ColorFrame(color), pose)
        vs, us = np.nonzero(depth)  # row-major order
        assert len(cloud) == len(vs)
        for q, (v, u) in enumerate(zip(vs, us)):
            want = transform_point(pose, unproject_pixel(intr, (u, v), depth[v, u]))
            np.testing.assert_allclose(cloud.points[q], want, rtol=0, atol=1e-9)
            np.testing.assert_array_equal(cloud.colors[q], color[v, u])

    def test_shape_errors(self, intr):
        with pytest.raises(ShapeError):
            unproject_frame(intr, DepthFrame.zeros(4, 4))
        small = CameraIntrinsics(2.0, 2.0, 1.0, 1.0, 4, 4)
        with pytest.raises(ShapeError):
            unproject_frame(small, DepthFrame.zeros(4, 4), ColorFrame(np.zeros((3, 4, 3), np.uint8)))
        with pytest.raises(InvalidArgumentError):
            unproject_frame(small, DepthFrame.zeros(4, 4), stride=0)


def test_point_cloud_length_mismatch():
    with pytest.raises(ShapeError):
        PointCloud(np.zeros((2, 3)), np.zeros((1, 3), np.uint8))
