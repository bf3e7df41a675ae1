"""Pinhole camera model and rigid-body poses.

Camera convention: x right, y down, z forward into the scene. Pixel ``(u, v)``
is (column, row) and integer pixel indices sit at integer coordinates.
Points are plain ``(3,)`` float64 arrays in millimeters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import BehindCameraError, InvalidArgumentError, ShapeError
from .frames import ColorFrame, DepthFrame

ROTATION_TOL = 1e-6


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        for name in ("fx", "fy", "cx", "cy"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidArgumentError(f"intrinsics {name} must be finite")
        if not (self.fx > 0 and self.fy > 0):
            raise InvalidArgumentError("focal lengths must be positive")
        if int(self.width) != self.width or int(self.height) != self.height:
            raise InvalidArgumentError("sensor dimensions must be integers")
        if self.width < 1 or self.height < 1:
            raise InvalidArgumentError("sensor dimensions must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise InvalidArgumentError("principal point must lie inside the sensor")

    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def downscaled(self, factor: int) -> "CameraIntrinsics":
        """Intrinsics of a sensor ``factor`` times coarser whose pixel centers
        land where bilinear upscaling (half-pixel offset) samples them."""
        if factor < 1 or self.width % factor or self.height % factor:
            raise InvalidArgumentError(f"cannot downscale {self.width}x{self.height} by {factor}")
        return CameraIntrinsics(
            fx=self.fx / factor,
            fy=self.fy / factor,
            cx=(self.cx + 0.5) / factor - 0.5,
            cy=(self.cy + 0.5) / factor - 0.5,
            width=self.width // factor,
            height=self.height // factor,
        )


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Pose:
    """Camera-to-world rigid transform ``p_world = R @ p_cam + T``."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        r = _readonly(self.rotation)
        t = _readonly(self.translation).reshape(-1)
        if r.shape != (3, 3) or t.shape != (3,):
            raise ShapeError(f"pose needs a 3x3 rotation and 3-vector translation, got {r.shape}, {t.shape}")
        if not (np.isfinite(r).all() and np.isfinite(t).all()):
            raise InvalidArgumentError("pose entries must be finite")
        if np.abs(r.T @ r - np.eye(3)).max() > ROTATION_TOL:
            raise InvalidArgumentError("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > ROTATION_TOL:
            raise InvalidArgumentError("rotation is not proper (det != 1)")
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls()

    @classmethod
    def from_matrix(cls, m) -> "Pose":
        m = np.asarray(m, dtype=np.float64)
        return cls(m[:3, :3], m[:3, 3])

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def allclose(self, other: "Pose", atol: float = 1e-9) -> bool:
        return bool(
            np.allclose(self.rotation, other.rotation, rtol=0, atol=atol)
            and np.allclose(self.translation, other.translation, rtol=0, atol=atol)
        )

    def __eq__(self, other):
        if not isinstance(other, Pose):
            return NotImplemented
        return np.array_equal(self.rotation, other.rotation) and np.array_equal(self.translation, other.translation)

    def __repr__(self):
        return f"Pose(rotation={self.rotation.tolist()}, translation={self.translation.tolist()})"


def rotation_about_axis(axis, angle_rad: float) -> np.ndarray:
    """Rodrigues rotation matrix."""
    a = np.asarray(axis, dtype=np.float64)
    a = a / np.linalg.norm(a)
    k = np.array([[0.0, -a[2], a[1]], [a[2], 0.0, -a[0]], [-a[1], a[0], 0.0]])
    return np.eye(3) + math.sin(angle_rad) * k + (1.0 - math.cos(angle_rad)) * (k @ k)


def look_at(eye, target) -> Pose:
    """Camera-to-world pose at ``eye`` whose optical axis points at ``target``.

    World +y is treated as image-down, matching the identity camera.
    """
    eye = np.asarray(eye, dtype=np.float64)
    fwd = np.asarray(target, dtype=np.float64) - eye
    fwd = fwd / np.linalg.norm(fwd)
    right = np.cross([0.0, 1.0, 0.0], fwd)
    if np.linalg.norm(right) < 1e-12:
        raise InvalidArgumentError("look_at direction is parallel to the down axis")
    right /= np.linalg.norm(right)
    down = np.cross(fwd, right)
    return Pose(np.column_stack([right, down, fwd]), eye)


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Points ``(N, 3)`` float64 in millimeters with parallel ``(N, 3)`` uint8 colors."""

    points: np.ndarray
    colors: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        c = np.asarray(self.colors).reshape(-1, 3)
        if len(p) != len(c):
            raise ShapeError(f"{len(p)} points but {len(c)} colors")
        if c.dtype != np.uint8:
            if len(c) and (c.min() < 0 or c.max() > 255):
                raise InvalidArgumentError("colors must be 8-bit")
            c = c.astype(np.uint8)
        if not np.isfinite(p).all():
            raise InvalidArgumentError("points must be finite")
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "colors", c)

    @classmethod
    def empty(cls) -> "PointCloud":
        return cls(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.uint8))

    def __len__(self) -> int:
        return len(self.points)


def _finite(*xs) -> bool:
    return all(math.isfinite(x) for x in xs)


def unproject_pixel(intr: CameraIntrinsics, px, depth_mm: float) -> np.ndarray:
    """Lift pixel ``px = (u, v)`` at ``depth_mm`` to a camera-frame point."""
    u, v = float(px[0]), float(px[1])
    depth_mm = float(depth_mm)
    if not _finite(u, v, depth_mm):
        raise InvalidArgumentError("pixel and depth must be finite")
    if depth_mm < 0:
        raise InvalidArgumentError(f"depth must be >= 0, got {depth_mm}")
    return np.array([(u - intr.cx) / intr.fx * depth_mm, (v - intr.cy) / intr.fy * depth_mm, depth_mm])


def project_point(intr: CameraIntrinsics, p) -> tuple[tuple[float, float], float]:
    """Forward pinhole projection; returns ``((u, v), depth_mm)``."""
    x, y, z = (float(c) for c in p)
    if not _finite(x, y, z):
        raise InvalidArgumentError("point must be finite")
    if z <= 0:
        raise BehindCameraError(f"point has z={z} <= 0")
    return (intr.fx * x / z + intr.cx, intr.fy * y / z + intr.cy), z


def transform_point(pose: Pose, p) -> np.ndarray:
    r, t = pose.rotation, pose.translation
    x, y, z = (float(c) for c in p)
    return np.array([r[row, 0] * x + r[row, 1] * y + r[row, 2] * z + t[row] for row in range(3)])


def transform_points(pose: Pose, pts: np.ndarray) -> np.ndarray:
    return np.asarray(pts, dtype=np.float64) @ pose.rotation.T + pose.translation


def compose_pose(a: Pose, b: Pose) -> Pose:
    """``compose_pose(a, b)(p) == a(b(p))``."""
    return Pose(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def invert_pose(a: Pose) -> Pose:
    rt = a.rotation.T
    return Pose(rt, -(rt @ a.translation))


def unproject_frame(
    intr: CameraIntrinsics,
    depth: DepthFrame,
    color: ColorFrame | None = None,
    pose: Pose | None = None,
    stride: int = 1,
) -> PointCloud:
    """World-frame cloud of every valid pixel on the ``stride`` lattice, row-major."""
    if stride < 1 or int(stride) != stride:
        raise InvalidArgumentError(f"stride must be a positive integer, got {stride}")
    if depth.shape != (intr.height, intr.width):
        raise ShapeError(f"depth is {depth.width}x{depth.height}, intrinsics expect {intr.width}x{intr.height}")
    if color is not None and color.shape != depth.shape:
        raise ShapeError(f"color is {color.width}x{color.height}, depth is {depth.width}x{depth.height}")
    pose = pose or Pose.identity()
    col = color.pixels if color is not None else np.zeros((1, 1, 3), dtype=np.uint8)
    pts, cols = _kernels.unproject(
        depth.samples, col, color is not None,
        float(intr.fx), float(intr.fy), float(intr.cx), float(intr.cy),
        pose.rotation, pose.translation, int(stride), 0, depth.height,
    )
    cloud = object.__new__(PointCloud)
    object.__setattr__(cloud, "points", pts)
    object.__setattr__(cloud, "colors", cols)
    return cloud
