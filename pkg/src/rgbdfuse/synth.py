"""Synthetic captures with analytic ground truth (sphere or plane)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .capture_io import (
    CaptureManifest,
    FrameEntry,
    read_key_values,
    write_color_frame,
    write_depth_frame,
    write_intrinsics,
    write_manifest,
    write_pose_track,
)
from .errors import CaptureError, ConfigError, FormatError
from .frames import ColorFrame, DepthFrame
from .geometry import CameraIntrinsics, Pose, look_at


@dataclass(frozen=True)
class Sphere:
    center: tuple[float, float, float]
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ConfigError(f"sphere radius must be positive, got {self.radius}")


@dataclass(frozen=True)
class Plane:
    """World plane ``z = const``."""

    z: float


@dataclass(frozen=True)
class SceneSpec:
    shape: Sphere | Plane
    intrinsics: CameraIntrinsics
    camera_path: tuple[Pose, ...]
    noise_sigma: float = 0.0
    lidar_factor: int = 1  # lidar rendered this many times coarser than intrinsics
    truedepth: bool = False  # also render a full-resolution second sensor
    color: bool = True
    seed: int = 0
    fps: float = 30.0
    frame_count: int = field(default=0)

    def __post_init__(self):
        path = tuple(self.camera_path)
        object.__setattr__(self, "camera_path", path)
        if self.frame_count == 0:
            object.__setattr__(self, "frame_count", len(path))
        if self.frame_count < 1:
            raise ConfigError("frame_count must be >= 1")
        if len(path) != self.frame_count:
            raise ConfigError(f"camera path has {len(path)} poses for {self.frame_count} frames")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0")
        if self.lidar_factor < 1:
            raise ConfigError("lidar_factor must be >= 1")


def orbit_path(center, distance: float, frame_count: int, degrees: float = 360.0) -> tuple[Pose, ...]:
    """Cameras on a horizontal circle around ``center``, all looking at it.

    Frames start behind the center along -z and step by ``degrees / frame_count``.
    """
    c = np.asarray(center, dtype=np.float64)
    poses = []
    for q in range(frame_count):
        a = math.radians(degrees * q / frame_count)
        eye = c + distance * np.array([math.sin(a), 0.0, -math.cos(a)])
        poses.append(look_at(eye, c))
    return tuple(poses)


def _rays(intr: CameraIntrinsics, pose: Pose):
    """World-frame ray directions with unit camera-z for every pixel."""
    u = (np.arange(intr.width) - intr.cx) / intr.fx
    v = (np.arange(intr.height) - intr.cy) / intr.fy
    d_cam = np.stack(np.broadcast_arrays(u[None, :], v[:, None], np.ones((1, 1))), axis=-1)
    return d_cam @ pose.rotation.T


def render_depth(shape, intr: CameraIntrinsics, pose: Pose) -> tuple[np.ndarray, np.ndarray]:
    """Camera-frame z of the first hit per pixel (0 on miss) and world hit normals."""
    d = _rays(intr, pose)
    o = pose.translation
    if isinstance(shape, Sphere):
        c = np.asarray(shape.center, dtype=np.float64)
        oc = o - c
        a = np.einsum("hwk,hwk->hw", d, d)
        b = 2.0 * (d @ oc)
        cc = oc @ oc - shape.radius**2
        disc = b * b - 4.0 * a * cc
        hit = disc >= 0
        sq = np.sqrt(np.where(hit, disc, 0.0))
        t_near = (-b - sq) / (2.0 * a)
        t_far = (-b + sq) / (2.0 * a)
        t = np.where(t_near > 0, t_near, t_far)
        hit &= t > 0
        pts = o + t[..., None] * d
        normals = (pts - c) / shape.radius
    else:
        dz = d[..., 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (shape.z - o[2]) / dz
        hit = np.isfinite(t) & (t > 0)
        normals = np.broadcast_to(np.array([0.0, 0.0, -1.0 if o[2] < shape.z else 1.0]), d.shape)
    # camera z equals the ray parameter because every camera ray has unit z
    depth = np.where(hit, t, 0.0)
    return depth, np.where(hit[..., None], normals, 0.0)


def _shade(normals: np.ndarray, valid: np.ndarray) -> np.ndarray:
    rgb = np.floor((normals * 0.5 + 0.5) * 255.0 + 0.5)
    return np.where(valid[..., None], rgb, 0).astype(np.uint8)


def synth_capture(spec: SceneSpec, out_dir) -> CaptureManifest:
    """Render every frame and write a replayable capture into ``out_dir``.

    Files: ``intrinsics.txt``, ``poses.txt``, ``manifest.txt`` and per frame
    ``depth_l_NNNN.dpt`` (plus ``depth_t_NNNN.dpt`` and ``color_NNNN.ppm``
    when enabled). Depth is rounded to whole millimeters on write.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CaptureError(f"cannot create {out}: {exc}") from exc
    rng = np.random.default_rng(spec.seed)
    intr = spec.intrinsics
    lidar_intr = intr.downscaled(spec.lidar_factor) if spec.lidar_factor > 1 else intr

    def noisy(depth):
        if spec.noise_sigma == 0:
            return depth
        valid = depth > 0
        jitter = rng.normal(0.0, spec.noise_sigma, size=depth.shape)
        return np.where(valid, np.maximum(depth + jitter, 1.0), 0.0)

    entries = []
    try:
        for q, pose in enumerate(spec.camera_path):
            name = f"{q:04d}"
            lidar, _ = render_depth(spec.shape, lidar_intr, pose)
            (out / f"depth_l_{name}.dpt").write_bytes(write_depth_frame(DepthFrame(noisy(lidar))))
            entry = {"depth_l": f"depth_l_{name}.dpt"}
            if spec.truedepth or spec.color:
                full, normals = render_depth(spec.shape, intr, pose)
                if spec.truedepth:
                    (out / f"depth_t_{name}.dpt").write_bytes(write_depth_frame(DepthFrame(noisy(full))))
                    entry["depth_t"] = f"depth_t_{name}.dpt"
                if spec.color:
                    rgb = _shade(normals, full > 0)
                    (out / f"color_{name}.ppm").write_bytes(write_color_frame(ColorFrame(rgb)))
                    entry["color"] = f"color_{name}.ppm"
            entries.append(FrameEntry(index=q, timestamp=q / spec.fps, pose=q, **entry))
        manifest = CaptureManifest(tuple(entries), out)
        (out / "intrinsics.txt").write_text(write_intrinsics(intr), encoding="utf-8")
        (out / "poses.txt").write_text(write_pose_track(spec.camera_path), encoding="utf-8")
        (out / "manifest.txt").write_text(write_manifest(manifest), encoding="utf-8")
    except OSError as exc:
        raise CaptureError(f"cannot write capture into {out}: {exc}") from exc
    return manifest


def parse_scene_spec(text: str) -> SceneSpec:
    """Scene from ``key value`` lines.

    Keys: ``shape`` (sphere|plane), ``center x y z``, ``radius``, ``plane_z``,
    ``frame_count``, the six intrinsics keys, ``path`` (static|orbit),
    ``orbit_distance``, ``orbit_degrees``, ``noise_sigma``, ``seed``,
    ``lidar_factor``, ``truedepth`` and ``color`` (0/1).
    """
    kv = read_key_values(text)

    def get(key, conv, default=None, n=1):
        if key not in kv:
            if default is None:
                raise ConfigError(f"scene spec is missing {key!r}")
            return default
        toks, no = kv[key]
        if len(toks) != n:
            raise FormatError(f"{key} takes {n} value(s)", line=no)
        try:
            vals = [conv(t) for t in toks]
        except ValueError:
            raise FormatError(f"bad value for {key}", line=no) from None
        return vals[0] if n == 1 else tuple(vals)

    try:
        intr = CameraIntrinsics(
            get("fx", float), get("fy", float), get("cx", float), get("cy", float),
            get("width", int), get("height", int),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    kind = get("shape", str)
    if kind == "sphere":
        shape = Sphere(get("center", float, n=3), get("radius", float))
        target = shape.center
    elif kind == "plane":
        shape = Plane(get("plane_z", float))
        target = (0.0, 0.0, shape.z)
    else:
        raise ConfigError(f"unknown shape {kind!r}")
    n = get("frame_count", int, 1)
    if n < 1:
        raise ConfigError("frame_count must be >= 1")
    path = get("path", str, "static")
    if path == "static":
        poses = tuple(Pose.identity() for _ in range(n))
    elif path == "orbit":
        poses = orbit_path(target, get("orbit_distance", float), n, get("orbit_degrees", float, 360.0))
    else:
        raise ConfigError(f"unknown camera path {path!r}")
    flag = lambda t: bool(int(t))  # noqa: E731
    return SceneSpec(
        shape=shape,
        intrinsics=intr,
        camera_path=poses,
        frame_count=n,
        noise_sigma=get("noise_sigma", float, 0.0),
        lidar_factor=get("lidar_factor", int, 1),
        truedepth=get("truedepth", flag, False),
        color=get("color", flag, True),
        seed=get("seed", int, 0),
    )
