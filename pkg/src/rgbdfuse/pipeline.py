"""Frame-by-frame reconstruction: upscale -> fuse -> normalize -> unproject -> voxelize.

The stage order is fixed. Unprojection and voxel insertion run over bands of
rows so each band's points stay cache-resident; the result is identical to
unprojecting the whole frame and inserting it in one call.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .capture_io import (
    CaptureManifest,
    load_manifest,
    parse_srcnn_weights,
    read_color_frame,
    read_confidence_frame,
    read_depth_frame,
    read_intrinsics,
    read_key_values,
    read_pose_track,
    write_ply,
)
from .depth import FusionConfig, fuse_depth, normalize_relative_to_metric, upscale_bilinear
from .errors import CaptureError, ConfigError, FormatError, ReconError, ShapeError, StageError
from .frames import ColorFrame, ConfidenceFrame, DepthFrame, check_same_shape
from .geometry import CameraIntrinsics, Pose
from .srcnn import SrcnnWeights, srcnn_upscale
from .voxel import DEFAULT_VOXEL_SIZE, VoxelGrid, grid_to_cloud

log = logging.getLogger(__name__)

STAGES = ("io", "fuse", "upscale", "unproject", "voxelize")
BAND_ROWS = 64
# Initial brick capacity of a reconstruction grid. A 1024x768 frame touches
# roughly 10k bricks at 5 mm; starting large skips the early grow-and-rehash
# steps, and untouched zero pages cost nothing.
INITIAL_BRICKS = 1 << 14


@dataclass(frozen=True)
class PipelineConfig:
    upscaler: str = "bilinear"  # "bilinear" or "srcnn"
    srcnn_weights: SrcnnWeights | None = None
    upscale_factor: int = 4
    fusion: FusionConfig = FusionConfig()
    stride: int = 1
    voxel_size: float = DEFAULT_VOXEL_SIZE
    grid_origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    normalization: tuple[float, float] | None = None  # (z_near, z_far) mm
    intrinsics_path: Path | None = None
    poses_path: Path | None = None

    def __post_init__(self):
        if self.upscaler not in ("bilinear", "srcnn"):
            raise ConfigError(f"unknown upscaler {self.upscaler!r}")
        if self.upscaler == "srcnn" and self.srcnn_weights is None:
            raise ConfigError("srcnn upscaler needs weights")
        if self.upscale_factor < 1 or int(self.upscale_factor) != self.upscale_factor:
            raise ConfigError(f"upscale_factor must be a positive integer, got {self.upscale_factor}")
        if self.stride < 1 or int(self.stride) != self.stride:
            raise ConfigError(f"stride must be a positive integer, got {self.stride}")
        if not self.voxel_size > 0:
            raise ConfigError(f"voxel_size must be positive, got {self.voxel_size}")
        if self.normalization is not None:
            z_near, z_far = self.normalization
            if not 0 < z_near < z_far:
                raise ConfigError(f"normalization needs 0 < z_near < z_far, got {self.normalization}")


def _cfg_value(kv, key, conv, default):
    if key not in kv:
        return default
    toks, no = kv[key]
    if len(toks) != 1:
        raise FormatError(f"{key} takes one value", line=no)
    try:
        return conv(toks[0])
    except ValueError:
        raise FormatError(f"bad value for {key}: {toks[0]!r}", line=no) from None


def _parse_bool(tok: str) -> bool:
    t = tok.lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(tok)


_CONFIG_KEYS = {
    "upscaler", "weights", "upscale_factor", "lidar_weight", "use_confidence", "stride",
    "voxel_size", "grid_origin", "z_near", "z_far", "intrinsics", "poses",
}


def parse_pipeline_config(text: str, base_dir=None) -> PipelineConfig:
    """Build a config from ``key value`` lines; relative paths resolve against ``base_dir``."""
    kv = read_key_values(text)
    for key, (_, no) in kv.items():
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"line {no}: unknown config key {key!r}")
    base = Path(base_dir) if base_dir is not None else Path(".")
    upscaler = _cfg_value(kv, "upscaler", str, "bilinear")
    weights = None
    weights_path = _cfg_value(kv, "weights", str, None)
    if upscaler == "srcnn":
        if weights_path is None:
            raise ConfigError("upscaler srcnn needs a 'weights' path")
        try:
            weights = parse_srcnn_weights((base / weights_path).read_bytes())
        except OSError as exc:
            raise CaptureError(f"cannot read weights {weights_path}: {exc}") from exc
    origin = (0.0, 0.0, 0.0)
    if "grid_origin" in kv:
        toks, no = kv["grid_origin"]
        if len(toks) != 3:
            raise FormatError("grid_origin takes 3 values", line=no)
        try:
            origin = tuple(float(t) for t in toks)
        except ValueError:
            raise FormatError("bad grid_origin", line=no) from None
    z_near = _cfg_value(kv, "z_near", float, None)
    z_far = _cfg_value(kv, "z_far", float, None)
    if (z_near is None) != (z_far is None):
        raise ConfigError("z_near and z_far must be given together")
    try:
        return PipelineConfig(
            upscaler=upscaler,
            srcnn_weights=weights,
            upscale_factor=_cfg_value(kv, "upscale_factor", int, 4),
            fusion=FusionConfig(
                lidar_weight=_cfg_value(kv, "lidar_weight", float, 0.5),
                use_confidence=_cfg_value(kv, "use_confidence", _parse_bool, False),
            ),
            stride=_cfg_value(kv, "stride", int, 1),
            voxel_size=_cfg_value(kv, "voxel_size", float, DEFAULT_VOXEL_SIZE),
            grid_origin=origin,
            normalization=None if z_near is None else (z_near, z_far),
            intrinsics_path=None if "intrinsics" not in kv else base / kv["intrinsics"][0][0],
            poses_path=None if "poses" not in kv else base / kv["poses"][0][0],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_pipeline_config(path) -> PipelineConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise CaptureError(f"cannot read config {path}: {exc}") from exc
    return parse_pipeline_config(text, base_dir=path.parent)


@dataclass(frozen=True)
class FrameBundle:
    lidar: DepthFrame
    pose: Pose
    truedepth: DepthFrame | None = None
    conf_l: ConfidenceFrame | None = None
    conf_t: ConfidenceFrame | None = None
    color: ColorFrame | None = None
    index: int = 0


@dataclass(frozen=True)
class FrameStats:
    index: int
    points_inserted: int
    cells_touched: int
    seconds: dict


@dataclass
class ReconstructionState:
    config: PipelineConfig
    intrinsics: CameraIntrinsics
    grid: VoxelGrid = None

    def __post_init__(self):
        if self.grid is None:
            self.grid = VoxelGrid(self.config.voxel_size, self.config.grid_origin, bricks=INITIAL_BRICKS)


def _upscale_confidence(conf: ConfidenceFrame | None, factor: int) -> ConfidenceFrame | None:
    if conf is None or factor == 1:
        return conf
    return ConfidenceFrame(np.repeat(np.repeat(conf.levels, factor, axis=0), factor, axis=1))


def process_frame(state: ReconstructionState, bundle: FrameBundle) -> FrameStats:
    """Run one frame through every stage and insert it into ``state.grid``.

    Everything that can fail is checked before the first point is inserted,
    so a failing frame leaves the grid untouched.
    """
    cfg = state.config
    intr = state.intrinsics
    secs = dict.fromkeys(STAGES, 0.0)
    stage = "upscale"
    try:
        t0 = time.perf_counter()
        if cfg.upscaler == "srcnn":
            depth = srcnn_upscale(bundle.lidar, cfg.srcnn_weights, cfg.upscale_factor)
        else:
            depth = upscale_bilinear(bundle.lidar, cfg.upscale_factor)
        t1 = time.perf_counter()
        secs["upscale"] = t1 - t0

        stage = "fuse"
        if bundle.truedepth is not None:
            conf_l = _upscale_confidence(bundle.conf_l, cfg.upscale_factor) if cfg.fusion.use_confidence else None
            conf_t = bundle.conf_t if cfg.fusion.use_confidence else None
            depth = fuse_depth(depth, bundle.truedepth, conf_l, conf_t, cfg.fusion)
        if cfg.normalization is not None:
            depth = normalize_relative_to_metric(depth, *cfg.normalization)
        t2 = time.perf_counter()
        secs["fuse"] = t2 - t1

        stage = "unproject"
        if depth.shape != (intr.height, intr.width):
            raise ShapeError(
                f"processed depth is {depth.width}x{depth.height}, intrinsics expect {intr.width}x{intr.height}"
            )
        check_same_shape("color", depth, bundle.color)
    except ReconError as exc:
        raise StageError(stage, exc) from exc

    color = bundle.color.pixels if bundle.color is not None else np.zeros((1, 1, 3), dtype=np.uint8)
    rot, trans = bundle.pose.rotation, bundle.pose.translation
    grid = state.grid
    stride = cfg.stride
    band = max(stride, (BAND_ROWS // stride) * stride)
    points = touched = 0
    t_unproject = t_voxelize = 0.0
    first = True
    for v0 in range(0, intr.height, band):
        a = time.perf_counter()
        pts, cols = _kernels.unproject(
            depth.samples, color, bundle.color is not None,
            float(intr.fx), float(intr.fy), float(intr.cx), float(intr.cy),
            rot, trans, stride, v0, min(v0 + band, intr.height),
        )
        b = time.perf_counter()
        stats = grid.insert_points(pts, cols, same_batch=not first)
        c = time.perf_counter()
        first = False
        points += stats.points_in
        touched += stats.cells_touched
        t_unproject += b - a
        t_voxelize += c - b
    secs["unproject"] = t_unproject
    secs["voxelize"] = t_voxelize
    return FrameStats(bundle.index, points, touched, secs)


# ---------------------------------------------------------------------------
# capture replay


def _read_bytes(path: Path, frame_index: int) -> bytes:
    try:
        return path.read_bytes()
    except OSError as exc:
        raise CaptureError(f"cannot read {path}: {exc.strerror or exc}", frame_index=frame_index) from exc


def load_capture_context(manifest: CaptureManifest, cfg: PipelineConfig) -> tuple[CameraIntrinsics, list[Pose]]:
    """Intrinsics and pose track: config paths, else ``intrinsics.txt`` and
    ``poses.txt`` beside the manifest."""
    intr_path = cfg.intrinsics_path or manifest.resolve("intrinsics.txt")
    poses_path = cfg.poses_path or manifest.resolve("poses.txt")
    try:
        intr = read_intrinsics(intr_path.read_text(encoding="utf-8"))
        poses = read_pose_track(poses_path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise CaptureError(f"cannot read capture metadata: {exc}") from exc
    return intr, poses


def load_bundle(manifest: CaptureManifest, entry, poses: list[Pose]) -> FrameBundle:
    if entry.pose >= len(poses):
        raise CaptureError(f"pose line {entry.pose} beyond the {len(poses)}-pose track", frame_index=entry.index)

    def opt(rel, reader):
        if rel is None:
            return None
        data = _read_bytes(manifest.resolve(rel), entry.index)
        try:
            return reader(data)
        except FormatError as exc:
            raise FormatError(f"frame {entry.index}, {rel}: {exc}") from exc

    return FrameBundle(
        lidar=opt(entry.depth_l, read_depth_frame),
        pose=poses[entry.pose],
        truedepth=opt(entry.depth_t, read_depth_frame),
        conf_l=opt(entry.conf_l, read_confidence_frame),
        conf_t=opt(entry.conf_t, read_confidence_frame),
        color=opt(entry.color, read_color_frame),
        index=entry.index,
    )


@dataclass
class StageTimes:
    samples: dict = field(default_factory=lambda: {s: [] for s in STAGES})

    def add(self, secs: dict) -> None:
        for s in STAGES:
            self.samples[s].append(secs.get(s, 0.0))

    def mean_ms(self, stage: str) -> float:
        xs = self.samples[stage]
        return 1e3 * float(np.mean(xs)) if xs else 0.0

    def max_ms(self, stage: str) -> float:
        xs = self.samples[stage]
        return 1e3 * float(np.max(xs)) if xs else 0.0


@dataclass(frozen=True)
class ThroughputReport:
    frames_processed: int
    wall_seconds: float
    stage_mean_ms: dict
    stage_max_ms: dict
    points_inserted: int
    occupied_cells: int
    label: str = ""

    @property
    def fps(self) -> float:
        return self.frames_processed / self.wall_seconds

    @classmethod
    def build(cls, frames, wall, times: StageTimes, points, occupied, label=""):
        if wall <= 0:
            raise ValueError("wall time must be positive")
        return cls(
            frames_processed=frames,
            wall_seconds=wall,
            stage_mean_ms={s: times.mean_ms(s) for s in STAGES},
            stage_max_ms={s: times.max_ms(s) for s in STAGES},
            points_inserted=points,
            occupied_cells=occupied,
            label=label,
        )

    def format_text(self) -> str:
        lines = []
        if self.label:
            lines.append(self.label)
        rows = [
            ("frames", f"{self.frames_processed}"),
            ("wall seconds", f"{self.wall_seconds:.4f}"),
            ("fps", f"{self.fps:.2f}"),
            ("points inserted", f"{self.points_inserted}"),
            ("occupied cells", f"{self.occupied_cells}"),
        ]
        width = max(len(k) for k, _ in rows)
        lines += [f"{k:<{width}}  {v}" for k, v in rows]
        lines.append(f"{'stage':<10} {'mean ms':>10} {'max ms':>10}")
        for s in STAGES:
            lines.append(f"{s:<10} {self.stage_mean_ms[s]:>10.3f} {self.stage_max_ms[s]:>10.3f}")
        return "\n".join(lines)

    def format_records(self) -> str:
        """One ``key=value`` line for the totals and one per stage."""
        head = (
            f"record=total frames={self.frames_processed} wall_s={self.wall_seconds:.6f} fps={self.fps:.3f} "
            f"points={self.points_inserted} cells={self.occupied_cells}"
        )
        stages = [
            f"record=stage stage={s} mean_ms={self.stage_mean_ms[s]:.4f} max_ms={self.stage_max_ms[s]:.4f}"
            for s in STAGES
        ]
        return "\n".join([head] + stages)


@dataclass(frozen=True)
class ReconstructionReport:
    throughput: ThroughputReport
    output_path: Path
    frame_stats: tuple[FrameStats, ...]


def run_reconstruction(manifest: CaptureManifest, cfg: PipelineConfig, out_path) -> ReconstructionReport:
    """Replay a capture in manifest order and write the voxel map as PLY."""
    if not manifest.frames:
        raise CaptureError("capture has no frames")
    intr, poses = load_capture_context(manifest, cfg)
    state = ReconstructionState(cfg, intr)
    times = StageTimes()
    stats = []
    start = time.perf_counter()
    for entry in manifest.frames:
        t0 = time.perf_counter()
        bundle = load_bundle(manifest, entry, poses)
        io_s = time.perf_counter() - t0
        try:
            fs = process_frame(state, bundle)
        except StageError as exc:
            raise CaptureError(str(exc), frame_index=entry.index) from exc
        fs.seconds["io"] = io_s
        times.add(fs.seconds)
        stats.append(fs)
        log.debug("frame %d: %d points", entry.index, fs.points_inserted)
    wall = time.perf_counter() - start
    out_path = Path(out_path)
    try:
        out_path.write_bytes(write_ply(grid_to_cloud(state.grid)))
    except OSError as exc:
        raise CaptureError(f"cannot write {out_path}: {exc}") from exc
    report = ThroughputReport.build(
        len(stats), wall, times, sum(s.points_inserted for s in stats), state.grid.occupied, label="reconstruct"
    )
    return ReconstructionReport(report, out_path, tuple(stats))


def preload(manifest: CaptureManifest, cfg: PipelineConfig):
    if not manifest.frames:
        raise CaptureError("capture has no frames")
    intr, poses = load_capture_context(manifest, cfg)
    return intr, [load_bundle(manifest, e, poses) for e in manifest.frames]


def bench_bundles(
    intr: CameraIntrinsics, bundles: list[FrameBundle], cfg: PipelineConfig, warmup_frames: int = 5, repeat: int = 1
) -> ThroughputReport:
    """Time the pipeline over in-memory bundles, ``repeat`` passes, each on a fresh grid."""
    if repeat < 1:
        raise ConfigError(f"repeat must be >= 1, got {repeat}")
    if warmup_frames < 0:
        raise ConfigError(f"warmup must be >= 0, got {warmup_frames}")
    if not bundles:
        raise CaptureError("capture has no frames")
    scratch = ReconstructionState(cfg, intr)
    for q in range(warmup_frames):
        process_frame(scratch, bundles[q % len(bundles)])

    times = StageTimes()
    frames = points = 0
    state = None
    wall = 0.0
    for _ in range(repeat):
        state = ReconstructionState(cfg, intr)
        t0 = time.perf_counter()
        for b in bundles:
            fs = process_frame(state, b)
            times.add(fs.seconds)
            frames += 1
            points += fs.points_inserted
        wall += time.perf_counter() - t0
    return ThroughputReport.build(frames, wall, times, points, state.grid.occupied, label="bench")


def bench(manifest: CaptureManifest, cfg: PipelineConfig, warmup_frames: int = 5, repeat: int = 1) -> ThroughputReport:
    """Preload every frame, then time ``repeat`` passes over the capture."""
    intr, bundles = preload(manifest, cfg)
    return bench_bundles(intr, bundles, cfg, warmup_frames, repeat)


def run_from_paths(manifest_path, config_path, out_path) -> ReconstructionReport:
    return run_reconstruction(load_manifest(manifest_path), load_pipeline_config(config_path), out_path)
