"""Command-line entry point: ``rgbdfuse <subcommand> ...``.

Exit codes: 0 success, 2 malformed input, 3 bad configuration, 4 file or
capture error, 5 bench below ``--require-fps``.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .capture_io import (
    load_manifest,
    parse_srcnn_weights,
    read_confidence_frame,
    read_depth_frame,
    read_mesh_text,
    write_depth_frame,
    write_ply,
)
from .depth import FusionConfig, fuse_depth, upscale_bilinear
from .errors import CaptureError, ConfigError, FormatError, ReconError, StageError
from .pipeline import bench, load_pipeline_config, run_reconstruction
from .srcnn import srcnn_upscale
from .synth import parse_scene_spec, synth_capture
from .voxel import voxelize_mesh, grid_to_cloud

EXIT_OK = 0
EXIT_FORMAT = 2
EXIT_CONFIG = 3
EXIT_IO = 4
EXIT_SLOW = 5

log = logging.getLogger("rgbdfuse")


def _read(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise CaptureError(f"cannot read {path}: {exc.strerror or exc}") from exc


def _read_text(path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise CaptureError(f"cannot read {path}: {exc}") from exc


def _write(path, data: bytes) -> None:
    try:
        Path(path).write_bytes(data)
    except OSError as exc:
        raise CaptureError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _root_cause(exc: BaseException) -> BaseException:
    # a capture error raised for a failed stage carries the real reason underneath
    while isinstance(exc, (CaptureError, StageError)) and isinstance(exc.__cause__, ReconError):
        exc = exc.__cause__
    return exc


def exit_code_for(exc: BaseException) -> int:
    exc = _root_cause(exc)
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, (CaptureError, OSError)):
        return EXIT_IO
    # format errors and malformed frame data (bad shapes, out-of-range values)
    return EXIT_FORMAT


def cmd_reconstruct(args) -> int:
    cfg = load_pipeline_config(args.config)
    report = run_reconstruction(load_manifest(args.manifest), cfg, args.out)
    print(report.throughput.format_records() if args.machine else report.throughput.format_text())
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = load_pipeline_config(args.config)
    report = bench(load_manifest(args.manifest), cfg, warmup_frames=args.warmup, repeat=args.repeat)
    print(report.format_records() if args.machine else report.format_text())
    if args.require_fps is not None and report.fps < args.require_fps:
        print(f"fps {report.fps:.2f} below required {args.require_fps:.2f}", file=sys.stderr)
        return EXIT_SLOW
    return EXIT_OK


def cmd_fuse(args) -> int:
    if (args.conf_l is None) != (args.conf_t is None):
        raise ConfigError("--conf-l and --conf-t must be given together")
    lidar = read_depth_frame(_read(args.lidar))
    truedepth = read_depth_frame(_read(args.truedepth))
    conf_l = conf_t = None
    if args.conf_l is not None:
        conf_l = read_confidence_frame(_read(args.conf_l))
        conf_t = read_confidence_frame(_read(args.conf_t))
    try:
        cfg = FusionConfig(lidar_weight=args.weight, use_confidence=conf_l is not None)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    _write(args.out, write_depth_frame(fuse_depth(lidar, truedepth, conf_l, conf_t, cfg)))
    return EXIT_OK


def cmd_upscale(args) -> int:
    if args.factor < 1:
        raise ConfigError(f"--factor must be >= 1, got {args.factor}")
    frame = read_depth_frame(_read(args.input))
    if args.srcnn is not None:
        out = srcnn_upscale(frame, parse_srcnn_weights(_read(args.srcnn)), args.factor)
    else:
        out = upscale_bilinear(frame, args.factor)
    _write(args.out, write_depth_frame(out))
    return EXIT_OK


def cmd_voxelize_mesh(args) -> int:
    if not args.voxel_size > 0:
        raise ConfigError(f"--voxel-size must be positive, got {args.voxel_size}")
    mesh = read_mesh_text(_read_text(args.mesh))
    grid = voxelize_mesh(mesh, args.voxel_size)
    _write(args.out, write_ply(grid_to_cloud(grid)))
    print(f"occupied cells  {grid.occupied}")
    return EXIT_OK


def cmd_synth(args) -> int:
    spec = parse_scene_spec(_read_text(args.spec))
    manifest = synth_capture(spec, args.out_dir)
    print(f"wrote {len(manifest.frames)} frames to {args.out_dir}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rgbdfuse", description="RGB-D depth fusion and voxel reconstruction")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("reconstruct", help="replay a capture into a voxel map")
    r.add_argument("--manifest", required=True)
    r.add_argument("--config", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--machine", action="store_true", help="key=value records instead of a table")
    r.set_defaults(func=cmd_reconstruct)

    b = sub.add_parser("bench", help="time the pipeline on preloaded frames")
    b.add_argument("--manifest", required=True)
    b.add_argument("--config", required=True)
    b.add_argument("--warmup", type=int, default=5)
    b.add_argument("--repeat", type=int, default=1)
    b.add_argument("--require-fps", type=float, default=None)
    b.add_argument("--machine", action="store_true", help="key=value records instead of a table")
    b.set_defaults(func=cmd_bench)

    f = sub.add_parser("fuse", help="fuse two depth frames")
    f.add_argument("--lidar", required=True)
    f.add_argument("--truedepth", required=True)
    f.add_argument("--conf-l")
    f.add_argument("--conf-t")
    f.add_argument("--weight", type=float, default=0.5)
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_fuse)

    u = sub.add_parser("upscale", help="upscale a depth frame")
    u.add_argument("--in", dest="input", required=True)
    u.add_argument("--factor", type=int, required=True)
    how = u.add_mutually_exclusive_group(required=True)
    how.add_argument("--bilinear", action="store_true")
    how.add_argument("--srcnn", metavar="WEIGHTS")
    u.add_argument("--out", required=True)
    u.set_defaults(func=cmd_upscale)

    m = sub.add_parser("voxelize-mesh", help="voxelize an OBJ-like triangle mesh")
    m.add_argument("--mesh", required=True)
    m.add_argument("--voxel-size", type=float, default=5.0)
    m.add_argument("--out", required=True)
    m.set_defaults(func=cmd_voxelize_mesh)

    s = sub.add_parser("synth", help="render a synthetic capture")
    s.add_argument("--spec", required=True)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; report those as configuration errors
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ReconError, OSError, ValueError) as exc:
        code = exit_code_for(exc)
        print(f"error: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
