"""Throughput benchmark on a noisy synthetic plane (256x192 lidar, 4x to 1024x768).

    python3 scripts/run_bench.py --runs 3 --repeat 10
"""

import argparse
import tempfile
from pathlib import Path

import numpy as np

from rgbdfuse.capture_io import load_manifest
from rgbdfuse.geometry import CameraIntrinsics, Pose
from rgbdfuse.pipeline import PipelineConfig, bench
from rgbdfuse.synth import Plane, SceneSpec, synth_capture


def make_capture(out_dir, frames=10, noise=2.0, seed=7):
    intr = CameraIntrinsics(880.0, 880.0, 511.5, 383.5, 1024, 768)
    rng = np.random.default_rng(seed)
    path = [Pose(translation=rng.uniform(-60, 60, 3)) for _ in range(frames)]
    spec = SceneSpec(Plane(1500.0), intr, path, noise_sigma=noise, lidar_factor=4, truedepth=True, color=True,
                     seed=seed)
    synth_capture(spec, out_dir)
    return load_manifest(Path(out_dir) / "manifest.txt")


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--frames", type=int, default=10)
    p.add_argument("--noise", type=float, default=2.0)
    p.add_argument("--warmup", type=int, default=5)
    p.add_argument("--repeat", type=int, default=10)
    p.add_argument("--runs", type=int, default=3)
    args = p.parse_args(argv)

    with tempfile.TemporaryDirectory() as tmp:
        manifest = make_capture(tmp, args.frames, args.noise)
        reports = [bench(manifest, PipelineConfig(upscale_factor=4), warmup_frames=args.warmup, repeat=args.repeat)
                   for _ in range(args.runs)]
    for q, r in enumerate(reports):
        print(f"run {q}: {r.fps:.1f} fps over {r.frames_processed} frames")
    best = max(reports, key=lambda r: r.fps)
    print(best.format_text())


if __name__ == "__main__":
    main()
