import subprocess
import sys

import numpy as np
import pytest

from rgbdfuse.capture_io import (
    read_depth_frame,
    read_ply,
    write_confidence_frame,
    write_depth_frame,
    write_srcnn_weights,
)
from rgbdfuse.cli import EXIT_CONFIG, EXIT_FORMAT, EXIT_IO, EXIT_OK, EXIT_SLOW, main
from rgbdfuse.frames import ConfidenceFrame, DepthFrame
from rgbdfuse.srcnn import SrcnnWeights

SPEC = """\
shape sphere
center 0 0 0
radius 200
fx 200
fy 200
cx 63.5
cy 47.5
width 128
height 96
frame_count 3
path orbit
orbit_distance 700
lidar_factor 4
truedepth 1
"""


@pytest.fixture
def capture(tmp_path):
    (tmp_path / "spec.txt").write_text(SPEC)
    (tmp_path / "cfg.txt").write_text("upscaler bilinear\nupscale_factor 4\nvoxel_size 5\n")
    assert main(["synth", "--spec", str(tmp_path / "spec.txt"), "--out-dir", str(tmp_path / "cap")]) == EXIT_OK
    return tmp_path


def test_reconstruct(capture, capsys):
    out = capture / "o.ply"
    code = main(["reconstruct", "--manifest", str(capture / "cap/manifest.txt"), "--config", str(capture / "cfg.txt"),
                 "--out", str(out)])
    assert code == EXIT_OK
    assert len(read_ply(out.read_bytes())) > 0
    assert "occupied cells" in capsys.readouterr().out


def test_bench_machine_output(capture, capsys):
    args = ["bench", "--manifest", str(capture / "cap/manifest.txt"), "--config", str(capture / "cfg.txt"),
            "--warmup", "1", "--repeat", "2", "--machine"]
    assert main(args) == EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    head = dict(kv.split("=") for kv in lines[0].split())
    assert head["record"] == "total" and head["frames"] == "6"
    assert [dict(kv.split("=") for kv in line.split())["stage"] for line in lines[1:]] == [
        "io", "fuse", "upscale", "unproject", "voxelize"]
    assert main(args + ["--require-fps", "1e9"]) == EXIT_SLOW


def test_fuse_and_upscale(tmp_path):
    (tmp_path / "l.dpt").write_bytes(write_depth_frame(DepthFrame([[2000.0, 0.0]])))
    (tmp_path / "t.dpt").write_bytes(write_depth_frame(DepthFrame([[4000.0, 1500.0]])))
    assert main(["fuse", "--lidar", str(tmp_path / "l.dpt"), "--truedepth", str(tmp_path / "t.dpt"),
                 "--out", str(tmp_path / "f.dpt")]) == EXIT_OK
    assert read_depth_frame((tmp_path / "f.dpt").read_bytes()).samples.tolist() == [[3000.0, 1500.0]]

    (tmp_path / "cl.cnf").write_bytes(write_confidence_frame(ConfidenceFrame([[2, 0]])))
    (tmp_path / "ct.cnf").write_bytes(write_confidence_frame(ConfidenceFrame([[0, 2]])))
    assert main(["fuse", "--lidar", str(tmp_path / "l.dpt"), "--truedepth", str(tmp_path / "t.dpt"),
                 "--conf-l", str(tmp_path / "cl.cnf"), "--conf-t", str(tmp_path / "ct.cnf"),
                 "--out", str(tmp_path / "f.dpt")]) == EXIT_OK
    assert read_depth_frame((tmp_path / "f.dpt").read_bytes()).samples.tolist() == [[2000.0, 1500.0]]

    assert main(["upscale", "--in", str(tmp_path / "t.dpt"), "--factor", "2", "--bilinear",
                 "--out", str(tmp_path / "u.dpt")]) == EXIT_OK
    up = read_depth_frame((tmp_path / "u.dpt").read_bytes())
    assert up.shape == (2, 4)
    (tmp_path / "id.srw").write_bytes(write_srcnn_weights(SrcnnWeights.identity()))
    assert main(["upscale", "--in", str(tmp_path / "t.dpt"), "--factor", "2", "--srcnn", str(tmp_path / "id.srw"),
                 "--out", str(tmp_path / "s.dpt")]) == EXIT_OK
    assert (tmp_path / "s.dpt").read_bytes() == (tmp_path / "u.dpt").read_bytes()


def test_voxelize_mesh(tmp_path):
    (tmp_path / "m.obj").write_text("v 0 0 0\nv 50 0 0\nv 0 50 0\nf 1 2 3\n")
    assert main(["voxelize-mesh", "--mesh", str(tmp_path / "m.obj"), "--voxel-size", "5",
                 "--out", str(tmp_path / "m.ply")]) == EXIT_OK
    cloud = read_ply((tmp_path / "m.ply").read_bytes())
    assert len(cloud) >= 55  # at least the cells of a 10-leg staircase


def test_exit_codes(tmp_path, capture):
    (tmp_path / "bad.dpt").write_bytes(b"XXXX")
    assert main(["upscale", "--in", str(tmp_path / "bad.dpt"), "--factor", "2", "--bilinear",
                 "--out", str(tmp_path / "o.dpt")]) == EXIT_FORMAT
    assert main(["upscale", "--in", str(tmp_path / "missing.dpt"), "--factor", "2", "--bilinear",
                 "--out", str(tmp_path / "o.dpt")]) == EXIT_IO
    assert main(["upscale", "--in", str(tmp_path / "bad.dpt"), "--factor", "0", "--bilinear",
                 "--out", str(tmp_path / "o.dpt")]) == EXIT_CONFIG
    assert main(["upscale", "--in", "x"]) == EXIT_CONFIG  # usage error
    (tmp_path / "bad_cfg.txt").write_text("stride 0\n")
    assert main(["reconstruct", "--manifest", str(capture / "cap/manifest.txt"), "--config", str(tmp_path / "bad_cfg.txt"),
                 "--out", str(tmp_path / "o.ply")]) == EXIT_CONFIG
    (capture / "cap/depth_l_0001.dpt").unlink()
    assert main(["reconstruct", "--manifest", str(capture / "cap/manifest.txt"), "--config", str(capture / "cfg.txt"),
                 "--out", str(tmp_path / "o.ply")]) == EXIT_IO
    (capture / "cap/depth_l_0001.dpt").write_bytes(b"DPT1")
    assert main(["reconstruct", "--manifest", str(capture / "cap/manifest.txt"), "--config", str(capture / "cfg.txt"),
                 "--out", str(tmp_path / "o.ply")]) == EXIT_FORMAT


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "rgbdfuse", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "reconstruct" in r.stdout
