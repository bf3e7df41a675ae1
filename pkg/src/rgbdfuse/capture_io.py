"""Readers and writers for capture files, SRCNN weights and PLY clouds.

Binary formats are little-endian throughout:

* depth ``DPT1``: magic, u32 width, u32 height, then u16 millimeters per pixel
* confidence ``CNF1``: same header, then u8 levels in {0, 1, 2}
* weights ``SRW1``: magic, u32 layer count; per layer u32 out, in, kh, kw,
  then ``out*in*kh*kw`` f32 weights and ``out`` f32 biases

Text formats (intrinsics, configs, pose tracks, manifests) allow ``#``
comments and blank lines. Every parse failure raises :class:`FormatError`
with a byte offset or a 1-based line number.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CaptureError, FormatError, WeightsError
from .frames import ColorFrame, ConfidenceFrame, DepthFrame
from .geometry import CameraIntrinsics, PointCloud, Pose
from .srcnn import ConvLayer, SrcnnWeights
from .voxel import TriangleMesh

DEPTH_MAGIC = b"DPT1"
CONF_MAGIC = b"CNF1"
WEIGHTS_MAGIC = b"SRW1"
_HEADER = struct.Struct("<4sII")
_MAX_PIXELS = 1 << 28
POSE_INPUT_TOL = 1e-4
# rotations already orthonormal to double precision are kept bit-for-bit
_ORTHO_EXACT = 1e-12


# ---------------------------------------------------------------------------
# binary frames


def _read_frame_header(data: bytes, magic: bytes, bytes_per_px: int) -> tuple[int, int]:
    if len(data) < _HEADER.size:
        raise FormatError(f"truncated header: {len(data)} of {_HEADER.size} bytes", offset=len(data))
    got, width, height = _HEADER.unpack_from(data)
    if got != magic:
        raise FormatError(f"bad magic {got!r}, expected {magic!r}", offset=0)
    if width == 0 or height == 0:
        raise FormatError(f"empty frame {width}x{height}", offset=4)
    if width * height > _MAX_PIXELS:
        raise FormatError(f"frame dimensions {width}x{height} overflow the pixel limit", offset=4)
    need = _HEADER.size + width * height * bytes_per_px
    if len(data) < need:
        raise FormatError(f"truncated payload: need {need} bytes, have {len(data)}", offset=len(data))
    if len(data) > need:
        raise FormatError(f"{len(data) - need} trailing bytes after payload", offset=need)
    return width, height


def read_depth_frame(data: bytes) -> DepthFrame:
    w, h = _read_frame_header(data, DEPTH_MAGIC, 2)
    mm = np.frombuffer(data, dtype="<u2", count=w * h, offset=_HEADER.size)
    return DepthFrame._trusted(mm.reshape(h, w).astype(np.float64))


def write_depth_frame(frame: DepthFrame) -> bytes:
    """Serialize, rounding to whole millimeters (half up)."""
    mm = np.floor(frame.samples + 0.5)
    if mm.max() > 65535:
        raise ValueError(f"depth {frame.samples.max()} mm exceeds the 16-bit range")
    return _HEADER.pack(DEPTH_MAGIC, frame.width, frame.height) + mm.astype("<u2").tobytes()


def read_confidence_frame(data: bytes) -> ConfidenceFrame:
    w, h = _read_frame_header(data, CONF_MAGIC, 1)
    levels = np.frombuffer(data, dtype=np.uint8, count=w * h, offset=_HEADER.size).reshape(h, w)
    bad = np.flatnonzero(levels > 2)
    if len(bad):
        raise FormatError(f"confidence level {levels.flat[bad[0]]} not in {{0, 1, 2}}", offset=_HEADER.size + int(bad[0]))
    return ConfidenceFrame(levels)


def write_confidence_frame(frame: ConfidenceFrame) -> bytes:
    return _HEADER.pack(CONF_MAGIC, frame.width, frame.height) + frame.levels.astype(np.uint8).tobytes()


def read_color_frame(data: bytes) -> ColorFrame:
    """Binary PPM (P6) with maxval 255."""
    pos = 0
    tokens = []
    n = len(data)
    while len(tokens) < 4:
        while pos < n and (data[pos : pos + 1].isspace() or data[pos] == ord("#")):
            if data[pos] == ord("#"):
                while pos < n and data[pos] not in b"\r\n":
                    pos += 1
            else:
                pos += 1
        if pos >= n:
            raise FormatError("truncated PPM header", offset=pos)
        start = pos
        while pos < n and not data[pos : pos + 1].isspace() and data[pos] != ord("#"):
            pos += 1
        tokens.append((data[start:pos], start))
    magic, (wtok, woff), (htok, hoff), (mtok, moff) = tokens[0][0], tokens[1], tokens[2], tokens[3]
    if magic != b"P6":
        raise FormatError(f"unsupported PPM magic {magic!r}", offset=0)
    try:
        width, height, maxval = int(wtok), int(htok), int(mtok)
    except ValueError:
        raise FormatError("non-integer PPM header field", offset=woff) from None
    if width <= 0 or height <= 0:
        raise FormatError(f"bad PPM size {width}x{height}", offset=woff)
    if width * height > _MAX_PIXELS:
        raise FormatError(f"PPM size {width}x{height} overflows the pixel limit", offset=hoff)
    if maxval != 255:
        raise FormatError(f"maxval {maxval} unsupported (need 255)", offset=moff)
    if pos >= n or not data[pos : pos + 1].isspace():
        raise FormatError("missing whitespace after PPM header", offset=pos)
    pos += 1
    need = width * height * 3
    if n - pos < need:
        raise FormatError(f"short PPM payload: need {need} bytes, have {n - pos}", offset=n)
    if n - pos > need:
        raise FormatError(f"{n - pos - need} trailing bytes after PPM payload", offset=pos + need)
    px = np.frombuffer(data, dtype=np.uint8, count=need, offset=pos).reshape(height, width, 3)
    return ColorFrame(px)


def write_color_frame(frame: ColorFrame) -> bytes:
    return f"P6\n{frame.width} {frame.height}\n255\n".encode("ascii") + frame.pixels.tobytes()


# ---------------------------------------------------------------------------
# text formats


def _content_lines(text: str):
    """Yield ``(line_number, stripped_content)`` skipping blanks and comments."""
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield no, line


def _parse_float(tok: str, line: int) -> float:
    try:
        x = float(tok)
    except ValueError:
        raise FormatError(f"not a number: {tok!r}", line=line) from None
    if not math.isfinite(x):
        raise FormatError(f"non-finite number {tok!r}", line=line)
    return x


def _parse_int(tok: str, line: int) -> int:
    try:
        return int(tok)
    except ValueError:
        raise FormatError(f"not an integer: {tok!r}", line=line) from None


def read_key_values(text: str) -> dict[str, tuple[list[str], int]]:
    """``key value...`` lines to ``{key: (value_tokens, line_number)}``."""
    out: dict[str, tuple[list[str], int]] = {}
    for no, line in _content_lines(text):
        key, *vals = line.split()
        if not vals:
            raise FormatError(f"key {key!r} has no value", line=no)
        if key in out:
            raise FormatError(f"duplicate key {key!r}", line=no)
        out[key] = (vals, no)
    return out


_INTRINSIC_KEYS = ("fx", "fy", "cx", "cy", "width", "height")


def read_intrinsics(text: str) -> CameraIntrinsics:
    kv = read_key_values(text)
    vals = {}
    last_line = max((no for _, no in kv.values()), default=0)
    for key in _INTRINSIC_KEYS:
        if key not in kv:
            raise FormatError(f"missing intrinsics key {key!r}", line=last_line + 1)
        toks, no = kv[key]
        if len(toks) != 1:
            raise FormatError(f"{key} takes one value", line=no)
        vals[key] = _parse_int(toks[0], no) if key in ("width", "height") else _parse_float(toks[0], no)
    try:
        return CameraIntrinsics(**vals)
    except ValueError as exc:
        raise FormatError(str(exc), line=last_line) from None


def write_intrinsics(intr: CameraIntrinsics) -> str:
    return "".join(f"{k} {getattr(intr, k)!r}\n" for k in _INTRINSIC_KEYS)


def orthonormalize(r: np.ndarray) -> np.ndarray:
    """Gram-Schmidt on the columns of ``r``."""
    q = np.empty((3, 3))
    for c in range(3):
        v = r[:, c].astype(np.float64)
        for prev in range(c):
            v = v - (q[:, prev] @ v) * q[:, prev]
        q[:, c] = v / np.linalg.norm(v)
    return q


def parse_pose_line(line: str, no: int) -> Pose:
    toks = line.split()
    if len(toks) != 12:
        raise FormatError(f"pose needs 12 numbers, got {len(toks)}", line=no)
    m = np.array([_parse_float(t, no) for t in toks]).reshape(3, 4)
    r, t = m[:, :3], m[:, 3]
    if np.abs(r.T @ r - np.eye(3)).max() > POSE_INPUT_TOL:
        raise FormatError("rotation is not orthonormal", line=no)
    if np.linalg.det(r) < 0:
        raise FormatError("rotation has determinant -1 (reflection)", line=no)
    if np.abs(r.T @ r - np.eye(3)).max() > _ORTHO_EXACT:
        r = orthonormalize(r)
    return Pose(r, t)


def read_pose_track(text: str) -> list[Pose]:
    """One camera-to-world pose per content line: row-major ``[R | T]``, mm."""
    return [parse_pose_line(line, no) for no, line in _content_lines(text)]


def write_pose_track(poses) -> str:
    lines = []
    for p in poses:
        m = np.column_stack([p.rotation, p.translation])
        lines.append(" ".join(repr(float(x)) for x in m.reshape(-1)))
    return "".join(line + "\n" for line in lines)


@dataclass(frozen=True)
class FrameEntry:
    index: int
    timestamp: float
    depth_l: str
    pose: int
    depth_t: str | None = None
    conf_l: str | None = None
    conf_t: str | None = None
    color: str | None = None


_PATH_KEYS = ("depth_l", "depth_t", "conf_l", "conf_t", "color")


@dataclass(frozen=True)
class CaptureManifest:
    frames: tuple[FrameEntry, ...]
    base_dir: Path | None = field(default=None, compare=False)

    def resolve(self, rel: str) -> Path:
        base = self.base_dir if self.base_dir is not None else Path(".")
        return base / rel

    def __len__(self) -> int:
        return len(self.frames)


def read_manifest(text: str, base_dir=None) -> CaptureManifest:
    """One frame per line: ``index timestamp key=path... pose=N``.

    ``pose=N`` is the 0-based record number in the pose track.
    """
    frames = []
    for no, line in _content_lines(text):
        toks = line.split()
        if len(toks) < 3:
            raise FormatError("frame line needs index, timestamp and key=value fields", line=no)
        index = _parse_int(toks[0], no)
        ts = _parse_float(toks[1], no)
        fields: dict = {}
        for tok in toks[2:]:
            key, sep, val = tok.partition("=")
            if not sep or not val:
                raise FormatError(f"expected key=value, got {tok!r}", line=no)
            if key not in _PATH_KEYS and key != "pose":
                raise FormatError(f"unknown manifest key {key!r}", line=no)
            if key in fields:
                raise FormatError(f"duplicate key {key!r}", line=no)
            fields[key] = val
        if "depth_l" not in fields:
            raise FormatError("frame has no depth_l", line=no)
        if "pose" not in fields:
            raise FormatError("frame has no pose", line=no)
        pose = _parse_int(fields.pop("pose"), no)
        if pose < 0:
            raise FormatError(f"negative pose line {pose}", line=no)
        if frames:
            if index <= frames[-1].index:
                raise FormatError(f"frame index {index} not after {frames[-1].index}", line=no)
            if ts < frames[-1].timestamp:
                raise FormatError(f"timestamp {ts} decreases", line=no)
        frames.append(FrameEntry(index=index, timestamp=ts, pose=pose, **fields))
    return CaptureManifest(tuple(frames), Path(base_dir) if base_dir is not None else None)


def write_manifest(manifest: CaptureManifest) -> str:
    lines = []
    for f in manifest.frames:
        parts = [str(f.index), repr(float(f.timestamp))]
        parts += [f"{k}={getattr(f, k)}" for k in _PATH_KEYS if getattr(f, k) is not None]
        parts.append(f"pose={f.pose}")
        lines.append(" ".join(parts))
    return "".join(line + "\n" for line in lines)


def load_manifest(path) -> CaptureManifest:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise CaptureError(f"cannot read manifest {path}: {exc}") from exc
    return read_manifest(text, base_dir=path.parent)


# ---------------------------------------------------------------------------
# SRCNN weights


def parse_srcnn_weights(data: bytes) -> SrcnnWeights:
    if len(data) < 8:
        raise FormatError("truncated weights header", offset=len(data))
    magic, n_layers = struct.unpack_from("<4sI", data)
    if magic != WEIGHTS_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {WEIGHTS_MAGIC!r}", offset=0)
    if n_layers == 0:
        raise FormatError("weights file has no layers", offset=4)
    pos = 8
    layers = []
    for li in range(n_layers):
        if len(data) - pos < 16:
            raise FormatError(f"truncated header of layer {li}", offset=len(data))
        out_c, in_c, kh, kw = struct.unpack_from("<4I", data, pos)
        if min(out_c, in_c, kh, kw) == 0:
            raise FormatError(f"layer {li} has a zero dimension", offset=pos)
        if kh % 2 == 0 or kw % 2 == 0:
            raise FormatError(f"layer {li} kernel {kh}x{kw} is not odd", offset=pos + 8)
        expected_in = 1 if li == 0 else layers[-1].out_channels
        if in_c != expected_in:
            raise FormatError(f"layer {li} takes {in_c} channels, expected {expected_in}", offset=pos + 4)
        pos += 16
        n_w = out_c * in_c * kh * kw
        need = 4 * (n_w + out_c)
        if len(data) - pos < need:
            raise FormatError(f"truncated floats in layer {li}: need {need} bytes", offset=len(data))
        w = np.frombuffer(data, dtype="<f4", count=n_w, offset=pos).reshape(out_c, in_c, kh, kw)
        b = np.frombuffer(data, dtype="<f4", count=out_c, offset=pos + 4 * n_w)
        if not (np.isfinite(w).all() and np.isfinite(b).all()):
            raise FormatError(f"non-finite value in layer {li}", offset=pos)
        pos += need
        layers.append(ConvLayer(w.astype(np.float64), b.astype(np.float64)))
    if pos != len(data):
        raise FormatError(f"{len(data) - pos} trailing bytes after last layer", offset=pos)
    try:
        return SrcnnWeights(tuple(layers))
    except WeightsError as exc:
        raise FormatError(str(exc), offset=pos) from None


def write_srcnn_weights(weights: SrcnnWeights) -> bytes:
    """Serialize; values are stored as float32."""
    parts = [struct.pack("<4sI", WEIGHTS_MAGIC, len(weights.layers))]
    for layer in weights.layers:
        parts.append(struct.pack("<4I", *layer.weights.shape))
        parts.append(layer.weights.astype("<f4").tobytes())
        parts.append(layer.biases.astype("<f4").tobytes())
    return b"".join(parts)


def srcnn_file_size(shapes) -> int:
    """Byte length implied by ``[(out, in, kh, kw), ...]``."""
    return 8 + sum(16 + 4 * (o * i * kh * kw + o) for o, i, kh, kw in shapes)


# ---------------------------------------------------------------------------
# PLY

_PLY_HEADER = (
    "ply",
    "format ascii 1.0",
    None,  # element vertex N
    "property float x",
    "property float y",
    "property float z",
    "property uchar red",
    "property uchar green",
    "property uchar blue",
    "end_header",
)


def write_ply(cloud: PointCloud) -> bytes:
    head = [h if h is not None else f"element vertex {len(cloud)}" for h in _PLY_HEADER]
    body = [
        f"{x:.6f} {y:.6f} {z:.6f} {r} {g} {b}"
        for (x, y, z), (r, g, b) in zip(cloud.points.tolist(), cloud.colors.tolist())
    ]
    return ("\n".join(head + body) + "\n").encode("ascii")


def read_ply(data: bytes) -> PointCloud:
    """Inverse of :func:`write_ply`; other layouts are rejected."""
    try:
        text = data.decode("ascii")
    except UnicodeDecodeError as exc:
        raise FormatError("PLY is not ASCII", offset=exc.start) from None
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if len(lines) < len(_PLY_HEADER):
        raise FormatError("truncated PLY header", line=len(lines) + 1)
    n = None
    for no, (want, got) in enumerate(zip(_PLY_HEADER, lines), start=1):
        if want is None:
            parts = got.split(" ")
            if len(parts) != 3 or parts[:2] != ["element", "vertex"]:
                raise FormatError(f"expected 'element vertex N', got {got!r}", line=no)
            n = _parse_int(parts[2], no)
            if n < 0:
                raise FormatError(f"negative vertex count {n}", line=no)
        elif got != want:
            raise FormatError(f"unsupported PLY header line {got!r}, expected {want!r}", line=no)
    body = lines[len(_PLY_HEADER) :]
    if len(body) != n:
        raise FormatError(f"header declares {n} vertices, body has {len(body)}", line=len(_PLY_HEADER) + len(body))
    pts = np.empty((n, 3))
    cols = np.empty((n, 3), dtype=np.uint8)
    for q, line in enumerate(body):
        no = len(_PLY_HEADER) + q + 1
        toks = line.split(" ")
        if len(toks) != 6:
            raise FormatError(f"vertex needs 6 fields, got {len(toks)}", line=no)
        pts[q] = [_parse_float(t, no) for t in toks[:3]]
        for c, t in enumerate(toks[3:]):
            v = _parse_int(t, no)
            if not 0 <= v <= 255:
                raise FormatError(f"color {v} out of range", line=no)
            cols[q, c] = v
    return PointCloud(pts, cols)


# ---------------------------------------------------------------------------
# OBJ-like meshes


def read_mesh_text(text: str) -> TriangleMesh:
    """``v x y z [r g b]`` and ``f i j k`` lines; face indices are 1-based.

    Other line types are ignored. Vertex colors are kept only when every
    vertex carries one.
    """
    verts, colors, faces = [], [], []
    for no, line in _content_lines(text):
        toks = line.split()
        if toks[0] == "v":
            if len(toks) not in (4, 7):
                raise FormatError("vertex needs 3 coordinates and optionally 3 colors", line=no)
            verts.append([_parse_float(t, no) for t in toks[1:4]])
            if len(toks) == 7:
                c = [_parse_int(t, no) for t in toks[4:7]]
                if not all(0 <= x <= 255 for x in c):
                    raise FormatError("vertex color out of range", line=no)
                colors.append(c)
        elif toks[0] == "f":
            if len(toks) != 4:
                raise FormatError("only triangular faces are supported", line=no)
            idx = [_parse_int(t.split("/")[0], no) for t in toks[1:4]]
            if any(i < 1 for i in idx):
                raise FormatError("face indices are 1-based", line=no)
            faces.append([i - 1 for i in idx])
    if any(i >= len(verts) for f in faces for i in f):
        raise FormatError("face references a missing vertex")
    vc = np.array(colors, dtype=np.uint8) if colors and len(colors) == len(verts) else None
    return TriangleMesh(np.array(verts, dtype=np.float64).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3), vc)
