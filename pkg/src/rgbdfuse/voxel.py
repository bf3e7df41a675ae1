"""Sparse colored voxel grid, mesh voxelization and background compositing.

Cells are half-open boxes ``[i*s, (i+1)*s)`` offset by the grid origin.
Colors accumulate as integer sums so the grid is independent of insertion
order; means are rounded half-up when read.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _kernels
from .errors import ConfigError, InvalidArgumentError, ShapeError
from .frames import ColorFrame, DepthFrame, MaskFrame, check_same_shape
from .geometry import CameraIntrinsics, PointCloud, Pose, unproject_frame

DEFAULT_VOXEL_SIZE = 5.0


class Accumulator(NamedTuple):
    count: int
    sum_r: int
    sum_g: int
    sum_b: int

    def mean(self) -> tuple[int, int, int]:
        return tuple(_round_half_up_div(s, self.count) for s in (self.sum_r, self.sum_g, self.sum_b))


class InsertStats(NamedTuple):
    points_in: int
    cells_touched: int


def _round_half_up_div(num, den):
    # floor(num/den + 1/2) in exact integer arithmetic; works on arrays too
    return (2 * num + den) // (2 * den)


class VoxelGrid:
    """Sparse map from integer index triple to a color accumulator.

    Cells live in 4x4x4 bricks found through a hash table keyed by brick
    coordinate (see ``_kernels``). Not safe for concurrent writers; shard and
    :meth:`merge` instead.
    """

    def __init__(self, voxel_size: float = DEFAULT_VOXEL_SIZE, origin=(0.0, 0.0, 0.0), bricks: int = 256):
        if not (voxel_size > 0 and math.isfinite(voxel_size)):
            raise InvalidArgumentError(f"voxel_size must be positive, got {voxel_size}")
        self.voxel_size = float(voxel_size)
        self.origin = np.array(origin, dtype=np.float64).reshape(3)
        self.origin.setflags(write=False)
        if not np.isfinite(self.origin).all():
            raise InvalidArgumentError("grid origin must be finite")
        self._n_bricks = 0
        self._n_occ = 0
        self._epoch = 0
        self.total_inserted = 0
        self._bricks = np.zeros((max(bricks, 1), _kernels.BRICK_CELLS, _kernels.CELL_FIELDS), dtype=np.int64)
        self._brick_keys = np.zeros((len(self._bricks), 3), dtype=np.int64)
        self._alloc_index(2 * len(self._bricks))

    def _alloc_index(self, cap: int) -> None:
        size = 1
        while size < cap:
            size *= 2
        self._hkeys = np.zeros((size, 3), dtype=np.int64)
        self._hids = np.full(size, -1, dtype=np.int64)
        _kernels.rebuild_index(self._hkeys, self._hids, self._brick_keys, self._n_bricks)

    def _grow(self) -> None:
        n = 2 * len(self._bricks)
        bricks = np.zeros((n, _kernels.BRICK_CELLS, _kernels.CELL_FIELDS), dtype=np.int64)
        bricks[: self._n_bricks] = self._bricks[: self._n_bricks]
        keys = np.zeros((n, 3), dtype=np.int64)
        keys[: self._n_bricks] = self._brick_keys[: self._n_bricks]
        self._bricks, self._brick_keys = bricks, keys
        self._alloc_index(2 * n)

    def __len__(self) -> int:
        return self._n_occ

    @property
    def occupied(self) -> int:
        return self._n_occ

    def copy(self) -> "VoxelGrid":
        g = VoxelGrid.__new__(VoxelGrid)
        g.__dict__.update(self.__dict__)
        for name in ("_bricks", "_brick_keys", "_hkeys", "_hids"):
            setattr(g, name, getattr(self, name).copy())
        return g

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(indices (N,3), counts (N,), sums (N,3))`` of occupied cells, unordered."""
        side = _kernels.BRICK_SIDE
        live = self._bricks[: self._n_bricks]
        b, c = np.nonzero(live[:, :, 0] > 0)
        local = np.stack([c % side, (c // side) % side, c // (side * side)], axis=1)
        idx = self._brick_keys[b] * side + local
        cells = live[b, c]
        return idx, cells[:, 0], cells[:, 1:4]

    @property
    def cells(self) -> dict[tuple[int, int, int], Accumulator]:
        keys, counts, sums = self.arrays()
        return {
            (int(k[0]), int(k[1]), int(k[2])): Accumulator(int(c), int(s[0]), int(s[1]), int(s[2]))
            for k, c, s in zip(keys, counts, sums)
        }

    def get(self, index) -> Accumulator | None:
        return self.cells.get(tuple(int(x) for x in index))

    def insert_points(self, points: np.ndarray, colors: np.ndarray, same_batch: bool = False) -> InsertStats:
        """Accumulate points with 8-bit colors.

        ``cells_touched`` counts distinct cells hit since the start of the
        batch; ``same_batch=True`` continues the previous call's batch.
        """
        points = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
        colors = np.ascontiguousarray(colors, dtype=np.uint8).reshape(-1, 3)
        if len(points) != len(colors):
            raise ShapeError(f"{len(points)} points but {len(colors)} colors")
        if not same_batch or self._epoch == 0:
            self._epoch += 1
        start, touched, n = 0, 0, len(points)
        while True:
            start, self._n_bricks, self._n_occ, t = _kernels.grid_insert(
                self._hkeys, self._hids, self._brick_keys, self._bricks, self._n_bricks, self._n_occ,
                self._epoch, points, colors, self.origin, self.voxel_size, start,
            )
            touched += t
            if start >= n:
                break
            self._grow()
        self.total_inserted += n
        return InsertStats(n, touched)

    def merge(self, other: "VoxelGrid") -> None:
        """Cellwise sum of another grid with the same geometry."""
        if other.voxel_size != self.voxel_size or not np.array_equal(other.origin, self.origin):
            raise ConfigError("cannot merge grids with different voxel size or origin")
        keys, counts, sums = other.arrays()
        cells = np.concatenate([keys, counts[:, None], sums], axis=1)
        start = 0
        while True:
            start, self._n_bricks, self._n_occ = _kernels.grid_add_cells(
                self._hkeys, self._hids, self._brick_keys, self._bricks, self._n_bricks, self._n_occ, cells, start
            )
            if start >= len(cells):
                break
            self._grow()
        self.total_inserted += other.total_inserted

    def __eq__(self, other):
        if not isinstance(other, VoxelGrid):
            return NotImplemented
        return (
            self.voxel_size == other.voxel_size
            and np.array_equal(self.origin, other.origin)
            and self.cells == other.cells
        )


def voxel_index(grid: VoxelGrid, p) -> tuple[int, int, int]:
    q = (np.asarray(p, dtype=np.float64) - grid.origin) / grid.voxel_size
    return tuple(int(math.floor(c)) for c in q)


def insert_point(grid: VoxelGrid, p, color=(255, 255, 255)) -> VoxelGrid:
    p = np.asarray(p, dtype=np.float64).reshape(1, 3)
    if not np.isfinite(p).all():
        raise InvalidArgumentError("point must be finite")
    grid.insert_points(p, np.asarray(color).reshape(1, 3))
    return grid


def insert_cloud(grid: VoxelGrid, cloud: PointCloud) -> InsertStats:
    return grid.insert_points(cloud.points, cloud.colors)


def grid_to_cloud(grid: VoxelGrid) -> PointCloud:
    """One point per occupied cell at its center, ordered by ascending (k, j, i)."""
    keys, counts, sums = grid.arrays()
    order = np.lexsort((keys[:, 0], keys[:, 1], keys[:, 2]))
    keys, counts, sums = keys[order], counts[order], sums[order]
    centers = grid.origin + (keys.astype(np.float64) + 0.5) * grid.voxel_size
    means = _round_half_up_div(sums, counts[:, None])
    return PointCloud(centers, means.astype(np.uint8))


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    vertices: np.ndarray  # (V, 3)
    triangles: np.ndarray  # (F, 3) vertex indices
    vertex_colors: np.ndarray | None = None  # (V, 3) uint8

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        f = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if len(f) and (f.min() < 0 or f.max() >= len(v)):
            raise InvalidArgumentError("triangle index out of range")
        if not np.isfinite(v).all():
            raise InvalidArgumentError("vertices must be finite")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", f)
        if self.vertex_colors is not None:
            c = np.asarray(self.vertex_colors).reshape(-1, 3)
            if len(c) != len(v):
                raise ShapeError(f"{len(v)} vertices but {len(c)} vertex colors")
            object.__setattr__(self, "vertex_colors", c.astype(np.uint8))


def _triangle_samples(v0, v1, v2, c0, c1, c2, spacing):
    e1, e2 = v1 - v0, v2 - v0
    if np.linalg.norm(np.cross(e1, e2)) == 0.0:
        return np.stack([v0, v1, v2]), np.stack([c0, c1, c2])
    n = max(1, math.ceil(max(np.linalg.norm(e1), np.linalg.norm(e2)) / spacing))
    ii, jj = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
    keep = ii + jj <= n
    a = ii[keep] / n
    b = jj[keep] / n
    w0 = 1.0 - a - b
    # weighted sum of vertices (not v0 + a*e1 + b*e2) so corner samples hit vertices exactly
    pts = w0[:, None] * v0 + a[:, None] * v1 + b[:, None] * v2
    cols = w0[:, None] * c0 + a[:, None] * c1 + b[:, None] * c2
    return pts, np.floor(np.clip(cols, 0, 255) + 0.5)


def voxelize_mesh(mesh: TriangleMesh, voxel_size: float = DEFAULT_VOXEL_SIZE, origin=(0.0, 0.0, 0.0)) -> VoxelGrid:
    """Rasterize triangles by barycentric supersampling.

    Each triangle is sampled on a lattice with spacing at most half a voxel
    along both edges from its first vertex, corners included. Every point of
    the surface ends up within one voxel (Chebyshev) of an occupied cell.
    Zero-area triangles contribute their three vertices only.
    """
    grid = VoxelGrid(voxel_size, origin)
    if mesh.vertex_colors is None:
        colors = np.full((len(mesh.vertices), 3), 255.0)
    else:
        colors = mesh.vertex_colors.astype(np.float64)
    spacing = grid.voxel_size / 2.0
    for tri in mesh.triangles:
        v = mesh.vertices[tri]
        c = colors[tri]
        pts, cols = _triangle_samples(v[0], v[1], v[2], c[0], c[1], c[2], spacing)
        grid.insert_points(pts, cols.astype(np.uint8))
    return grid


def composite_background(
    grid: VoxelGrid,
    depth: DepthFrame,
    color: ColorFrame,
    intr: CameraIntrinsics,
    pose: Pose,
    mask: MaskFrame | None = None,
    depth_threshold: float | None = None,
) -> VoxelGrid:
    """Insert background pixels of a frame into ``grid``.

    Background is ``mask == 0`` when a mask is given, otherwise
    ``depth > depth_threshold``. Exactly one of the two must be supplied.
    """
    if (mask is None) == (depth_threshold is None):
        raise ConfigError("composite_background needs exactly one of mask or depth_threshold")
    check_same_shape("composite_background", depth, color, mask)
    if mask is not None:
        background = mask.values == 0
    else:
        background = depth.samples > depth_threshold
    bg_depth = DepthFrame._trusted(np.where(background, depth.samples, 0.0))
    insert_cloud(grid, unproject_frame(intr, bg_depth, color, pose))
    return grid
