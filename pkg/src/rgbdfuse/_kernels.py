"""Compiled per-pixel and per-point loops behind the public operations.

Every kernel is a plain sequential loop so results are bitwise reproducible.
"""

from __future__ import annotations

import math

import numba
import numpy as np

_jit = numba.njit(cache=True, nogil=True)


@_jit
def _axis_taps(n_src, factor):
    """Per output index along one axis: low tap, high tap, high-tap weight."""
    n_out = n_src * factor
    lo = np.empty(n_out, dtype=np.int64)
    hi = np.empty(n_out, dtype=np.int64)
    wt = np.empty(n_out, dtype=np.float64)
    for o in range(n_out):
        c = (o + 0.5) / factor - 0.5
        if c < 0.0:
            c = 0.0
        elif c > n_src - 1:
            c = n_src - 1.0
        i0 = int(math.floor(c))
        lo[o] = i0
        hi[o] = min(i0 + 1, n_src - 1)
        wt[o] = c - i0
    return lo, hi, wt


@_jit
def bilinear_upscale(src, factor):
    """Separable form of ``(1-wy)*((1-wx)*a + wx*b) + wy*((1-wx)*c + wx*d)``.

    The horizontal pass marks rows with NaN where a weighted neighbor is
    invalid; the vertical pass skips a zero-weight row so it cannot leak NaN.
    Arithmetic per sample is the same expression evaluated in the same order.
    """
    h, w = src.shape
    oh = h * factor
    ow = w * factor
    x0s, x1s, wxs = _axis_taps(w, factor)
    y0s, y1s, wys = _axis_taps(h, factor)
    rows = np.empty((h, ow), dtype=np.float64)
    for y in range(h):
        for ox in range(ow):
            a = src[y, x0s[ox]]
            b = src[y, x1s[ox]]
            wx = wxs[ox]
            if a == 0.0 or (wx != 0.0 and b == 0.0):
                rows[y, ox] = np.nan
            else:
                rows[y, ox] = (1.0 - wx) * a + wx * b
    out = np.empty((oh, ow), dtype=np.float64)
    for oy in range(oh):
        top = rows[y0s[oy]]
        bot = rows[y1s[oy]]
        wy = wys[oy]
        if wy == 0.0:
            for ox in range(ow):
                t = top[ox]
                out[oy, ox] = 0.0 if t != t else t
        else:
            wt = 1.0 - wy
            for ox in range(ow):
                v = wt * top[ox] + wy * bot[ox]
                out[oy, ox] = 0.0 if v != v else v
    return out


@_jit
def fuse(lidar, truedepth, conf_l, conf_t, lidar_weight, use_conf):
    h, w = lidar.shape
    out = np.empty((h, w), dtype=np.float64)
    for y in range(h):
        for x in range(w):
            l = lidar[y, x]
            t = truedepth[y, x]
            if l != 0.0 and t != 0.0:
                wt = lidar_weight
                if use_conf:
                    s = float(conf_l[y, x]) + float(conf_t[y, x])
                    if s > 0.0:
                        wt = float(conf_l[y, x]) / s
                out[y, x] = wt * l + (1.0 - wt) * t
            elif l != 0.0:
                out[y, x] = l
            else:
                out[y, x] = t
    return out


@_jit
def unproject(depth, color, has_color, fx, fy, cx, cy, rot, trans, stride, v_start, v_stop):
    """World points of valid pixels in rows ``[v_start, v_stop)`` on the stride
    lattice, row-major. ``v_start`` must be a multiple of ``stride``.

    Camera coordinates are ``((u - cx) / fx * d, (v - cy) / fy * d, d)``, the
    same association ``geometry.unproject_pixel`` uses.
    """
    h, w = depth.shape
    n = 0
    for v in range(v_start, v_stop, stride):
        for u in range(0, w, stride):
            if depth[v, u] != 0.0:
                n += 1
    pts = np.empty((n, 3), dtype=np.float64)
    cols = np.empty((n, 3), dtype=np.uint8)
    r00, r01, r02 = rot[0, 0], rot[0, 1], rot[0, 2]
    r10, r11, r12 = rot[1, 0], rot[1, 1], rot[1, 2]
    r20, r21, r22 = rot[2, 0], rot[2, 1], rot[2, 2]
    t0, t1, t2 = trans[0], trans[1], trans[2]
    ray_x = np.empty(w, dtype=np.float64)
    for u in range(w):
        ray_x[u] = (u - cx) / fx
    k = 0
    for v in range(v_start, v_stop, stride):
        ray_y = (v - cy) / fy
        for u in range(0, w, stride):
            d = depth[v, u]
            if d == 0.0:
                continue
            xc = ray_x[u] * d
            yc = ray_y * d
            pts[k, 0] = r00 * xc + r01 * yc + r02 * d + t0
            pts[k, 1] = r10 * xc + r11 * yc + r12 * d + t1
            pts[k, 2] = r20 * xc + r21 * yc + r22 * d + t2
            if has_color:
                cols[k, 0] = color[v, u, 0]
                cols[k, 1] = color[v, u, 1]
                cols[k, 2] = color[v, u, 2]
            else:
                cols[k, 0] = 255
                cols[k, 1] = 255
                cols[k, 2] = 255
            k += 1
    return pts, cols


# ---------------------------------------------------------------------------
# Sparse voxel storage: cells are grouped into 4x4x4 bricks. An open-addressing
# hash table maps a brick coordinate to a row of ``bricks``; each brick holds 64
# cells of (count, sum_r, sum_g, sum_b, epoch). Neighboring pixels land in the
# same brick, which keeps the per-point work cache-resident.

BRICK_SHIFT = 2
BRICK_SIDE = 1 << BRICK_SHIFT
BRICK_CELLS = BRICK_SIDE**3
CELL_FIELDS = 5
_BCACHE = 4096
_PACK_BITS = 21
_PACK_BIAS = 1 << (_PACK_BITS - 1)


@_jit
def _mix(i, j, k):
    h = (np.uint64(i) * np.uint64(0x9E3779B97F4A7C15)) ^ (np.uint64(j) * np.uint64(0xC2B2AE3D27D4EB4F)) ^ (
        np.uint64(k) * np.uint64(0x165667B19E3779F9)
    )
    h ^= h >> np.uint64(33)
    h *= np.uint64(0xFF51AFD7ED558CCD)
    h ^= h >> np.uint64(33)
    return h


@_jit
def brick_lookup(hkeys, hids, bi, bj, bk):
    """Slot of brick (bi, bj, bk) in the hash table, or of the empty slot where it belongs."""
    mask = hids.shape[0] - 1
    s = np.int64(_mix(bi, bj, bk) & np.uint64(mask))
    while hids[s] >= 0:
        if hkeys[s, 0] == bi and hkeys[s, 1] == bj and hkeys[s, 2] == bk:
            return s
        s = (s + 1) & mask
    return s


@_jit
def rebuild_index(hkeys, hids, brick_keys, n_bricks):
    for b in range(n_bricks):
        s = brick_lookup(hkeys, hids, brick_keys[b, 0], brick_keys[b, 1], brick_keys[b, 2])
        hkeys[s, 0] = brick_keys[b, 0]
        hkeys[s, 1] = brick_keys[b, 1]
        hkeys[s, 2] = brick_keys[b, 2]
        hids[s] = b


@_jit
def grid_insert(hkeys, hids, brick_keys, bricks, n_bricks, n_occ, cur_epoch, points, colors, origin, size, start):
    """Accumulate ``points[start:]`` into the brick grid.

    Stops early, before claiming a new brick, when the hash table would pass
    half load or the brick store is full; the caller grows and resumes.
    Returns ``(next_index, n_bricks, n_occ, newly_touched)`` where
    ``newly_touched`` counts cells whose epoch moved to ``cur_epoch``.

    Bricks are found through a small direct-mapped cache keyed by the brick
    coordinate packed into one integer. The per-point path has no
    data-dependent branch on hits: sensor noise makes "same cell/brick as the
    previous point" close to a coin flip, and mispredictions dominated an
    earlier run-length design.
    """
    touched = 0
    max_bricks = min(bricks.shape[0], hids.shape[0] // 2)
    flat = bricks.reshape(-1)
    cache_pk = np.full(_BCACHE, -1, dtype=np.int64)
    cache_id = np.empty(_BCACHE, dtype=np.int64)
    cmask = _BCACHE - 1
    lmask = BRICK_SIDE - 1
    ox, oy, oz = origin[0], origin[1], origin[2]
    n = points.shape[0]
    p = start
    while p < n:
        i = np.int64(math.floor((points[p, 0] - ox) / size))
        j = np.int64(math.floor((points[p, 1] - oy) / size))
        k = np.int64(math.floor((points[p, 2] - oz) / size))
        bi = i >> BRICK_SHIFT
        bj = j >> BRICK_SHIFT
        bk = k >> BRICK_SHIFT
        ui = bi + _PACK_BIAS
        uj = bj + _PACK_BIAS
        uk = bk + _PACK_BIAS
        if (ui | uj | uk) >> _PACK_BITS == 0:
            pk = (ui << (2 * _PACK_BITS)) | (uj << _PACK_BITS) | uk
        else:
            pk = np.int64(-2)  # too far out to pack; never cached
        e = (pk ^ (pk >> 19) ^ (pk >> 37)) & cmask
        if cache_pk[e] == pk:
            b = cache_id[e]
        else:
            s = brick_lookup(hkeys, hids, bi, bj, bk)
            if hids[s] >= 0:
                b = hids[s]
            else:
                if n_bricks >= max_bricks:
                    break
                b = n_bricks
                n_bricks += 1
                hkeys[s, 0] = bi
                hkeys[s, 1] = bj
                hkeys[s, 2] = bk
                hids[s] = b
                brick_keys[b, 0] = bi
                brick_keys[b, 1] = bj
                brick_keys[b, 2] = bk
            if pk >= 0:
                cache_pk[e] = pk
                cache_id[e] = b
        c = (b * BRICK_CELLS + ((k & lmask) * BRICK_SIDE + (j & lmask)) * BRICK_SIDE + (i & lmask)) * CELL_FIELDS
        n_occ += flat[c] == 0
        flat[c] += 1
        flat[c + 1] += colors[p, 0]
        flat[c + 2] += colors[p, 1]
        flat[c + 3] += colors[p, 2]
        touched += flat[c + 4] != cur_epoch
        flat[c + 4] = cur_epoch
        p += 1
    return p, n_bricks, n_occ, touched


@_jit
def grid_add_cells(hkeys, hids, brick_keys, bricks, n_bricks, n_occ, cells, start):
    """Add whole cells (rows of i, j, k, count, r, g, b); same early-stop
    protocol as :func:`grid_insert`. Returns ``(next_index, n_bricks, n_occ)``."""
    max_bricks = min(bricks.shape[0], hids.shape[0] // 2)
    lmask = BRICK_SIDE - 1
    q = start
    while q < cells.shape[0]:
        i = cells[q, 0]
        j = cells[q, 1]
        k = cells[q, 2]
        bi = i >> BRICK_SHIFT
        bj = j >> BRICK_SHIFT
        bk = k >> BRICK_SHIFT
        s = brick_lookup(hkeys, hids, bi, bj, bk)
        if hids[s] >= 0:
            b = hids[s]
        else:
            if n_bricks >= max_bricks:
                return q, n_bricks, n_occ
            b = n_bricks
            n_bricks += 1
            hkeys[s, 0] = bi
            hkeys[s, 1] = bj
            hkeys[s, 2] = bk
            hids[s] = b
            brick_keys[b, 0] = bi
            brick_keys[b, 1] = bj
            brick_keys[b, 2] = bk
        c = ((k & lmask) * BRICK_SIDE + (j & lmask)) * BRICK_SIDE + (i & lmask)
        if bricks[b, c, 0] == 0:
            n_occ += 1
        for f in range(4):
            bricks[b, c, f] += cells[q, 3 + f]
        q += 1
    return q, n_bricks, n_occ


@_jit
def conv2d(padded, weights, biases, relu):
    """Cross-correlate an edge-padded ``(C, H+kh-1, W+kw-1)`` stack."""
    n_out, n_in, kh, kw = weights.shape
    h = padded.shape[1] - kh + 1
    w = padded.shape[2] - kw + 1
    out = np.empty((n_out, h, w), dtype=np.float64)
    for o in range(n_out):
        b = biases[o]
        for y in range(h):
            for x in range(w):
                acc = 0.0
                for c in range(n_in):
                    for ky in range(kh):
                        for kx in range(kw):
                            acc += weights[o, c, ky, kx] * padded[c, y + ky, x + kx]
                acc += b
                if relu and acc < 0.0:
                    acc = 0.0
                out[o, y, x] = acc
    return out
