import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from rgbdfuse.depth import FusionConfig, fuse_depth, normalize_relative_to_metric, upscale_bilinear
from rgbdfuse.errors import ConfigError, DomainError, InvalidArgumentError, ShapeError
from rgbdfuse.frames import ConfidenceFrame, DepthFrame


# --- scalar oracles ------------------------------------------------------------


def fuse_oracle(l, t, w):
    if l > 0 and t > 0:
        return w * l + (1.0 - w) * t
    if l > 0:
        return l
    if t > 0:
        return t
    return 0.0


def bilinear_oracle(src, factor):
    """Direct per-pixel evaluation; invalid if any neighbor with nonzero weight is invalid."""
    h, w = src.shape
    out = np.zeros((h * factor, w * factor))
    for oy in range(h * factor):
        sy = min(max((oy + 0.5) / factor - 0.5, 0.0), h - 1.0)
        y0 = int(math.floor(sy))
        y1 = min(y0 + 1, h - 1)
        wy = sy - y0
        for ox in range(w * factor):
            sx = min(max((ox + 0.5) / factor - 0.5, 0.0), w - 1.0)
            x0 = int(math.floor(sx))
            x1 = min(x0 + 1, w - 1)
            wx = sx - x0
            taps = [
                ((1 - wy) * (1 - wx), src[y0, x0]),
                ((1 - wy) * wx, src[y0, x1]),
                (wy * (1 - wx), src[y1, x0]),
                (wy * wx, src[y1, x1]),
            ]
            if any(wt > 0 and val == 0 for wt, val in taps):
                continue
            out[oy, ox] = sum(wt * val for wt, val in taps)
    return out


# --- fusion --------------------------------------------------------------------


def test_fusion_examples():
    l = DepthFrame([[2000.0, 0.0, 0.0, 1234.0]])
    t = DepthFrame([[4000.0, 1500.0, 0.0, 999.0]])
    out = fuse_depth(l, t).samples
    np.testing.assert_array_equal(out, [[3000.0, 1500.0, 0.0, 0.5 * 1234 + 0.5 * 999]])
    np.testing.assert_array_equal(fuse_depth(l, t, cfg=FusionConfig(1.0)).samples, [[2000, 1500, 0, 1234]])


@pytest.mark.parametrize("w", [0.0, 0.5, 1.0])
def test_fusion_matches_scalar_oracle_exhaustively(w, rng):
    # every validity combination appears many times in a random frame
    l = rng.uniform(1, 9000, (30, 40))
    t = rng.uniform(1, 9000, (30, 40))
    combos = list(itertools.product([True, False], repeat=2))
    pick = rng.integers(0, 4, (30, 40))
    for k, (lv, tv) in enumerate(combos):
        l[(pick == k) & (not lv)] = 0
        t[(pick == k) & (not tv)] = 0
    out = fuse_depth(DepthFrame(l), DepthFrame(t), cfg=FusionConfig(w)).samples
    want = np.vectorize(lambda a, b: fuse_oracle(a, b, w))(l, t)
    np.testing.assert_array_equal(out, want)


def test_confidence_weighting():
    l = DepthFrame([[1000.0, 1000.0, 1000.0]])
    t = DepthFrame([[4000.0, 4000.0, 4000.0]])
    cl = ConfidenceFrame([[2, 0, 0]])
    ct = ConfidenceFrame([[1, 2, 0]])
    out = fuse_depth(l, t, cl, ct, FusionConfig(0.25, use_confidence=True)).samples
    # w = 2/3, w = 0, and the configured weight when both confidences are 0
    np.testing.assert_allclose(out, [[2000.0, 4000.0, 0.25 * 1000 + 0.75 * 4000]], rtol=1e-15)


def test_fusion_errors():
    with pytest.raises(ShapeError):
        fuse_depth(DepthFrame.zeros(2, 2), DepthFrame.zeros(3, 2))
    with pytest.raises(ConfigError):
        FusionConfig(1.5)
    with pytest.raises(ConfigError):
        fuse_depth(DepthFrame.zeros(2, 2), DepthFrame.zeros(2, 2), cfg=FusionConfig(use_confidence=True))


depth_arrays = hnp.arrays(
    np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)), elements=st.floats(1, 65535)
)


@given(l=depth_arrays, w=st.floats(0, 1), data=st.data())
def test_fusion_convex_and_symmetric(l, w, data):
    t = data.draw(hnp.arrays(np.float64, l.shape, elements=st.floats(1, 65535)))
    a = fuse_depth(DepthFrame(l), DepthFrame(t), cfg=FusionConfig(w)).samples
    b = fuse_depth(DepthFrame(t), DepthFrame(l), cfg=FusionConfig(1 - w)).samples
    lo, hi = np.minimum(l, t), np.maximum(l, t)
    assert (a >= lo * (1 - 1e-15)).all() and (a <= hi * (1 + 1e-15)).all()
    np.testing.assert_allclose(a, b, rtol=1e-12)


# --- bilinear ------------------------------------------------------------------


def test_bilinear_frozen_2x2():
    out = upscale_bilinear(DepthFrame([[1000.0, 2000.0], [3000.0, 4000.0]]), 2).samples
    np.testing.assert_array_equal(
        out,
        [
            [1000, 1250, 1750, 2000],
            [1500, 1750, 2250, 2500],
            [2500, 2750, 3250, 3500],
            [3000, 3250, 3750, 4000],
        ],
    )
    np.testing.assert_array_equal(out, bilinear_oracle(np.array([[1000.0, 2000.0], [3000.0, 4000.0]]), 2))


def test_bilinear_constant_and_identity(rng):
    out = upscale_bilinear(DepthFrame(np.full((3, 5), 1000.0)), 4)
    assert out.shape == (12, 20)
    assert (out.samples == 1000.0).all()
    f = DepthFrame(rng.uniform(0, 5000, (4, 7)))
    assert upscale_bilinear(f, 1) == f


def test_bilinear_invalid_is_contagious():
    src = np.full((4, 4), 1000.0)
    src[1, 2] = 0
    out = upscale_bilinear(DepthFrame(src), 4).samples
    np.testing.assert_array_equal(out, bilinear_oracle(src, 4))
    # every output whose interpolation cell touches (1, 2) is invalid
    assert (out[2:10, 6:14] == 0).all()
    assert (out[out != 0] == 1000.0).all()


@pytest.mark.parametrize("factor", [1, 2, 3, 4, 5])
def test_bilinear_matches_oracle(rng, factor):
    for _ in range(5):
        h, w = rng.integers(1, 9, 2)
        src = rng.uniform(100, 60000, (h, w))
        src[rng.random((h, w)) < 0.15] = 0
        out = upscale_bilinear(DepthFrame(src), factor).samples
        np.testing.assert_allclose(out, bilinear_oracle(src, factor), rtol=0, atol=1e-6)


@given(src=hnp.arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 5)), elements=st.floats(0, 65535)),
       factor=st.integers(1, 5))
def test_bilinear_range_and_dims(src, factor):
    out = upscale_bilinear(DepthFrame(src), factor).samples
    assert out.shape == (src.shape[0] * factor, src.shape[1] * factor)
    valid = src[src > 0]
    got = out[out > 0]
    if len(got):
        assert got.min() >= valid.min() * (1 - 1e-12) and got.max() <= valid.max() * (1 + 1e-12)


def test_bilinear_bad_factor():
    for f in (0, -1, 1.5):
        with pytest.raises(InvalidArgumentError):
            upscale_bilinear(DepthFrame.zeros(2, 2), f)


# --- normalization -------------------------------------------------------------


def test_normalize_examples():
    out = normalize_relative_to_metric(DepthFrame([[0.5, 1.0, 0.0]]), 500, 1500).samples
    np.testing.assert_array_equal(out, [[1000.0, 1500.0, 0.0]])
    valid = np.array([[True, True, True]])
    out = normalize_relative_to_metric(DepthFrame([[0.5, 1.0, 0.0]]), 500, 1500, valid=valid).samples
    np.testing.assert_array_equal(out, [[1000.0, 1500.0, 500.0]])


def test_normalize_range(rng):
    s = rng.random((20, 30))
    out = normalize_relative_to_metric(DepthFrame(s), 300.0, 7000.0).samples
    np.testing.assert_allclose(out, 300.0 + s * 6700.0, rtol=1e-15)
    assert out.min() >= 300.0 and out.max() <= 7000.0


def test_normalize_errors():
    with pytest.raises(DomainError):
        normalize_relative_to_metric(DepthFrame([[1.5]]), 1, 2)
    with pytest.raises(DomainError):
        normalize_relative_to_metric(DepthFrame([[0.5]]), 2, 1)


def test_frames_validate():
    with pytest.raises(InvalidArgumentError):
        DepthFrame([[-1.0]])
    with pytest.raises(InvalidArgumentError):
        DepthFrame([[math.inf]])
    with pytest.raises(InvalidArgumentError):
        ConfidenceFrame([[3]])
    with pytest.raises(ShapeError):
        DepthFrame(np.zeros(4))
