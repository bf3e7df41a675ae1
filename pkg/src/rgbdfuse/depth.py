"""Dual-sensor depth fusion, bilinear upscaling and relative-depth rescaling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ConfigError, DomainError, InvalidArgumentError
from .frames import ConfidenceFrame, DepthFrame, check_same_shape


@dataclass(frozen=True)
class FusionConfig:
    lidar_weight: float = 0.5
    use_confidence: bool = False

    def __post_init__(self):
        if not 0.0 <= self.lidar_weight <= 1.0:
            raise ConfigError(f"lidar_weight must be in [0, 1], got {self.lidar_weight}")


def fuse_depth(
    lidar: DepthFrame,
    truedepth: DepthFrame,
    conf_l: ConfidenceFrame | None = None,
    conf_t: ConfidenceFrame | None = None,
    cfg: FusionConfig = FusionConfig(),
) -> DepthFrame:
    """Per-pixel weighted average of two aligned depth frames.

    Where only one sensor is valid its value is taken as is; where neither
    is valid the output is 0. With ``cfg.use_confidence`` the lidar weight
    becomes ``c_l / (c_l + c_t)`` wherever that sum is positive.
    """
    check_same_shape("fuse_depth", lidar, truedepth, conf_l, conf_t)
    if cfg.use_confidence and (conf_l is None or conf_t is None):
        raise ConfigError("use_confidence requires both confidence frames")
    dummy = np.zeros((1, 1), dtype=np.uint8)
    out = _kernels.fuse(
        lidar.samples,
        truedepth.samples,
        conf_l.levels if conf_l is not None else dummy,
        conf_t.levels if conf_t is not None else dummy,
        float(cfg.lidar_weight),
        bool(cfg.use_confidence),
    )
    return DepthFrame._trusted(out)


def upscale_bilinear(frame: DepthFrame, factor: int) -> DepthFrame:
    """Upscale by an integer factor with half-pixel-center sampling.

    Output pixel ``o`` samples input coordinate ``(o + 0.5) / factor - 0.5``,
    clamped to the frame. An output sample is invalid when any neighbor that
    contributes nonzero weight is invalid.
    """
    if factor < 1 or int(factor) != factor:
        raise InvalidArgumentError(f"factor must be a positive integer, got {factor}")
    if factor == 1:
        return frame
    return DepthFrame._trusted(_kernels.bilinear_upscale(frame.samples, int(factor)))


def normalize_relative_to_metric(
    frame: DepthFrame, z_near: float, z_far: float, valid: np.ndarray | None = None
) -> DepthFrame:
    """Map relative depth ``s`` in [0, 1] to ``z_near + s * (z_far - z_near)`` mm.

    By default 0 marks an invalid sample and stays 0. Pass an explicit boolean
    ``valid`` mask when a relative depth of exactly 0 is a real reading (the
    nearest surface); those pixels then map to ``z_near``.
    """
    if not 0 < z_near < z_far:
        raise DomainError(f"need 0 < z_near < z_far, got {z_near}, {z_far}")
    s = frame.samples
    if valid is None:
        valid = s != 0.0
    else:
        valid = np.asarray(valid, dtype=bool)
        if valid.shape != s.shape:
            raise DomainError(f"valid mask shape {valid.shape} does not match frame {s.shape}")
    if (s[valid] > 1.0).any():
        raise DomainError("relative depth samples must lie in [0, 1]")
    out = np.where(valid, np.clip(z_near + s * (z_far - z_near), z_near, z_far), 0.0)
    return DepthFrame._trusted(out)
