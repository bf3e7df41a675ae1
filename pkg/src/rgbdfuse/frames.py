"""Image-like containers: depth, confidence, color and mask frames.

All frames wrap a row-major numpy array of shape ``(height, width[, 3])``.
Arrays are made read-only on construction so frames can be shared freely.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, ShapeError


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DepthFrame:
    """Metric depth in millimeters, 0 marks an invalid sample."""

    samples: np.ndarray

    def __post_init__(self):
        a = np.array(self.samples, dtype=np.float64, copy=True)
        if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
            raise ShapeError(f"depth samples must be a non-empty 2-D array, got shape {a.shape}")
        if not np.isfinite(a).all():
            raise InvalidArgumentError("depth samples must be finite")
        if (a < 0).any():
            raise InvalidArgumentError("depth samples must be >= 0")
        object.__setattr__(self, "samples", _freeze(a))

    @classmethod
    def _trusted(cls, a: np.ndarray) -> "DepthFrame":
        # Kernel outputs are valid by construction; skip the O(HW) checks.
        obj = object.__new__(cls)
        object.__setattr__(obj, "samples", _freeze(a))
        return obj

    @classmethod
    def zeros(cls, width: int, height: int) -> "DepthFrame":
        return cls._trusted(np.zeros((height, width)))

    @property
    def width(self) -> int:
        return self.samples.shape[1]

    @property
    def height(self) -> int:
        return self.samples.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.samples.shape

    def valid_mask(self) -> np.ndarray:
        return self.samples != 0

    def __eq__(self, other):
        if not isinstance(other, DepthFrame):
            return NotImplemented
        return np.array_equal(self.samples, other.samples)


@dataclass(frozen=True, eq=False)
class ConfidenceFrame:
    """Per-pixel sensor confidence: 0 low, 1 medium, 2 high."""

    levels: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.levels)
        if a.ndim != 2 or a.size == 0:
            raise ShapeError(f"confidence levels must be a non-empty 2-D array, got shape {a.shape}")
        if ((a < 0) | (a > 2)).any():
            raise InvalidArgumentError("confidence levels must be in {0, 1, 2}")
        object.__setattr__(self, "levels", _freeze(np.array(a, dtype=np.uint8)))

    @property
    def width(self) -> int:
        return self.levels.shape[1]

    @property
    def height(self) -> int:
        return self.levels.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.levels.shape

    def __eq__(self, other):
        if not isinstance(other, ConfidenceFrame):
            return NotImplemented
        return np.array_equal(self.levels, other.levels)


@dataclass(frozen=True, eq=False)
class ColorFrame:
    """8-bit RGB image, shape ``(height, width, 3)``."""

    pixels: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.pixels)
        if a.ndim != 3 or a.shape[2] != 3 or a.shape[0] < 1 or a.shape[1] < 1:
            raise ShapeError(f"color pixels must have shape (H, W, 3), got {a.shape}")
        if a.dtype != np.uint8:
            if ((a < 0) | (a > 255)).any():
                raise InvalidArgumentError("color values must be in [0, 255]")
            a = a.astype(np.uint8)
        object.__setattr__(self, "pixels", _freeze(np.array(a, copy=True)))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape[:2]

    def __eq__(self, other):
        if not isinstance(other, ColorFrame):
            return NotImplemented
        return np.array_equal(self.pixels, other.pixels)


@dataclass(frozen=True, eq=False)
class MaskFrame:
    """Foreground selector: nonzero values are foreground."""

    values: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.values)
        if a.ndim != 2 or a.size == 0:
            raise ShapeError(f"mask values must be a non-empty 2-D array, got shape {a.shape}")
        a = np.array(a, dtype=np.uint8) if a.dtype == np.uint8 else (a != 0).astype(np.uint8)
        object.__setattr__(self, "values", _freeze(a))

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def check_same_shape(what: str, *frames) -> None:
    shapes = {f.shape for f in frames if f is not None}
    if len(shapes) > 1:
        raise ShapeError(f"{what}: frame dimensions disagree: {sorted(shapes)}")
