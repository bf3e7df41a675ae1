"""SRCNN inference: bilinear pre-upsampling followed by a small conv stack."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .depth import upscale_bilinear
from .errors import ShapeError, WeightsError
from .frames import DepthFrame

DEPTH_FULL_SCALE = 65535.0


@dataclass(frozen=True, eq=False)
class ConvLayer:
    weights: np.ndarray  # (out, in, kh, kw)
    biases: np.ndarray  # (out,)

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        b = np.array(self.biases, dtype=np.float64).reshape(-1)
        if w.ndim != 4 or min(w.shape) < 1:
            raise WeightsError(f"conv weights must be a non-empty (out, in, kh, kw) array, got {w.shape}")
        if b.shape != (w.shape[0],):
            raise WeightsError(f"expected {w.shape[0]} biases, got {b.shape[0]}")
        if w.shape[2] % 2 == 0 or w.shape[3] % 2 == 0:
            raise WeightsError(f"kernel dims must be odd, got {w.shape[2]}x{w.shape[3]}")
        if not (np.isfinite(w).all() and np.isfinite(b).all()):
            raise WeightsError("weights and biases must be finite")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "biases", b)

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]

    @property
    def kernel_h(self) -> int:
        return self.weights.shape[2]

    @property
    def kernel_w(self) -> int:
        return self.weights.shape[3]

    def __eq__(self, other):
        if not isinstance(other, ConvLayer):
            return NotImplemented
        return np.array_equal(self.weights, other.weights) and np.array_equal(self.biases, other.biases)


@dataclass(frozen=True)
class SrcnnWeights:
    layers: tuple[ConvLayer, ...]

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise WeightsError("network has no layers")
        if layers[0].in_channels != 1:
            raise WeightsError(f"first layer must take 1 channel, takes {layers[0].in_channels}")
        if layers[-1].out_channels != 1:
            raise WeightsError(f"last layer must produce 1 channel, produces {layers[-1].out_channels}")
        for i in range(1, len(layers)):
            if layers[i].in_channels != layers[i - 1].out_channels:
                raise WeightsError(
                    f"layer {i} takes {layers[i].in_channels} channels but layer {i - 1} "
                    f"produces {layers[i - 1].out_channels}"
                )
        object.__setattr__(self, "layers", layers)

    @classmethod
    def identity(cls, n_layers: int = 3) -> "SrcnnWeights":
        return cls(tuple(ConvLayer(np.ones((1, 1, 1, 1)), np.zeros(1)) for _ in range(n_layers)))

    @classmethod
    def random(cls, rng: np.random.Generator, shape=((64, 9), (32, 1), (1, 5)), scale: float = 0.05) -> "SrcnnWeights":
        """Random network; ``shape`` lists ``(out_channels, kernel)`` per layer.

        The default is the canonical 9-1-5 layout with 64 and 32 filters.
        """
        layers = []
        n_in = 1
        for n_out, k in shape:
            w = rng.normal(0.0, scale, size=(n_out, n_in, k, k))
            b = rng.normal(0.0, scale, size=n_out)
            layers.append(ConvLayer(w, b))
            n_in = n_out
        return cls(tuple(layers))


def conv2d_forward(planes: np.ndarray, layer: ConvLayer, activation: str | None = None) -> np.ndarray:
    """Same-size cross-correlation with replicate padding; ``activation`` is
    ``"relu"`` or ``None``."""
    x = np.asarray(planes, dtype=np.float64)
    if x.ndim != 3 or x.shape[0] != layer.in_channels:
        raise ShapeError(f"layer expects {layer.in_channels} input planes, got array of shape {x.shape}")
    if activation not in (None, "relu"):
        raise ValueError(f"unknown activation {activation!r}")
    ph, pw = (layer.kernel_h - 1) // 2, (layer.kernel_w - 1) // 2
    padded = np.pad(x, ((0, 0), (ph, ph), (pw, pw)), mode="edge")
    return _kernels.conv2d(padded, layer.weights, layer.biases, activation == "relu")


def srcnn_upscale(frame: DepthFrame, weights: SrcnnWeights, factor: int) -> DepthFrame:
    """Bilinear pre-upsampling, then the conv stack (ReLU on all but the last
    layer) on depth normalized by the 16-bit full scale, clamped to
    [0, 65535] mm. Pixels invalid after upsampling stay 0.

    The network runs on millimeters directly with every bias multiplied by
    the full-scale constant. Convolution and ReLU are positively homogeneous,
    so this equals normalize -> network -> denormalize, and an identity
    network reproduces the bilinear result bit for bit.
    """
    if not isinstance(weights, SrcnnWeights):
        raise WeightsError("weights must be an SrcnnWeights instance")
    up = upscale_bilinear(frame, factor)
    x = up.samples[None, :, :]
    last = len(weights.layers) - 1
    for i, layer in enumerate(weights.layers):
        scaled = ConvLayer(layer.weights, layer.biases * DEPTH_FULL_SCALE)
        x = conv2d_forward(x, scaled, None if i == last else "relu")
    out = np.clip(x[0], 0.0, DEPTH_FULL_SCALE)
    out[up.samples == 0.0] = 0.0
    return DepthFrame._trusted(out)
