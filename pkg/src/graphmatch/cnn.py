"""Seven-layer patch descriptor CNN producing a 128-D visual feature.

Geometry per layer (filters / kernel / stride / padding):

    1: 16  3x3 s1 p1     5: 128 3x3 s2 p1
    2: 16  3x3 s2 p1     6: 128 3x3 s1 p1
    3: 32  3x3 s2 p1     7: 128 (side/16)^2 s1 p0
    4: 64  3x3 s2 p1

Layers 1-6 are conv + batch-norm + ReLU; layer 7 is conv + batch-norm
with no activation. The default 128 px patch yields an 8x8 final kernel;
smaller training patches scale the final kernel to the surviving spatial
extent so the output stays a single 128-D vector.
"""

from __future__ import annotations

import numpy as np

from .errors import ParameterError, ShapeError
from .nn import BatchNorm2d, Conv2d, Module
from .tensor import Tensor

FILTERS = (16, 16, 32, 64, 128, 128, 128)
STRIDES = (1, 2, 2, 2, 2, 1, 1)
FEATURE_DIM = 128


class ConvBnLayer(Module):
    def __init__(self, c_in, c_out, kernel, stride, padding, rng, dtype, relu):
        super().__init__()
        self.conv = Conv2d(c_in, c_out, kernel, stride, padding, rng, dtype)
        self.bn = BatchNorm2d(c_out, dtype=dtype)
        self._relu = relu

    def forward(self, x: Tensor) -> Tensor:
        out = self.bn(self.conv(x))
        return out.relu() if self._relu else out

    __call__ = forward


class PatchCnn(Module):
    """Maps (B, 1, side, side) patch batches to (B, 128) feature vectors."""

    def __init__(self, patch_side: int = 128, *, seed: int = 0, rng: np.random.Generator | None = None,
                 dtype=np.float32):
        super().__init__()
        if patch_side < 16 or patch_side % 16 != 0:
            raise ParameterError(f"patch side must be a positive multiple of 16, got {patch_side}")
        if rng is None:
            rng = np.random.default_rng(seed)
        self.patch_side = patch_side
        final_kernel = patch_side // 16
        specs = []
        c_in = 1
        for i, (c_out, stride) in enumerate(zip(FILTERS, STRIDES)):
            last = i == len(FILTERS) - 1
            kernel = final_kernel if last else 3
            padding = 0 if last else 1
            specs.append((c_in, c_out, kernel, stride, padding, not last))
            c_in = c_out
        self.layer1 = ConvBnLayer(*specs[0][:5], rng=rng, dtype=dtype, relu=specs[0][5])
        self.layer2 = ConvBnLayer(*specs[1][:5], rng=rng, dtype=dtype, relu=specs[1][5])
        self.layer3 = ConvBnLayer(*specs[2][:5], rng=rng, dtype=dtype, relu=specs[2][5])
        self.layer4 = ConvBnLayer(*specs[3][:5], rng=rng, dtype=dtype, relu=specs[3][5])
        self.layer5 = ConvBnLayer(*specs[4][:5], rng=rng, dtype=dtype, relu=specs[4][5])
        self.layer6 = ConvBnLayer(*specs[5][:5], rng=rng, dtype=dtype, relu=specs[5][5])
        self.layer7 = ConvBnLayer(*specs[6][:5], rng=rng, dtype=dtype, relu=specs[6][5])
        self._check_geometry()

    def _layers(self):
        return [self.layer1, self.layer2, self.layer3, self.layer4, self.layer5, self.layer6, self.layer7]

    def _check_geometry(self):
        side = self.patch_side
        c_in = 1
        for i, layer in enumerate(self._layers()):
            c_out, stride = FILTERS[i], STRIDES[i]
            kernel = self.patch_side // 16 if i == 6 else 3
            expected = (c_out, c_in, kernel, kernel)
            got = layer.conv.weight.data.shape
            if got != expected:
                raise ShapeError(f"layer {i + 1} kernel shape {got} != {expected}")
            padding = 0 if i == 6 else 1
            side = (side + 2 * padding - kernel) // stride + 1
            c_in = c_out
        if side != 1:
            raise ShapeError(f"final spatial extent {side} != 1 for patch side {self.patch_side}")

    def output_shapes(self) -> list[tuple[int, int, int]]:
        """Expected (C, H, W) after each layer, from the layer geometry."""
        side = self.patch_side
        shapes = []
        for i in range(7):
            kernel = self.patch_side // 16 if i == 6 else 3
            padding = 0 if i == 6 else 1
            side = (side + 2 * padding - kernel) // STRIDES[i] + 1
            shapes.append((FILTERS[i], side, side))
        return shapes

    def forward(self, patches, return_intermediates: bool = False):
        """Patch batch to (B, 128) features; optionally also each layer output."""
        x = patches if isinstance(patches, Tensor) else Tensor(patches)
        if x.data.ndim != 4 or x.data.shape[1] != 1:
            raise ShapeError(f"expected (B,1,side,side) patches, got {x.data.shape}")
        if x.data.shape[2] != self.patch_side or x.data.shape[3] != self.patch_side:
            raise ShapeError(f"patch side {x.data.shape[2:]} does not match configured {self.patch_side}")
        intermediates = []
        for layer in self._layers():
            x = layer(x)
            if return_intermediates:
                intermediates.append(x)
        features = x.reshape(x.data.shape[0], FEATURE_DIM)
        if return_intermediates:
            return features, intermediates
        return features

    __call__ = forward


def init_cnn(seed: int, patch_side: int = 128, dtype=np.float32) -> PatchCnn:
    """Fresh He-initialized CNN, deterministic for a given seed."""
    return PatchCnn(patch_side, seed=seed, dtype=dtype)
