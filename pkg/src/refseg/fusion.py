"""Feature enhancement: fuse the shallow/middle/deep frozen visual maps.

Two rounds of the same pattern: project each branch with a per-position
MLP, concatenate along channels, and mix back to c channels with a
conv3x3 -> batchnorm -> GeLU block. The first round fuses shallow with
middle; the second fuses that result with the deep map. The output map
is flattened row-major over (h, w) to (h*w, c).
"""

import numpy as np

from . import tensor as T
from .errors import DimensionError
from .nn import MLP, ConvBnGelu, Module


def flatten_map(x):
    """(h, w, c) -> (h*w, c), row-major over (h, w)."""
    h, w, c = x.data.shape
    return T.reshape(x, (h * w, c))


class FeatureEnhancer(Module):
    def __init__(self, rng, c, cba_depth=1):
        super().__init__()
        self.c = c
        # independent per-branch MLPs: one hidden layer of width c, GeLU inside
        self.mlp_shallow = MLP(rng, (c, c, c))
        self.mlp_middle = MLP(rng, (c, c, c))
        self.mlp_early = MLP(rng, (c, c, c))
        self.mlp_deep = MLP(rng, (c, c, c))
        self.mix1 = ConvBnGelu(rng, 2 * c, c, depth=cba_depth)
        self.mix2 = ConvBnGelu(rng, 2 * c, c, depth=cba_depth)

    def _mlp_on_map(self, mlp, x):
        h, w, c = x.data.shape
        return T.reshape(mlp.forward(T.reshape(x, (h * w, c))), (h, w, c))

    def forward(self, f_v1, f_v2, f_v3):
        """Three (h, w, c) tensors -> enhanced visual features (h*w, c)."""
        shapes = {f_v1.data.shape, f_v2.data.shape, f_v3.data.shape}
        if len(shapes) != 1 or f_v1.data.ndim != 3:
            raise DimensionError(f"visual maps must share (h, w, c), got {shapes}")
        if f_v1.data.shape[2] != self.c:
            raise DimensionError(
                f"expected {self.c} channels, got {f_v1.data.shape[2]}")
        h, w, c = f_v1.data.shape

        def cat_maps(a, b):
            flat = T.concat_cols([T.reshape(a, (h * w, c)), T.reshape(b, (h * w, c))])
            return T.reshape(flat, (h, w, 2 * c))

        early = self.mix1.forward(cat_maps(self._mlp_on_map(self.mlp_shallow, f_v1),
                                           self._mlp_on_map(self.mlp_middle, f_v2)))
        fused = self.mix2.forward(cat_maps(self._mlp_on_map(self.mlp_early, early),
                                           self._mlp_on_map(self.mlp_deep, f_v3)))
        return flatten_map(fused)
