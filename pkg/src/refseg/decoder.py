"""Query-token mask decoder.

A single trainable query token is concatenated with the vision-aware
linguistic features; decoder blocks refine both streams (self-attention
on each, then cross-attention from the visual stream into the
concatenated one). The refined visual map is upsampled twice (2x
transposed conv + batchnorm, GeLU between the two blocks, channels
c -> c/2 -> c/4); the refined query token goes through a 3-layer MLP to
c/4 and its inner product with each upsampled pixel gives the mask
logits at (4h, 4w).
"""

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, DimensionError
from .nn import MLP, Module, ModuleList, MultiHeadAttention, Parameter, UpsampleBlock


@dataclass
class MaskPrediction:
    logits: "T.Tensor"   # (4h, 4w)
    probs: "T.Tensor"    # (4h, 4w), sigmoid of logits


def binarize(probs, threshold=0.35):
    """probs >= threshold -> 1 else 0 (plain numpy, outside the graph)."""
    if not (0.0 < threshold < 1.0):
        raise ConfigError(f"binarize threshold must be in (0, 1), got {threshold}")
    arr = probs.data if isinstance(probs, T.Tensor) else np.asarray(probs)
    return arr >= threshold


class DecoderBlock(Module):
    """Residual self-attention on both streams, then cross-attention.

    The optional token-to-image layer attends from the concatenated
    stream into the visual one before the final cross-attention (an
    ablation variant); it is off by default.
    """

    def __init__(self, rng, c, heads, toi_a=False):
        super().__init__()
        self.sa_visual = MultiHeadAttention(rng, c, heads)
        self.sa_context = MultiHeadAttention(rng, c, heads)
        self.cross = MultiHeadAttention(rng, c, heads)
        self.has_toi_a = toi_a
        if toi_a:
            self.toi_a = MultiHeadAttention(rng, c, heads)

    def forward(self, visual, context, context_pad=None):
        v = T.add(self.sa_visual.forward(visual, visual), visual)
        c = T.add(self.sa_context.forward(context, context, key_mask=context_pad), context)
        if self.has_toi_a:
            c = T.add(self.toi_a.forward(c, v), c)
        v = T.add(self.cross.forward(v, c, key_mask=context_pad), v)
        return v, c


class MaskDecoder(Module):
    def __init__(self, rng, c, heads, n_blocks=2, toi_a=False):
        super().__init__()
        if n_blocks < 1:
            raise ConfigError("need at least one decoder block")
        if c % 4 != 0:
            raise ConfigError(f"decoder channels {c} must be divisible by 4")
        self.c = c
        self.query = Parameter(rng.normal(0.0, 1.0 / np.sqrt(c), (1, c)))
        self.blocks = ModuleList(DecoderBlock(rng, c, heads, toi_a=toi_a)
                                 for _ in range(n_blocks))
        self.up1 = UpsampleBlock(rng, c, c // 2)
        self.up2 = UpsampleBlock(rng, c // 2, c // 4)
        self.head = MLP(rng, (c, c, c, c // 4))

    def forward(self, visual, linguistic, pad_mask, hw):
        """(l_v, c) visual + (l_t, c) linguistic -> MaskPrediction at (4h, 4w)."""
        h, w = hw
        if visual.data.shape != (h * w, self.c):
            raise DimensionError(
                f"visual features {visual.data.shape} vs expected ({h * w}, {self.c})")
        if linguistic.data.shape[1] != self.c:
            raise DimensionError("linguistic width must match decoder channels")
        context_pad = None
        if pad_mask is not None and pad_mask.any():
            context_pad = np.concatenate([[False], pad_mask])  # query row is never padding
        v = visual
        ctx = T.concat_rows([self.query.tensor, linguistic])
        for block in self.blocks:
            v, ctx = block.forward(v, ctx, context_pad=context_pad)

        fmap = T.reshape(v, (h, w, self.c))
        up = T.gelu(self.up1.forward(fmap))
        up = self.up2.forward(up)  # (4h, 4w, c/4); no activation after the last block

        query = T.slice_rows(ctx, 0, 1)
        probe = self.head.forward(query)  # (1, c/4)
        flat = T.reshape(up, (16 * h * w, self.c // 4))
        logits = T.reshape(T.matmul(flat, T.transpose2d(probe)), (4 * h, 4 * w))
        return MaskPrediction(logits=logits, probs=T.sigmoid(logits))
