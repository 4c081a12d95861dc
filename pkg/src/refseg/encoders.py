"""Frozen deterministic stand-ins for the pretrained image and text encoders.

The image stub is a 3-stage conv pyramid (stride-4 patch stem, then two
3x3 stages with GeLU); the three taps give shallow/middle/deep feature
maps at the same (h, w, c). The text stub is a seeded embedding table
plus sinusoidal positional encodings returned separately. Every weight
is a frozen Parameter: these modules never see the optimizer and run as
plain numpy outside the autodiff graph.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from . import tensor as T
from .data import PAD
from .errors import DimensionError, InputError
from .nn import Module, Parameter


@dataclass
class EncoderBundle:
    """Frozen features for one sample."""
    f_v1: np.ndarray       # (h, w, c) shallow
    f_v2: np.ndarray       # (h, w, c) middle
    f_v3: np.ndarray       # (h, w, c) deep
    f_l: np.ndarray        # (max_tokens, c_text)
    pos_enc: np.ndarray    # (max_tokens, c_text)
    pad_mask: np.ndarray   # (max_tokens,) bool


class ImageEncoderStub(Module):
    def __init__(self, rng, c, patch=4):
        super().__init__()
        self.patch = patch
        self.c = c
        d_in = patch * patch * 3
        self.stem_w = Parameter(rng.normal(0.0, 1.0 / np.sqrt(d_in), (d_in, c)), frozen=True)
        self.stem_b = Parameter(np.zeros(c), frozen=True)
        self.s2_k = Parameter(rng.normal(0.0, 1.0 / np.sqrt(9 * c), (3, 3, c, c)), frozen=True)
        self.s2_b = Parameter(np.zeros(c), frozen=True)
        self.s3_k = Parameter(rng.normal(0.0, 1.0 / np.sqrt(9 * c), (3, 3, c, c)), frozen=True)
        self.s3_b = Parameter(np.zeros(c), frozen=True)

    def encode(self, image):
        """(4h, 4w, 3) image -> three (h, w, c) feature maps."""
        if image.ndim != 3 or image.shape[2] != 3:
            raise DimensionError(f"expected (4h, 4w, 3) image, got {image.shape}")
        hh, ww, _ = image.shape
        p = self.patch
        if hh % p or ww % p:
            raise DimensionError(f"image dims {hh}x{ww} not divisible by patch {p}")
        h, w = hh // p, ww // p
        patches = image.reshape(h, p, w, p, 3).transpose(0, 2, 1, 3, 4).reshape(h * w, p * p * 3)
        f1 = T.gelu_array(patches @ self.stem_w.data + self.stem_b.data).reshape(h, w, self.c)
        f2 = T.gelu_array(np.asarray(_kernels.conv3x3_forward(
            np.ascontiguousarray(f1), self.s2_k.data, self.s2_b.data)))
        f3 = T.gelu_array(np.asarray(_kernels.conv3x3_forward(
            np.ascontiguousarray(f2), self.s3_k.data, self.s3_b.data)))
        return f1, f2, f3


def sinusoidal_positions(n, dim):
    """pe[p, 2i] = sin(p / 10000^(2i/dim)), pe[p, 2i+1] = cos(...)."""
    pe = np.zeros((n, dim))
    pos = np.arange(n)[:, None]
    div = np.exp(-np.log(10000.0) * np.arange(0, dim, 2) / dim)
    pe[:, 0::2] = np.sin(pos * div)
    pe[:, 1::2] = np.cos(pos * div[: pe[:, 1::2].shape[1]])
    return pe


class TextEncoderStub(Module):
    def __init__(self, rng, vocab_size, c_text, max_tokens):
        super().__init__()
        self.vocab_size = vocab_size
        self.max_tokens = max_tokens
        self.emb = Parameter(rng.normal(0.0, 1.0, (vocab_size, c_text)), frozen=True)
        self._pos = sinusoidal_positions(max_tokens, c_text)

    def encode(self, tokens):
        """Padded token ids -> (features, positional encodings, pad flags)."""
        if len(tokens) != self.max_tokens:
            raise DimensionError(
                f"expected {self.max_tokens} (padded) tokens, got {len(tokens)}")
        ids = np.asarray(tokens, dtype=np.int64)
        if ids.min() < 0 or ids.max() >= self.vocab_size:
            raise InputError(f"token id outside vocabulary [0, {self.vocab_size})")
        f_l = self.emb.data[ids].copy()
        pad_mask = ids == PAD
        return f_l, self._pos.copy(), pad_mask


class FrozenEncoders(Module):
    """The image + text stub pair, seeded from one rng stream."""

    def __init__(self, rng, c, c_text, vocab_size, max_tokens):
        super().__init__()
        self.image = ImageEncoderStub(rng, c)
        self.text = TextEncoderStub(rng, vocab_size, c_text, max_tokens)

    def encode_sample(self, sample):
        f1, f2, f3 = self.image.encode(sample.image)
        f_l, pos, pad = self.text.encode(sample.tokens)
        return EncoderBundle(f1, f2, f3, f_l, pos, pad)
