"""Bidirectional cross-modal attention with relevance-gated masking.

One block projects both modalities to a shared width c, forms one score
matrix s = Zv Zl^T / sqrt(c), and reuses it in both directions: rows
(softmax over words) produce language-aware visual features, and its
transpose weights pixels per word to produce vision-aware linguistic
features. Both outputs go through a residual add and layer norm.

The gate keeps a pixel-word pair when its relevance m = 1/(1 + e^s)
falls below tau, which algebraically is s > ln((1-tau)/tau): low m means
high similarity, so high-similarity pairs survive. The gate pattern is a
constant within a step (no gradient through the threshold test).
Padding-token columns are always masked. If gating would blank an
entire pixel row (or an entire non-pad word column), the gate is
dropped for that row/column only so the softmax stays well defined.
"""

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, DimensionError
from .nn import LayerNorm, Module, ModuleList, Parameter, init_linear


def keep_threshold(tau):
    """Score above which a pair survives the relevance gate."""
    return np.log((1.0 - tau) / tau)


def relevance_scores(scores):
    """Gate statistic m = 1/(1 + e^s), a decreasing sigmoid of the score."""
    return T.expit(-scores)


def gate_pattern(scores, tau, pad_cols):
    """(tau_kept, effective_kept): the raw threshold pattern and the pattern
    actually applied after the dead row/column fallback and padding."""
    relevance = relevance_scores(scores)
    tau_kept = relevance < tau
    live_cols = ~pad_cols
    eff = tau_kept & live_cols[None, :]
    dead_rows = ~eff.any(axis=1)
    dead_cols = live_cols & ~eff.any(axis=0)
    eff = eff.copy()
    eff[dead_rows, :] = live_cols[None, :]
    eff[:, dead_cols] = True
    return tau_kept, eff


@dataclass
class AttentionTrace:
    """Per-block record of the gating decision and attention weights."""
    scores: np.ndarray        # (l_v, l_t) pre-gate logits Zv Zl^T / sqrt(c)
    relevance: np.ndarray     # (l_v, l_t) gate statistic m
    tau_kept: np.ndarray      # raw threshold pattern (before fallback)
    kept: np.ndarray          # pattern actually applied (weights are 0 off it)
    weights: np.ndarray       # (l_v, l_t) post-softmax attention


@dataclass
class MutualFeatures:
    visual: "T.Tensor"       # (l_v, c) language-aware visual features
    linguistic: "T.Tensor"   # (l_t, c) vision-aware linguistic features


class CrossModalBlock(Module):
    def __init__(self, rng, c_visual, c_linguistic, c):
        super().__init__()
        self.c = c
        self.w_v = Parameter(init_linear(rng, c_visual, c))
        self.w_l = Parameter(init_linear(rng, c_linguistic, c))
        self.norm_visual = LayerNorm(c)
        self.norm_linguistic = LayerNorm(c)

    def forward(self, f_v, f_l, pad_mask, tau, mask_enabled=True, keep_override=None):
        """Returns (MutualFeatures, AttentionTrace).

        keep_override fixes the gate pattern explicitly (used by gradient
        checks, where the pattern must not flip under perturbation).
        """
        if not (0.0 < tau < 1.0):
            raise ConfigError(f"tau must be in (0, 1), got {tau}")
        if f_v.data.shape[1] != self.w_v.data.shape[0]:
            raise DimensionError("visual width does not match projection")
        if f_l.data.shape[1] != self.w_l.data.shape[0]:
            raise DimensionError("linguistic width does not match projection")
        z_v = T.matmul(f_v, self.w_v.tensor)
        z_l = T.matmul(f_l, self.w_l.tensor)
        scores = T.scale(T.matmul(z_v, T.transpose2d(z_l)), 1.0 / np.sqrt(self.c))

        s = scores.data
        relevance = relevance_scores(s)
        tau_kept = relevance < tau
        if keep_override is not None:
            eff = keep_override
        elif mask_enabled:
            _, eff = gate_pattern(s, tau, pad_mask)
        elif pad_mask.any():
            eff = np.broadcast_to(~pad_mask, s.shape).copy()
        else:
            eff = None  # structurally plain softmax

        additive = None if eff is None else np.where(eff, 0.0, -np.inf)
        attn = T.softmax_rows(scores, additive_mask=additive)

        visual = self.norm_visual.forward(T.add(T.matmul(attn, z_l), z_v))
        linguistic = self.norm_linguistic.forward(
            T.add(T.matmul(T.transpose2d(attn), z_v), z_l))
        trace = AttentionTrace(
            scores=s.copy(),
            relevance=relevance,
            tau_kept=tau_kept,
            kept=np.ones_like(tau_kept) if eff is None else eff.copy(),
            weights=attn.data.copy(),
        )
        return MutualFeatures(visual, linguistic), trace


class CrossModalStack(Module):
    """Sequential cross-modal blocks; positional encodings are added to the
    linguistic input once, before the first block."""

    def __init__(self, rng, c, c_text, n_blocks):
        super().__init__()
        if n_blocks < 1:
            raise ConfigError("need at least one cross-modal block")
        blocks = [CrossModalBlock(rng, c, c_text, c)]
        blocks += [CrossModalBlock(rng, c, c, c) for _ in range(n_blocks - 1)]
        self.blocks = ModuleList(blocks)

    def forward(self, f_v, f_l, pos_enc, pad_mask, tau, mask_enabled=True,
                add_pos=True, keep_overrides=None):
        if isinstance(f_l, np.ndarray):
            lang = T.constant(f_l + pos_enc if add_pos else f_l)
        else:
            lang = T.add(f_l, T.constant(pos_enc)) if add_pos else f_l
        vis = f_v
        traces = []
        for i, block in enumerate(self.blocks):
            override = None if keep_overrides is None else keep_overrides[i]
            feats, trace = block.forward(vis, lang, pad_mask, tau,
                                         mask_enabled=mask_enabled,
                                         keep_override=override)
            vis, lang = feats.visual, feats.linguistic
            traces.append(trace)
        return MutualFeatures(vis, lang), traces
