"""End-to-end model: frozen encoders -> feature fusion -> cross-modal
attention stack -> query-token mask decoder.

Only the fusion, attention, and decoder parameters train; the encoder
stubs stay frozen (and their outputs can be precomputed per sample).
Seeding is split into independent streams so stub weights and trainable
init never interact.
"""

import numpy as np

from . import tensor as T
from .attention import CrossModalStack
from .decoder import MaskDecoder
from .encoders import FrozenEncoders
from .fusion import FeatureEnhancer
from .nn import Module


def seed_streams(master_seed):
    """Independent child streams: stub weights, dataset, trainable init, data order."""
    stubs, dataset, init, order = np.random.SeedSequence(master_seed).spawn(4)
    return {"stubs": stubs, "dataset": dataset, "init": init, "order": order}


class ReferringSegmenter(Module):
    def __init__(self, cfg):
        super().__init__()
        self.cfg = cfg
        streams = seed_streams(cfg.seed)
        stub_rng = np.random.default_rng(streams["stubs"])
        init_rng = np.random.default_rng(streams["init"])

        self.enc = FrozenEncoders(stub_rng, cfg.c, cfg.c_text,
                                  cfg.vocab_size, cfg.max_tokens)
        if cfg.fe_enabled:
            self.fe = FeatureEnhancer(init_rng, cfg.c, cba_depth=cfg.cba_depth)
        self.ma = CrossModalStack(init_rng, cfg.c, cfg.c_text, cfg.ma_blocks)
        self.dec = MaskDecoder(init_rng, cfg.c, cfg.heads,
                               n_blocks=cfg.dec_blocks, toi_a=cfg.toi_a_enabled)

    def encode(self, sample):
        return self.enc.encode_sample(sample)

    def forward_bundle(self, bundle, return_traces=False):
        """EncoderBundle -> MaskPrediction (and attention traces on request)."""
        cfg = self.cfg
        if cfg.fe_enabled:
            visual = self.fe.forward(T.constant(bundle.f_v1),
                                     T.constant(bundle.f_v2),
                                     T.constant(bundle.f_v3))
        else:
            # fusion ablated: the deep map alone, flattened row-major
            h, w, c = bundle.f_v3.shape
            visual = T.constant(bundle.f_v3.reshape(h * w, c))
        feats, traces = self.ma.forward(visual, bundle.f_l, bundle.pos_enc,
                                        bundle.pad_mask, cfg.tau,
                                        mask_enabled=cfg.attn_mask_enabled)
        pred = self.dec.forward(feats.visual, feats.linguistic,
                                bundle.pad_mask, (cfg.h, cfg.w))
        if return_traces:
            return pred, traces
        return pred

    def forward(self, sample, return_traces=False):
        return self.forward_bundle(self.encode(sample), return_traces=return_traces)

    def stub_parameter_hash(self):
        """Digest of all frozen encoder weights (training must not move it)."""
        import hashlib
        h = hashlib.sha256()
        for name, p in sorted(self.enc.named_parameters()):
            h.update(name.encode())
            h.update(p.data.tobytes())
        return h.hexdigest()
