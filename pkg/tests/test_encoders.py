"""Frozen stub encoders: determinism, sensitivity, shapes, padding flags."""

import numpy as np
import pytest

from refseg import data
from refseg.encoders import FrozenEncoders, sinusoidal_positions
from refseg.errors import DimensionError, InputError


@pytest.fixture
def encoders():
    return FrozenEncoders(np.random.default_rng(42), c=16, c_text=8,
                          vocab_size=24, max_tokens=12)


def test_image_encode_shapes_and_determinism(encoders):
    img = data.generate_sample(0, 0).image
    f1, f2, f3 = encoders.image.encode(img)
    assert f1.shape == f2.shape == f3.shape == (16, 16, 16)
    g1, g2, g3 = encoders.image.encode(img)
    assert np.array_equal(f1, g1) and np.array_equal(f2, g2) and np.array_equal(f3, g3)


def test_image_encode_sensitive_to_color_change(encoders):
    s = data.generate_sample(0, 0)
    img2 = s.image.copy()
    m = s.target_mask
    img2[m] = data.COLOR_RGB["yellow" if s.shapes[s.target_index].color != "yellow" else "red"]
    for a, b in zip(encoders.image.encode(s.image), encoders.image.encode(img2)):
        assert np.abs(a - b).max() > 0


def test_image_encode_rejects_bad_size(encoders):
    with pytest.raises(DimensionError):
        encoders.image.encode(np.zeros((63, 64, 3)))
    with pytest.raises(DimensionError):
        encoders.image.encode(np.zeros((64, 64)))


def test_all_encoder_parameters_frozen(encoders):
    names = []
    for name, p in encoders.named_parameters():
        assert p.frozen, name
        assert not p.tensor.requires_grad, name
        names.append(name)
    assert len(names) == 7


def test_text_encode_determinism_and_pads(encoders):
    toks = data.text_to_tokens("red circle left", 12)
    f_l, pos, pad = encoders.text.encode(toks)
    f_l2, _, _ = encoders.text.encode(toks)
    assert np.array_equal(f_l, f_l2)
    assert pad.tolist() == [False] * 3 + [True] * 9
    assert f_l.shape == (12, 8) and pos.shape == (12, 8)


def test_position_row_zero_even_channels_are_sin0(encoders):
    pos = sinusoidal_positions(12, 8)
    assert np.all(pos[0, 0::2] == 0.0)
    assert np.all(pos[0, 1::2] == 1.0)


def test_token_permutation_permutes_rows(encoders):
    toks = data.pad_tokens([3, 7, 1, 9], 12)
    f, _, _ = encoders.text.encode(toks)
    perm = data.pad_tokens([9, 3, 1, 7], 12)
    g, _, _ = encoders.text.encode(perm)
    assert np.array_equal(g[0], f[3])
    assert np.array_equal(g[1], f[0])
    assert np.array_equal(g[2], f[2])
    assert np.array_equal(g[3], f[1])


def test_out_of_vocab_rejected(encoders):
    with pytest.raises(InputError):
        encoders.text.encode(data.pad_tokens([24], 12))
    with pytest.raises(InputError):
        encoders.text.encode([-1] + [0] * 11)


def test_bundle(encoders):
    s = data.generate_sample(4, 2)
    b = encoders.encode_sample(s)
    assert b.f_v1.shape == (16, 16, 16)
    assert b.f_l.shape == (12, 8)
    assert b.pad_mask.dtype == bool
