import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from signsynth.config import PALETTE_NAMES, DefectConfig
from signsynth.defects import (FADE_TARGET, PALETTE_SRGB8, DefectError, DefectParams, DirtParams, Sticker,
                               apply_fading, compose_texture, generate_dirt_mask, make_texture, rasterize_sticker,
                               sample_defect_params, separate_colors)
from signsynth.rng import stream


def _solid(rgb8, alpha=1.0, shape=(4, 4)):
    a = np.zeros(shape + (4,), dtype=np.float32)
    a[..., :3] = np.array(rgb8) / 255.0
    a[..., 3] = alpha
    return a


def test_pure_red_belongs_to_red():
    comp = separate_colors(_solid(PALETTE_SRGB8["red"]))
    assert np.allclose(comp.mask("red"), 1.0)
    assert np.allclose(comp.residual, 0.0)
    for name in PALETTE_NAMES:
        if name != "red":
            assert np.allclose(comp.mask(name), 0.0)


def test_off_palette_gray_is_residual():
    comp = separate_colors(_solid((128, 128, 128)))
    assert np.allclose(comp.masks, 0.0)
    assert np.allclose(comp.residual, 1.0)


def test_transparent_texels_have_no_color():
    comp = separate_colors(_solid(PALETTE_SRGB8["white"], alpha=0.0))
    assert np.allclose(comp.masks, 0.0)


@given(st.floats(0, 1))
def test_fading_is_a_lerp_toward_the_target(f):
    t = _solid(PALETTE_SRGB8["red"])
    comp = separate_colors(t)
    out = apply_fading(comp, t, {"red": f})
    expected = t[0, 0, :3] + f * (np.array(FADE_TARGET["red"]) - t[0, 0, :3])
    assert np.allclose(out[0, 0, :3], expected, atol=1e-5)
    assert np.array_equal(out[..., 3], t[..., 3])


def test_zero_fade_is_identity():
    t = _solid(PALETTE_SRGB8["blue"])
    out = apply_fading(separate_colors(t), t, {n: 0.0 for n in PALETTE_NAMES})
    assert np.array_equal(out, t)


def test_dirt_threshold_extremes():
    g = stream(0)
    assert not np.any(generate_dirt_mask(DirtParams(threshold=1.0, opacity=0.7), 32, 32, g))
    full = generate_dirt_mask(DirtParams(threshold=-0.01, opacity=0.7), 32, 32, g)
    assert np.allclose(full, 0.7)
    with pytest.raises(DefectError):
        generate_dirt_mask(DirtParams(), 0, 4, g)


def test_sticker_covers_exact_texels():
    s = Sticker(center=(3 / 8, 3 / 8), width=2 / 8, height=2 / 8, rotation_rad=0.0, gray_level=0.5)
    cover = rasterize_sticker(s, 8, 8)
    expected = np.zeros((8, 8), bool)
    expected[2:4, 2:4] = True
    assert np.array_equal(cover, expected)


def test_compose_preserves_alpha_and_paints_sticker():
    t = _solid(PALETTE_SRGB8["white"], shape=(8, 8))
    t[0, 0, 3] = 0.0
    s = Sticker((3 / 8, 3 / 8), 2 / 8, 2 / 8, 0.0, 0.25)
    out = compose_texture(t, np.full((8, 8), 0.5, np.float32), [s], 0.0).rgba
    assert np.array_equal(out[..., 3], t[..., 3])
    assert np.allclose(out[2:4, 2:4, :3], 0.25)
    assert np.allclose(out[6, 6, :3], 0.5)


def test_fade_mean_matches_beta():
    cfg = DefectConfig()
    g = stream(11)
    reds = [sample_defect_params(g, cfg).fade["red"] for _ in range(3000)]
    assert abs(np.mean(reds) - 2 / 7) < 0.015


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**63 - 1))
def test_sampled_params_within_support(seed):
    p = sample_defect_params(stream(seed), DefectConfig())
    assert all(0.0 <= v <= 1.0 for v in p.fade.values())
    assert 0.55 <= p.dirt.threshold <= 0.85
    assert 0 <= len(p.stickers) <= 2
    assert DefectParams.from_dict(p.to_dict()) == p


def test_sample_count_is_fixed_per_sticker_count():
    # two generators with the same seed stay paired when only a constant is changed
    cfg = DefectConfig()
    a = sample_defect_params(stream(4), cfg)
    cfg2 = DefectConfig(dirt_gray=type(cfg.dirt_gray)(0.3, 0.6))
    b = sample_defect_params(stream(4), cfg2)
    assert a == b


def test_make_texture_keeps_alpha():
    t = _solid(PALETTE_SRGB8["yellow"], shape=(16, 16))
    t[:4] = 0.0
    p = sample_defect_params(stream(2), DefectConfig())
    tex = make_texture(t, p)
    assert np.array_equal(tex.rgba[..., 3], t[..., 3])
    assert tex.rgba.dtype == np.float32
    assert math.isfinite(float(tex.rgba.sum()))
