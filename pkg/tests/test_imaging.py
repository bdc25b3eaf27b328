import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from signsynth.config import ImagingConfig, identity_imaging
from signsynth.imaging import (ChromaParams, DemosaicParams, FlareParams, ImagingError, ImagingParams,
                               MotionBlurParams, NoiseParams, PsfComponent, SharpenParams, apply_aec_wb,
                               apply_chromatic_aberration, apply_demosaic_artifacts, apply_lens_flare,
                               apply_motion_blur, apply_noise, apply_psf, apply_unsharp_mask, exposure_scale,
                               line_kernel, process, psf_kernel, sample_imaging_params, tonemap_quantize)
from signsynth.rng import stream


def hdr(seed=0, shape=(24, 28)):
    return (np.random.default_rng(seed).random(shape + (3,)) * 2.0).astype(np.float32)


# -- exposure and white balance ----------------------------------------------------------


def test_aec_identity_and_one_stop():
    f = hdr()
    assert np.array_equal(apply_aec_wb(f, ImagingParams()), f)
    assert np.allclose(apply_aec_wb(f, ImagingParams(aec_log2_gain=1.0)), 2 * f, rtol=1e-6)


def test_white_balance_ratios():
    out = apply_aec_wb(np.full((4, 4, 3), 0.5, np.float32), ImagingParams(wb_gains=(1.2, 1.0, 0.8)))
    assert np.allclose(out[..., 0] / out[..., 1], 1.2) and np.allclose(out[..., 2] / out[..., 1], 0.8)


# -- PSF --------------------------------------------------------------------------------


def _analytic_mixture(weights, sigmas, radius):
    x = np.arange(-radius, radius + 1.0)
    k = np.zeros((x.size, x.size))
    for w, s in zip(weights, sigmas):
        g = np.exp(-x**2 / (2 * s * s))
        g /= g.sum()
        k += w * g[:, None] * g[None, :]
    return k


def test_psf_impulse_matches_mixture():
    weights, sigmas = [0.7, 0.25, 0.05], [0.6, 1.5, 4.0]
    psf = [PsfComponent(w, s) for w, s in zip(weights, sigmas)]
    f = np.zeros((41, 41, 3), np.float32)
    f[20, 20] = 1.0
    out = apply_psf(f, psf)
    r = 12
    oracle = _analytic_mixture(weights, sigmas, r)
    assert np.max(np.abs(out[20 - r:21 + r, 20 - r:21 + r, 1] - oracle)) < 1e-4
    assert np.allclose(psf_kernel(psf), oracle, atol=1e-12)


def test_psf_tiny_sigma_is_identity():
    f = hdr()
    assert np.allclose(apply_psf(f, [PsfComponent(1.0, 1e-3)]), f, atol=1e-6)


# -- flare ------------------------------------------------------------------------------


def _flare(intensity=0.02, ghosts=4, threshold=50.0, seed=1):
    return ImagingParams(flare=FlareParams(True, threshold, intensity, ghosts, seed))


def test_flare_identity_cases():
    f = hdr()
    assert np.array_equal(apply_lens_flare(f, _flare(), stream(0)), f)
    f[3, 3] = 500.0
    assert np.array_equal(apply_lens_flare(f, _flare(intensity=0.0), stream(0)), f)


def test_flare_energy_for_centered_source():
    f = np.zeros((201, 201, 3), np.float32)
    f[100, 100] = (300.0, 200.0, 100.0)
    out = apply_lens_flare(f, _flare(intensity=0.03, ghosts=5), stream(4))
    added = out.astype(np.float64) - f
    source_energy = 600.0
    assert added.sum() == pytest.approx(0.03 * source_energy, rel=1e-3)
    # all ghosts land on the center, so the added light is centered too
    w = added.sum(-1)
    yy, xx = np.mgrid[0:201, 0:201]
    assert (w * yy).sum() / w.sum() == pytest.approx(100.0, abs=1e-3)
    assert (w * xx).sum() / w.sum() == pytest.approx(100.0, abs=1e-3)


def test_flare_energy_never_exceeds_bound():
    f = np.zeros((64, 64, 3), np.float32)
    f[5, 7] = 400.0
    f[50, 40] = 900.0
    out = apply_lens_flare(f, _flare(intensity=0.05), stream(2))
    added = float(out.sum() - f.sum())
    assert 0 < added <= 0.05 * float(f.sum()) * (1 + 1e-6)


# -- motion blur ------------------------------------------------------------------------


def test_motion_blur_zero_length_identity():
    f = hdr()
    assert np.array_equal(apply_motion_blur(f, 0.0, 1.0), f)
    with pytest.raises(ImagingError):
        apply_motion_blur(f, -1.0, 0.0)


def test_horizontal_impulse_spreads_over_five_texels():
    f = np.zeros((21, 21, 3), np.float32)
    f[10, 10] = 1.0
    out = apply_motion_blur(f, 4.0, 0.0)[..., 0]
    assert out.sum() == pytest.approx(1.0, abs=1e-5)
    assert np.count_nonzero(out > 1e-6) == 5
    assert np.allclose(out[10, 8:13].sum(), 1.0, atol=1e-5)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.0, 10.0), st.floats(0.0, 2 * math.pi), st.floats(0.01, 5.0))
def test_convolution_stages_preserve_constants(length, angle, value):
    f = np.full((20, 24, 3), value, np.float32)
    tol = 1e-5 * max(1.0, value)
    assert np.allclose(apply_motion_blur(f, length, angle), f, atol=tol)
    assert np.allclose(apply_psf(f, [PsfComponent(0.6, 0.3 + length / 4), PsfComponent(0.4, 2.0)]), f, atol=tol)
    ca = ImagingParams(chroma_ab=ChromaParams("radial", length / 5 - 1, 1 - length / 5))
    assert np.allclose(apply_chromatic_aberration(f, ca), f, atol=tol)
    ca_line = ImagingParams(chroma_ab=ChromaParams("line_kernel", line_length_px=length, line_angle_rad=angle))
    assert np.allclose(apply_chromatic_aberration(f, ca_line), f, atol=tol)
    assert line_kernel(length, angle).sum() == pytest.approx(1.0)


# -- chromatic aberration ------------------------------------------------------------------


def test_radial_fringe_matches_resampling_oracle():
    n, radius = 129, 40
    c = (n - 1) / 2
    yy, xx = np.mgrid[0:n, 0:n]
    disc = (((yy - c) ** 2 + (xx - c) ** 2) <= radius**2).astype(np.float32)
    f = np.repeat(disc[..., None], 3, axis=2)
    r_max = math.hypot(c, c)
    shift = 2.0 * r_max / radius  # two pixels of displacement at the disc edge
    out = apply_chromatic_aberration(f, ImagingParams(chroma_ab=ChromaParams("radial", shift, 0.0)))
    k = shift / r_max
    x = np.arange(n, dtype=np.float64)
    oracle = np.interp(x - k * (x - c), x, disc[int(c)])
    assert np.allclose(out[int(c), :, 0], oracle, atol=1e-6)
    fringe = (out[int(c), :, 0] - out[int(c), :, 1]) > 0.5
    right = fringe[int(c):]
    assert 1 <= right.sum() <= 3
    assert np.array_equal(out[..., 1], f[..., 1])


def test_line_kernel_fringe_on_opposite_edges():
    f = np.zeros((16, 32, 3), np.float32)
    f[:, 12:20] = 1.0
    p = ImagingParams(chroma_ab=ChromaParams("line_kernel", line_length_px=3.0, line_angle_rad=0.0))
    out = apply_chromatic_aberration(f, p)
    red_extra = (out[8, :, 0] > 0.05) & (f[8, :, 0] == 0)
    blue_extra = (out[8, :, 2] > 0.05) & (f[8, :, 2] == 0)
    assert red_extra[20:].any() and not red_extra[:12].any()
    assert blue_extra[:12].any() and not blue_extra[20:].any()


# -- noise --------------------------------------------------------------------------------


def test_noise_identity():
    f = hdr()
    assert np.array_equal(apply_noise(f, ImagingParams(), stream(0)), f)


def test_shot_noise_variance():
    v, s = 0.5, 0.05
    f = np.full((578, 578, 3), v, np.float32)
    out = apply_noise(f, ImagingParams(noise=NoiseParams(shot_scale=s)), stream(1))
    assert out.var() == pytest.approx(s * s * v, rel=0.05)


def test_read_noise_on_black_is_half_normal():
    sigma = 0.02
    f = np.zeros((578, 578, 3), np.float32)
    out = apply_noise(f, ImagingParams(noise=NoiseParams(read_sigma=sigma)), stream(2)).astype(np.float64)
    assert out.min() == 0.0
    assert out.mean() == pytest.approx(sigma / math.sqrt(2 * math.pi), rel=0.02)
    assert out.var() == pytest.approx(sigma**2 * (0.5 - 1 / (2 * math.pi)), rel=0.05)


# -- tonemap, sharpen, demosaic -------------------------------------------------------------


def test_tonemap_basics():
    assert not np.any(tonemap_quantize(np.zeros((4, 4, 3), np.float32)))
    assert abs(int(tonemap_quantize(np.full((4, 4, 3), 0.18, np.float32), 1.0)[0, 0, 0]) - 118) <= 1
    f = np.full((4, 4, 3), 3.7, np.float32)
    assert exposure_scale(f) == pytest.approx(0.18 / 3.7)


@given(st.lists(st.floats(0, 20, allow_nan=False), min_size=2, max_size=64))
def test_tonemap_is_monotone(values):
    v = np.array(values, np.float32)
    f = np.repeat(v[None, :, None], 3, axis=2)
    ldr = tonemap_quantize(f, 0.3)[0, :, 0].astype(int)
    order = np.argsort(v, kind="stable")
    assert np.all(np.diff(ldr[order]) >= 0)


def test_unsharp_identity_and_constant():
    img = np.random.default_rng(0).integers(0, 256, (10, 10, 3), dtype=np.uint8)
    assert np.array_equal(apply_unsharp_mask(img, 0.0, 1.0), img)
    const = np.full((10, 10, 3), 77, np.uint8)
    assert np.array_equal(apply_unsharp_mask(const, 1.5, 1.2), const)


def test_unsharp_step_matches_direct_formula():
    sigma, amount = 1.0, 1.0
    row = np.where(np.arange(20) < 10, 60.0, 180.0)
    img = np.repeat(np.repeat(row[None, :, None], 6, axis=0), 3, axis=2).astype(np.uint8)
    out = apply_unsharp_mask(img, amount, sigma)[3, :, 0].astype(int)
    r = int(4 * sigma + 0.5)
    taps = np.exp(-0.5 * (np.arange(-r, r + 1) / sigma) ** 2)
    taps /= taps.sum()
    padded = np.pad(row, r, mode="symmetric")
    blur = np.array([np.dot(padded[i:i + 2 * r + 1], taps) for i in range(20)])
    expected = np.clip(np.floor(row + amount * (row - blur) + 0.5), 0, 255).astype(int)
    assert np.array_equal(out, expected)
    assert out[10] > 180 and out[9] < 60


def test_demosaic_constant_bit_exact():
    img = np.zeros((13, 17, 3), np.uint8)
    img[:] = (31, 200, 97)
    assert np.array_equal(apply_demosaic_artifacts(img), img)


def test_demosaic_ramp_interior():
    ramp = np.repeat(np.repeat((np.arange(64) * 3)[None, :, None], 16, axis=0), 3, axis=2).astype(np.uint8)
    out = apply_demosaic_artifacts(ramp)
    diff = np.abs(out.astype(int) - ramp.astype(int))[1:-1, 1:-1]
    assert diff.max() <= 1


def test_demosaic_checker_zipper():
    yy, xx = np.mgrid[0:32, 0:32]
    img = np.zeros((32, 32, 3), np.uint8)
    img[:] = 255
    red = (yy + xx) % 2 == 0
    img[red] = (255, 0, 0)
    out = apply_demosaic_artifacts(img)
    assert np.mean(np.any(out != img, axis=-1)) >= 0.01


# -- whole chain ------------------------------------------------------------------------------


def _identity_params():
    return sample_imaging_params(stream(0), identity_imaging())


def test_identity_chain_equals_tonemap():
    f = hdr(3)
    p = _identity_params()
    ldr, used = process(f, p)
    assert np.array_equal(ldr, tonemap_quantize(f))
    assert used.exposure_scale == pytest.approx(exposure_scale(f))


def test_chain_is_deterministic():
    f = hdr(4)
    p = sample_imaging_params(stream(9), ImagingConfig())
    a, _ = process(f, p)
    b, _ = process(f, p)
    assert np.array_equal(a, b)


def test_motion_blur_only_composition():
    f = hdr(5, (40, 40))
    p = _identity_params()
    p.motion_blur = MotionBlurParams(10.0, 0.4)
    ldr, _ = process(f, p)
    assert np.array_equal(ldr, tonemap_quantize(apply_motion_blur(f, 10.0, 0.4), exposure_scale(f)))


def test_params_round_trip_and_ranges():
    for seed in range(20):
        p = sample_imaging_params(stream(seed), ImagingConfig())
        assert 0.0 <= p.motion_blur.length_px <= 10.0
        assert all(0.7 <= g <= 1.3 for g in p.wb_gains)
        back = ImagingParams.from_dict(p.to_dict())
        assert back.to_dict() == p.to_dict()


def test_invalid_frames_rejected():
    with pytest.raises(ImagingError):
        process(np.zeros((4, 4), np.float32), _identity_params())
    bad = np.zeros((4, 4, 3), np.float32)
    bad[0, 0, 0] = np.nan
    with pytest.raises(ImagingError):
        process(bad, _identity_params())


def test_sharpen_and_demosaic_in_chain():
    f = hdr(6)
    p = _identity_params()
    p.sharpen = SharpenParams(0.8, 1.0)
    p.demosaic = DemosaicParams(True)
    ldr, _ = process(f, p)
    expected = apply_demosaic_artifacts(apply_unsharp_mask(tonemap_quantize(f), 0.8, 1.0))
    assert np.array_equal(ldr, expected)
