"""Camera artifacts applied to the rendered HDR frame.

Fixed stage order (optics, then sensor, then ISP):

    AEC/WB -> PSF -> lens flare -> motion blur -> chromatic aberration
    -> noise -> tonemap/quantize -> unsharp mask -> demosaic

HDR frames are float32 (H, W, 3) linear RGB; LDR frames are uint8 sRGB.
``sample_imaging_params`` draws every stochastic value once; ``process``
replays a parameter set deterministically, so the metadata alone reproduces
an image.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage

from .config import ImagingConfig
from .distributions import draw, draw_int
from .rng import stream

STAGE_ORDER = ("aec_wb", "psf", "flare", "motion_blur", "chroma_ab", "noise", "tonemap", "sharpen", "demosaic")
LUMA = np.array([0.2126, 0.7152, 0.0722], dtype=np.float64)
MID_GRAY = 0.18
MAX_BLUR_PX = 10.0
MAX_FLARE_SOURCES = 8
STREAK_FRACTION = 0.3


class ImagingError(ValueError):
    pass


@dataclass
class PsfComponent:
    weight: float
    sigma_px: float


@dataclass
class FlareParams:
    enabled: bool = False
    luminance_threshold: float = 50.0
    intensity: float = 0.0
    ghost_count: int = 0
    seed: int = 0


@dataclass
class MotionBlurParams:
    length_px: float = 0.0
    angle_rad: float = 0.0


@dataclass
class ChromaParams:
    mode: str = "radial"
    shift_r_px: float = 0.0
    shift_b_px: float = 0.0
    line_length_px: float = 0.0
    line_angle_rad: float = 0.0


@dataclass
class NoiseParams:
    shot_scale: float = 0.0
    read_sigma: float = 0.0
    seed: int = 0


@dataclass
class SharpenParams:
    amount: float = 0.0
    radius_px: float = 1.0


@dataclass
class DemosaicParams:
    enabled: bool = False
    pattern: str = "BGGR"


@dataclass
class ImagingParams:
    aec_log2_gain: float = 0.0
    wb_gains: tuple[float, float, float] = (1.0, 1.0, 1.0)
    psf: list[PsfComponent] = field(default_factory=list)
    flare: FlareParams = field(default_factory=FlareParams)
    motion_blur: MotionBlurParams = field(default_factory=MotionBlurParams)
    chroma_ab: ChromaParams = field(default_factory=ChromaParams)
    noise: NoiseParams = field(default_factory=NoiseParams)
    sharpen: SharpenParams = field(default_factory=SharpenParams)
    demosaic: DemosaicParams = field(default_factory=DemosaicParams)
    exposure_scale: float | None = None  # filled in by process()

    def validate(self) -> None:
        if self.psf:
            total = sum(c.weight for c in self.psf)
            if abs(total - 1.0) > 1e-6:
                raise ImagingError(f"psf weights sum to {total}, expected 1")
            if any(c.sigma_px < 0 or c.weight < 0 for c in self.psf):
                raise ImagingError("psf weights and sigmas must be non-negative")
        if not 0.0 <= self.motion_blur.length_px <= MAX_BLUR_PX:
            raise ImagingError(f"motion blur length {self.motion_blur.length_px} outside [0, {MAX_BLUR_PX}]")
        if self.chroma_ab.mode not in ("radial", "line_kernel"):
            raise ImagingError(f"unknown chromatic aberration mode {self.chroma_ab.mode!r}")
        if self.noise.shot_scale < 0 or self.noise.read_sigma < 0:
            raise ImagingError("noise scales must be non-negative")
        values = [self.aec_log2_gain, *self.wb_gains, self.flare.intensity, self.motion_blur.angle_rad,
                  self.chroma_ab.shift_r_px, self.chroma_ab.shift_b_px, self.sharpen.amount, self.sharpen.radius_px]
        if not all(math.isfinite(v) for v in values):
            raise ImagingError("imaging parameters must be finite")

    def to_dict(self) -> dict:
        return {
            "order": list(STAGE_ORDER),
            "aec": {"log2_gain": self.aec_log2_gain},
            "wb": {"gains": list(self.wb_gains)},
            "psf": {"components": [asdict(c) for c in self.psf]},
            "flare": asdict(self.flare),
            "motion_blur": asdict(self.motion_blur),
            "chroma_ab": asdict(self.chroma_ab),
            "noise": asdict(self.noise),
            "tonemap": {"exposure_scale": self.exposure_scale},
            "sharpen": asdict(self.sharpen),
            "demosaic": asdict(self.demosaic),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ImagingParams":
        if list(d.get("order", STAGE_ORDER)) != list(STAGE_ORDER):
            raise ImagingError("recorded stage order differs from this version's order")
        return cls(
            aec_log2_gain=float(d["aec"]["log2_gain"]),
            wb_gains=tuple(float(v) for v in d["wb"]["gains"]),
            psf=[PsfComponent(**c) for c in d["psf"]["components"]],
            flare=FlareParams(**d["flare"]),
            motion_blur=MotionBlurParams(**d["motion_blur"]),
            chroma_ab=ChromaParams(**d["chroma_ab"]),
            noise=NoiseParams(**d["noise"]),
            sharpen=SharpenParams(**d["sharpen"]),
            demosaic=DemosaicParams(**d["demosaic"]),
            exposure_scale=d.get("tonemap", {}).get("exposure_scale"),
        )


def sample_imaging_params(rng: np.random.Generator, config: ImagingConfig) -> ImagingParams:
    """Draw one parameter set.

    Draw order: AEC gain; WB gains R, G, B; PSF sigma scale; flare enable,
    threshold, intensity, ghost count; blur length, angle; chroma shift R,
    shift B, line length, line angle; shot scale, read sigma; sharpen
    amount, radius; demosaic enable; then the flare and noise seeds.
    """
    c = config
    if abs(sum(c.psf.weights) - 1.0) > 1e-6 or len(c.psf.weights) != len(c.psf.sigmas_px):
        raise ImagingError("psf weights must match sigmas and sum to 1")
    gain = draw(c.aec.log2_gain, rng)
    wb = tuple(draw(c.wb.gain, rng) for _ in range(3))
    scale = draw(c.psf.sigma_scale, rng)
    psf = [PsfComponent(float(w), float(s) * scale) for w, s in zip(c.psf.weights, c.psf.sigmas_px)]
    flare_on = float(rng.random()) < c.flare.probability
    threshold = draw(c.flare.luminance_threshold, rng)
    intensity = draw(c.flare.intensity, rng)
    ghosts = draw_int(c.flare.ghost_count, rng)
    length = draw(c.motion_blur.length, rng)
    angle = draw(c.motion_blur.angle, rng)
    shift_r = draw(c.chroma.shift_r, rng)
    shift_b = draw(c.chroma.shift_b, rng)
    line_length = draw(c.chroma.line_length, rng)
    line_angle = draw(c.chroma.line_angle, rng)
    shot = draw(c.noise.shot_scale, rng)
    read = draw(c.noise.read_sigma, rng)
    amount = draw(c.sharpen.amount, rng)
    radius = draw(c.sharpen.radius_px, rng)
    demosaic_on = float(rng.random()) < c.demosaic.probability
    flare_seed = int(rng.integers(0, 2**63, dtype=np.int64))
    noise_seed = int(rng.integers(0, 2**63, dtype=np.int64))
    p = ImagingParams(
        aec_log2_gain=gain,
        wb_gains=wb,
        psf=psf,
        flare=FlareParams(flare_on, threshold, intensity if flare_on else 0.0, ghosts, flare_seed),
        motion_blur=MotionBlurParams(length, angle),
        chroma_ab=ChromaParams(c.chroma.mode, shift_r, shift_b, line_length, line_angle),
        noise=NoiseParams(shot, read, noise_seed),
        sharpen=SharpenParams(amount, radius),
        demosaic=DemosaicParams(demosaic_on, "BGGR"),
    )
    p.validate()
    return p


# -- HDR stages ------------------------------------------------------------------------


def apply_aec_wb(f: np.ndarray, p: ImagingParams) -> np.ndarray:
    if p.aec_log2_gain == 0.0 and tuple(p.wb_gains) == (1.0, 1.0, 1.0):
        return np.array(f, dtype=np.float32, copy=True)
    gains = np.asarray(p.wb_gains, dtype=np.float64) * 2.0**p.aec_log2_gain
    return (f.astype(np.float64) * gains).astype(np.float32)


def gaussian_taps(sigma: float, radius: int) -> np.ndarray:
    """Sampled 1-D Gaussian over [-radius, radius], normalized to sum 1."""
    k = np.arange(-radius, radius + 1, dtype=np.float64)
    if sigma <= 0:
        return (k == 0).astype(np.float64)
    g = np.exp(-0.5 * (k / sigma) ** 2)
    return g / g.sum()


def psf_kernel(psf: list[PsfComponent]) -> np.ndarray:
    """The full 2-D mixture kernel (for inspection; convolution stays separable)."""
    radius = int(math.ceil(3.0 * max((c.sigma_px for c in psf), default=0.0)))
    k = np.zeros((2 * radius + 1, 2 * radius + 1))
    for c in psf:
        g = gaussian_taps(c.sigma_px, radius)
        k += c.weight * np.outer(g, g)
    return k / k.sum()


def apply_psf(f: np.ndarray, psf: list[PsfComponent]) -> np.ndarray:
    """Convolve with the Gaussian-mixture PSF, truncated at 3 max-sigma, reflective edges."""
    if not psf:
        return np.array(f, dtype=np.float32, copy=True)
    max_sigma = max(c.sigma_px for c in psf)
    radius = int(math.ceil(3.0 * max_sigma))
    if radius == 0:
        return np.array(f, dtype=np.float32, copy=True)
    total = sum(c.weight for c in psf)
    src = f.astype(np.float64)
    out = np.zeros_like(src)
    for c in psf:
        if c.weight == 0:
            continue
        g = gaussian_taps(c.sigma_px, radius)
        tmp = ndimage.convolve1d(src, g, axis=0, mode="reflect")
        out += (c.weight / total) * ndimage.convolve1d(tmp, g, axis=1, mode="reflect")
    return out.astype(np.float32)


def _splat_blob(shape, cy, cx, sigma, weight) -> np.ndarray:
    """A discrete Gaussian blob normalized over its full footprint, cropped to the image."""
    h, w = shape
    r = int(math.ceil(3.0 * sigma)) + 1
    # symmetric about the center: one extra texel only when it is fractional
    iy = np.arange(int(math.floor(cy)) - r, int(math.ceil(cy)) + r + 1)
    ix = np.arange(int(math.floor(cx)) - r, int(math.ceil(cx)) + r + 1)
    gy = np.exp(-0.5 * ((iy - cy) / sigma) ** 2)
    gx = np.exp(-0.5 * ((ix - cx) / sigma) ** 2)
    blob = np.outer(gy, gx)
    blob *= weight / blob.sum()
    out = np.zeros(shape)
    vy = (iy >= 0) & (iy < h)
    vx = (ix >= 0) & (ix < w)
    out[np.ix_(iy[vy], ix[vx])] = blob[np.ix_(vy, vx)]
    return out


def _splat_streak(shape, cy, cx, length, weight) -> np.ndarray:
    h, w = shape
    ix = np.arange(w)
    along = np.exp(-np.abs(ix - cx) / max(length, 1e-6))
    iy = np.arange(int(math.floor(cy)) - 3, int(math.ceil(cy)) + 4)
    across = np.exp(-0.5 * ((iy - cy) / 0.7) ** 2)
    # normalize over the untruncated horizontal extent so cropping only removes energy
    full = np.arange(int(math.floor(cx - 20 * length)) - 1, int(math.ceil(cx + 20 * length)) + 2)
    norm = np.exp(-np.abs(full - cx) / max(length, 1e-6)).sum() * across.sum()
    out = np.zeros(shape)
    vy = (iy >= 0) & (iy < h)
    out[iy[vy]] = np.outer(across[vy], along) * (weight / norm)
    return out


def apply_lens_flare(f: np.ndarray, p: ImagingParams, rng: np.random.Generator) -> np.ndarray:
    """Add ghosts and a streak for every bright source.

    Sources are connected regions with luminance above the threshold, each
    collapsed to its luminance-weighted centroid. The energy added for a
    source is ``intensity`` times its energy (summed over texels and
    channels), split between ``ghost_count`` Gaussian ghosts placed on the line
    through the image center (mirrored to the far side) and one horizontal
    streak; anything falling outside the frame is lost, so the added energy
    never exceeds that bound. Ghost tints are rescaled so they do not change
    the total.
    """
    fl = p.flare
    if not fl.enabled or fl.intensity <= 0 or fl.ghost_count < 0:
        return np.array(f, dtype=np.float32, copy=True)
    src = f.astype(np.float64)
    lum = src @ LUMA
    hot = lum > fl.luminance_threshold
    if not hot.any():
        return np.array(f, dtype=np.float32, copy=True)
    labels, n = ndimage.label(hot)
    idx = np.arange(1, n + 1)
    energy = ndimage.sum(src.sum(-1), labels, idx)
    chan = np.stack([ndimage.sum(src[..., c], labels, idx) for c in range(3)], axis=-1)
    cy = ndimage.sum(lum * np.arange(lum.shape[0])[:, None], labels, idx) / ndimage.sum(lum, labels, idx)
    cx = ndimage.sum(lum * np.arange(lum.shape[1])[None, :], labels, idx) / ndimage.sum(lum, labels, idx)
    order = np.argsort(-energy, kind="stable")[:MAX_FLARE_SOURCES]
    h, w = lum.shape
    my, mx = (h - 1) / 2.0, (w - 1) / 2.0
    diag = math.hypot(h, w)
    n_ghosts = int(fl.ghost_count)
    # ghost layout depends only on the stage seed, identical for every source
    positions = rng.uniform(0.2, 1.6, size=n_ghosts)
    sigmas = rng.uniform(0.01, 0.05, size=n_ghosts) * diag
    tints = rng.uniform(0.5, 1.0, size=(n_ghosts, 3))
    shares = rng.uniform(0.5, 1.0, size=n_ghosts)
    shares = shares / shares.sum() if n_ghosts else shares
    ghost_part = 1.0 - STREAK_FRACTION if n_ghosts else 0.0
    out = src.copy()
    for k in order:
        total = fl.intensity * energy[k]
        cvec = chan[k]
        for g in range(n_ghosts):
            t = tints[g] * cvec.sum() / max((tints[g] * cvec).sum(), 1e-300)
            gy = my - positions[g] * (cy[k] - my)
            gx = mx - positions[g] * (cx[k] - mx)
            blob = _splat_blob((h, w), gy, gx, sigmas[g], total * ghost_part * shares[g])
            out += blob[..., None] * (t * cvec / cvec.sum())[None, None, :]
        streak = _splat_streak((h, w), cy[k], cx[k], 0.08 * w, total * (1.0 - ghost_part))
        out += streak[..., None] * (cvec / cvec.sum())[None, None, :]
    return out.astype(np.float32)


def line_kernel(length: float, angle: float) -> np.ndarray:
    """Unit-sum kernel of a centered segment, rasterized with bilinear splats."""
    half = length / 2.0
    r = int(math.ceil(half)) + 1
    k = np.zeros((2 * r + 1, 2 * r + 1))
    n = max(2, int(math.ceil(4 * length)) + 1)
    ts = np.linspace(-half, half, n)
    xs = r + ts * math.cos(angle)
    ys = r - ts * math.sin(angle)
    for x, y in zip(xs, ys):
        x0, y0 = int(math.floor(x)), int(math.floor(y))
        fx, fy = x - x0, y - y0
        k[y0, x0] += (1 - fx) * (1 - fy)
        k[y0, x0 + 1] += fx * (1 - fy)
        k[y0 + 1, x0] += (1 - fx) * fy
        k[y0 + 1, x0 + 1] += fx * fy
    return k / k.sum()


def _convolve_rgb(f: np.ndarray, kernel: np.ndarray, channels=(0, 1, 2)) -> np.ndarray:
    out = f.astype(np.float64)
    for c in channels:
        out[..., c] = ndimage.convolve(out[..., c], kernel, mode="reflect")
    return out.astype(np.float32)


def apply_motion_blur(f: np.ndarray, length_px: float, angle: float) -> np.ndarray:
    if length_px < 0:
        raise ImagingError("motion blur length must be non-negative")
    if length_px < 0.5:
        return np.array(f, dtype=np.float32, copy=True)
    return _convolve_rgb(f, line_kernel(length_px, angle))


def _one_sided_line_kernel(length: float, angle: float) -> np.ndarray:
    """Segment from the origin to ``length`` along ``angle`` (used by the line-kernel CA mode)."""
    r = int(math.ceil(length)) + 1
    k = np.zeros((2 * r + 1, 2 * r + 1))
    n = max(2, int(math.ceil(4 * length)) + 1)
    for t in np.linspace(0.0, length, n):
        x, y = r + t * math.cos(angle), r - t * math.sin(angle)
        x0, y0 = int(math.floor(x)), int(math.floor(y))
        fx, fy = x - x0, y - y0
        k[y0, x0] += (1 - fx) * (1 - fy)
        k[y0, x0 + 1] += fx * (1 - fy)
        k[y0 + 1, x0] += (1 - fx) * fy
        k[y0 + 1, x0 + 1] += fx * fy
    return k / k.sum()


def apply_chromatic_aberration(f: np.ndarray, p: ImagingParams) -> np.ndarray:
    """Displace R and B relative to G.

    ``radial`` mode resamples R and B bilinearly at ``x - s * (x - c) / r_max``
    where ``c`` is the image center and ``r_max`` the center-to-corner
    distance, i.e. a lateral magnification error that reaches ``s`` pixels at
    the corners. ``line_kernel`` mode instead smears R along ``line_angle``
    and B the opposite way with one-sided segments of ``line_length_px``.
    """
    ca = p.chroma_ab
    out = np.array(f, dtype=np.float32, copy=True)
    if ca.mode == "line_kernel":
        if ca.line_length_px < 0.5:
            return out
        out[..., 0] = _convolve_rgb(f, _one_sided_line_kernel(ca.line_length_px, ca.line_angle_rad), (0,))[..., 0]
        out[..., 2] = _convolve_rgb(f, _one_sided_line_kernel(ca.line_length_px, ca.line_angle_rad + math.pi),
                                    (2,))[..., 2]
        return out
    if ca.shift_r_px == 0.0 and ca.shift_b_px == 0.0:
        return out
    h, w = f.shape[:2]
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    r_max = math.hypot(cy, cx) or 1.0
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    for c, s in ((0, ca.shift_r_px), (2, ca.shift_b_px)):
        if s == 0.0:
            continue
        k = s / r_max
        coords = np.stack([yy - k * (yy - cy), xx - k * (xx - cx)])
        out[..., c] = ndimage.map_coordinates(f[..., c].astype(np.float64), coords, order=1, mode="nearest")
    return out


def apply_noise(f: np.ndarray, p: ImagingParams, rng: np.random.Generator) -> np.ndarray:
    """Signal-dependent plus read noise: f + N(0, shot*sqrt(f)) + N(0, read), clamped at 0."""
    nz = p.noise
    if nz.shot_scale == 0.0 and nz.read_sigma == 0.0:
        return np.array(f, copy=True)
    src = np.maximum(f.astype(np.float64), 0.0)
    shot = rng.standard_normal(src.shape)
    read = rng.standard_normal(src.shape)
    out = src + nz.shot_scale * np.sqrt(src) * shot + nz.read_sigma * read
    return np.maximum(out, 0.0).astype(np.float32)


# -- HDR -> LDR ------------------------------------------------------------------------


def exposure_scale(f: np.ndarray) -> float:
    """Gain that maps the median luminance to mid gray (1 for an all-dark frame)."""
    lum = f.astype(np.float64) @ LUMA
    med = float(np.median(lum))
    if med <= 0:
        mean = float(lum.mean())
        return MID_GRAY / mean if mean > 0 else 1.0
    return MID_GRAY / med


def srgb_encode(v: np.ndarray) -> np.ndarray:
    v = np.clip(v, 0.0, 1.0)
    return np.where(v <= 0.0031308, 12.92 * v, 1.055 * np.power(v, 1.0 / 2.4) - 0.055)


def quantize(v: np.ndarray) -> np.ndarray:
    """[0, 1] floats to 8 bit, rounding halves up."""
    return np.clip(np.floor(v * 255.0 + 0.5), 0, 255).astype(np.uint8)


def tonemap_quantize(f: np.ndarray, scale: float | None = None) -> np.ndarray:
    """Exposure-normalize, sRGB-encode and quantize.

    Args:
        f: HDR frame.
        scale: exposure gain; by default computed from ``f`` so that its
            median luminance lands on 0.18.
    """
    if scale is None:
        scale = exposure_scale(f)
    return quantize(srgb_encode(f.astype(np.float64) * scale))


# -- LDR stages ------------------------------------------------------------------------


def apply_unsharp_mask(f: np.ndarray, amount: float, radius: float) -> np.ndarray:
    if amount == 0.0 or radius <= 0:
        return np.array(f, dtype=np.uint8, copy=True)
    src = f.astype(np.float64)
    blur = ndimage.gaussian_filter(src, sigma=(radius, radius, 0), mode="reflect")
    return np.clip(np.floor(src + amount * (src - blur) + 0.5), 0, 255).astype(np.uint8)


_K_RB = np.array([[1, 2, 1], [2, 4, 2], [1, 2, 1]], dtype=np.float64)
_K_G = np.array([[0, 1, 0], [1, 4, 1], [0, 1, 0]], dtype=np.float64)


def bayer_masks(h: int, w: int, pattern: str = "BGGR") -> np.ndarray:
    """(H, W, 3) boolean sample masks; BGGR puts blue at (0, 0) and red at (1, 1)."""
    if pattern != "BGGR":
        raise ImagingError(f"unsupported Bayer pattern {pattern!r}")
    yy, xx = np.mgrid[0:h, 0:w]
    m = np.zeros((h, w, 3), dtype=bool)
    m[..., 2] = (yy % 2 == 0) & (xx % 2 == 0)
    m[..., 1] = (yy + xx) % 2 == 1
    m[..., 0] = (yy % 2 == 1) & (xx % 2 == 1)
    return m


def apply_demosaic_artifacts(f: np.ndarray, pattern: str = "BGGR") -> np.ndarray:
    """Mosaic to a Bayer pattern, then bilinearly interpolate back to RGB.

    Interpolation is normalized convolution with integer kernels, so sample
    sites keep their value and constant images come back bit-exactly.
    """
    h, w = f.shape[:2]
    m = bayer_masks(h, w, pattern)
    src = f.astype(np.float64)
    out = np.empty_like(src)
    for c, k in ((0, _K_RB), (1, _K_G), (2, _K_RB)):
        mask = m[..., c].astype(np.float64)
        num = ndimage.convolve(src[..., c] * mask, k, mode="mirror")
        den = ndimage.convolve(mask, k, mode="mirror")
        out[..., c] = num / den
    return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)


# -- whole chain -----------------------------------------------------------------------


def process(f: np.ndarray, p: ImagingParams, rng: np.random.Generator | None = None):
    """Run the full chain; returns ``(ldr, params)`` with ``exposure_scale`` filled in.

    Stage randomness (flare layout, sensor noise) comes from the seeds stored
    in ``p`` so a recorded parameter set replays exactly; ``rng`` is not
    consumed and exists for call-site symmetry with the single stages.

    The exposure anchor is measured on the input frame before AEC/WB, so a
    drawn exposure error survives into the 8-bit image. Noise is added after
    the anchor gain, i.e. its parameters are in exposure-normalized units.
    """
    p.validate()
    f = np.asarray(f, dtype=np.float32)
    if f.ndim != 3 or f.shape[2] != 3:
        raise ImagingError(f"expected an (H, W, 3) frame, got {f.shape}")
    if not np.all(np.isfinite(f)):
        raise ImagingError("HDR frame contains non-finite values")
    scale = exposure_scale(f)
    x = apply_aec_wb(f, p)
    x = apply_psf(x, p.psf)
    x = apply_lens_flare(x, p, stream(p.flare.seed))
    x = apply_motion_blur(x, p.motion_blur.length_px, p.motion_blur.angle_rad)
    x = apply_chromatic_aberration(x, p)
    # the sensor sees the exposure-normalized signal, so noise levels are
    # relative to mid gray = 0.18 whatever the scene brightness
    x = x.astype(np.float64) * scale
    x = apply_noise(x, p, stream(p.noise.seed))
    ldr = tonemap_quantize(x, 1.0)
    ldr = apply_unsharp_mask(ldr, p.sharpen.amount, p.sharpen.radius_px)
    if p.demosaic.enabled:
        ldr = apply_demosaic_artifacts(ldr, p.demosaic.pattern)
    used = ImagingParams(**{**p.__dict__, "exposure_scale": scale})
    return ldr, used
