"""Worn diffuse textures from clean sign templates.

The clean template is split into soft per-color components, each component
is faded by one factor for the whole sign, then a thresholded value-noise dirt
mask and hard-edged sticker rectangles are composited on top. Alpha is never
modified, so the plate outline stays exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from . import rng as rngmod
from .config import PALETTE_NAMES, DefectConfig
from .distributions import draw, draw_int

# sRGB 8-bit reference colors; the bundled templates are drawn with exactly these
PALETTE_SRGB8 = {
    "black": (0, 0, 0),
    "white": (255, 255, 255),
    "red": (200, 16, 30),
    "orange": (240, 120, 20),
    "yellow": (250, 200, 0),
    "green": (0, 130, 70),
    "blue": (0, 80, 160),
}
FADE_TARGET = {name: (0.85, 0.85, 0.85) for name in PALETTE_NAMES}
FADE_TARGET["black"] = (0.45, 0.45, 0.45)

SOFTMAX_TEMPERATURE = 0.05
# linear-RGB distances: full membership up to MATCH_FULL, none beyond MATCH_RADIUS
MATCH_FULL = 0.1
MATCH_RADIUS = 0.2
MAX_STICKERS = 5


def srgb_to_linear(v):
    v = np.asarray(v, dtype=np.float32)
    return np.where(v <= 0.04045, v / 12.92, ((v + 0.055) / 1.055) ** 2.4).astype(np.float32)


def linear_to_srgb(v):
    v = np.clip(np.asarray(v, dtype=np.float64), 0.0, 1.0)
    return np.where(v <= 0.0031308, 12.92 * v, 1.055 * v ** (1.0 / 2.4) - 0.055)


PALETTE_LINEAR = np.stack([srgb_to_linear(np.array(PALETTE_SRGB8[n]) / 255.0) for n in PALETTE_NAMES])


class DefectError(ValueError):
    pass


@dataclass
class ColorComponents:
    masks: np.ndarray  # (H, W, 7), order of PALETTE_NAMES
    residual: np.ndarray  # (H, W)

    def mask(self, name: str) -> np.ndarray:
        return self.masks[..., PALETTE_NAMES.index(name)]


@dataclass
class Sticker:
    center: tuple[float, float]
    width: float
    height: float
    rotation_rad: float
    gray_level: float


@dataclass
class DirtParams:
    octaves: int = 4
    base_frequency: float = 6.0
    threshold: float = 1.0
    gray_level: float = 0.5
    opacity: float = 0.0
    persistence: float = 0.5
    noise_seed: int = 0


@dataclass
class DefectParams:
    fade: dict[str, float] = field(default_factory=lambda: {n: 0.0 for n in PALETTE_NAMES})
    dirt: DirtParams = field(default_factory=DirtParams)
    stickers: list[Sticker] = field(default_factory=list)
    texture_resolution_px_per_cm: float = 8.0

    def to_dict(self) -> dict:
        return {
            "fade": dict(self.fade),
            "dirt": vars(self.dirt).copy(),
            "stickers": [
                {"center": list(s.center), "width": s.width, "height": s.height,
                 "rotation_rad": s.rotation_rad, "gray_level": s.gray_level}
                for s in self.stickers
            ],
            "texture_resolution_px_per_cm": self.texture_resolution_px_per_cm,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DefectParams":
        return cls(
            fade={k: float(v) for k, v in d["fade"].items()},
            dirt=DirtParams(**d["dirt"]),
            stickers=[
                Sticker(tuple(s["center"]), s["width"], s["height"], s["rotation_rad"], s["gray_level"])
                for s in d["stickers"]
            ],
            texture_resolution_px_per_cm=float(d["texture_resolution_px_per_cm"]),
        )


@dataclass
class DiffuseTexture:
    rgba: np.ndarray
    params: DefectParams | None
    source: str = "defects"


def separate_colors(template: np.ndarray) -> ColorComponents:
    """Soft assignment of every texel to the nearest palette colors.

    Within ``MATCH_RADIUS`` (linear RGB) the candidate colors share the texel
    by a softmax over negative distance; membership ramps from 1 at
    ``MATCH_FULL`` to 0 at ``MATCH_RADIUS`` and the remainder is residual.
    Fully transparent texels belong to no color.
    """
    rgb = srgb_to_linear(template[..., :3])
    alpha = template[..., 3]
    d = np.sqrt(((rgb[..., None, :] - PALETTE_LINEAR[None, None]) ** 2).sum(-1))
    inside = d < MATCH_RADIUS
    logits = np.where(inside, -d / SOFTMAX_TEMPERATURE, -np.inf)
    top = np.max(logits, axis=-1, keepdims=True)
    any_inside = np.isfinite(top)
    with np.errstate(invalid="ignore"):
        w = np.where(inside, np.exp(logits - np.where(any_inside, top, 0.0)), 0.0)
    total = w.sum(-1, keepdims=True)
    w = np.divide(w, total, out=np.zeros_like(w), where=total > 0)
    dmin = d.min(-1)
    gate = np.clip((MATCH_RADIUS - dmin) / (MATCH_RADIUS - MATCH_FULL), 0.0, 1.0)
    gate = np.where(alpha > 0, gate, 0.0)
    masks = (w * gate[..., None]).astype(np.float32)
    residual = (1.0 - masks.sum(-1)).astype(np.float32)
    return ColorComponents(masks, residual)


def sample_defect_params(rng: np.random.Generator, config: DefectConfig) -> DefectParams:
    """Draw one parameter set.

    Draw order: one fade factor per palette color (palette order), dirt
    frequency, threshold, gray level, opacity, a 64-bit noise seed, the sticker
    count, then per sticker: center u, center v, width, height, rotation,
    gray level.
    """
    for name, dist in config.fade.items():
        lo, hi = dist.support
        if lo < 0 or hi > 1:
            raise DefectError(f"fade distribution for {name} leaves [0, 1]")
    lo, hi = config.sticker_count.support
    if lo < 0 or hi > MAX_STICKERS:
        raise DefectError(f"sticker count must lie in [0, {MAX_STICKERS}]")
    fade = {}
    for name in PALETTE_NAMES:
        dist = config.fade.get(name)
        u = float(rng.random())
        fade[name] = dist.ppf(u) if dist is not None else 0.0
    dirt = DirtParams(
        octaves=config.dirt_octaves,
        base_frequency=draw(config.dirt_frequency, rng),
        threshold=draw(config.dirt_threshold, rng),
        gray_level=draw(config.dirt_gray, rng),
        opacity=draw(config.dirt_opacity, rng),
        persistence=config.dirt_persistence,
        noise_seed=int(rng.integers(0, 2**63, dtype=np.int64)),
    )
    count = draw_int(config.sticker_count, rng)
    stickers = []
    for _ in range(count):
        cu = 0.15 + 0.7 * float(rng.random())
        cv = 0.15 + 0.7 * float(rng.random())
        w = draw(config.sticker_size, rng)
        h = draw(config.sticker_size, rng)
        rot = math.pi * float(rng.random())
        gray = draw(config.sticker_gray, rng)
        stickers.append(Sticker((cu, cv), w, h, rot, gray))
    return DefectParams(fade, dirt, stickers, config.texture_px_per_cm)


def apply_fading(components: ColorComponents, template: np.ndarray, fade: dict[str, float]) -> np.ndarray:
    if components.masks.shape[:2] != template.shape[:2]:
        raise DefectError("component masks and template differ in size")
    f = np.array([fade.get(n, 0.0) for n in PALETTE_NAMES], dtype=np.float32)
    target = np.array([FADE_TARGET[n] for n in PALETTE_NAMES], dtype=np.float32)
    out = np.array(template, dtype=np.float32, copy=True)
    if not np.any(f):
        return out
    mf = components.masks * f
    rgb = out[..., :3]
    # orig + sum_c m_c f_c (target_c - orig)
    out[..., :3] = rgb + mf @ target - rgb * mf.sum(-1, keepdims=True)
    return out


def value_noise(width: int, height: int, frequency: float, lattice: np.ndarray) -> np.ndarray:
    """Bilinear lattice value noise; ``frequency`` in cycles per texture width."""
    xs = (np.arange(width) + 0.5) / width * frequency
    ys = (np.arange(height) + 0.5) / width * frequency
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    tx = (xs - x0)[None, :]
    ty = (ys - y0)[:, None]
    v00 = lattice[y0[:, None], x0[None, :]]
    v01 = lattice[y0[:, None], x0[None, :] + 1]
    v10 = lattice[y0[:, None] + 1, x0[None, :]]
    v11 = lattice[y0[:, None] + 1, x0[None, :] + 1]
    top = v00 + (v01 - v00) * tx
    bottom = v10 + (v11 - v10) * tx
    return top + (bottom - top) * ty


def lattice_shape(width: int, height: int, frequency: float) -> tuple[int, int]:
    return (int(math.ceil(frequency * height / width)) + 2, int(math.ceil(frequency)) + 2)


def fractal_noise(width: int, height: int, params: DirtParams, rng: np.random.Generator) -> np.ndarray:
    """Sum of ``octaves`` value-noise layers, normalized to [0, 1)."""
    total = np.zeros((height, width), dtype=np.float64)
    amp, norm = 1.0, 0.0
    for octave in range(params.octaves):
        freq = params.base_frequency * 2.0**octave
        lattice = rng.random(lattice_shape(width, height, freq))
        total += amp * value_noise(width, height, freq, lattice)
        norm += amp
        amp *= params.persistence
    return total / norm


def generate_dirt_mask(params: DirtParams, width: int, height: int, rng: np.random.Generator) -> np.ndarray:
    if width < 1 or height < 1:
        raise DefectError("dirt mask needs positive dimensions")
    noise = fractal_noise(width, height, params, rng)
    return np.where(noise > params.threshold, params.opacity, 0.0).astype(np.float32)


def rasterize_sticker(sticker: Sticker, width: int, height: int) -> np.ndarray:
    """Boolean coverage of a rotated rectangle, tested at texel centers, half-open."""
    px = np.arange(width) + 0.5
    py = np.arange(height) + 0.5
    dx = px[None, :] - sticker.center[0] * width
    dy = py[:, None] - sticker.center[1] * height
    c, s = math.cos(sticker.rotation_rad), math.sin(sticker.rotation_rad)
    du = c * dx + s * dy
    dv = -s * dx + c * dy
    hw = 0.5 * sticker.width * width
    hh = 0.5 * sticker.height * height
    return (du >= -hw) & (du < hw) & (dv >= -hh) & (dv < hh)


def compose_texture(faded: np.ndarray, dirt: np.ndarray, stickers: list[Sticker], dirt_gray: float,
                    params: DefectParams | None = None) -> DiffuseTexture:
    if dirt.shape != faded.shape[:2]:
        raise DefectError("dirt mask and texture differ in size")
    out = np.array(faded, dtype=np.float32, copy=True)
    if np.any(dirt):
        rgb = out[..., :3]
        out[..., :3] = rgb + dirt[..., None] * (np.float32(dirt_gray) - rgb)
    h, w = out.shape[:2]
    for sticker in stickers:
        cover = rasterize_sticker(sticker, w, h)
        out[cover, :3] = np.float32(sticker.gray_level)
    out[..., 3] = faded[..., 3]
    return DiffuseTexture(out, params)


def texture_size_px(template_shape: tuple[int, int], plate_size_m: tuple[float, float], px_per_cm: float):
    w_m, h_m = plate_size_m
    return max(1, int(round(w_m * 100 * px_per_cm))), max(1, int(round(h_m * 100 * px_per_cm)))


def resample_template(template: np.ndarray, width: int, height: int) -> np.ndarray:
    """Resize a straight-alpha template; alpha stays exactly 0 outside the plate."""
    if template.shape[1] == width and template.shape[0] == height:
        return np.array(template, dtype=np.float32, copy=True)
    a = np.clip(np.rint(template * 255.0), 0, 255).astype(np.uint8)
    im = Image.fromarray(a).resize((width, height), Image.Resampling.BILINEAR)
    return np.asarray(im, dtype=np.float32) / 255.0


_COMPONENT_CACHE: dict = {}


def _cached_components(key, template: np.ndarray) -> ColorComponents:
    comp = _COMPONENT_CACHE.get(key)
    if comp is None:
        if len(_COMPONENT_CACHE) > 16:
            _COMPONENT_CACHE.clear()
        comp = separate_colors(template)
        _COMPONENT_CACHE[key] = comp
    return comp


def make_texture(template: np.ndarray, params: DefectParams, cache_key=None) -> DiffuseTexture:
    """Full defect chain on a template already at texture resolution."""
    comp = separate_colors(template) if cache_key is None else _cached_components(cache_key, template)
    faded = apply_fading(comp, template, params.fade)
    h, w = template.shape[:2]
    dirt = generate_dirt_mask(params.dirt, w, h, rngmod.stream(params.dirt.noise_seed))
    return compose_texture(faded, dirt, params.stickers, params.dirt.gray_level, params)
