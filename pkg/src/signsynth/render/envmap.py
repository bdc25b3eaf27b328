"""Equirectangular environment maps and sun extraction.

Convention: world z is up. Texel row ``i`` covers polar angle
``theta = (i + 0.5) / H * pi`` measured from +z, column ``j`` covers azimuth
``phi = (j + 0.5) / W * 2 pi`` measured from +x toward +y. Rotating a map by
``azimuth`` turns every direction about +z by that angle.
"""

from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from ..fileio import read_hdr

LUMA = np.array([0.2126, 0.7152, 0.0722])


class EnvMapError(ValueError):
    """Raised for unusable environment maps or sets."""


@dataclass(frozen=True)
class EnvironmentMap:
    pixels: np.ndarray  # (H, W, 3) float32 linear radiance
    azimuth: float = 0.0
    name: str = ""

    def __post_init__(self):
        p = self.pixels
        if p.ndim != 3 or p.shape[2] != 3 or p.shape[1] != 2 * p.shape[0]:
            raise EnvMapError(f"environment map must be (H, 2H, 3), got {p.shape}")
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise EnvMapError("environment map texels must be finite and non-negative")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def rotated(self, azimuth: float) -> "EnvironmentMap":
        return EnvironmentMap(self.pixels, float(azimuth), self.name)


@dataclass(frozen=True)
class SunLight:
    direction: tuple[float, float, float]
    radiance: tuple[float, float, float]
    solid_angle_sr: float

    @property
    def irradiance(self) -> np.ndarray:
        """Normal-incidence irradiance (radiance times solid angle)."""
        return np.asarray(self.radiance) * self.solid_angle_sr

    @property
    def is_zero(self) -> bool:
        return not np.any(np.asarray(self.radiance) > 0) or self.solid_angle_sr <= 0

    def to_dict(self) -> dict:
        return {"direction": list(self.direction), "radiance": list(self.radiance),
                "solid_angle_sr": self.solid_angle_sr}


ZERO_SUN = SunLight((0.0, 0.0, 1.0), (0.0, 0.0, 0.0), 0.0)


def texel_solid_angles(height: int, width: int) -> np.ndarray:
    """Exact solid angle of each texel row, shape (H,), identical across a row."""
    edges = np.linspace(0.0, math.pi, height + 1)
    return (np.cos(edges[:-1]) - np.cos(edges[1:])) * (2.0 * math.pi / width)


def texel_directions(height: int, width: int, azimuth: float = 0.0) -> np.ndarray:
    theta = (np.arange(height) + 0.5) / height * math.pi
    phi = (np.arange(width) + 0.5) / width * 2.0 * math.pi + azimuth
    th, ph = np.meshgrid(theta, phi, indexing="ij")
    st = np.sin(th)
    return np.stack([st * np.cos(ph), st * np.sin(ph), np.cos(th)], axis=-1)


def extract_sun(env: EnvironmentMap, fraction: float = 0.001, peak_ratio: float = 8.0):
    """Split the brightest texels off into a directional sun light.

    The candidates are the top ``fraction`` of texels by luminance; only
    those brighter than ``peak_ratio`` times the solid-angle-weighted mean
    luminance count as sun, so maps without a pronounced peak yield a zero
    sun. The returned residual map is the input with the sun texels zeroed;
    sun energy plus residual energy equals the input energy.

    Returns:
        (SunLight, residual EnvironmentMap) with the residual carrying the
        same azimuth. The sun direction is already rotated by it.
    """
    px = env.pixels.astype(np.float64)
    h, w = px.shape[:2]
    omega = np.broadcast_to(texel_solid_angles(h, w)[:, None], (h, w))
    lum = px @ LUMA
    mean = float((lum * omega).sum() / (4.0 * math.pi))
    if mean <= 0:
        return ZERO_SUN, env
    k = max(1, int(math.ceil(fraction * h * w)))
    flat = lum.ravel()
    top = np.argpartition(flat, flat.size - k)[flat.size - k:]
    sel = np.zeros(flat.size, dtype=bool)
    sel[top] = True
    sel &= flat > peak_ratio * mean
    if not sel.any():
        return ZERO_SUN, env
    sel = sel.reshape(h, w)
    wts = (lum * omega)[sel]
    dirs = texel_directions(h, w, env.azimuth)[sel]
    centroid = (dirs * wts[:, None]).sum(0)
    norm = np.linalg.norm(centroid)
    direction = centroid / norm if norm > 0 else dirs[np.argmax(wts)]
    solid = float(omega[sel].sum())
    energy = (px[sel] * omega[sel][:, None]).sum(0)  # per-channel radiant integral
    radiance = energy / solid
    residual = px.copy()
    residual[sel] = 0.0
    sun = SunLight(tuple(float(v) for v in direction), tuple(float(v) for v in radiance), solid)
    return sun, EnvironmentMap(residual.astype(np.float32), env.azimuth, env.name)


def integrate(env: EnvironmentMap) -> np.ndarray:
    """Per-channel integral of radiance over the sphere."""
    omega = texel_solid_angles(env.height, env.width)
    return (env.pixels.astype(np.float64) * omega[:, None, None]).sum((0, 1))


def lookup(env: EnvironmentMap, direction) -> np.ndarray:
    """Nearest-texel radiance for world direction(s), shape (..., 3)."""
    d = np.asarray(direction, dtype=np.float64)
    d = d / np.linalg.norm(d, axis=-1, keepdims=True)
    theta = np.arccos(np.clip(d[..., 2], -1.0, 1.0))
    phi = np.mod(np.arctan2(d[..., 1], d[..., 0]) - env.azimuth, 2.0 * math.pi)
    i = np.minimum((theta / math.pi * env.height).astype(np.int64), env.height - 1)
    j = np.minimum((phi / (2.0 * math.pi) * env.width).astype(np.int64), env.width - 1)
    return env.pixels[i, j]


# -- environment sets ---------------------------------------------------------


def bundled_envmap_dir() -> Path:
    return Path(str(resources.files("signsynth") / "data" / "envmaps"))


@functools.lru_cache(maxsize=16)
def environment_set(name: str = "bundled") -> tuple[Path, ...]:
    """Ordered map paths of a set: ``"bundled"`` or a directory of .hdr files."""
    root = bundled_envmap_dir() if name == "bundled" else Path(name)
    if not root.is_dir():
        raise EnvMapError(f"environment set directory not found: {root}")
    manifest = root / "manifest.json"
    if manifest.is_file():
        names = json.loads(manifest.read_text())["maps"]
        paths = tuple(root / n for n in names)
    else:
        paths = tuple(sorted(root.glob("*.hdr")))
    if not paths:
        raise EnvMapError(f"environment set {name!r} is empty")
    return paths


def map_label(set_name: str, map_id: int) -> str:
    path = environment_set(set_name)[map_id]
    return f"bundled:{path.name}" if set_name == "bundled" else str(path)


@functools.lru_cache(maxsize=32)
def load_environment(path: str) -> EnvironmentMap:
    px = read_hdr(path)
    px.setflags(write=False)
    return EnvironmentMap(px, 0.0, Path(path).stem)


@functools.lru_cache(maxsize=64)
def _cached_sun(path: str, fraction: float, peak_ratio: float):
    return extract_sun(load_environment(path), fraction, peak_ratio)


def sun_for(set_name: str, map_id: int, azimuth: float, fraction: float = 0.001, peak_ratio: float = 8.0):
    """Sun and residual map for one entry of a set, rotated by ``azimuth``."""
    path = str(environment_set(set_name)[map_id])
    sun, residual = _cached_sun(path, fraction, peak_ratio)
    c, s = math.cos(azimuth), math.sin(azimuth)
    x, y, z = sun.direction
    rotated = SunLight((c * x - s * y, s * x + c * y, z), sun.radiance, sun.solid_angle_sr)
    return (rotated if not sun.is_zero else sun), residual.rotated(azimuth)
