"""Generation configuration: typed sections, JSON round-trip, dotted overrides.

Every stochastic field is a distribution (see :mod:`signsynth.distributions`);
setting such a field to a bare number pins it, e.g.
``set_path(cfg, "imaging.motion_blur.length", 0)``.
"""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
import math
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path

from . import distributions as dists
from .distributions import Beta, Const, Dist, IntUniform, LogUniform, Normal, Uniform

RESOLUTION_MIN = 22
RESOLUTION_MAX = 389
PALETTE_NAMES = ("black", "white", "red", "orange", "yellow", "green", "blue")


class ConfigError(ValueError):
    pass


@dataclass
class CameraDistributions:
    roll: Dist
    pitch: Dist
    yaw: Dist


def _vertical_camera() -> CameraDistributions:
    return CameraDistributions(
        roll=Normal(0.0, 2.0, -10.0, 10.0),
        pitch=Normal(5.0, 10.0, -30.0, 65.0),
        yaw=Normal(0.0, 21.0, -75.0, 75.0),
    )


def _horizontal_camera() -> CameraDistributions:
    return CameraDistributions(
        roll=Normal(0.0, 2.0, -10.0, 10.0),
        pitch=Normal(30.0, 10.0, -30.0, 65.0),
        yaw=Normal(0.0, 16.0, -75.0, 75.0),
    )


@dataclass
class SceneConfig:
    horizontal_pole_probability: float = 0.3
    vertical_pole_diameter_m: Dist = Uniform(0.08, 0.12)
    horizontal_pole_diameter_m: Dist = Uniform(0.08, 0.20)
    vertical_mount_height_m: float = 2.2
    horizontal_mount_height_m: float = 5.5
    horizontal_pole_length_m: float = 6.0
    sign_roughness: Dist = Uniform(0.2, 0.4)
    sign_specular: Dist = Uniform(0.3, 0.5)
    pole_roughness: Dist = Uniform(0.4, 0.6)
    pole_gray: Dist = Uniform(0.25, 0.4)
    companion_probability: float = 0.5
    max_companions: int = 1
    companion_gap_m: float = 0.02
    camera_vertical: CameraDistributions = field(default_factory=_vertical_camera)
    camera_horizontal: CameraDistributions = field(default_factory=_horizontal_camera)
    fov_deg: float = 20.0
    fill_fraction: float = 0.8
    resolution: Dist = LogUniform(RESOLUTION_MIN, RESOLUTION_MAX)
    environment_set: str = "bundled"
    azimuth: Dist = Uniform(0.0, 2.0 * math.pi)
    occluder_probability: float = 0.75
    occluder_along_m: Dist = Uniform(1.0, 4.0)
    occluder_across_m: Dist = Uniform(-1.5, 1.5)


def _default_fade() -> dict[str, Dist]:
    return {name: Beta(2.0, 5.0) for name in PALETTE_NAMES}


@dataclass
class DefectConfig:
    fade: dict[str, Dist] = field(default_factory=_default_fade)
    dirt_octaves: int = 4
    dirt_persistence: float = 0.5
    dirt_frequency: Dist = Uniform(3.0, 10.0)
    dirt_threshold: Dist = Uniform(0.55, 0.85)
    dirt_gray: Dist = Uniform(0.3, 0.6)
    dirt_opacity: Dist = Uniform(0.3, 0.9)
    sticker_count: Dist = IntUniform(0, 2)
    sticker_size: Dist = Uniform(0.04, 0.18)
    sticker_gray: Dist = Uniform(0.6, 0.95)
    texture_px_per_cm: float = 8.0


@dataclass
class DenoiseConfig:
    enabled: bool = True
    spatial_sigma: float = 1.0
    albedo_sigma: float = 0.1
    normal_sigma: float = 0.25


@dataclass
class RenderConfig:
    spp: int = 64
    max_bounces: int = 2
    sun_extraction: bool = True
    sun_fraction: float = 0.001
    sun_peak_ratio: float = 8.0
    denoise: DenoiseConfig = field(default_factory=DenoiseConfig)
    tile_size: int = 32
    threads: int = 1


@dataclass
class AecConfig:
    log2_gain: Dist = Normal(0.0, 0.35)


@dataclass
class WbConfig:
    gain: Dist = Normal(1.0, 0.05, 0.7, 1.3)


@dataclass
class PsfConfig:
    weights: list[float] = field(default_factory=lambda: [0.7, 0.25, 0.05])
    sigmas_px: list[float] = field(default_factory=lambda: [0.6, 1.5, 4.0])
    sigma_scale: Dist = Uniform(0.8, 1.25)


@dataclass
class FlareConfig:
    probability: float = 0.5
    luminance_threshold: Dist = Const(50.0)
    intensity: Dist = LogUniform(0.005, 0.05)
    ghost_count: Dist = IntUniform(2, 6)


@dataclass
class MotionBlurConfig:
    length: Dist = Uniform(0.0, 10.0)
    angle: Dist = Uniform(0.0, 2.0 * math.pi)


@dataclass
class ChromaConfig:
    mode: str = "radial"
    shift_r: Dist = Uniform(-1.5, 1.5)
    shift_b: Dist = Uniform(-1.5, 1.5)
    line_length: Dist = Uniform(0.0, 10.0)
    line_angle: Dist = Uniform(0.0, 2.0 * math.pi)


@dataclass
class NoiseConfig:
    shot_scale: Dist = LogUniform(0.002, 0.03)
    read_sigma: Dist = LogUniform(0.0005, 0.005)


@dataclass
class SharpenConfig:
    amount: Dist = Uniform(0.0, 1.2)
    radius_px: Dist = Uniform(0.5, 2.0)


@dataclass
class DemosaicConfig:
    probability: float = 1.0


@dataclass
class ImagingConfig:
    aec: AecConfig = field(default_factory=AecConfig)
    wb: WbConfig = field(default_factory=WbConfig)
    psf: PsfConfig = field(default_factory=PsfConfig)
    flare: FlareConfig = field(default_factory=FlareConfig)
    motion_blur: MotionBlurConfig = field(default_factory=MotionBlurConfig)
    chroma: ChromaConfig = field(default_factory=ChromaConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    sharpen: SharpenConfig = field(default_factory=SharpenConfig)
    demosaic: DemosaicConfig = field(default_factory=DemosaicConfig)


@dataclass
class GenerationConfig:
    master_seed: int = 0
    images_per_class: int = 500
    classes: list[int] | None = None
    catalog: str = "bundled"
    output_dir: str = "out"
    workers: int = 1
    texture_overrides: dict[str, str] = field(default_factory=dict)
    scene: SceneConfig = field(default_factory=SceneConfig)
    defects: DefectConfig = field(default_factory=DefectConfig)
    render: RenderConfig = field(default_factory=RenderConfig)
    imaging: ImagingConfig = field(default_factory=ImagingConfig)


# -- serialization -----------------------------------------------------------


def to_dict(obj):
    if dists.is_distribution(obj):
        return dists.to_dict(obj)
    if dataclasses.is_dataclass(obj):
        return {f.name: to_dict(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): to_dict(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_dict(v) for v in obj]
    return obj


def _is_dist_type(tp) -> bool:
    return tp is Dist or (typing.get_origin(tp) in (typing.Union, types.UnionType) and Const in typing.get_args(tp)
                          and Uniform in typing.get_args(tp))


def _coerce(tp, value, path: str):
    if _is_dist_type(tp):
        try:
            return dists.from_dict(value, path)
        except dists.DistributionError as exc:
            raise ConfigError(str(exc)) from None
    origin = typing.get_origin(tp)
    if origin in (typing.Union, types.UnionType):
        args = typing.get_args(tp)
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(inner[0], value, path)
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            raise ConfigError(f"{path}: expected an object")
        return from_dict(tp, value, path)
    if origin is list:
        (item,) = typing.get_args(tp)
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected a list")
        return [_coerce(item, v, f"{path}[{i}]") for i, v in enumerate(value)]
    if origin is dict:
        _, item = typing.get_args(tp)
        if not isinstance(value, dict):
            raise ConfigError(f"{path}: expected an object")
        return {str(k): _coerce(item, v, f"{path}.{k}") for k, v in value.items()}
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ConfigError(f"{path}: expected an integer")
        return int(value)
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string")
        return value
    raise ConfigError(f"{path}: unsupported field type {tp!r}")


def from_dict(cls, data: dict, path: str = ""):
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        where = path or cls.__name__
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for key, value in data.items():
        kwargs[key] = _coerce(hints[key], value, f"{path}.{key}" if path else key)
    return cls(**kwargs)


def load_config(path: str | Path) -> GenerationConfig:
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: malformed JSON ({exc})") from None
    cfg = from_dict(GenerationConfig, data)
    validate_config(cfg)
    return cfg


def save_config(cfg: GenerationConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(to_dict(cfg), indent=2, sort_keys=True) + "\n")


def config_hash(cfg: GenerationConfig) -> str:
    """Hash of everything that affects output bytes (paths and worker count excluded)."""
    data = to_dict(cfg)
    for key in ("output_dir", "workers"):
        data.pop(key, None)
    data["render"].pop("threads", None)
    blob = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


# -- dotted-path access ------------------------------------------------------


def get_path(cfg, path: str):
    obj = cfg
    for part in path.split("."):
        if dataclasses.is_dataclass(obj) and part in {f.name for f in dataclasses.fields(obj)}:
            obj = getattr(obj, part)
        elif isinstance(obj, dict) and part in obj:
            obj = obj[part]
        else:
            raise ConfigError(f"unknown config path {path!r}")
    return obj


def set_path(cfg: GenerationConfig, path: str, value) -> GenerationConfig:
    """Return a copy of ``cfg`` with the field at ``path`` replaced."""
    out = copy.deepcopy(cfg)
    parts = path.split(".")
    parent = out
    for part in parts[:-1]:
        if dataclasses.is_dataclass(parent) and part in {f.name for f in dataclasses.fields(parent)}:
            parent = getattr(parent, part)
        elif isinstance(parent, dict) and part in parent:
            parent = parent[part]
        else:
            raise ConfigError(f"unknown config path {path!r}")
    leaf = parts[-1]
    if dataclasses.is_dataclass(parent):
        if leaf not in {f.name for f in dataclasses.fields(parent)}:
            raise ConfigError(f"unknown config path {path!r}")
        tp = typing.get_type_hints(type(parent))[leaf]
        setattr(parent, leaf, _coerce(tp, value, path))
    elif isinstance(parent, dict):
        if leaf not in parent and not path.startswith("texture_overrides."):
            raise ConfigError(f"unknown config path {path!r}")
        current = parent.get(leaf)
        parent[leaf] = dists.from_dict(value, path) if dists.is_distribution(current) else value
    else:
        raise ConfigError(f"unknown config path {path!r}")
    validate_config(out)
    return out


def parse_override(text: str) -> tuple[str, object]:
    """Parse ``key=value``; the value is JSON when it parses, else a string."""
    if "=" not in text:
        raise ConfigError(f"override must look like key=value, got {text!r}")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def apply_overrides(cfg: GenerationConfig, overrides) -> GenerationConfig:
    for item in overrides:
        key, value = parse_override(item) if isinstance(item, str) else item
        cfg = set_path(cfg, key, value)
    return cfg


# -- validation --------------------------------------------------------------


def _check_prob(p: float, name: str) -> None:
    if not 0.0 <= p <= 1.0:
        raise ConfigError(f"{name}: probability must lie in [0, 1], got {p}")


def _check_support(d: Dist, lo: float, hi: float, name: str) -> None:
    s_lo, s_hi = d.support
    if s_lo < lo - 1e-12 or s_hi > hi + 1e-12:
        raise ConfigError(f"{name}: support [{s_lo}, {s_hi}] leaves the allowed range [{lo}, {hi}]")


def _validate_dists(obj, path: str) -> None:
    if dists.is_distribution(obj):
        try:
            obj.validate(path)
        except dists.DistributionError as exc:
            raise ConfigError(str(exc)) from None
    elif dataclasses.is_dataclass(obj):
        for f in dataclasses.fields(obj):
            _validate_dists(getattr(obj, f.name), f"{path}.{f.name}" if path else f.name)
    elif isinstance(obj, dict):
        for k, v in obj.items():
            _validate_dists(v, f"{path}.{k}")


def validate_config(cfg: GenerationConfig) -> None:
    _validate_dists(cfg, "")
    if cfg.images_per_class < 1:
        raise ConfigError("images_per_class must be >= 1")
    if cfg.workers < 1:
        raise ConfigError("workers must be >= 1")
    s = cfg.scene
    _check_prob(s.horizontal_pole_probability, "scene.horizontal_pole_probability")
    _check_prob(s.companion_probability, "scene.companion_probability")
    _check_prob(s.occluder_probability, "scene.occluder_probability")
    _check_support(s.resolution, RESOLUTION_MIN, RESOLUTION_MAX, "scene.resolution")
    _check_support(s.azimuth, 0.0, 2.0 * math.pi, "scene.azimuth")
    if s.max_companions < 0:
        raise ConfigError("scene.max_companions must be >= 0")
    if not 0.0 < s.fill_fraction <= 1.0:
        raise ConfigError("scene.fill_fraction must lie in (0, 1]")
    if not 0.0 < s.fov_deg < 170.0:
        raise ConfigError("scene.fov_deg must lie in (0, 170)")
    for name in ("vertical_pole_diameter_m", "horizontal_pole_diameter_m"):
        lo, _ = getattr(s, name).support
        if lo <= 0:
            raise ConfigError(f"scene.{name} must be positive")
    d = cfg.defects
    unknown = set(d.fade) - set(PALETTE_NAMES)
    if unknown:
        raise ConfigError(f"defects.fade: unknown palette colors {sorted(unknown)}")
    for name, fd in d.fade.items():
        _check_support(fd, 0.0, 1.0, f"defects.fade.{name}")
    if d.dirt_octaves < 1:
        raise ConfigError("defects.dirt_octaves must be >= 1")
    for name in ("dirt_threshold", "dirt_gray", "dirt_opacity", "sticker_gray"):
        _check_support(getattr(d, name), 0.0, 1.0, f"defects.{name}")
    _check_support(d.sticker_count, 0.0, 5.0, "defects.sticker_count")
    if d.dirt_frequency.support[0] <= 0:
        raise ConfigError("defects.dirt_frequency must be positive")
    if d.texture_px_per_cm <= 0:
        raise ConfigError("defects.texture_px_per_cm must be positive")
    r = cfg.render
    if r.spp < 1:
        raise ConfigError("render.spp must be >= 1")
    if r.max_bounces < 0:
        raise ConfigError("render.max_bounces must be >= 0")
    if r.tile_size < 1 or r.threads < 1:
        raise ConfigError("render.tile_size and render.threads must be >= 1")
    if not 0.0 < r.sun_fraction < 1.0:
        raise ConfigError("render.sun_fraction must lie in (0, 1)")
    im = cfg.imaging
    if len(im.psf.weights) != len(im.psf.sigmas_px) or not im.psf.weights:
        raise ConfigError("imaging.psf: weights and sigmas_px must be non-empty and of equal length")
    if any(w < 0 for w in im.psf.weights) or abs(sum(im.psf.weights) - 1.0) > 1e-6:
        raise ConfigError("imaging.psf.weights must be non-negative and sum to 1")
    if any(sg < 0 for sg in im.psf.sigmas_px) or im.psf.sigma_scale.support[0] < 0:
        raise ConfigError("imaging.psf sigmas must be non-negative")
    _check_prob(im.flare.probability, "imaging.flare.probability")
    _check_prob(im.demosaic.probability, "imaging.demosaic.probability")
    _check_support(im.motion_blur.length, 0.0, 10.0, "imaging.motion_blur.length")
    _check_support(im.chroma.line_length, 0.0, 10.0, "imaging.chroma.line_length")
    if im.chroma.mode not in ("radial", "line_kernel"):
        raise ConfigError("imaging.chroma.mode must be 'radial' or 'line_kernel'")
    for name in ("shot_scale", "read_sigma"):
        if getattr(im.noise, name).support[0] < 0:
            raise ConfigError(f"imaging.noise.{name} must be non-negative")
    if im.sharpen.amount.support[0] < 0 or im.sharpen.radius_px.support[0] < 0:
        raise ConfigError("imaging.sharpen parameters must be non-negative")
    if im.flare.intensity.support[0] < 0 or im.flare.ghost_count.support[0] < 0:
        raise ConfigError("imaging.flare parameters must be non-negative")


def raster_preset(cfg: GenerationConfig) -> GenerationConfig:
    """The cheap variant: one sample per pixel, direct lighting only."""
    out = copy.deepcopy(cfg)
    out.render.spp = 1
    out.render.max_bounces = 0
    return out


def identity_imaging() -> ImagingConfig:
    """Imaging section whose every stage is the identity (pure tonemap)."""
    return ImagingConfig(
        aec=AecConfig(Const(0.0)),
        wb=WbConfig(Const(1.0)),
        psf=PsfConfig([1.0], [0.0], Const(1.0)),
        flare=FlareConfig(0.0, Const(50.0), Const(0.0), Const(0.0)),
        motion_blur=MotionBlurConfig(Const(0.0), Const(0.0)),
        chroma=ChromaConfig("radial", Const(0.0), Const(0.0), Const(0.0), Const(0.0)),
        noise=NoiseConfig(Const(0.0), Const(0.0)),
        sharpen=SharpenConfig(Const(0.0), Const(1.0)),
        demosaic=DemosaicConfig(0.0),
    )
