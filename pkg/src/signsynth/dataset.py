"""Dataset generation: the per-image pipeline, output layout and statistics.

Layout of a generated dataset::

    out/manifest.json
    out/images/<class:03d>/<index:05d>.png   8-bit sRGB
    out/masks/<class:03d>/<index:05d>.png    main-sign mask, 0 or 255
    out/seg/<class:03d>/<index:05d>.png      instance ids as gray levels
    out/meta/<class:03d>/<index:05d>.json    every seed and parameter used

``manifest.json`` is written last through a temporary file and a rename, so
its presence means the dataset is complete.
"""

from __future__ import annotations

import concurrent.futures as cf
import copy
import hashlib
import json
import logging
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .catalog import Catalog, load_catalog, load_template, plate_size_m
from .config import DenoiseConfig, GenerationConfig, config_hash, to_dict
from .defects import DefectParams, make_texture, resample_template, sample_defect_params, texture_size_px
from .fileio import png_bytes, read_png
from .imaging import ImagingParams, process, sample_imaging_params
from .render.denoise import denoise
from .render.envmap import environment_set, load_environment, map_label, sun_for
from .render.geometry import INSTANCE_PLATE, build_geometry
from .render.tracer import GBuffer, trace
from .rng import derive, stage_seeds, stream
from .scene import DegenerateViewError, SceneSample, camera_pose, sample_scene

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
RENDERER_TAG = "builtin"
MAX_VIEW_ATTEMPTS = 32


class DatasetError(RuntimeError):
    pass


class SchemaError(DatasetError):
    pass


class RecordIOError(DatasetError):
    """An output file could not be written; aborts the run."""


# -- records ---------------------------------------------------------------------------


@dataclass
class RenderSettings:
    spp: int
    max_bounces: int
    sun_extraction: bool
    sun_fraction: float
    sun_peak_ratio: float
    denoise: dict

    @classmethod
    def from_config(cls, cfg: GenerationConfig) -> "RenderSettings":
        r = cfg.render
        return cls(r.spp, r.max_bounces, r.sun_extraction, r.sun_fraction, r.sun_peak_ratio, to_dict(r.denoise))


@dataclass
class ImageRecord:
    class_id: int
    index: int
    image_path: str
    mask_path: str
    seg_path: str
    meta_path: str
    resolution: int
    seeds: dict[str, int]
    scene: SceneSample
    defects: DefectParams | None
    imaging: ImagingParams
    render: dict
    renderer: str = RENDERER_TAG
    schema_version: int = SCHEMA_VERSION
    tool_version: str = __version__
    texture_source: str = "defects"
    retried: bool = False
    config_hash: str = ""
    hashes: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "tool_version": self.tool_version,
            "renderer": self.renderer,
            "class_id": self.class_id,
            "index": self.index,
            "image_path": self.image_path,
            "mask_path": self.mask_path,
            "seg_path": self.seg_path,
            "meta_path": self.meta_path,
            "resolution": self.resolution,
            "seeds": dict(self.seeds),
            "retried": self.retried,
            "config_hash": self.config_hash,
            "texture_source": self.texture_source,
            "scene": self.scene.to_dict(),
            "defects": None if self.defects is None else self.defects.to_dict(),
            "imaging": self.imaging.to_dict(),
            "render": copy.deepcopy(self.render),
            "hashes": dict(self.hashes),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ImageRecord":
        version = d.get("schema_version")
        if version != SCHEMA_VERSION:
            raise SchemaError(f"unsupported metadata schema_version {version!r} (this tool reads {SCHEMA_VERSION})")
        try:
            return cls(
                class_id=int(d["class_id"]),
                index=int(d["index"]),
                image_path=d["image_path"],
                mask_path=d["mask_path"],
                seg_path=d["seg_path"],
                meta_path=d["meta_path"],
                resolution=int(d["resolution"]),
                seeds={k: int(v) for k, v in d["seeds"].items()},
                scene=SceneSample.from_dict(d["scene"]),
                defects=None if d["defects"] is None else DefectParams.from_dict(d["defects"]),
                imaging=ImagingParams.from_dict(d["imaging"]),
                render=d["render"],
                renderer=d["renderer"],
                schema_version=version,
                tool_version=d["tool_version"],
                texture_source=d.get("texture_source", "defects"),
                retried=bool(d.get("retried", False)),
                config_hash=d.get("config_hash", ""),
                hashes=dict(d.get("hashes", {})),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, DatasetError):
                raise
            raise SchemaError(f"malformed metadata: {exc!r}") from None


def read_record(meta_path: str | Path) -> ImageRecord:
    """Parse a metadata file; raises SchemaError on malformed or unsupported files."""
    try:
        data = json.loads(Path(meta_path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{meta_path}: malformed JSON ({exc})") from None
    if not isinstance(data, dict):
        raise SchemaError(f"{meta_path}: expected a JSON object")
    return ImageRecord.from_dict(data)


def record_paths(class_id: int, index: int) -> dict[str, str]:
    stem = f"{class_id:03d}/{index:05d}"
    return {
        "image_path": f"images/{stem}.png",
        "mask_path": f"masks/{stem}.png",
        "seg_path": f"seg/{stem}.png",
        "meta_path": f"meta/{stem}.json",
    }


# -- pipeline --------------------------------------------------------------------------


@dataclass
class RenderOutput:
    image: np.ndarray
    mask: np.ndarray
    seg: np.ndarray
    gbuffer: GBuffer
    radiance: np.ndarray  # denoised HDR frame fed to the imaging chain
    record: ImageRecord


def _main_texture(sample: SceneSample, catalog: Catalog, defects: DefectParams | None, override: str | None):
    entry = catalog.get(sample.sign_class_id)
    if override is not None:
        return load_template(override), "external"
    template = load_template(entry.template_path)
    w, h = texture_size_px(template.shape[:2], plate_size_m(entry), defects.texture_resolution_px_per_cm)
    base = resample_template(template, w, h)
    tex = make_texture(base, defects, cache_key=(entry.template_path, w, h))
    return tex.rgba, "defects"


def render_from_params(sample: SceneSample, defects: DefectParams | None, imaging: ImagingParams,
                       settings: RenderSettings, render_seed: int, catalog: Catalog,
                       texture_overrides: dict[str, str] | None = None, companion_gap_m: float = 0.02,
                       threads: int = 1):
    """Deterministically render one image from fully specified parameters.

    Returns ``(ldr, mask, seg, gbuffer, hdr, used_imaging, render_meta, texture_source)``.
    """
    overrides = texture_overrides or {}
    main_tex, source = _main_texture(sample, catalog, defects, overrides.get(str(sample.sign_class_id)))
    extra = {int(k): load_template(v) for k, v in overrides.items() if int(k) != sample.sign_class_id}
    geom = build_geometry(sample, catalog, extra, main_texture=main_tex, companion_gap_m=companion_gap_m)
    pose = camera_pose(sample, catalog)
    env_spec = sample.environment
    path = str(environment_set(env_spec.set_name)[env_spec.map_id])
    env = load_environment(path).rotated(env_spec.azimuth_rad)
    if settings.sun_extraction:
        sun, residual = sun_for(env_spec.set_name, env_spec.map_id, env_spec.azimuth_rad,
                                settings.sun_fraction, settings.sun_peak_ratio)
    else:
        sun, residual = None, env
    g = trace(geom, env, sun, pose, spp=settings.spp, max_bounces=settings.max_bounces, seed=render_seed,
              residual=residual, threads=threads)
    dcfg = DenoiseConfig(**settings.denoise)
    hdr = denoise(g, dcfg) if dcfg.enabled else g.radiance.copy()
    ldr, used = process(hdr, imaging)
    mask = np.where(g.instance == INSTANCE_PLATE, 255, 0).astype(np.uint8)
    seg = np.clip(g.instance, 0, 255).astype(np.uint8)
    render_meta = {
        "spp": settings.spp,
        "max_bounces": settings.max_bounces,
        "sun_extraction": settings.sun_extraction,
        "sun_fraction": settings.sun_fraction,
        "sun_peak_ratio": settings.sun_peak_ratio,
        "denoise": dict(settings.denoise),
        "environment": map_label(env_spec.set_name, env_spec.map_id),
        "sun": (sun.to_dict() if sun is not None else None),
        "clamped_samples": int(g.clamped),
        "companion_gap_m": companion_gap_m,
        "texture_overrides": dict(overrides),
    }
    return ldr, mask, seg, g, hdr, used, render_meta, source


def _sample_view(rng: np.random.Generator, entry, catalog: Catalog, cfg: GenerationConfig):
    """Draw scenes until the camera pose is usable (views past 89 deg off-normal are redrawn)."""
    for attempt in range(MAX_VIEW_ATTEMPTS):
        sample = sample_scene(rng, entry, catalog, cfg.scene)
        try:
            camera_pose(sample, catalog)
        except DegenerateViewError:
            continue
        return sample, attempt + 1
    raise DegenerateViewError(f"no usable view after {MAX_VIEW_ATTEMPTS} scene draws")


def render_image(cfg: GenerationConfig, catalog: Catalog, class_id: int, index: int, retry: bool = False,
                 threads: int | None = None) -> RenderOutput:
    """Sample every stage for ``(class_id, index)`` and render it."""
    seeds = stage_seeds(cfg.master_seed, class_id, index)
    if retry:
        base = derive(seeds["image"], "retry")
        seeds = {"image": base, **{k: derive(base, k) for k in ("defects", "scene", "render", "imaging")}}
    entry = catalog.get(class_id)
    override = cfg.texture_overrides.get(str(class_id))
    defects = None if override else sample_defect_params(stream(seeds["defects"]), cfg.defects)
    sample, attempts = _sample_view(stream(seeds["scene"]), entry, catalog, cfg)
    sample.seed_record = dict(seeds)
    imaging = sample_imaging_params(stream(seeds["imaging"]), cfg.imaging)
    settings = RenderSettings.from_config(cfg)
    ldr, mask, seg, g, hdr, used, render_meta, source = render_from_params(
        sample, defects, imaging, settings, seeds["render"], catalog, cfg.texture_overrides,
        cfg.scene.companion_gap_m, threads or cfg.render.threads)
    render_meta["scene_attempts"] = attempts
    rec = ImageRecord(
        class_id=class_id, index=index, **record_paths(class_id, index),
        resolution=sample.camera.target_resolution_px, seeds=seeds, scene=sample, defects=defects,
        imaging=used, render=render_meta, texture_source=source, retried=retry, config_hash=config_hash(cfg),
    )
    return RenderOutput(ldr, mask, seg, g, hdr, rec)


def encode_outputs(out: RenderOutput) -> dict[str, bytes]:
    """PNG bytes of the rasters and the metadata JSON (with content hashes filled in)."""
    blobs = {"image_path": png_bytes(out.image), "mask_path": png_bytes(out.mask), "seg_path": png_bytes(out.seg)}
    out.record.hashes = {k.replace("_path", ""): hashlib.sha256(v).hexdigest() for k, v in blobs.items()}
    blobs["meta_path"] = (json.dumps(out.record.to_dict(), indent=1, sort_keys=True) + "\n").encode()
    return blobs


def _atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=path.suffix)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_record(root: Path, blobs: dict[str, bytes], rec: ImageRecord) -> None:
    paths = record_paths(rec.class_id, rec.index)
    # metadata goes last so a present meta file implies its rasters were written
    for key in ("image_path", "mask_path", "seg_path", "meta_path"):
        target = root / paths[key]
        try:
            _atomic_write(target, blobs[key])
        except OSError as exc:
            raise RecordIOError(f"class {rec.class_id} index {rec.index}: cannot write {target}: {exc}") from exc


def _existing_record_valid(root: Path, class_id: int, index: int, cfg_hash: str) -> bool:
    paths = record_paths(class_id, index)
    meta = root / paths["meta_path"]
    if not meta.is_file():
        return False
    try:
        rec = read_record(meta)
    except (DatasetError, OSError):
        return False
    if rec.config_hash != cfg_hash:
        return False
    for key in ("image", "mask", "seg"):
        f = root / paths[f"{key}_path"]
        if not f.is_file() or hashlib.sha256(f.read_bytes()).hexdigest() != rec.hashes.get(key):
            return False
    return True


def _work_item(args):
    cfg, catalog, class_id, index, root = args
    err = None
    for retry in (False, True):
        try:
            out = render_image(cfg, catalog, class_id, index, retry=retry)
        except (ValueError, ArithmeticError, RuntimeError) as exc:
            if isinstance(exc, RecordIOError):
                raise
            err = f"{type(exc).__name__}: {exc}"
            log.warning("class %d index %d failed (%s)%s", class_id, index, err, "" if retry else ", retrying")
            continue
        blobs = encode_outputs(out)
        _write_record(Path(root), blobs, out.record)
        return class_id, index, None, out.record.retried
    return class_id, index, err, True


@dataclass
class DatasetManifest:
    config_hash: str
    catalog_version: str
    class_counts: dict[int, int]
    total: int
    tool_version: str = __version__
    schema_version: int = SCHEMA_VERSION
    master_seed: int = 0
    images_per_class: int = 0
    renderer: str = RENDERER_TAG
    failures: list[dict] = field(default_factory=list)
    retried: int = 0
    skipped_existing: int = 0

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "tool_version": self.tool_version,
            "renderer": self.renderer,
            "config_hash": self.config_hash,
            "catalog_version": self.catalog_version,
            "master_seed": self.master_seed,
            "images_per_class": self.images_per_class,
            "class_counts": {str(k): v for k, v in sorted(self.class_counts.items())},
            "total": self.total,
            "failures": list(self.failures),
            "retried": self.retried,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetManifest":
        return cls(d["config_hash"], d["catalog_version"], {int(k): int(v) for k, v in d["class_counts"].items()},
                   int(d["total"]), d["tool_version"], d["schema_version"], d.get("master_seed", 0),
                   d.get("images_per_class", 0), d.get("renderer", RENDERER_TAG), d.get("failures", []),
                   d.get("retried", 0))


def generate(cfg: GenerationConfig, catalog: Catalog | None = None, progress=None) -> DatasetManifest:
    """Render the whole dataset into ``cfg.output_dir``.

    Existing records whose metadata matches this config and whose file hashes
    validate are kept, so an interrupted run resumes where it stopped. Output
    bytes do not depend on ``cfg.workers``.

    Args:
        cfg: generation config.
        catalog: defaults to ``cfg.catalog`` (``"bundled"`` or a path).
        progress: optional callback ``(done, total)``.

    Raises:
        RecordIOError: an output file could not be written.
    """
    catalog = catalog or load_catalog(None if cfg.catalog == "bundled" else cfg.catalog)
    classes = cfg.classes if cfg.classes is not None else catalog.class_ids()
    for c in classes:
        if c not in catalog.class_ids():
            raise DatasetError(f"class {c} is not a main class of the catalog")
    root = Path(cfg.output_dir)
    try:
        root.mkdir(parents=True, exist_ok=True)
        probe = root / ".write-probe"
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as exc:
        raise RecordIOError(f"output directory {root} is not writable: {exc}") from exc
    cfg_hash = config_hash(cfg)
    items = [(c, i) for c in classes for i in range(cfg.images_per_class)]
    todo = [(c, i) for c, i in items if not _existing_record_valid(root, c, i, cfg_hash)]
    skipped = len(items) - len(todo)
    results = []
    done = skipped
    if progress:
        progress(done, len(items))
    args = [(cfg, catalog, c, i, str(root)) for c, i in todo]
    if cfg.workers <= 1 or len(todo) <= 1:
        for a in args:
            results.append(_work_item(a))
            done += 1
            if progress:
                progress(done, len(items))
    else:
        with cf.ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            for r in pool.map(_work_item, args, chunksize=1):
                results.append(r)
                done += 1
                if progress:
                    progress(done, len(items))
    failures = sorted(({"class_id": c, "index": i, "error": e} for c, i, e, _ in results if e),
                      key=lambda f: (f["class_id"], f["index"]))
    failed = {(f["class_id"], f["index"]) for f in failures}
    counts = {c: 0 for c in classes}
    for c, i in items:
        if (c, i) not in failed:
            counts[c] += 1
    retried = sum(1 for _, _, e, r in results if r and not e)
    manifest = DatasetManifest(cfg_hash, catalog.version, counts, sum(counts.values()), master_seed=cfg.master_seed,
                               images_per_class=cfg.images_per_class, failures=failures, retried=retried,
                               skipped_existing=skipped)
    try:
        _atomic_write(root / "manifest.json", (json.dumps(manifest.to_dict(), indent=2) + "\n").encode())
    except OSError as exc:
        raise RecordIOError(f"cannot write manifest in {root}: {exc}") from exc
    return manifest


def load_manifest(dataset_dir: str | Path) -> DatasetManifest:
    path = Path(dataset_dir) / "manifest.json"
    if not path.is_file():
        raise DatasetError(f"no manifest.json in {dataset_dir}")
    try:
        return DatasetManifest.from_dict(json.loads(path.read_text()))
    except (json.JSONDecodeError, KeyError) as exc:
        raise DatasetError(f"{path}: malformed manifest ({exc})") from None


def iter_records(dataset_dir: str | Path):
    for meta in sorted((Path(dataset_dir) / "meta").glob("*/*.json")):
        yield meta, read_record(meta)


# -- reproduction ----------------------------------------------------------------------


def regenerate_record(meta_path: str | Path, catalog: Catalog | None = None, threads: int = 1):
    """Re-render an image from the parameters recorded in its metadata.

    Returns ``(record, png_bytes)``; the record carries freshly computed
    hashes, so comparing it with :func:`read_record` shows exactly which
    recorded values changed.

    Raises:
        SchemaError: metadata from another schema or tool version.
    """
    rec = read_record(meta_path)
    if rec.tool_version != __version__:
        raise SchemaError(f"record written by tool version {rec.tool_version}, this is {__version__}")
    catalog = catalog or load_catalog()
    r = rec.render
    settings = RenderSettings(int(r["spp"]), int(r["max_bounces"]), bool(r["sun_extraction"]),
                              float(r["sun_fraction"]), float(r["sun_peak_ratio"]), dict(r["denoise"]))
    ldr, mask, seg, g, hdr, used, render_meta, source = render_from_params(
        rec.scene, rec.defects, rec.imaging, settings, rec.seeds["render"], catalog,
        r.get("texture_overrides", {}), float(r.get("companion_gap_m", 0.02)), threads)
    render_meta["scene_attempts"] = r.get("scene_attempts", 1)
    new = copy.deepcopy(rec)
    new.imaging = used
    new.render = render_meta
    out = RenderOutput(ldr, mask, seg, g, hdr, new)
    blobs = encode_outputs(out)
    return new, blobs["image_path"]


# -- statistics ------------------------------------------------------------------------


RANGE_CHECKS = {
    "scene.material.sign_roughness": "scene.sign_roughness",
    "scene.material.sign_specular": "scene.sign_specular",
    "scene.material.pole_roughness": "scene.pole_roughness",
    "scene.material.pole_gray": "scene.pole_gray",
    "imaging.motion_blur.length_px": "imaging.motion_blur.length",
    "resolution": "scene.resolution",
}


def _lookup(d: dict, path: str):
    for part in path.split("."):
        d = d[part]
    return d


def range_violations(meta: dict, cfg: GenerationConfig | None = None) -> list[str]:
    """Recorded values outside the support of the configured distributions."""
    from .config import get_path

    cfg = cfg or GenerationConfig()
    out = []
    checks = dict(RANGE_CHECKS)
    orient = meta["scene"]["pole"]["orientation"]
    checks["scene.pole.diameter_m"] = f"scene.{orient}_pole_diameter_m"
    for field_path, cfg_path in checks.items():
        value = float(_lookup(meta, field_path))
        lo, hi = get_path(cfg, cfg_path).support
        if cfg_path == "scene.resolution":
            lo, hi = math.floor(lo), math.ceil(hi)
        if not (lo - 1e-12 <= value <= hi + 1e-12):
            out.append(f"{field_path}={value} outside [{lo}, {hi}]")
    return out


def _hist(values, bins):
    counts, edges = np.histogram(np.asarray(values, dtype=float), bins=bins)
    return {"edges": [float(e) for e in edges], "counts": [int(c) for c in counts]}


def compute_stats(dataset_dir: str | Path) -> dict:
    """Aggregate per-class counts and parameter distributions from the metadata.

    Raises:
        DatasetError: no manifest in ``dataset_dir``.
    """
    manifest = load_manifest(dataset_dir)
    metas = [json.loads(p.read_text()) for p in sorted((Path(dataset_dir) / "meta").glob("*/*.json"))]
    n = len(metas)
    counts: dict[int, int] = {}
    for m in metas:
        counts[m["class_id"]] = counts.get(m["class_id"], 0) + 1
    res = [m["resolution"] for m in metas]
    blur = [m["imaging"]["motion_blur"]["length_px"] for m in metas]
    horizontal = [m["scene"]["pole"]["orientation"] == "horizontal" for m in metas]
    vertical = [m for m, h in zip(metas, horizontal) if not h]

    def rate(flags):
        flags = list(flags)
        return float(np.mean(flags)) if flags else None

    def summary(values):
        v = np.asarray(values, dtype=float)
        if v.size == 0:
            return None
        return {"min": float(v.min()), "max": float(v.max()), "mean": float(v.mean()), "std": float(v.std())}

    material = {k: summary([m["scene"]["material"][k] for m in metas])
                for k in ("sign_roughness", "sign_specular", "pole_roughness", "pole_gray")}
    return {
        "dataset": str(dataset_dir),
        "manifest_total": manifest.total,
        "records": n,
        "class_counts": {str(k): v for k, v in sorted(counts.items())},
        "balanced": len(set(counts.values())) <= 1,
        "resolution": {**(summary(res) or {}), "histogram": _hist(res, [22, 32, 48, 64, 96, 128, 192, 256, 390])},
        "rates": {
            "horizontal_pole": rate(horizontal),
            "occluder": rate(m["scene"]["occluder"]["present"] for m in metas),
            "companion_on_vertical": rate(bool(m["scene"]["companions"]) for m in vertical),
            "flare": rate(m["imaging"]["flare"]["enabled"] for m in metas),
            "demosaic": rate(m["imaging"]["demosaic"]["enabled"] for m in metas),
            "retried": rate(m.get("retried", False) for m in metas),
        },
        "motion_blur_length_px": {**(summary(blur) or {}), "histogram": _hist(blur, np.linspace(0, 10, 11))},
        "camera": {k: summary([m["scene"]["camera"][k] for m in metas]) for k in ("roll_deg", "pitch_deg", "yaw_deg")},
        "material": material,
        "failures": len(manifest.failures),
    }


def load_image(dataset_dir: str | Path, rec: ImageRecord) -> np.ndarray:
    return read_png(Path(dataset_dir) / rec.image_path)
