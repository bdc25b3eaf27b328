"""Per-image scene variation: pole, materials, companions, camera, lighting, occluder.

``sample_scene`` consumes a fixed number of uniforms from its stream in a
fixed order, whatever the outcome of the Bernoulli decisions:

1. pole orientation, pole diameter
2. sign roughness, sign specular, pole roughness, pole gray
3. per companion slot: presence, position, candidate choice
4. camera roll, pitch, yaw, target resolution
5. environment map index, environment azimuth
6. occluder presence, offset along the sun direction, offset across it

An occluder whose trunk or canopy would stand in the line of sight between
camera and main plate is reflected (through the plate plane, then through
the pole axis) to a position that keeps the plate visible; this needs no
extra draws.

Keeping the count fixed means pinning one field (or flipping a probability)
never reshuffles the draws of the fields after it.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sstats

from . import rng as rngmod
from .catalog import Catalog, SignClass, companion_candidates, load_catalog, plate_size_m
from .config import GenerationConfig, RESOLUTION_MAX, RESOLUTION_MIN, SceneConfig
from .distributions import Const, draw
from .render.envmap import environment_set, sun_for

MAX_VIEW_ANGLE_DEG = 89.0

# fixed procedural tree (shared with the geometry builder)
TRUNK_RADIUS_M = 0.15
TRUNK_HEIGHT_M = 3.0
CANOPY_BASE_M = 2.8
CANOPY_TOP_M = 7.0
CANOPY_RADIUS_M = 1.3


class SceneError(ValueError):
    pass


class DegenerateViewError(SceneError):
    """The plate is seen (nearly) edge-on; the caller should re-sample."""


@dataclass
class MaterialParams:
    sign_roughness: float
    sign_specular: float
    pole_roughness: float
    pole_gray: float


@dataclass
class PoleSpec:
    orientation: str  # "vertical" | "horizontal"
    diameter_m: float
    length_m: float
    mount_height_m: float


@dataclass
class Companion:
    class_id: int
    position: str  # "upper" | "lower"


@dataclass
class CameraSpec:
    roll_deg: float
    pitch_deg: float
    yaw_deg: float
    distance_m: float
    fov_deg: float
    target_resolution_px: int
    fill_fraction: float = 0.8


@dataclass
class EnvironmentSpec:
    map_id: int
    azimuth_rad: float
    set_name: str = "bundled"


@dataclass
class OccluderSpec:
    present: bool
    offset_m: tuple[float, float, float] = (0.0, 0.0, 0.0)
    along_m: float = 0.0
    across_m: float = 0.0
    relocated: bool = False  # reflected out of the line of sight


@dataclass
class SceneSample:
    sign_class_id: int
    material: MaterialParams
    pole: PoleSpec
    companions: list[Companion]
    camera: CameraSpec
    environment: EnvironmentSpec
    occluder: OccluderSpec
    seed_record: dict[str, int] = field(default_factory=dict)
    defect_params: object | None = None  # DefectParams, attached by the dataset stage

    def to_dict(self) -> dict:
        d = {
            "sign_class_id": self.sign_class_id,
            "material": dataclasses.asdict(self.material),
            "pole": dataclasses.asdict(self.pole),
            "companions": [dataclasses.asdict(c) for c in self.companions],
            "camera": dataclasses.asdict(self.camera),
            "environment": dataclasses.asdict(self.environment),
            "occluder": {**dataclasses.asdict(self.occluder), "offset_m": list(self.occluder.offset_m)},
            "seed_record": dict(self.seed_record),
        }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSample":
        occ = dict(d["occluder"])
        occ["offset_m"] = tuple(occ["offset_m"])
        return cls(
            sign_class_id=int(d["sign_class_id"]),
            material=MaterialParams(**d["material"]),
            pole=PoleSpec(**d["pole"]),
            companions=[Companion(**c) for c in d["companions"]],
            camera=CameraSpec(**d["camera"]),
            environment=EnvironmentSpec(**d["environment"]),
            occluder=OccluderSpec(**occ),
            seed_record={k: int(v) for k, v in d.get("seed_record", {}).items()},
        )


# -- sampling -------------------------------------------------------------------


def camera_distance(plate_extent_m: float, fov_deg: float, fill_fraction: float) -> float:
    """Distance at which a frontal plate of the given extent fills ``fill_fraction`` of the frame."""
    return plate_extent_m / (2.0 * fill_fraction * math.tan(math.radians(fov_deg) / 2.0))


def _sun_offset(set_name: str, map_id: int, azimuth: float, along: float, across: float):
    sun, _ = sun_for(set_name, map_id, azimuth)
    if sun.is_zero:
        # no sun: fall back to the map's rotated +x axis
        hx, hy = math.cos(azimuth), math.sin(azimuth)
    else:
        hx, hy = sun.direction[0], sun.direction[1]
        n = math.hypot(hx, hy)
        if n < 1e-9:
            hx, hy = math.cos(azimuth), math.sin(azimuth)
        else:
            hx, hy = hx / n, hy / n
    return (along * hx - across * hy, along * hy + across * hx, 0.0)


def tree_blocks_view(offset, camera_position, targets, margin: float = 0.05) -> bool:
    """True if any camera-to-target segment passes through the tree's trunk or canopy."""
    base = np.asarray(offset, dtype=np.float64)
    cam = np.asarray(camera_position, dtype=np.float64)
    t = np.linspace(0.0, 1.0, 97)[:, None]
    for target in np.asarray(targets, dtype=np.float64):
        pts = cam + t * (target - cam) - base
        r = np.hypot(pts[:, 0], pts[:, 1])
        z = pts[:, 2]
        trunk = (z >= 0) & (z <= TRUNK_HEIGHT_M) & (r <= TRUNK_RADIUS_M + margin)
        frac = (CANOPY_TOP_M - z) / (CANOPY_TOP_M - CANOPY_BASE_M)
        canopy = (z >= CANOPY_BASE_M) & (z <= CANOPY_TOP_M) & (r <= CANOPY_RADIUS_M * frac + margin)
        if np.any(trunk | canopy):
            return True
    return False


def _clear_line_of_sight(sample: "SceneSample", offset, catalog: Catalog):
    """Return ``(offset, relocated)`` with the occluder moved off the view corridor if needed."""
    try:
        pose = camera_pose(sample, catalog)
    except DegenerateViewError:
        return offset, False  # the caller redraws this scene anyway
    w, h = plate_size_m(catalog.get(sample.sign_class_id))
    c = plate_center(sample)
    targets = [c] + [c + np.array([sx * w / 2, 0.0, sz * h / 2]) for sx in (-1, 1) for sz in (-1, 1)]
    x, y, z = offset
    for k, cand in enumerate(((x, y, z), (x, -y, z), (-x, -y, z), (-x, y, z))):
        if not tree_blocks_view(cand, pose.position, targets):
            return cand, k > 0
    return offset, False


def sample_scene(rng: np.random.Generator, sign_class: SignClass, catalog: Catalog,
                 config: SceneConfig) -> SceneSample:
    """Draw one scene for ``sign_class`` (see the module docstring for the draw order)."""
    try:
        n_maps = len(environment_set(config.environment_set))
    except ValueError as exc:
        raise SceneError(str(exc)) from None
    if not sign_class.template_path:
        raise SceneError(f"class {sign_class.id} has no template")

    u_orient = float(rng.random())
    horizontal = (sign_class.pole_constraint == "vertical_or_horizontal"
                  and u_orient < config.horizontal_pole_probability)
    if horizontal:
        diameter = draw(config.horizontal_pole_diameter_m, rng)
        pole = PoleSpec("horizontal", diameter, config.horizontal_pole_length_m, config.horizontal_mount_height_m)
    else:
        diameter = draw(config.vertical_pole_diameter_m, rng)
        pole = PoleSpec("vertical", diameter, config.vertical_mount_height_m + 0.5, config.vertical_mount_height_m)

    material = MaterialParams(
        sign_roughness=draw(config.sign_roughness, rng),
        sign_specular=draw(config.sign_specular, rng),
        pole_roughness=draw(config.pole_roughness, rng),
        pole_gray=draw(config.pole_gray, rng),
    )

    companions: list[Companion] = []
    lists = {pos: companion_candidates(catalog, sign_class.id, pos) for pos in ("upper", "lower")}
    non_empty = [pos for pos in ("upper", "lower") if lists[pos]]
    for _ in range(config.max_companions):
        u_present, u_pos, u_pick = (float(rng.random()) for _ in range(3))
        if horizontal or not non_empty or u_present >= config.companion_probability:
            continue
        pos = non_empty[min(int(u_pos * len(non_empty)), len(non_empty) - 1)]
        cands = lists[pos]
        pick = cands[min(int(u_pick * len(cands)), len(cands) - 1)]
        companions.append(Companion(pick.id, pos))

    cam_dists = config.camera_horizontal if horizontal else config.camera_vertical
    roll = draw(cam_dists.roll, rng)
    pitch = draw(cam_dists.pitch, rng)
    yaw = draw(cam_dists.yaw, rng)
    res = int(round(draw(config.resolution, rng)))
    res = min(max(res, RESOLUTION_MIN), RESOLUTION_MAX)
    extent = max(plate_size_m(sign_class))
    camera = CameraSpec(roll, pitch, yaw, camera_distance(extent, config.fov_deg, config.fill_fraction),
                        config.fov_deg, res, config.fill_fraction)

    u_map = float(rng.random())
    map_id = min(int(u_map * n_maps), n_maps - 1)
    azimuth = draw(config.azimuth, rng) % (2.0 * math.pi)
    environment = EnvironmentSpec(map_id, azimuth, config.environment_set)

    u_occ = float(rng.random())
    along = draw(config.occluder_along_m, rng)
    across = draw(config.occluder_across_m, rng)
    if u_occ < config.occluder_probability:
        offset = _sun_offset(config.environment_set, map_id, azimuth, along, across)
        occluder = OccluderSpec(True, offset, along, across)
    else:
        occluder = OccluderSpec(False)

    sample = SceneSample(sign_class.id, material, pole, companions, camera, environment, occluder)
    if occluder.present:
        offset, moved = _clear_line_of_sight(sample, occluder.offset_m, catalog)
        sample.occluder = OccluderSpec(True, tuple(float(v) for v in offset), along, across, moved)
    return sample


# -- camera ---------------------------------------------------------------------


@dataclass(frozen=True)
class CameraPose:
    """Pinhole camera: world position, orthonormal basis and square intrinsics."""

    position: np.ndarray
    forward: np.ndarray
    right: np.ndarray
    up: np.ndarray
    fov_deg: float
    resolution: int

    @property
    def tan_half(self) -> float:
        return math.tan(math.radians(self.fov_deg) / 2.0)

    def project(self, points) -> np.ndarray:
        """World points (..., 3) to continuous pixel coordinates (x right, y down)."""
        p = np.asarray(points, dtype=np.float64) - self.position
        z = p @ self.forward
        x = (p @ self.right) / (z * self.tan_half)
        y = (p @ self.up) / (z * self.tan_half)
        n = self.resolution
        return np.stack([(x + 1.0) * 0.5 * n, (1.0 - y) * 0.5 * n], axis=-1)

    def ray(self, px: float, py: float) -> np.ndarray:
        n = self.resolution
        x = (2.0 * px / n - 1.0) * self.tan_half
        y = (1.0 - 2.0 * py / n) * self.tan_half
        d = self.forward + x * self.right + y * self.up
        return d / np.linalg.norm(d)


PLATE_NORMAL = np.array([0.0, -1.0, 0.0])


def plate_center(sample: SceneSample) -> np.ndarray:
    return np.array([0.0, 0.0, sample.pole.mount_height_m])


def camera_pose(sample: SceneSample, catalog: Catalog | None = None) -> CameraPose:
    """Camera orbiting the main plate center at the recorded distance.

    Yaw turns the viewpoint about the vertical axis through the plate, a
    positive pitch moves it below the plate looking up and roll spins it
    about the view axis. The principal ray passes through the plate center.
    """
    cam = sample.camera
    yaw, pitch, roll = (math.radians(v) for v in (cam.yaw_deg, cam.pitch_deg, cam.roll_deg))
    back = np.array([math.sin(yaw) * math.cos(pitch), -math.cos(yaw) * math.cos(pitch), -math.sin(pitch)])
    off_axis = math.degrees(math.acos(max(-1.0, min(1.0, float(back @ PLATE_NORMAL)))))
    if off_axis > MAX_VIEW_ANGLE_DEG:
        raise DegenerateViewError(f"view {off_axis:.1f} deg off the plate normal exceeds {MAX_VIEW_ANGLE_DEG}")
    center = plate_center(sample)
    forward = -back
    right = np.cross(forward, [0.0, 0.0, 1.0])
    right /= np.linalg.norm(right)
    up = np.cross(right, forward)
    cr, sr = math.cos(roll), math.sin(roll)
    right, up = cr * right + sr * up, -sr * right + cr * up
    return CameraPose(center + cam.distance_m * back, forward, right, up, cam.fov_deg, cam.target_resolution_px)


# -- distribution report -----------------------------------------------------------


@dataclass
class FieldStats:
    n: int
    mean: float
    std: float
    declared_mean: float
    declared_std: float
    ks_statistic: float | None = None
    ks_critical_1pct: float | None = None

    @property
    def ks_pass(self) -> bool | None:
        if self.ks_statistic is None:
            return None
        return self.ks_statistic < self.ks_critical_1pct


@dataclass
class Frequency:
    n: int
    rate: float
    declared: float


@dataclass
class DistributionReport:
    n_samples: int
    probe_class: int
    fields: dict[str, FieldStats]
    frequencies: dict[str, Frequency]

    def to_dict(self) -> dict:
        out = {"n_samples": self.n_samples, "probe_class": self.probe_class, "fields": {}, "frequencies": {}}
        for k, s in self.fields.items():
            out["fields"][k] = {**dataclasses.asdict(s), "ks_pass": s.ks_pass}
        for k, f in self.frequencies.items():
            out["frequencies"][k] = dataclasses.asdict(f)
        return out


def _field_stats(values: np.ndarray, dist, discrete: bool = False) -> FieldStats:
    values = np.asarray(values, dtype=np.float64)
    n = values.size
    ks = crit = None
    if not discrete and not isinstance(dist, Const) and dist.std > 0:
        ks = float(sstats.kstest(values, dist.cdf).statistic)
        crit = float(sstats.kstwo.ppf(0.99, n))
    # identical samples report exactly zero rather than a rounding residue
    spread = n > 1 and values.min() != values.max()
    return FieldStats(n, float(values.mean()), float(values.std(ddof=1)) if spread else 0.0,
                      float(dist.mean), float(dist.std), ks, crit)


def probe_class(catalog: Catalog) -> SignClass:
    """First class that can take both pole orientations and has companions."""
    for c in catalog.classes:
        if c.pole_constraint == "vertical_or_horizontal" and (c.companions_upper or c.companions_lower):
            return c
    for c in catalog.classes:
        if c.pole_constraint == "vertical_or_horizontal":
            return c
    return catalog.classes[0]


def _samples(n: int, cls: SignClass, catalog: Catalog, scfg: SceneConfig, master: int, tag: str):
    base = rngmod.derive(master, f"validate/{tag}")
    out = []
    for i in range(n):
        seed = rngmod.derive(rngmod.image_seed(base, cls.id, i), "scene")
        out.append(sample_scene(rngmod.stream(seed), cls, catalog, scfg))
    return out


def validate_distributions(n_samples: int, config: GenerationConfig | None = None,
                           catalog: Catalog | None = None) -> DistributionReport:
    """Empirical moments, rates and KS statistics of the scene sampler.

    Orientation-independent fields and the top-level rates come from
    ``n_samples`` scenes of the probe class. Orientation-conditional camera
    and diameter statistics use ``n_samples`` further scenes each with the
    orientation forced, so every conditional statistic sees the full count.
    """
    if n_samples < 1000:
        raise ValueError("validate_distributions needs n_samples >= 1000")
    config = config or GenerationConfig()
    catalog = catalog or load_catalog(config.catalog)
    s = config.scene
    cls = probe_class(catalog)
    mixed = _samples(n_samples, cls, catalog, s, config.master_seed, "mixed")
    vert = _samples(n_samples, cls, catalog, dataclasses.replace(s, horizontal_pole_probability=0.0),
                    config.master_seed, "vertical")
    horiz = _samples(n_samples, cls, catalog, dataclasses.replace(s, horizontal_pole_probability=1.0),
                     config.master_seed, "horizontal")
    if cls.pole_constraint != "vertical_or_horizontal":
        horiz = []

    fields: dict[str, FieldStats] = {}

    def add(name, samples, getter, dist, discrete=False):
        if samples:
            fields[name] = _field_stats(np.array([getter(x) for x in samples]), dist, discrete)

    for attr in ("sign_roughness", "sign_specular", "pole_roughness", "pole_gray"):
        add(f"material.{attr}", mixed, lambda x, a=attr: getattr(x.material, a), getattr(s, attr))
    add("camera.target_resolution_px", mixed, lambda x: x.camera.target_resolution_px, s.resolution,
        discrete=True)
    add("environment.azimuth_rad", mixed, lambda x: x.environment.azimuth_rad, s.azimuth)
    occluded = [x for x in mixed if x.occluder.present]
    add("occluder.along_m", occluded, lambda x: x.occluder.along_m, s.occluder_along_m)
    add("occluder.across_m", occluded, lambda x: x.occluder.across_m, s.occluder_across_m)
    for tag, samples, cams, diam in (("vertical", vert, s.camera_vertical, s.vertical_pole_diameter_m),
                                     ("horizontal", horiz, s.camera_horizontal, s.horizontal_pole_diameter_m)):
        for ang in ("roll", "pitch", "yaw"):
            add(f"camera.{tag}.{ang}_deg", samples, lambda x, a=ang: getattr(x.camera, f"{a}_deg"), getattr(cams, ang))
        add(f"pole.{tag}.diameter_m", samples, lambda x: x.pole.diameter_m, diam)

    n_maps = len(environment_set(s.environment_set))
    map_ids = np.array([x.environment.map_id for x in mixed])
    freqs = {
        "pole.horizontal": Frequency(n_samples, float(np.mean([x.pole.orientation == "horizontal" for x in mixed])),
                                     s.horizontal_pole_probability if cls.pole_constraint != "vertical_only" else 0.0),
        "occluder.present": Frequency(n_samples, float(np.mean([x.occluder.present for x in mixed])),
                                      s.occluder_probability),
        "companions.vertical": Frequency(len(vert), float(np.mean([bool(x.companions) for x in vert])),
                                         s.companion_probability if s.max_companions > 0 else 0.0),
    }
    for m in range(n_maps):
        freqs[f"environment.map_{m}"] = Frequency(n_samples, float(np.mean(map_ids == m)), 1.0 / n_maps)
    return DistributionReport(n_samples, cls.id, fields, freqs)
