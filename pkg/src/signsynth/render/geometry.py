"""Scene geometry: plate, pole, companion plates and the tree occluder.

Every primitive carries a 4x4 local-to-world transform over a canonical shape:

* quad: the square [-1, 1]^2 in the local xy plane, normal +z
* cylinder: radius 1 around +z, from z=0 to z=1, capped
* cone: base disc of radius 1 at z=0, apex at z=1, base capped
* sphere: unit sphere at the origin

``SceneGeometry.pack`` flattens the list into the arrays the tracer reads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..catalog import Catalog, load_template, plate_size_m
from ..defects import srgb_to_linear
from ..scene import (CANOPY_BASE_M, CANOPY_RADIUS_M, CANOPY_TOP_M, TRUNK_HEIGHT_M, TRUNK_RADIUS_M, SceneSample,
                     plate_center)

SHAPE_CODES = {"quad": 0, "cylinder": 1, "cone": 2, "sphere": 3}

INSTANCE_PLATE = 1
INSTANCE_POLE = 2

POLE_STANDOFF_M = 0.01
TRUNK_ALBEDO = (0.12, 0.08, 0.05)
CANOPY_ALBEDO = (0.04, 0.09, 0.03)


class GeometryError(ValueError):
    pass


@dataclass
class Material:
    albedo: tuple[float, float, float] = (0.5, 0.5, 0.5)  # linear; ignored where a texture is bound
    roughness: float = 0.5
    specular: float = 0.0


@dataclass
class Primitive:
    shape: str
    transform: np.ndarray  # (4, 4) local -> world
    material: Material
    instance_id: int
    texture: int | None = None  # index into SceneGeometry.textures

    @property
    def center(self) -> np.ndarray:
        origin = self.transform[:3, 3]
        if self.shape in ("cylinder", "cone"):
            return origin + 0.5 * self.transform[:3, 2]
        return origin.copy()


@dataclass
class SceneGeometry:
    primitives: list[Primitive] = field(default_factory=list)
    textures: list[np.ndarray] = field(default_factory=list)  # straight-alpha sRGB RGBA float32

    def add_texture(self, rgba: np.ndarray) -> int:
        self.textures.append(np.asarray(rgba, dtype=np.float32))
        return len(self.textures) - 1

    def validate(self) -> None:
        plates = [p for p in self.primitives if p.instance_id == INSTANCE_PLATE]
        if len(plates) != 1:
            raise GeometryError(f"expected exactly one main plate primitive, found {len(plates)}")
        for p in self.primitives:
            if p.shape not in SHAPE_CODES:
                raise GeometryError(f"unknown shape {p.shape!r}")
            if abs(np.linalg.det(p.transform[:3, :3])) < 1e-12:
                raise GeometryError(f"non-invertible transform on instance {p.instance_id}")
            if p.texture is not None and not 0 <= p.texture < len(self.textures):
                raise GeometryError(f"instance {p.instance_id} references missing texture {p.texture}")

    def pack(self) -> "PackedGeometry":
        n = len(self.primitives)
        kind = np.zeros(n, dtype=np.int64)
        pf = np.zeros((n, 16), dtype=np.float64)
        mat = np.zeros((n, 6), dtype=np.float64)
        inst = np.zeros(n, dtype=np.int64)
        for i, p in enumerate(self.primitives):
            kind[i] = SHAPE_CODES[p.shape]
            m = p.transform
            o, ex, ey, ez = m[:3, 3], m[:3, 0], m[:3, 1], m[:3, 2]
            if p.shape == "quad":
                nrm = np.cross(ex, ey)
                pf[i, 0:3], pf[i, 3:6], pf[i, 6:9], pf[i, 9:12] = o, ex, ey, nrm / np.linalg.norm(nrm)
            elif p.shape in ("cylinder", "cone"):
                length = np.linalg.norm(ez)
                pf[i, 0:3], pf[i, 3:6] = o, ez / length
                pf[i, 6], pf[i, 7] = length, np.linalg.norm(ex)
            else:
                pf[i, 0:3], pf[i, 3] = o, np.linalg.norm(ex)
            mat[i, 0:3] = p.material.albedo
            mat[i, 3] = p.material.roughness
            mat[i, 4] = p.material.specular
            mat[i, 5] = -1 if p.texture is None else p.texture
            inst[i] = p.instance_id
        sizes = [t.shape[0] * t.shape[1] * 4 for t in self.textures]
        atlas = np.zeros(max(1, sum(sizes)), dtype=np.float32)
        tex_info = np.zeros((max(1, len(self.textures)), 3), dtype=np.int64)
        off = 0
        for k, t in enumerate(self.textures):
            lin = np.empty(t.shape[:2] + (4,), dtype=np.float32)
            lin[..., :3] = srgb_to_linear(np.clip(t[..., :3], 0.0, 1.0))
            lin[..., 3] = t[..., 3]
            atlas[off:off + sizes[k]] = lin.ravel()
            tex_info[k] = (off, t.shape[1], t.shape[0])
            off += sizes[k]
        return PackedGeometry(kind, pf, mat, inst, atlas, tex_info)


@dataclass
class PackedGeometry:
    kind: np.ndarray
    params: np.ndarray
    material: np.ndarray
    instance: np.ndarray
    atlas: np.ndarray
    tex_info: np.ndarray


# -- transforms -------------------------------------------------------------------


def _frame(origin, ex, ey, ez) -> np.ndarray:
    m = np.eye(4)
    m[:3, 0], m[:3, 1], m[:3, 2], m[:3, 3] = ex, ey, ez, origin
    return m


def quad_transform(center, half_u, half_v) -> np.ndarray:
    half_u, half_v = np.asarray(half_u, float), np.asarray(half_v, float)
    n = np.cross(half_u, half_v)
    return _frame(center, half_u, half_v, n / np.linalg.norm(n))


def _perpendicular_pair(axis: np.ndarray):
    helper = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(axis, helper)
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(axis, e1)


def axial_transform(base, tip, radius: float) -> np.ndarray:
    """Transform for a cylinder or cone running from ``base`` to ``tip``."""
    base, tip = np.asarray(base, float), np.asarray(tip, float)
    ez = tip - base
    e1, e2 = _perpendicular_pair(ez / np.linalg.norm(ez))
    return _frame(base, radius * e1, radius * e2, ez)


def sphere_transform(center, radius: float) -> np.ndarray:
    return _frame(center, [radius, 0, 0], [0, radius, 0], [0, 0, radius])


# -- scene assembly ---------------------------------------------------------------


def _plate(geom: SceneGeometry, center, size, texture, material, instance) -> Primitive:
    w, h = size
    tex = geom.add_texture(texture)
    prim = Primitive("quad", quad_transform(center, [w / 2, 0, 0], [0, 0, h / 2]), material, instance, tex)
    geom.primitives.append(prim)
    return prim


def build_geometry(sample: SceneSample, catalog: Catalog, textures: dict[int, np.ndarray] | None = None,
                   main_texture: np.ndarray | None = None, companion_gap_m: float = 0.02) -> SceneGeometry:
    """Assemble the primitives for one scene.

    Args:
        sample: the scene description.
        catalog: resolves class ids to plate sizes and templates.
        textures: optional per-class RGBA overrides (straight alpha, sRGB).
        main_texture: the defect-processed texture of the main plate; falls
            back to ``textures`` and then to the pristine template.
        companion_gap_m: vertical clearance between stacked plates.
    """
    textures = textures or {}
    geom = SceneGeometry()
    mat = sample.material
    sign_mat = Material((0.8, 0.8, 0.8), mat.sign_roughness, mat.sign_specular)

    def texture_for(class_id):
        if class_id in textures:
            return textures[class_id]
        entry = catalog.get(class_id)
        try:
            return load_template(entry.template_path)
        except (OSError, ValueError) as exc:
            raise GeometryError(f"missing texture for class {class_id}: {exc}") from None

    if main_texture is None:
        main_texture = texture_for(sample.sign_class_id)
    main = catalog.get(sample.sign_class_id)
    w, h = plate_size_m(main)
    center = plate_center(sample)
    _plate(geom, center, (w, h), main_texture, sign_mat, INSTANCE_PLATE)

    # companions stack away from the main plate along the pole axis
    next_id = INSTANCE_POLE + 1
    top = center[2] + h / 2
    bottom = center[2] - h / 2
    gap = companion_gap_m
    for comp in sample.companions:
        entry = catalog.get(comp.class_id)
        cw, ch = plate_size_m(entry)
        if comp.position == "upper":
            cz = top + gap + ch / 2
            top = cz + ch / 2
        else:
            cz = bottom - gap - ch / 2
            bottom = cz - ch / 2
        _plate(geom, [0.0, 0.0, cz], (cw, ch), texture_for(comp.class_id), sign_mat, next_id)
        next_id += 1

    r = sample.pole.diameter_m / 2
    pole_mat = Material((mat.pole_gray,) * 3, mat.pole_roughness, 0.5)
    y = r + POLE_STANDOFF_M
    if sample.pole.orientation == "vertical":
        pole_top = max(sample.pole.length_m, top + 0.08)
        tf = axial_transform([0.0, y, 0.0], [0.0, y, pole_top], r)
    else:
        z = center[2] + 0.25 * h
        tf = axial_transform([-sample.pole.length_m + w / 2, y, z], [w / 2 + 0.1, y, z], r)
    geom.primitives.append(Primitive("cylinder", tf, pole_mat, INSTANCE_POLE))

    if sample.occluder.present:
        ox, oy, oz = sample.occluder.offset_m
        base = np.array([ox, oy, oz])
        geom.primitives.append(Primitive("cylinder", axial_transform(base, base + [0, 0, TRUNK_HEIGHT_M], TRUNK_RADIUS_M),
                                         Material(TRUNK_ALBEDO, 0.9, 0.0), next_id))
        geom.primitives.append(Primitive("cone", axial_transform(base + [0, 0, CANOPY_BASE_M], base + [0, 0, CANOPY_TOP_M],
                                                                 CANOPY_RADIUS_M),
                                         Material(CANOPY_ALBEDO, 0.9, 0.0), next_id + 1))
    geom.validate()
    return geom


def plate_only_geometry(texture: np.ndarray, size_m: tuple[float, float], center=(0.0, 0.0, 0.0),
                        material: Material | None = None) -> SceneGeometry:
    """A single textured plate facing -y; used by analytic checks and clean templates."""
    geom = SceneGeometry()
    _plate(geom, np.asarray(center, float), size_m, texture, material or Material((0.8,) * 3, 0.3, 0.0),
           INSTANCE_PLATE)
    return geom
