"""Sign-class registry: loading, validation and companion lookup."""

from __future__ import annotations

import functools
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from PIL import Image

SCHEMA_VERSION = 1

SHAPES = ("circle", "triangle-up", "triangle-down", "octagon", "diamond", "rectangle")
POLE_CONSTRAINTS = ("vertical_only", "vertical_or_horizontal")
GROUPS = (
    "speed limit",
    "danger",
    "other prohibitory",
    "derestriction",
    "stop/wait/parking",
    "information",
    "driving lane control",
    "priority",
    "special zones",
    "highway",
    "additional road",
    "other",
)
# metres, used when an entry leaves physical_diameter_m out
DEFAULT_DIAMETER_M = {"triangle-up": 0.9, "triangle-down": 0.9}
DEFAULT_DIAMETER_FALLBACK_M = 0.6


class CatalogError(ValueError):
    def __init__(self, message: str, entry_id=None):
        self.entry_id = entry_id
        prefix = f"entry {entry_id}: " if entry_id is not None else ""
        super().__init__(prefix + message)


@dataclass(frozen=True)
class SignClass:
    id: int
    code: str
    name: str
    group: str
    shape: str
    pole_constraint: str
    template_path: str
    physical_diameter_m: float
    companions_upper: tuple[int, ...] = ()
    companions_lower: tuple[int, ...] = ()
    size_defaulted: bool = False


@dataclass(frozen=True)
class Violation:
    entry_id: int | None
    field: str
    message: str


@dataclass(frozen=True)
class Catalog:
    classes: tuple[SignClass, ...]
    supplementary: tuple[SignClass, ...] = ()
    version: str = ""
    source: str = field(default="", compare=False)

    def get(self, sign_id: int) -> SignClass:
        for entry in self.classes:
            if entry.id == sign_id:
                return entry
        for entry in self.supplementary:
            if entry.id == sign_id:
                return entry
        raise KeyError(f"unknown sign id {sign_id}")

    def class_ids(self) -> list[int]:
        return [c.id for c in self.classes]

    def __contains__(self, sign_id: int) -> bool:
        return any(e.id == sign_id for e in (*self.classes, *self.supplementary))


def bundled_catalog_path() -> Path:
    return Path(str(resources.files("signsynth") / "data" / "catalog_gtsrb43.json"))


_REQUIRED = ("id", "code", "name", "group", "shape", "pole_constraint", "template")


def _parse_entry(raw, base: Path) -> SignClass:
    if not isinstance(raw, dict):
        raise CatalogError("entry is not an object")
    entry_id = raw.get("id")
    for key in _REQUIRED:
        if key not in raw:
            raise CatalogError(f"missing field {key!r}", entry_id)
    if not isinstance(entry_id, int) or isinstance(entry_id, bool):
        raise CatalogError("id must be an integer", entry_id)
    if raw["shape"] not in SHAPES:
        raise CatalogError(f"unknown shape {raw['shape']!r}", entry_id)
    if raw["pole_constraint"] not in POLE_CONSTRAINTS:
        raise CatalogError(f"unknown pole_constraint {raw['pole_constraint']!r}", entry_id)
    size = raw.get("physical_diameter_m")
    defaulted = size is None
    if defaulted:
        size = DEFAULT_DIAMETER_M.get(raw["shape"], DEFAULT_DIAMETER_FALLBACK_M)
    if isinstance(size, bool) or not isinstance(size, (int, float)):
        raise CatalogError("physical_diameter_m must be a number", entry_id)
    companions = {}
    for key in ("companions_upper", "companions_lower"):
        value = raw.get(key, [])
        if not isinstance(value, list) or not all(isinstance(v, int) and not isinstance(v, bool) for v in value):
            raise CatalogError(f"{key} must be a list of integer ids", entry_id)
        companions[key] = tuple(value)
    template = Path(raw["template"])
    if not template.is_absolute():
        template = base / template
    return SignClass(
        id=entry_id,
        code=str(raw["code"]),
        name=str(raw["name"]),
        group=str(raw["group"]),
        shape=raw["shape"],
        pole_constraint=raw["pole_constraint"],
        template_path=str(template),
        physical_diameter_m=float(size),
        size_defaulted=defaulted,
        **companions,
    )


def _check_template(entry: SignClass) -> str | None:
    path = Path(entry.template_path)
    if not path.is_file():
        return f"template asset missing: {path}"
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode not in ("RGBA", "LA"):
                return f"template {path.name} has no alpha channel (mode {im.mode})"
    except Exception as exc:  # PIL raises a zoo of exception types
        return f"template {path.name} does not decode: {exc}"
    return None


def validate_catalog(catalog: Catalog, check_assets: bool = True) -> list[Violation]:
    """Return every invariant violation; an empty list means the catalog is valid."""
    out: list[Violation] = []
    if not catalog.classes:
        out.append(Violation(None, "classes", "catalog has no classes"))
    seen: set[int] = set()
    entries = (*catalog.classes, *catalog.supplementary)
    for e in entries:
        if e.id in seen:
            out.append(Violation(e.id, "id", f"duplicate id {e.id}"))
        seen.add(e.id)
    known = {e.id for e in entries}
    for e in entries:
        if not 0.1 < e.physical_diameter_m < 2.0:
            out.append(Violation(e.id, "physical_diameter_m", f"{e.physical_diameter_m} not in (0.1, 2.0)"))
        if e.shape not in SHAPES:
            out.append(Violation(e.id, "shape", f"unknown shape {e.shape!r}"))
        if e.pole_constraint not in POLE_CONSTRAINTS:
            out.append(Violation(e.id, "pole_constraint", f"unknown constraint {e.pole_constraint!r}"))
        if e.group not in GROUPS:
            out.append(Violation(e.id, "group", f"unknown group {e.group!r}"))
        for key in ("companions_upper", "companions_lower"):
            for ref in getattr(e, key):
                if ref not in known:
                    out.append(Violation(e.id, key, f"dangling companion reference {ref}"))
        if check_assets:
            problem = _check_template(e)
            if problem:
                out.append(Violation(e.id, "template", problem))
    return out


def load_catalog(path: str | Path | None = None) -> Catalog:
    """Load and fully validate a catalog file (``None`` or ``"bundled"`` for the shipped one)."""
    if path is None or str(path) == "bundled":
        path = bundled_catalog_path()
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise CatalogError(f"catalog file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise CatalogError(f"{path}: malformed JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise CatalogError(f"{path}: top level must be an object")
    schema = doc.get("schema_version", SCHEMA_VERSION)
    if schema != SCHEMA_VERSION:
        raise CatalogError(f"{path}: unsupported schema_version {schema}")
    for key in ("version", "classes"):
        if key not in doc:
            raise CatalogError(f"{path}: missing top-level key {key!r}")
    base = path.parent
    classes = tuple(_parse_entry(raw, base) for raw in doc["classes"])
    supplementary = tuple(_parse_entry(raw, base) for raw in doc.get("supplementary", []))
    catalog = Catalog(classes, supplementary, str(doc["version"]), str(path))
    problems = validate_catalog(catalog)
    if problems:
        first = problems[0]
        detail = "; ".join(f"{p.field}: {p.message}" for p in problems if p.entry_id == first.entry_id)
        raise CatalogError(detail, first.entry_id)
    return catalog


def companion_candidates(catalog: Catalog, sign_id: int, position: str) -> list[SignClass]:
    if position not in ("upper", "lower"):
        raise ValueError(f"position must be 'upper' or 'lower', got {position!r}")
    entry = catalog.get(sign_id)
    ids = entry.companions_upper if position == "upper" else entry.companions_lower
    return [catalog.get(i) for i in ids]


@functools.lru_cache(maxsize=512)
def load_template(path: str) -> np.ndarray:
    """Straight-alpha RGBA template as float32 in [0, 1], shape (H, W, 4)."""
    with Image.open(path) as im:
        rgba = np.asarray(im.convert("RGBA"), dtype=np.float32) / 255.0
    rgba.setflags(write=False)
    return rgba


def plate_size_m(entry: SignClass) -> tuple[float, float]:
    """(width, height) of the plate; the larger side equals physical_diameter_m."""
    h, w = load_template(entry.template_path).shape[:2]
    if w >= h:
        return entry.physical_diameter_m, entry.physical_diameter_m * h / w
    return entry.physical_diameter_m * w / h, entry.physical_diameter_m
