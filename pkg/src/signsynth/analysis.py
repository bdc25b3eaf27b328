"""Explainability and robustness harness.

* pixel ratio: share of positive attribution mass that falls on the sign
* robustness certification: exact one-sided binomial test per perturbation
  level (the Clopper-Pearson lower bound, floored to a grid)
* a template-matching reference classifier, so sweeps run without an
  external model
* perturbation sweeps that pin one config field per level while every other
  draw stays paired through the shared per-image seeds
"""

from __future__ import annotations

import copy
import csv
import functools
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import special

from .catalog import Catalog, load_catalog, load_template, plate_size_m
from .config import ConfigError, GenerationConfig, get_path, set_path
from .dataset import DatasetError, generate, iter_records
from .fileio import dump_planar, load_planar, read_png
from .imaging import tonemap_quantize
from .render.envmap import EnvironmentMap
from .render.geometry import plate_only_geometry
from .render.tracer import trace
from .scene import CameraPose, camera_distance

CLASSIFIER_SIZE = 32
SOFTMAX_TEMPERATURE = 10.0
DEFAULT_GRID_STEP = 0.001


class AnalysisError(ValueError):
    pass


class UndefinedRatioError(AnalysisError):
    """No positive attribution anywhere, so the pixel ratio has no value."""


# -- pixel ratio -----------------------------------------------------------------------


def pixel_ratio(attr: np.ndarray, mask: np.ndarray) -> float:
    """Positive attribution mass inside the mask over all positive attribution mass.

    Raises:
        AnalysisError: shapes differ or values are not finite.
        UndefinedRatioError: the map has no positive value.
    """
    a = np.asarray(attr, dtype=np.float64)
    m = np.asarray(mask)
    if a.shape != m.shape:
        raise AnalysisError(f"attribution {a.shape} and mask {m.shape} differ in size")
    if not np.all(np.isfinite(a)):
        raise AnalysisError("attribution map contains non-finite values")
    pos = np.where(a > 0, a, 0.0)
    total = pos.sum()
    if not total > 0:
        raise UndefinedRatioError("no positive attribution in the map; pixel ratio is undefined")
    return float(pos[m > 0].sum() / total)


def mean_pixel_ratio(pairs, pooled: bool = False) -> dict:
    """Average pixel ratio over ``(attr, mask)`` pairs.

    Args:
        pairs: iterable of attribution/mask pairs.
        pooled: if true, sum the inside and total masses over all pairs
            before dividing instead of averaging per-image ratios.

    Returns:
        ``{"mean", "count", "skipped"}`` where skipped counts pairs without
        positive attribution.
    """
    pairs = list(pairs)
    if not pairs:
        raise AnalysisError("no attribution/mask pairs given")
    ratios, inside, total, skipped = [], 0.0, 0.0, 0
    for attr, mask in pairs:
        try:
            r = pixel_ratio(attr, mask)
        except UndefinedRatioError:
            skipped += 1
            continue
        ratios.append(r)
        if pooled:
            a = np.asarray(attr, dtype=np.float64)
            pos = np.where(a > 0, a, 0.0)
            inside += pos[np.asarray(mask) > 0].sum()
            total += pos.sum()
    if not ratios:
        raise UndefinedRatioError("no pair has positive attribution; pixel ratio is undefined")
    mean = inside / total if pooled else float(np.mean(ratios))
    return {"mean": float(mean), "count": len(ratios), "skipped": skipped, "pooled": pooled}


# -- certification ---------------------------------------------------------------------


def default_grid(step: float = DEFAULT_GRID_STEP) -> np.ndarray:
    n = int(round(1.0 / step))
    return np.arange(n + 1) * step


def binomial_upper_tail(k: int, n: int, p) -> np.ndarray:
    """P(X >= k) for X ~ Binomial(n, p)."""
    p = np.asarray(p, dtype=np.float64)
    if k <= 0:
        return np.ones_like(p)
    if k > n:
        return np.zeros_like(p)
    return special.betainc(k, n - k + 1, p)


def clopper_pearson_lower(k: int, n: int, alpha: float) -> float:
    """Exact one-sided lower confidence bound on a binomial proportion at level 1 - alpha."""
    if k <= 0:
        return 0.0
    return float(special.betaincinv(k, n - k + 1, alpha))


def certify_accuracy(correct, alpha: float, r_grid=None) -> float:
    """Largest grid level r at which the exact binomial test rejects H0: p < r.

    With k successes out of n, H0 is rejected at level ``alpha`` when
    P(X >= k | p = r) <= alpha. Returns 0 when no grid level passes.

    Args:
        correct: per-image booleans.
        alpha: significance level, 0 < alpha < 1.
        r_grid: ascending candidate levels in [0, 1]; step 0.001 by default.
    """
    flags = [bool(c) for c in correct]
    if not flags:
        raise AnalysisError("certify_accuracy needs at least one evaluation")
    if not 0.0 < alpha < 1.0:
        raise AnalysisError(f"alpha must lie in (0, 1), got {alpha}")
    grid = default_grid() if r_grid is None else np.asarray(list(r_grid), dtype=np.float64)
    if grid.size == 0:
        raise AnalysisError("empty r_grid")
    if np.any(np.diff(grid) < 0):
        raise AnalysisError("r_grid must be sorted ascending")
    n, k = len(flags), sum(flags)
    passing = grid[binomial_upper_tail(k, n, grid) <= alpha]
    return float(passing.max()) if passing.size else 0.0


# -- reference classifier --------------------------------------------------------------


def _features(image: np.ndarray) -> np.ndarray:
    a = np.asarray(image, dtype=np.float32)
    if a.ndim == 2:
        a = np.repeat(a[..., None], 3, axis=2)
    a = a[..., :3]
    chans = []
    for c in range(3):
        im = Image.fromarray(np.ascontiguousarray(a[..., c]), mode="F")
        ch = np.asarray(im.resize((CLASSIFIER_SIZE, CLASSIFIER_SIZE), Image.Resampling.BILINEAR), dtype=np.float64)
        ch = ch - ch.mean()
        norm = np.linalg.norm(ch)
        chans.append(ch / norm if norm > 1e-12 else np.zeros_like(ch))
    return np.concatenate([c.ravel() for c in chans])


@dataclass
class ReferenceClassifier:
    """Cosine-similarity template matcher over 32x32 per-channel normalized images."""

    class_ids: list[int]
    features: np.ndarray  # (n_classes, 3 * 32 * 32)

    @classmethod
    def from_templates(cls, templates: dict[int, np.ndarray]) -> "ReferenceClassifier":
        if not templates:
            raise AnalysisError("reference classifier needs at least one template")
        ids = sorted(templates)
        return cls(ids, np.stack([_features(templates[i]) for i in ids]))

    def similarities(self, image: np.ndarray) -> np.ndarray:
        f = _features(image)
        nf = np.linalg.norm(f)
        nt = np.linalg.norm(self.features, axis=1)
        denom = nf * nt
        dots = self.features @ f
        return np.where(denom > 1e-12, dots / np.where(denom > 1e-12, denom, 1.0), 0.0)

    def classify(self, image: np.ndarray) -> tuple[int, float]:
        s = self.similarities(image)
        best = int(np.argmax(s))  # first maximum, i.e. the lowest class id on ties
        z = SOFTMAX_TEMPERATURE * (s - s.max())
        p = np.exp(z) / np.exp(z).sum()
        return self.class_ids[best], float(p[best])


def reference_classify(image: np.ndarray, templates) -> tuple[int, float]:
    """Classify ``image`` against ``templates`` (a dict or a ReferenceClassifier)."""
    clf = templates if isinstance(templates, ReferenceClassifier) else ReferenceClassifier.from_templates(templates)
    return clf.classify(image)


@functools.lru_cache(maxsize=8)
def _clean_render(template_path: str, size_m: tuple[float, float], resolution: int, spp: int) -> np.ndarray:
    tex = load_template(template_path)
    geom = plate_only_geometry(tex, size_m, center=(0.0, 0.0, 0.0))
    d = camera_distance(max(size_m), 20.0, 0.8)
    pose = CameraPose(np.array([0.0, -d, 0.0]), np.array([0.0, 1.0, 0.0]), np.array([1.0, 0.0, 0.0]),
                      np.array([0.0, 0.0, 1.0]), 20.0, resolution)
    env = EnvironmentMap(np.ones((8, 16, 3), dtype=np.float32))
    g = trace(geom, env, None, pose, spp=spp, max_bounces=0, seed=0)
    return tonemap_quantize(g.radiance)


def clean_templates(catalog: Catalog, class_ids, resolution: int = 64, spp: int = 16) -> dict[int, np.ndarray]:
    """Frontal renders of the pristine templates under uniform white light, no camera effects."""
    out = {}
    for cid in class_ids:
        entry = catalog.get(cid)
        out[cid] = _clean_render(entry.template_path, plate_size_m(entry), resolution, spp)
    return out


# -- file formats ----------------------------------------------------------------------


@dataclass
class PredictionRecord:
    image_path: str
    true_class: int
    pred_class: int
    confidence: float

    @property
    def correct(self) -> bool:
        return self.true_class == self.pred_class


PREDICTION_HEADER = ["image_path", "true_class", "pred_class", "confidence"]


def write_predictions(path: str | Path, records) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PREDICTION_HEADER)
        for r in records:
            w.writerow([r.image_path, r.true_class, r.pred_class, f"{r.confidence:.6f}"])


def read_predictions(path: str | Path, catalog: Catalog | None = None) -> list[PredictionRecord]:
    """Parse a predictions CSV; class ids are checked against ``catalog`` when given."""
    try:
        fh = open(path, newline="")
    except FileNotFoundError:
        raise AnalysisError(f"predictions file not found: {path}") from None
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or list(reader.fieldnames)[:4] != PREDICTION_HEADER:
            raise AnalysisError(f"{path}: header must be {','.join(PREDICTION_HEADER)}")
        out = []
        for line, row in enumerate(reader, start=2):
            try:
                rec = PredictionRecord(row["image_path"], int(row["true_class"]), int(row["pred_class"]),
                                       float(row["confidence"]))
            except (TypeError, ValueError):
                raise AnalysisError(f"{path}:{line}: malformed row") from None
            if not 0.0 <= rec.confidence <= 1.0:
                raise AnalysisError(f"{path}:{line}: confidence outside [0, 1]")
            if catalog is not None and (rec.true_class not in catalog or rec.pred_class not in catalog):
                raise AnalysisError(f"{path}:{line}: unknown class id")
            out.append(rec)
    return out


def write_attribution(path: str | Path, attr: np.ndarray) -> None:
    """Planar float32 raw plus a JSON sidecar with width and height."""
    dump_planar(path, np.asarray(attr, dtype=np.float32), "feature attribution")


def read_attribution(path: str | Path) -> np.ndarray:
    try:
        arr, _ = load_planar(path)
    except FileNotFoundError:
        raise AnalysisError(f"attribution file not found: {path}") from None
    if arr.ndim != 2:
        raise AnalysisError(f"{path}: attribution maps have one channel")
    return arr


def read_pairs_file(path: str | Path) -> list[tuple[str, str]]:
    """Mapping file (JSON object or list) from attribution paths to mask paths, relative to the file."""
    base = Path(path).parent
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise AnalysisError(f"pairs file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise AnalysisError(f"{path}: malformed JSON ({exc})") from None
    items = data.items() if isinstance(data, dict) else [(d["attr"], d["mask"]) for d in data]
    return [(str(base / a), str(base / m)) for a, m in items]


def load_pairs(pairs_file: str | Path):
    out = []
    for attr_path, mask_path in read_pairs_file(pairs_file):
        mask = read_png(mask_path)
        if mask.ndim == 3:
            mask = mask[..., 0]
        out.append((read_attribution(attr_path), mask > 0))
    return out


# -- sweeps ----------------------------------------------------------------------------


@dataclass
class LevelResult:
    value: object
    n: int
    correct: int
    accuracy: float
    certified_level: float
    confidence: float
    lower_bound: float
    pixel_ratio: float | None = None
    pixel_ratio_count: int = 0
    dataset: str = ""


@dataclass
class RobustnessReport:
    parameter_path: str
    eval_source: str
    alpha: float
    n_per_level: int
    classes: list[int]
    levels: list[LevelResult] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "parameter_path": self.parameter_path,
            "eval_source": self.eval_source,
            "alpha": self.alpha,
            "confidence": 1.0 - self.alpha,
            "n_per_level": self.n_per_level,
            "classes": list(self.classes),
            "levels": [asdict(lv) for lv in self.levels],
        }

    def table(self) -> str:
        """Plain-text table: level, pixel ratio, global robustness."""
        rows = [("level", "pixel ratio", "global robustness", "accuracy", "n")]
        for lv in self.levels:
            pr = "-" if lv.pixel_ratio is None else f"{lv.pixel_ratio:.2f}"
            rows.append((f"{self.parameter_path}={lv.value}", pr, f"{lv.certified_level:.3f}", f"{lv.accuracy:.3f}",
                         str(lv.n)))
        widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
        lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)) for r in rows]
        lines.insert(1, "  ".join("-" * w for w in widths))
        return "\n".join(lines)


def level_result(value, flags, alpha: float, r_grid=None, ratios: dict | None = None, dataset: str = ""):
    flags = list(flags)
    n, k = len(flags), int(sum(flags))
    return LevelResult(value, n, k, k / n, certify_accuracy(flags, alpha, r_grid), 1.0 - alpha,
                       clopper_pearson_lower(k, n, alpha),
                       None if ratios is None else ratios["mean"], 0 if ratios is None else ratios["count"], dataset)


def classify_dataset(dataset_dir: str | Path, classifier: ReferenceClassifier) -> list[PredictionRecord]:
    out = []
    for _, rec in iter_records(dataset_dir):
        img = read_png(Path(dataset_dir) / rec.image_path)
        pred, conf = classifier.classify(img)
        out.append(PredictionRecord(rec.image_path, rec.class_id, pred, conf))
    return out


def sweep_classes(catalog: Catalog, classes=None, count: int = 5) -> list[int]:
    return list(classes) if classes else catalog.class_ids()[:count]


def perturbation_sweep(base_config: GenerationConfig, parameter_path: str, values, eval_source: str =
                       "reference_classifier", n_per_level: int = 100, alpha: float = 0.05, output_dir=None,
                       classes=None, catalog: Catalog | None = None, predictions: str | Path | None = None,
                       attributions: str | Path | None = None, r_grid=None, progress=None) -> RobustnessReport:
    """Generate one paired dataset per value of ``parameter_path`` and evaluate each.

    Every level reuses the base config's master seed, so level datasets share
    per-image seeds and differ only in the pinned field and what it affects.

    Args:
        base_config: config the levels derive from.
        parameter_path: dotted config path of one numeric field.
        values: one level per value.
        eval_source: ``"reference_classifier"`` or ``"external_predictions"``.
        n_per_level: images per class per level.
        alpha: significance of the certification test.
        output_dir: level datasets go to ``<output_dir>/level_<k>``.
        classes: class ids; defaults to the first five catalog classes.
        predictions: CSV for external evaluation; image paths relative to
            ``output_dir`` (e.g. ``level_0/images/000/00000.png``).
        attributions: directory mirroring ``output_dir`` with ``.attr`` maps
            (``level_0/images/000/00000.attr``); adds a pixel ratio per level.
    """
    if eval_source not in ("reference_classifier", "external_predictions"):
        raise AnalysisError(f"unknown eval_source {eval_source!r}")
    values = list(values)
    if not values:
        raise AnalysisError("sweep needs at least one value")
    current = get_path(base_config, parameter_path)
    if isinstance(current, (dict, list, str, bool)):
        raise ConfigError(f"{parameter_path} is not a numeric field")
    catalog = catalog or load_catalog(None if base_config.catalog == "bundled" else base_config.catalog)
    cls = sweep_classes(catalog, classes)
    root = Path(output_dir or base_config.output_dir)
    preds = None
    if eval_source == "external_predictions":
        if predictions is None:
            raise AnalysisError("external_predictions needs a predictions file")
        preds = {p.image_path: p for p in read_predictions(predictions, catalog)}
    report = RobustnessReport(parameter_path, eval_source, alpha, n_per_level, cls)
    classifier = None
    if eval_source == "reference_classifier":
        classifier = ReferenceClassifier.from_templates(clean_templates(catalog, cls))
    for k, value in enumerate(values):
        cfg = set_path(base_config, parameter_path, value)
        cfg = copy.deepcopy(cfg)
        cfg.images_per_class = n_per_level
        cfg.classes = cls
        level_dir = root / f"level_{k}"
        cfg.output_dir = str(level_dir)
        manifest = generate(cfg, catalog)
        if manifest.failures:
            raise DatasetError(f"level {k}: {len(manifest.failures)} images failed to render")
        flags, pairs = [], []
        for _, rec in iter_records(level_dir):
            rel = f"level_{k}/{rec.image_path}"
            if classifier is not None:
                pred, _ = classifier.classify(read_png(level_dir / rec.image_path))
                flags.append(pred == rec.class_id)
            else:
                if rel not in preds:
                    raise AnalysisError(f"predictions file has no entry for {rel}")
                flags.append(preds[rel].pred_class == rec.class_id)
            if attributions is not None:
                attr_path = Path(attributions) / (rel[:-4] + ".attr")
                if attr_path.is_file():
                    mask = read_png(level_dir / rec.mask_path) > 0
                    pairs.append((read_attribution(attr_path), mask))
        ratios = mean_pixel_ratio(pairs) if pairs else None
        report.levels.append(level_result(value, flags, alpha, r_grid, ratios, str(level_dir)))
        if progress:
            progress(k + 1, len(values))
    return report


def robustness_from_predictions(predictions: str | Path, alpha: float = 0.05, r_grid=None,
                                group_by_level: bool = True) -> RobustnessReport:
    """Certification per level directory (``level_<k>/...`` prefix) of a predictions file."""
    recs = read_predictions(predictions)
    if not recs:
        raise AnalysisError(f"{predictions}: no predictions")
    groups: dict[str, list[bool]] = {}
    for r in recs:
        key = r.image_path.split("/", 1)[0] if group_by_level and r.image_path.startswith("level_") else "all"
        groups.setdefault(key, []).append(r.correct)
    report = RobustnessReport("predictions", "external_predictions", alpha, 0, [])

    def order(key):
        return (0, int(key.split("_")[1])) if key.startswith("level_") and key.split("_")[1].isdigit() else (1, key)

    for key in sorted(groups, key=order):
        report.levels.append(level_result(key, groups[key], alpha, r_grid))
    return report
