"""Command-line entry point: ``signsynth <command> [options]``.

Exit status: 0 on success, 1 on runtime failures, 2 on usage or config errors.
With ``--json`` every command prints exactly one JSON document on stdout;
progress and diagnostics always go to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .catalog import CatalogError, load_catalog
from .config import ConfigError, GenerationConfig, apply_overrides, load_config, raster_preset

log = logging.getLogger("signsynth")

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


class UsageError(Exception):
    pass


def _common(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    g = p.add_argument_group("global options")
    g.add_argument("--config", default=d, help="generation config JSON")
    g.add_argument("--set", dest="overrides", action="append", default=d, metavar="KEY=VALUE",
                   help="override a config field by dotted path (repeatable)")
    g.add_argument("--seed", type=int, default=d, help="master seed")
    g.add_argument("--workers", type=int, default=d, help="worker processes")
    g.add_argument("--json", action="store_true", default=d, help="machine-readable output on stdout")
    g.add_argument("-v", "--verbose", action="store_true", default=d, help="debug logging")


def _opt(args, name, default=None):
    value = getattr(args, name, None)
    return default if value is None else value


def _build_config(args, extra_overrides=()) -> GenerationConfig:
    path = _opt(args, "config")
    cfg = load_config(path) if path else GenerationConfig()
    cfg = apply_overrides(cfg, list(_opt(args, "overrides", [])) + list(extra_overrides))
    if _opt(args, "seed") is not None:
        cfg.master_seed = int(args.seed)
    if _opt(args, "workers") is not None:
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        cfg.workers = int(args.workers)
    if getattr(args, "raster", False):
        cfg = raster_preset(cfg)
    return cfg


def _catalog(cfg: GenerationConfig):
    return load_catalog(None if cfg.catalog == "bundled" else cfg.catalog)


def _emit(args, payload: dict, text: str) -> None:
    if _opt(args, "json", False):
        json.dump(payload, sys.stdout, indent=2, sort_keys=True, default=str)
        sys.stdout.write("\n")
    else:
        print(text)


def _progress(done: int, total: int) -> None:
    if total and (done == total or done % max(1, total // 20) == 0):
        print(f"  {done}/{total}", file=sys.stderr, flush=True)


def _parse_classes(text):
    if text is None:
        return None
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"--classes expects comma-separated integers, got {text!r}") from None


# -- commands --------------------------------------------------------------------------


def cmd_generate(args) -> int:
    from .dataset import generate

    cfg = _build_config(args)
    if args.out:
        cfg.output_dir = args.out
    if args.images_per_class is not None:
        cfg.images_per_class = args.images_per_class
    if args.classes is not None:
        cfg.classes = _parse_classes(args.classes)
    catalog = _catalog(cfg)
    print(f"generating into {cfg.output_dir}", file=sys.stderr)
    manifest = generate(cfg, catalog, progress=_progress)
    path = Path(cfg.output_dir) / "manifest.json"
    payload = {**manifest.to_dict(), "manifest_path": str(path)}
    _emit(args, payload, f"{manifest.total} images, {len(manifest.failures)} failures; manifest: {path}")
    return EXIT_RUNTIME if manifest.failures else EXIT_OK


def cmd_render_one(args) -> int:
    from .dataset import encode_outputs, render_image
    from .fileio import dump_planar

    cfg = _build_config(args)
    catalog = _catalog(cfg)
    if args.class_id not in catalog.class_ids():
        raise UsageError(f"unknown class {args.class_id}")
    out = render_image(cfg, catalog, args.class_id, args.index)
    d = Path(args.out)
    d.mkdir(parents=True, exist_ok=True)
    blobs = encode_outputs(out)
    names = {"image_path": "image.png", "mask_path": "mask.png", "seg_path": "seg.png", "meta_path": "meta.json"}
    written = []
    for key, name in names.items():
        (d / name).write_bytes(blobs[key])
        written.append(str(d / name))
    written += out.gbuffer.dump(d, prefix="gbuffer_")
    dump_planar(d / "hdr_denoised.f32", out.radiance, "denoised linear HDR RGB fed to the imaging chain")
    written.append(str(d / "hdr_denoised.f32"))
    payload = {"class_id": args.class_id, "index": args.index, "files": written, "meta": out.record.to_dict()}
    _emit(args, payload, "\n".join(written))
    return EXIT_OK


def cmd_validate(args) -> int:
    from .scene import validate_distributions

    if args.n < 1000:
        raise UsageError("-n must be at least 1000")
    cfg = _build_config(args)
    report = validate_distributions(args.n, cfg, _catalog(cfg))
    lines = [f"{'field':38s} {'mean':>9s} {'std':>9s} {'decl.mean':>9s} {'decl.std':>9s}  KS"]
    for k, s in report.fields.items():
        ks = "-" if s.ks_pass is None else ("pass" if s.ks_pass else "FAIL")
        lines.append(f"{k:38s} {s.mean:9.4f} {s.std:9.4f} {s.declared_mean:9.4f} {s.declared_std:9.4f}  {ks}")
    for k, f in report.frequencies.items():
        lines.append(f"{k:38s} rate {f.rate:.4f} (declared {f.declared:.4f}, n={f.n})")
    _emit(args, report.to_dict(), "\n".join(lines))
    return EXIT_OK


def cmd_stats(args) -> int:
    from .dataset import compute_stats

    if not (Path(args.dataset) / "manifest.json").is_file():
        raise UsageError(f"no manifest.json in {args.dataset}")
    stats = compute_stats(args.dataset)
    r = stats["rates"]
    text = "\n".join([
        f"records: {stats['records']} (manifest total {stats['manifest_total']}), balanced: {stats['balanced']}",
        f"resolution: min {stats['resolution'].get('min')} max {stats['resolution'].get('max')}",
        "rates: " + ", ".join(f"{k} {v:.3f}" for k, v in r.items() if v is not None),
        f"motion blur mean: {stats['motion_blur_length_px'].get('mean')}",
    ])
    _emit(args, stats, text)
    return EXIT_OK


def _parse_values(text: str) -> list:
    out = []
    for t in text.split(","):
        t = t.strip()
        if not t:
            continue
        try:
            out.append(json.loads(t))
        except json.JSONDecodeError:
            raise UsageError(f"--values entries must be numbers, got {t!r}") from None
    if not out:
        raise UsageError("--values is empty")
    return out


def cmd_sweep(args) -> int:
    from .analysis import perturbation_sweep

    cfg = _build_config(args)
    eval_source = "external_predictions" if args.predictions else "reference_classifier"
    report = perturbation_sweep(cfg, args.param, _parse_values(args.values), eval_source=eval_source,
                                n_per_level=args.n_per_level, alpha=args.alpha, output_dir=args.out,
                                classes=_parse_classes(args.classes), catalog=_catalog(cfg),
                                predictions=args.predictions, attributions=args.attributions,
                                progress=_progress)
    _emit(args, report.to_dict(), report.table())
    return EXIT_OK


def cmd_analyze_pixel_ratio(args) -> int:
    from .analysis import load_pairs, mean_pixel_ratio

    result = mean_pixel_ratio(load_pairs(args.pairs), pooled=args.pooled)
    _emit(args, result, f"pixel ratio {result['mean']:.4f} over {result['count']} maps ({result['skipped']} skipped)")
    return EXIT_OK


def cmd_analyze_robustness(args) -> int:
    from .analysis import robustness_from_predictions

    report = robustness_from_predictions(args.predictions, alpha=args.alpha)
    _emit(args, report.to_dict(), report.table())
    return EXIT_OK


def cmd_classify(args) -> int:
    from .analysis import ReferenceClassifier, classify_dataset, clean_templates, write_predictions
    from .dataset import load_manifest, iter_records

    cfg = _build_config(args)
    catalog = _catalog(cfg)
    load_manifest(args.dataset)
    classes = _parse_classes(args.classes) or sorted({rec.class_id for _, rec in iter_records(args.dataset)})
    if not classes:
        raise UsageError(f"no records in {args.dataset}")
    clf = ReferenceClassifier.from_templates(clean_templates(catalog, classes))
    preds = classify_dataset(args.dataset, clf)
    if args.output:
        write_predictions(args.output, preds)
    acc = sum(p.correct for p in preds) / len(preds) if preds else 0.0
    payload = {"dataset": args.dataset, "n": len(preds), "accuracy": acc, "classes": classes,
               "predictions_file": args.output}
    _emit(args, payload, f"accuracy {acc:.4f} over {len(preds)} images")
    return EXIT_OK


# -- parser ----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="signsynth", description="Synthetic traffic-sign dataset generator.")
    p.add_argument("--version", action="version", version=f"signsynth {__version__}")
    _common(p, suppress=False)
    sub = p.add_subparsers(dest="command", metavar="command")
    sub.required = True

    g = sub.add_parser("generate", help="render a dataset")
    _common(g, suppress=True)
    g.add_argument("--out", help="output directory (overrides output_dir)")
    g.add_argument("--images-per-class", type=int)
    g.add_argument("--classes", help="comma-separated class ids")
    g.add_argument("--raster", action="store_true", help="cheap preset: spp 1, direct light only")
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("render-one", help="render one image with every intermediate buffer")
    _common(r, suppress=True)
    r.add_argument("--class", dest="class_id", type=int, required=True)
    r.add_argument("--index", type=int, default=0)
    r.add_argument("--out", default="debug")
    r.add_argument("--raster", action="store_true")
    r.set_defaults(func=cmd_render_one)

    v = sub.add_parser("validate-dists", help="empirical check of the scene distributions")
    _common(v, suppress=True)
    v.add_argument("-n", type=int, default=10000)
    v.set_defaults(func=cmd_validate)

    s = sub.add_parser("stats", help="aggregate statistics of a generated dataset")
    _common(s, suppress=True)
    s.add_argument("dataset")
    s.set_defaults(func=cmd_stats)

    w = sub.add_parser("sweep", help="paired datasets over one parameter, with robustness per level")
    _common(w, suppress=True)
    w.add_argument("--param", required=True, help="dotted config path, e.g. imaging.motion_blur.length")
    w.add_argument("--values", required=True, help="comma-separated values, e.g. 0,5,10")
    w.add_argument("--n-per-level", type=int, default=100, help="images per class per level")
    w.add_argument("--alpha", type=float, default=0.05)
    w.add_argument("--classes", help="comma-separated class ids (default: first five)")
    w.add_argument("--out", default="sweep")
    w.add_argument("--predictions", help="external predictions CSV instead of the built-in classifier")
    w.add_argument("--attributions", help="directory of .attr maps mirroring the sweep layout")
    w.add_argument("--raster", action="store_true")
    w.set_defaults(func=cmd_sweep)

    a = sub.add_parser("analyze", help="pixel ratio and robustness reports")
    asub = a.add_subparsers(dest="analysis", metavar="analysis")
    asub.required = True
    ap = asub.add_parser("pixel-ratio", help="mean pixel ratio over attribution/mask pairs")
    _common(ap, suppress=True)
    ap.add_argument("--pairs", required=True, help="JSON mapping attribution files to mask PNGs")
    ap.add_argument("--pooled", action="store_true", help="pool sums instead of averaging per image")
    ap.set_defaults(func=cmd_analyze_pixel_ratio)
    ar = asub.add_parser("robustness", help="certified accuracy from a predictions CSV")
    _common(ar, suppress=True)
    ar.add_argument("--predictions", required=True)
    ar.add_argument("--alpha", type=float, default=0.05)
    ar.set_defaults(func=cmd_analyze_robustness)

    c = sub.add_parser("classify", help="run the reference classifier over a dataset")
    _common(c, suppress=True)
    c.add_argument("dataset")
    c.add_argument("--output", help="write predictions CSV here")
    c.add_argument("--classes", help="template classes (default: classes present)")
    c.set_defaults(func=cmd_classify)
    return p


def main(argv=None) -> int:
    from .analysis import AnalysisError
    from .dataset import DatasetError, SchemaError

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if _opt(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (UsageError, ConfigError, CatalogError, SchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DatasetError, AnalysisError, OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
