import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from signsynth.analysis import (AnalysisError, PredictionRecord, ReferenceClassifier, UndefinedRatioError,
                                certify_accuracy, classify_dataset, clean_templates, clopper_pearson_lower,
                                load_pairs, mean_pixel_ratio, perturbation_sweep, pixel_ratio, read_attribution,
                                read_predictions, reference_classify, robustness_from_predictions,
                                write_attribution, write_predictions)
from signsynth.config import ConfigError, GenerationConfig, raster_preset
from signsynth.dataset import iter_records
from signsynth.fileio import png_bytes


def binomial_tail_oracle(k, n, p):
    return sum(math.comb(n, j) * p**j * (1 - p) ** (n - j) for j in range(k, n + 1))


def certify_oracle(k, n, alpha, grid):
    best = 0.0
    for r in grid:
        if binomial_tail_oracle(k, n, r) <= alpha:
            best = max(best, r)
    return best


# -- pixel ratio ------------------------------------------------------------------------


def test_pixel_ratio_examples():
    attr = np.ones((10, 10))
    mask = np.zeros((10, 10), bool)
    mask[:3] = True
    assert pixel_ratio(attr, mask) == pytest.approx(0.30)
    assert pixel_ratio(attr, np.ones((10, 10), bool)) == 1.0
    outside = np.where(mask, -1.0, 2.0)
    assert pixel_ratio(outside, mask) == 0.0


def test_pixel_ratio_errors():
    with pytest.raises(UndefinedRatioError):
        pixel_ratio(-np.ones((4, 4)), np.ones((4, 4), bool))
    with pytest.raises(AnalysisError):
        pixel_ratio(np.ones((4, 4)), np.ones((4, 5), bool))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1e-3, 1e3))
def test_pixel_ratio_invariances(seed, scale):
    g = np.random.default_rng(seed)
    attr = g.standard_normal((16, 16))
    attr[0, 0] = abs(attr[0, 0]) + 0.1
    mask = g.random((16, 16)) < 0.4
    r = pixel_ratio(attr, mask)
    assert pixel_ratio(attr * scale, mask) == pytest.approx(r, rel=1e-12, abs=1e-15)
    changed = np.where(attr > 0, attr, g.standard_normal((16, 16)) - 10)
    assert pixel_ratio(changed, mask) == pytest.approx(r, rel=1e-12, abs=1e-15)


def test_mean_pixel_ratio():
    m = np.zeros((10, 10), bool)
    m[:2] = True
    a = np.ones((10, 10))
    m8 = np.zeros((10, 10), bool)
    m8[:8] = True
    assert mean_pixel_ratio([(a, m)])["mean"] == pytest.approx(0.2)
    assert mean_pixel_ratio([(a, m), (a, m8)])["mean"] == pytest.approx(0.5)
    res = mean_pixel_ratio([(a, m), (-a, m), (a, m8)])
    assert res["skipped"] == 1 and res["count"] == 2 and res["mean"] == pytest.approx(0.5)
    with pytest.raises(UndefinedRatioError):
        mean_pixel_ratio([(-a, m)])
    with pytest.raises(AnalysisError):
        mean_pixel_ratio([])


def test_pairs_file_round_trip(tmp_path):
    attr = np.arange(12, dtype=np.float32).reshape(3, 4) - 4
    write_attribution(tmp_path / "a.attr", attr)
    assert np.array_equal(read_attribution(tmp_path / "a.attr"), attr)
    mask = np.zeros((3, 4), np.uint8)
    mask[1:] = 255
    (tmp_path / "m.png").write_bytes(png_bytes(mask))
    (tmp_path / "pairs.json").write_text(json.dumps({"a.attr": "m.png"}))
    (a, m), = load_pairs(tmp_path / "pairs.json")
    assert pixel_ratio(a, m) == pytest.approx(attr[1:][attr[1:] > 0].sum() / attr[attr > 0].sum())


# -- certification ------------------------------------------------------------------------


def test_all_correct_closed_form():
    assert certify_accuracy([True] * 100, 0.05) == pytest.approx(0.970)
    assert math.floor(0.05 ** (1 / 100) * 1000) / 1000 == pytest.approx(0.970)
    assert clopper_pearson_lower(100, 100, 0.05) == pytest.approx(0.05 ** (1 / 100), rel=1e-12)


def test_all_wrong_is_zero():
    assert certify_accuracy([False] * 50, 0.05) == 0.0


def test_k88_matches_oracle():
    grid = [i / 1000 for i in range(1001)]
    got = certify_accuracy([True] * 88 + [False] * 12, 0.05)
    assert abs(got - certify_oracle(88, 100, 0.05, grid)) <= 0.001 + 1e-12


@pytest.mark.parametrize("n", [10, 100])
@pytest.mark.parametrize("alpha", [0.01, 0.05])
def test_certify_against_oracle_coarse(n, alpha):
    grid = [i / 100 for i in range(101)]
    for k in range(0, n + 1, 1 if n == 10 else 7):
        got = certify_accuracy([True] * k + [False] * (n - k), alpha, grid)
        assert abs(got - certify_oracle(k, n, alpha, grid)) <= 0.01 + 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 60), st.data())
def test_certify_monotone(n, data):
    k = data.draw(st.integers(0, n - 1))
    flags = [True] * k + [False] * (n - k)
    base = certify_accuracy(flags, 0.05)
    assert certify_accuracy(flags[:-1] + [True], 0.05) >= base
    assert certify_accuracy(flags, 0.1) >= base


def test_certify_errors():
    with pytest.raises(AnalysisError):
        certify_accuracy([], 0.05)
    with pytest.raises(AnalysisError):
        certify_accuracy([True], 1.5)
    with pytest.raises(AnalysisError):
        certify_accuracy([True], 0.05, [0.5, 0.2])


# -- classifier ---------------------------------------------------------------------------


def _templates():
    g = np.random.default_rng(0)
    return {i: g.integers(0, 256, (40, 40, 3)).astype(np.uint8) for i in (3, 7, 9)}


def test_template_matches_itself():
    t = _templates()
    clf = ReferenceClassifier.from_templates(t)
    for cid, img in t.items():
        pred, conf = clf.classify(img)
        assert pred == cid
        assert clf.similarities(img)[clf.class_ids.index(cid)] == pytest.approx(1.0)
        assert 0 < conf <= 1


def test_featureless_image_ties_to_lowest_id():
    pred, conf = reference_classify(np.full((20, 20, 3), 128, np.uint8), _templates())
    assert pred == 3
    assert conf == pytest.approx(1 / 3)


def test_empty_templates_rejected():
    with pytest.raises(AnalysisError):
        ReferenceClassifier.from_templates({})


def test_clean_templates_self_classify(catalog):
    t = clean_templates(catalog, range(5))
    clf = ReferenceClassifier.from_templates(t)
    assert [clf.classify(t[i])[0] for i in range(5)] == list(range(5))


# -- predictions and sweeps -------------------------------------------------------------------


def test_predictions_round_trip(tmp_path):
    recs = [PredictionRecord("level_0/a.png", 1, 1, 0.9), PredictionRecord("level_1/b.png", 1, 2, 0.4)]
    write_predictions(tmp_path / "p.csv", recs)
    assert read_predictions(tmp_path / "p.csv") == recs
    rep = robustness_from_predictions(tmp_path / "p.csv")
    assert [lv.value for lv in rep.levels] == ["level_0", "level_1"]
    assert [lv.accuracy for lv in rep.levels] == [1.0, 0.0]
    (tmp_path / "bad.csv").write_text("a,b\n1,2\n")
    with pytest.raises(AnalysisError):
        read_predictions(tmp_path / "bad.csv")
    with pytest.raises(AnalysisError):
        read_predictions(tmp_path / "missing.csv")


def test_single_level_sweep_matches_direct_evaluation(catalog, tmp_path):
    cfg = raster_preset(GenerationConfig())
    rep = perturbation_sweep(cfg, "imaging.motion_blur.length", [0], n_per_level=4, output_dir=tmp_path,
                             catalog=catalog)
    assert len(rep.levels) == 1 and rep.classes == [0, 1, 2, 3, 4]
    clf = ReferenceClassifier.from_templates(clean_templates(catalog, range(5)))
    direct = [p.correct for p in classify_dataset(tmp_path / "level_0", clf)]
    assert rep.levels[0].accuracy == pytest.approx(np.mean(direct))
    assert rep.levels[0].accuracy > 0.2
    assert rep.levels[0].certified_level == certify_accuracy(direct, 0.05)


def test_paired_levels_differ_only_in_blur(catalog, tmp_path):
    cfg = raster_preset(GenerationConfig())
    perturbation_sweep(cfg, "imaging.motion_blur.length", [0, 5], n_per_level=2, output_dir=tmp_path,
                       classes=[1], catalog=catalog)
    for (m0, r0), (m1, r1) in zip(iter_records(tmp_path / "level_0"), iter_records(tmp_path / "level_1")):
        d0, d1 = r0.to_dict(), r1.to_dict()
        assert d0["scene"] == d1["scene"] and d0["defects"] == d1["defects"] and d0["seeds"] == d1["seeds"]
        assert d0["imaging"]["motion_blur"]["length_px"] == 0.0 and d1["imaging"]["motion_blur"]["length_px"] == 5.0
        i0, i1 = dict(d0["imaging"]), dict(d1["imaging"])
        i0.pop("motion_blur"), i1.pop("motion_blur")
        assert i0 == i1


def test_external_predictions_with_attributions(catalog, tmp_path):
    cfg = raster_preset(GenerationConfig())
    out = tmp_path / "sweep"
    perturbation_sweep(cfg, "imaging.motion_blur.length", [0], n_per_level=1, output_dir=out, classes=[1, 2],
                       catalog=catalog)
    recs, attr_root = [], tmp_path / "attr"
    for _, rec in iter_records(out / "level_0"):
        rel = f"level_0/{rec.image_path}"
        recs.append(PredictionRecord(rel, rec.class_id, 1, 0.5))
        p = attr_root / (rel[:-4] + ".attr")
        p.parent.mkdir(parents=True, exist_ok=True)
        write_attribution(p, np.ones((rec.resolution, rec.resolution), np.float32))
    write_predictions(tmp_path / "p.csv", recs)
    rep = perturbation_sweep(cfg, "imaging.motion_blur.length", [0], "external_predictions", n_per_level=1,
                             output_dir=out, classes=[1, 2], catalog=catalog, predictions=tmp_path / "p.csv",
                             attributions=attr_root)
    lv = rep.levels[0]
    assert lv.accuracy == 0.5 and lv.pixel_ratio_count == 2 and 0 < lv.pixel_ratio < 1


def test_sweep_rejects_bad_paths(catalog, tmp_path):
    cfg = raster_preset(GenerationConfig())
    with pytest.raises(ConfigError):
        perturbation_sweep(cfg, "imaging.nope", [0], n_per_level=1, output_dir=tmp_path, catalog=catalog)
    with pytest.raises(ConfigError):
        perturbation_sweep(cfg, "imaging.chroma.mode", [0], n_per_level=1, output_dir=tmp_path, catalog=catalog)
