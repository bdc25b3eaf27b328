import json
import subprocess
import sys

import numpy as np
import pytest

from signsynth.analysis import write_attribution
from signsynth.cli import main
from signsynth.fileio import load_planar, png_bytes


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_generate_with_override(capsys, tmp_path):
    out = tmp_path / "ds"
    code, stdout, _ = run(capsys, "generate", "--raster", "--out", str(out), "--images-per-class", "2",
                          "--classes", "1,2", "--set", "imaging.motion_blur.length=0", "--json")
    assert code == 0
    payload = json.loads(stdout)
    assert payload["total"] == 4 and (out / "manifest.json").is_file()
    for meta in (out / "meta").glob("*/*.json"):
        assert json.loads(meta.read_text())["imaging"]["motion_blur"]["length_px"] == 0.0

    code, stdout, _ = run(capsys, "stats", str(out), "--json")
    assert code == 0 and json.loads(stdout)["class_counts"] == {"1": 2, "2": 2}

    code, stdout, _ = run(capsys, "classify", str(out), "--output", str(tmp_path / "p.csv"), "--json")
    assert code == 0 and json.loads(stdout)["n"] == 4
    code, stdout, _ = run(capsys, "analyze", "robustness", "--predictions", str(tmp_path / "p.csv"), "--json")
    assert code == 0 and len(json.loads(stdout)["levels"]) == 1


def test_generate_unwritable_output(capsys, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code, _, err = run(capsys, "generate", "--raster", "--out", str(blocker / "ds"), "--images-per-class", "1",
                       "--classes", "1")
    assert code == 1 and str(blocker) in err


def test_render_one_deterministic(capsys, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(capsys, "render-one", "--class", "14", "--raster", "--out", str(a))[0] == 0
    assert run(capsys, "render-one", "--class", "14", "--raster", "--out", str(b))[0] == 0
    assert (a / "image.png").read_bytes() == (b / "image.png").read_bytes()
    assert (a / "meta.json").read_bytes() == (b / "meta.json").read_bytes()
    arr, side = load_planar(a / "gbuffer_normal.f32")
    assert arr.shape[2] == 3 and side["width"] == arr.shape[1]
    hdr, _ = load_planar(a / "hdr_denoised.f32")
    assert np.all(np.isfinite(hdr))
    c = tmp_path / "c"
    assert run(capsys, "render-one", "--class", "14", "--raster", "--seed", "3", "--out", str(c))[0] == 0
    assert json.loads((c / "meta.json").read_text())["seeds"] != json.loads((a / "meta.json").read_text())["seeds"]


def test_usage_errors(capsys, tmp_path):
    assert run(capsys, "validate-dists", "-n", "0")[0] == 2
    assert run(capsys, "stats", str(tmp_path))[0] == 2
    assert run(capsys, "generate", "--set", "no.such.path=1", "--out", str(tmp_path / "x"))[0] == 2
    assert run(capsys, "render-one", "--class", "999")[0] == 2
    assert run(capsys, "frobnicate")[0] == 2
    (tmp_path / "bad.json").write_text("{")
    assert run(capsys, "--config", str(tmp_path / "bad.json"), "generate")[0] == 2


def test_validate_dists_json(capsys):
    code, stdout, _ = run(capsys, "validate-dists", "-n", "1000", "--json")
    rep = json.loads(stdout)
    assert code == 0 and rep["n_samples"] == 1000
    assert "camera.vertical.pitch_deg" in rep["fields"]


def test_pixel_ratio_commands(capsys, tmp_path):
    mask = np.zeros((4, 4), np.uint8)
    mask[:2] = 255
    (tmp_path / "m.png").write_bytes(png_bytes(mask))
    write_attribution(tmp_path / "a.attr", np.ones((4, 4), np.float32))
    write_attribution(tmp_path / "neg.attr", -np.ones((4, 4), np.float32))
    (tmp_path / "pairs.json").write_text(json.dumps({"a.attr": "m.png"}))
    code, stdout, _ = run(capsys, "analyze", "pixel-ratio", "--pairs", str(tmp_path / "pairs.json"), "--json")
    assert code == 0 and json.loads(stdout)["mean"] == pytest.approx(0.5)
    (tmp_path / "neg.json").write_text(json.dumps({"neg.attr": "m.png"}))
    code, _, err = run(capsys, "analyze", "pixel-ratio", "--pairs", str(tmp_path / "neg.json"))
    assert code == 1 and "undefined" in err


def test_sweep_command(capsys, tmp_path):
    code, stdout, _ = run(capsys, "sweep", "--param", "imaging.motion_blur.length", "--values", "0,5", "--raster",
                          "--n-per-level", "1", "--classes", "1,2", "--out", str(tmp_path / "sw"), "--json")
    rep = json.loads(stdout)
    assert code == 0 and [lv["value"] for lv in rep["levels"]] == [0, 5]
    assert run(capsys, "sweep", "--param", "imaging.motion_blur.length", "--values", "a", "--out",
               str(tmp_path / "x"))[0] == 2


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "signsynth.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and "signsynth" in res.stdout
