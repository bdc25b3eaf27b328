import json
import shutil

import numpy as np
import pytest
from PIL import Image

from signsynth.catalog import (Catalog, CatalogError, SignClass, companion_candidates, load_catalog, load_template,
                               plate_size_m, validate_catalog)


def _write_template(path, size=(16, 16)):
    a = np.zeros(size + (4,), dtype=np.uint8)
    a[..., 0] = 200
    a[..., 3] = 255
    Image.fromarray(a, "RGBA").save(path)


def _entry(i, **kw):
    e = {"id": i, "code": f"c{i}", "name": f"sign {i}", "group": "other prohibitory", "shape": "circle",
         "pole_constraint": "vertical_or_horizontal", "template": "t.png", "physical_diameter_m": 0.6}
    e.update(kw)
    return e


def _write_catalog(tmp_path, entries, **top):
    _write_template(tmp_path / "t.png")
    doc = {"schema_version": 1, "version": "test", "classes": entries}
    doc.update(top)
    p = tmp_path / "cat.json"
    p.write_text(json.dumps(doc))
    return p


def test_minimal_one_class_catalog(tmp_path):
    cat = load_catalog(_write_catalog(tmp_path, [_entry(0)]))
    assert cat.class_ids() == [0]
    assert cat.get(0).shape == "circle"
    assert plate_size_m(cat.get(0)) == (0.6, 0.6)


def test_dangling_companion_reference(tmp_path):
    p = _write_catalog(tmp_path, [_entry(0, companions_upper=[99])])
    with pytest.raises(CatalogError) as exc:
        load_catalog(p)
    assert "99" in str(exc.value)
    assert exc.value.entry_id == 0


def test_missing_template_asset(tmp_path):
    p = _write_catalog(tmp_path, [_entry(0, template="missing.png")])
    with pytest.raises(CatalogError, match="missing"):
        load_catalog(p)


def test_template_without_alpha(tmp_path):
    p = _write_catalog(tmp_path, [_entry(0, template="rgb.png")])
    Image.new("RGB", (8, 8)).save(tmp_path / "rgb.png")
    with pytest.raises(CatalogError, match="alpha"):
        load_catalog(p)


def test_missing_size_defaults_by_shape(tmp_path):
    e0 = _entry(0)
    del e0["physical_diameter_m"]
    e1 = _entry(1, shape="triangle-up")
    del e1["physical_diameter_m"]
    cat = load_catalog(_write_catalog(tmp_path, [e0, e1]))
    assert cat.get(0).physical_diameter_m == 0.6 and cat.get(0).size_defaulted
    assert cat.get(1).physical_diameter_m == 0.9


def test_unknown_shape_and_malformed(tmp_path):
    with pytest.raises(CatalogError):
        load_catalog(_write_catalog(tmp_path, [_entry(0, shape="hexagon")]))
    (tmp_path / "x.json").write_text("[1, 2")
    with pytest.raises(CatalogError):
        load_catalog(tmp_path / "x.json")
    with pytest.raises(CatalogError):
        load_catalog(tmp_path / "absent.json")
    with pytest.raises(CatalogError):
        load_catalog(_write_catalog(tmp_path, [_entry(0)], schema_version=2))


def test_validate_reports_every_violation(tmp_path):
    _write_template(tmp_path / "t.png")
    base = dict(code="c", name="n", group="other prohibitory", shape="circle", pole_constraint="vertical_only",
                template_path=str(tmp_path / "t.png"))
    cat = Catalog((SignClass(id=0, physical_diameter_m=0.0, **base), SignClass(id=0, physical_diameter_m=0.6, **base)))
    fields = sorted(v.field for v in validate_catalog(cat))
    assert fields == ["id", "physical_diameter_m"]


def test_bundled_catalog(catalog):
    assert catalog.class_ids() == list(range(43))
    assert validate_catalog(catalog) == []
    for cid in range(6):
        assert catalog.get(cid).physical_diameter_m == 0.6
        assert catalog.get(cid).shape == "circle"
    assert catalog.get(14).shape == "octagon"
    t = load_template(catalog.get(14).template_path)
    assert t.dtype == np.float32 and t.shape[2] == 4 and t[..., 3].min() == 0.0


def test_companion_candidates(catalog):
    for cid in catalog.class_ids():
        for pos in ("upper", "lower"):
            for c in companion_candidates(catalog, cid, pos):
                assert c.id in catalog
    with pytest.raises(ValueError):
        companion_candidates(catalog, 0, "side")


def test_unknown_id_raises(catalog):
    with pytest.raises(KeyError):
        catalog.get(99999)
    assert 99999 not in catalog
    assert 1000 in catalog  # supplementary plates are addressable too
