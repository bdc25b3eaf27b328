import numpy as np
import pytest

from signsynth.catalog import load_catalog
from signsynth.config import GenerationConfig, raster_preset


@pytest.fixture(scope="session")
def catalog():
    return load_catalog()


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory, catalog):
    """Six raster-preset records over a sign that allows both pole types and a stop sign."""
    from signsynth.dataset import generate

    out = tmp_path_factory.mktemp("small_ds")
    cfg = raster_preset(GenerationConfig(images_per_class=3, classes=[1, 14], output_dir=str(out)))
    manifest = generate(cfg, catalog)
    return out, cfg, manifest


def rgba(rgb, alpha=1.0, shape=(2, 2)):
    a = np.zeros(shape + (4,), dtype=np.float32)
    a[..., :3] = rgb
    a[..., 3] = alpha
    return a


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance verdicts at the end of the run, where captured output cannot hide them."""
    import sys

    mod = next((m for name, m in sys.modules.items() if name.endswith("test_acceptance")), None)
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
