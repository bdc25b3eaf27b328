"""Geometry construction, path tracing, label buffers and denoising.

Submodules are imported lazily so that numpy-only users (scene sampling,
environment maps) do not pay for compiling the tracer.
"""

import importlib

_EXPORTS = {
    "EnvironmentMap": "envmap", "SunLight": "envmap", "extract_sun": "envmap", "load_environment": "envmap",
    "environment_set": "envmap",
    "SceneGeometry": "geometry", "Primitive": "geometry", "build_geometry": "geometry",
    "GBuffer": "tracer", "trace": "tracer", "render_segmentation": "tracer", "render_mask": "tracer",
    "denoise": "denoise",
}


def __getattr__(name):
    if name in _EXPORTS:
        return getattr(importlib.import_module(f".{_EXPORTS[name]}", __name__), name)
    raise AttributeError(name)
