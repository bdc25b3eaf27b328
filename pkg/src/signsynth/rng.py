"""Counter-based seed derivation.

Every random decision in the pipeline is drawn from a stream whose seed is a
pure function of ``(master_seed, class_id, index, stage name)``. Images can
therefore be produced in any order, on any number of workers, and each stage
can be re-run in isolation from the seeds recorded in the metadata.

    image seed  = splitmix64(master_seed ^ image_index)
    stage seed  = splitmix64(image seed ^ fnv1a64(stage name))
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def splitmix64(x: int) -> int:
    """One SplitMix64 step (increment, then the standard finalizer)."""
    z = (x + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def fnv1a64(name: str) -> int:
    h = _FNV_OFFSET
    for byte in name.encode("utf-8"):
        h ^= byte
        h = (h * _FNV_PRIME) & MASK64
    return h


def image_index(class_id: int, index: int) -> int:
    """Global image counter; independent of class filters and per-class counts."""
    if class_id < 0 or index < 0 or index >= (1 << 32):
        raise ValueError(f"invalid image coordinates ({class_id}, {index})")
    return ((class_id << 32) | index) & MASK64


def image_seed(master_seed: int, class_id: int, index: int) -> int:
    return splitmix64((master_seed & MASK64) ^ image_index(class_id, index))


def derive(seed: int, name: str) -> int:
    """Seed of the named sub-stream of ``seed``."""
    return splitmix64((seed & MASK64) ^ fnv1a64(name))


def stream(seed: int) -> np.random.Generator:
    """Numpy generator for one stage; Philox keeps it counter-based."""
    return np.random.Generator(np.random.Philox(key=seed & MASK64))


def substream(seed: int, name: str) -> np.random.Generator:
    return stream(derive(seed, name))


STAGES = ("defects", "scene", "render", "imaging")


def stage_seeds(master_seed: int, class_id: int, index: int) -> dict[str, int]:
    img = image_seed(master_seed, class_id, index)
    seeds = {"image": img}
    for name in STAGES:
        seeds[name] = derive(img, name)
    return seeds
