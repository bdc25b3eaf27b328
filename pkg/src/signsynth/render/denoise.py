"""Joint bilateral filtering of the radiance buffer, guided by albedo and normals."""

from __future__ import annotations

import math

import numba as nb
import numpy as np

from ..config import DenoiseConfig


@nb.njit(cache=True, nogil=True)
def _joint_bilateral(rad, alb, nrm, inst, radius, inv_s, inv_a, inv_n):
    h, w = inst.shape
    out = np.empty_like(rad)
    for y in range(h):
        for x in range(w):
            acc0 = 0.0
            acc1 = 0.0
            acc2 = 0.0
            wsum = 0.0
            for j in range(max(0, y - radius), min(h, y + radius + 1)):
                for i in range(max(0, x - radius), min(w, x + radius + 1)):
                    if inst[j, i] != inst[y, x]:
                        continue
                    e = ((j - y) ** 2 + (i - x) ** 2) * inv_s
                    da = 0.0
                    dn = 0.0
                    for c in range(3):
                        da += (alb[j, i, c] - alb[y, x, c]) ** 2
                        dn += (nrm[j, i, c] - nrm[y, x, c]) ** 2
                    wt = math.exp(-(e + da * inv_a + dn * inv_n))
                    acc0 += wt * rad[j, i, 0]
                    acc1 += wt * rad[j, i, 1]
                    acc2 += wt * rad[j, i, 2]
                    wsum += wt
            out[y, x, 0] = acc0 / wsum
            out[y, x, 1] = acc1 / wsum
            out[y, x, 2] = acc2 / wsum
    return out


def denoise(g, config: DenoiseConfig | None = None) -> np.ndarray:
    """Edge-aware smoothing of ``g.radiance``.

    Weights multiply a spatial Gaussian with Gaussians in albedo and normal
    difference; neighbours with a different instance id get weight zero, so
    object boundaries never blend. A spatial sigma below 1e-6 is the identity.

    Args:
        g: a GBuffer with radiance, albedo, normal and instance buffers.
        config: filter widths; defaults to ``DenoiseConfig()``.

    Returns:
        Filtered float32 radiance of the same shape.
    """
    config = config or DenoiseConfig()
    rad = np.ascontiguousarray(g.radiance, dtype=np.float32)
    if config.spatial_sigma < 1e-6:
        return rad.copy()
    radius = max(1, int(math.ceil(3.0 * config.spatial_sigma)))
    inv_s = 1.0 / (2.0 * config.spatial_sigma**2)
    inv_a = 1.0 / (2.0 * config.albedo_sigma**2) if config.albedo_sigma > 0 else 1e30
    inv_n = 1.0 / (2.0 * config.normal_sigma**2) if config.normal_sigma > 0 else 1e30
    return _joint_bilateral(rad, np.ascontiguousarray(g.albedo, dtype=np.float32),
                            np.ascontiguousarray(g.normal, dtype=np.float32),
                            np.ascontiguousarray(g.instance, dtype=np.int32), radius, inv_s, inv_a, inv_n)
