"""Path tracer and label buffers.

Radiance is estimated with jittered primary rays. Every shaded vertex gets an
explicit sun sample with a shadow ray plus one BSDF-sampled continuation ray;
a continuation that escapes picks up the (sun-free) residual environment, one
that hits geometry becomes the next vertex, up to ``max_bounces`` indirect
bounces. Primary rays that miss see the original environment map.

The BSDF is Lambertian diffuse plus a GGX microfacet lobe with
``alpha = roughness**2`` and ``F0 = 0.08 * specular``. Continuation directions
come from a one-sample mixture of cosine-weighted hemisphere sampling and GGX
half-vector sampling (specular picked with probability ``P_SPECULAR`` when
the surface has a specular term, else never), weighted by the mixture pdf.

Random numbers are a stateless hash of (seed, pixel, sample, dimension), so
the result does not depend on how tiles are scheduled over threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numba as nb
import numpy as np

from ..fileio import dump_planar
from ..scene import CameraPose
from .envmap import EnvironmentMap, SunLight, ZERO_SUN
from .geometry import INSTANCE_PLATE, PackedGeometry, SceneGeometry

P_SPECULAR = 0.2
EPS = 1e-5
INF = np.inf


@dataclass
class GBuffer:
    radiance: np.ndarray  # (H, W, 3) float32
    albedo: np.ndarray  # (H, W, 3) float32, linear
    normal: np.ndarray  # (H, W, 3) float32, camera space (x right, y up, z toward the camera)
    instance: np.ndarray  # (H, W) int32, 0 = background
    depth: np.ndarray  # (H, W) float32 metres along the view axis, inf = background
    clamped: int = 0  # non-finite radiance samples replaced by zero

    def dump(self, directory, prefix: str = "") -> list[str]:
        """Write every buffer as planar float32 + JSON sidecar; returns the paths."""
        from pathlib import Path

        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        out = []
        for name, arr, sem in (("radiance", self.radiance, "linear HDR RGB radiance"),
                               ("albedo", self.albedo, "linear RGB albedo"),
                               ("normal", self.normal, "camera-space unit normal xyz"),
                               ("instance", self.instance.astype(np.float32), "instance id, 0 = background"),
                               ("depth", self.depth, "view-axis depth in metres, inf = background")):
            path = d / f"{prefix}{name}.f32"
            dump_planar(path, arr, sem)
            out.append(str(path))
        return out


# -- random numbers -------------------------------------------------------------------


@nb.njit(cache=True, nogil=True, inline="always")
def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@nb.njit(cache=True, nogil=True)
def _rand(seed, pixel, sample, dim):
    z = np.uint64(seed) ^ (np.uint64(pixel) * np.uint64(0x9E3779B97F4A7C15))
    z = _mix64(z + np.uint64(sample) * np.uint64(0xC2B2AE3D27D4EB4F))
    z = _mix64(z + np.uint64(dim) * np.uint64(0x165667B19E3779F9) + np.uint64(0x9E3779B97F4A7C15))
    return float(z >> np.uint64(11)) * (1.0 / 9007199254740992.0)


# -- intersection ---------------------------------------------------------------------


@nb.njit(cache=True, nogil=True)
def _dot(a0, a1, a2, b0, b1, b2):
    return a0 * b0 + a1 * b1 + a2 * b2


@nb.njit(cache=True, nogil=True)
def _tex_fetch(atlas, tex_info, tex, s, t):
    off = tex_info[tex, 0]
    w = tex_info[tex, 1]
    h = tex_info[tex, 2]
    col = min(max(int(s * w), 0), w - 1)
    row = min(max(int(t * h), 0), h - 1)
    base = off + (row * w + col) * 4
    return atlas[base], atlas[base + 1], atlas[base + 2], atlas[base + 3]


@nb.njit(cache=True, nogil=True)
def _hit_quad(p, ox, oy, oz, dx, dy, dz, tmax, atlas, tex_info, tex):
    nx, ny, nz = p[9], p[10], p[11]
    den = _dot(dx, dy, dz, nx, ny, nz)
    if abs(den) < 1e-12:
        return INF, 0.0, 0.0
    t = _dot(p[0] - ox, p[1] - oy, p[2] - oz, nx, ny, nz) / den
    if t <= EPS or t >= tmax:
        return INF, 0.0, 0.0
    qx, qy, qz = ox + t * dx - p[0], oy + t * dy - p[1], oz + t * dz - p[2]
    a = _dot(qx, qy, qz, p[3], p[4], p[5]) / _dot(p[3], p[4], p[5], p[3], p[4], p[5])
    b = _dot(qx, qy, qz, p[6], p[7], p[8]) / _dot(p[6], p[7], p[8], p[6], p[7], p[8])
    if a < -1.0 or a > 1.0 or b < -1.0 or b > 1.0:
        return INF, 0.0, 0.0
    s = 0.5 * (a + 1.0)
    tt = 0.5 * (1.0 - b)
    if tex >= 0:
        alpha = _tex_fetch(atlas, tex_info, tex, s, tt)[3]
        if alpha < 0.5:
            return INF, 0.0, 0.0
    return t, s, tt


@nb.njit(cache=True, nogil=True)
def _hit_disc(cx, cy, cz, ax, ay, az, radius, ox, oy, oz, dx, dy, dz, tmax):
    den = _dot(dx, dy, dz, ax, ay, az)
    if abs(den) < 1e-12:
        return INF
    t = _dot(cx - ox, cy - oy, cz - oz, ax, ay, az) / den
    if t <= EPS or t >= tmax:
        return INF
    qx, qy, qz = ox + t * dx - cx, oy + t * dy - cy, oz + t * dz - cz
    if qx * qx + qy * qy + qz * qz > radius * radius:
        return INF
    return t


@nb.njit(cache=True, nogil=True)
def _hit_axial(p, cone, ox, oy, oz, dx, dy, dz, tmax):
    """Capped cylinder or cone; returns (t, part) with part 0 = side, 1 = base cap, 2 = top cap."""
    bx, by, bz = p[0], p[1], p[2]
    ax, ay, az = p[3], p[4], p[5]
    length, radius = p[6], p[7]
    cx, cy, cz = ox - bx, oy - by, oz - bz
    dh = _dot(dx, dy, dz, ax, ay, az)
    oh = _dot(cx, cy, cz, ax, ay, az)
    best = INF
    part = -1
    if cone:
        k = radius / length
        m0 = length - oh
        qa = 1.0 - dh * dh - k * k * dh * dh
        qb = 2.0 * (_dot(cx, cy, cz, dx, dy, dz) - oh * dh + k * k * m0 * dh)
        qc = _dot(cx, cy, cz, cx, cy, cz) - oh * oh - k * k * m0 * m0
    else:
        qa = 1.0 - dh * dh
        qb = 2.0 * (_dot(cx, cy, cz, dx, dy, dz) - oh * dh)
        qc = _dot(cx, cy, cz, cx, cy, cz) - oh * oh - radius * radius
    if abs(qa) > 1e-12:
        disc = qb * qb - 4.0 * qa * qc
        if disc >= 0.0:
            sq = math.sqrt(disc)
            for sgn in (-1.0, 1.0):
                t = (-qb + sgn * sq) / (2.0 * qa)
                if t > EPS and t < tmax and t < best:
                    h = oh + t * dh
                    if 0.0 <= h <= length:
                        best = t
                        part = 0
    t = _hit_disc(bx, by, bz, ax, ay, az, radius, ox, oy, oz, dx, dy, dz, min(best, tmax))
    if t < best:
        best = t
        part = 1
    if not cone:
        t = _hit_disc(bx + length * ax, by + length * ay, bz + length * az, ax, ay, az, radius,
                      ox, oy, oz, dx, dy, dz, min(best, tmax))
        if t < best:
            best = t
            part = 2
    return best, part


@nb.njit(cache=True, nogil=True)
def _hit_sphere(p, ox, oy, oz, dx, dy, dz, tmax):
    cx, cy, cz = ox - p[0], oy - p[1], oz - p[2]
    b = _dot(cx, cy, cz, dx, dy, dz)
    c = _dot(cx, cy, cz, cx, cy, cz) - p[3] * p[3]
    disc = b * b - c
    if disc < 0.0:
        return INF
    sq = math.sqrt(disc)
    t = -b - sq
    if t <= EPS:
        t = -b + sq
    if t <= EPS or t >= tmax:
        return INF
    return t


@nb.njit(cache=True, nogil=True)
def _intersect(kind, prm, material, atlas, tex_info, ox, oy, oz, dx, dy, dz, tmax):
    """Nearest hit: (t, prim, normal xyz, tex s, tex t); prim = -1 on a miss."""
    best = tmax
    hit = -1
    bs = 0.0
    bt = 0.0
    bpart = 0
    for i in range(kind.shape[0]):
        p = prm[i]
        k = kind[i]
        if k == 0:
            t, s, tt = _hit_quad(p, ox, oy, oz, dx, dy, dz, best, atlas, tex_info, int(material[i, 5]))
            if t < best:
                best, hit, bs, bt = t, i, s, tt
        elif k == 1 or k == 2:
            t, part = _hit_axial(p, k == 2, ox, oy, oz, dx, dy, dz, best)
            if t < best:
                best, hit, bpart = t, i, part
        else:
            t = _hit_sphere(p, ox, oy, oz, dx, dy, dz, best)
            if t < best:
                best, hit = t, i
    if hit < 0:
        return INF, -1, 0.0, 0.0, 0.0, 0.0, 0.0
    p = prm[hit]
    k = kind[hit]
    hx, hy, hz = ox + best * dx, oy + best * dy, oz + best * dz
    if k == 0:
        nx, ny, nz = p[9], p[10], p[11]
    elif k == 3:
        nx, ny, nz = (hx - p[0]) / p[3], (hy - p[1]) / p[3], (hz - p[2]) / p[3]
    else:
        ax, ay, az = p[3], p[4], p[5]
        if bpart == 1:
            nx, ny, nz = -ax, -ay, -az
        elif bpart == 2:
            nx, ny, nz = ax, ay, az
        else:
            qx, qy, qz = hx - p[0], hy - p[1], hz - p[2]
            h = _dot(qx, qy, qz, ax, ay, az)
            rx, ry, rz = qx - h * ax, qy - h * ay, qz - h * az
            rn = math.sqrt(rx * rx + ry * ry + rz * rz)
            if rn > 0.0:
                rx, ry, rz = rx / rn, ry / rn, rz / rn
            if k == 2:
                kk = p[7] / p[6]
                rx, ry, rz = rx + kk * ax, ry + kk * ay, rz + kk * az
            nx, ny, nz = rx, ry, rz
    nn = math.sqrt(nx * nx + ny * ny + nz * nz)
    return best, hit, nx / nn, ny / nn, nz / nn, bs, bt


@nb.njit(cache=True, nogil=True)
def _occluded(kind, prm, material, atlas, tex_info, ox, oy, oz, dx, dy, dz):
    t = _intersect(kind, prm, material, atlas, tex_info, ox, oy, oz, dx, dy, dz, INF)[0]
    return t < INF


# -- shading --------------------------------------------------------------------------


@nb.njit(cache=True, nogil=True)
def _env_lookup(env, azimuth, dx, dy, dz):
    h = env.shape[0]
    w = env.shape[1]
    theta = math.acos(min(1.0, max(-1.0, dz)))
    phi = math.atan2(dy, dx) - azimuth
    phi = phi - 2.0 * math.pi * math.floor(phi / (2.0 * math.pi))
    i = min(int(theta / math.pi * h), h - 1)
    j = min(int(phi / (2.0 * math.pi) * w), w - 1)
    return env[i, j, 0], env[i, j, 1], env[i, j, 2]


@nb.njit(cache=True, nogil=True)
def _basis(nx, ny, nz):
    if abs(nx) > 0.9:
        tx, ty, tz = 0.0, 1.0, 0.0
    else:
        tx, ty, tz = 1.0, 0.0, 0.0
    # b1 = normalize(t x n), b2 = n x b1
    bx, by, bz = ty * nz - tz * ny, tz * nx - tx * nz, tx * ny - ty * nx
    bn = math.sqrt(bx * bx + by * by + bz * bz)
    bx, by, bz = bx / bn, by / bn, bz / bn
    cx, cy, cz = ny * bz - nz * by, nz * bx - nx * bz, nx * by - ny * bx
    return bx, by, bz, cx, cy, cz


@nb.njit(cache=True, nogil=True)
def _ggx_d(nh, a2):
    d = nh * nh * (a2 - 1.0) + 1.0
    return a2 / (math.pi * d * d)


@nb.njit(cache=True, nogil=True)
def _smith_g1(nv, a2):
    return 2.0 * nv / (nv + math.sqrt(a2 + (1.0 - a2) * nv * nv))


@nb.njit(cache=True, nogil=True)
def _eval_bsdf(nx, ny, nz, wox, woy, woz, wix, wiy, wiz, ar, ag, ab, rough, spec):
    """BSDF x cos(theta_i) and the mixture sampling pdf for direction wi."""
    ni = _dot(nx, ny, nz, wix, wiy, wiz)
    no = _dot(nx, ny, nz, wox, woy, woz)
    if ni <= 0.0 or no <= 0.0:
        return 0.0, 0.0, 0.0, 0.0
    fr = ar / math.pi
    fg = ag / math.pi
    fb = ab / math.pi
    ps = P_SPECULAR if spec > 0.0 else 0.0
    pdf = (1.0 - ps) * ni / math.pi
    if spec > 0.0:
        a = max(rough * rough, 1e-3)
        a2 = a * a
        hx, hy, hz = wix + wox, wiy + woy, wiz + woz
        hn = math.sqrt(hx * hx + hy * hy + hz * hz)
        hx, hy, hz = hx / hn, hy / hn, hz / hn
        nh = max(_dot(nx, ny, nz, hx, hy, hz), 0.0)
        vh = max(_dot(wox, woy, woz, hx, hy, hz), 1e-8)
        d = _ggx_d(nh, a2)
        g = _smith_g1(ni, a2) * _smith_g1(no, a2)
        f0 = 0.08 * spec
        fres = f0 + (1.0 - f0) * (1.0 - vh) ** 5
        sp = d * g * fres / (4.0 * ni * no)
        fr += sp
        fg += sp
        fb += sp
        pdf += ps * d * nh / (4.0 * vh)
    return fr * ni, fg * ni, fb * ni, pdf


@nb.njit(cache=True, nogil=True)
def _sample_dir(nx, ny, nz, wox, woy, woz, rough, spec, u0, u1, u2):
    bx, by, bz, cx, cy, cz = _basis(nx, ny, nz)
    ps = P_SPECULAR if spec > 0.0 else 0.0
    if u0 < ps:
        a = max(rough * rough, 1e-3)
        a2 = a * a
        cos_t = math.sqrt((1.0 - u1) / (1.0 + (a2 - 1.0) * u1))
        sin_t = math.sqrt(max(0.0, 1.0 - cos_t * cos_t))
        phi = 2.0 * math.pi * u2
        lx, ly = sin_t * math.cos(phi), sin_t * math.sin(phi)
        hx = lx * bx + ly * cx + cos_t * nx
        hy = lx * by + ly * cy + cos_t * ny
        hz = lx * bz + ly * cz + cos_t * nz
        vh = _dot(wox, woy, woz, hx, hy, hz)
        return 2.0 * vh * hx - wox, 2.0 * vh * hy - woy, 2.0 * vh * hz - woz
    r = math.sqrt(u1)
    phi = 2.0 * math.pi * u2
    lx, ly = r * math.cos(phi), r * math.sin(phi)
    lz = math.sqrt(max(0.0, 1.0 - u1))
    return lx * bx + ly * cx + lz * nx, lx * by + ly * cy + lz * ny, lx * bz + ly * cz + lz * nz


@nb.njit(cache=True, nogil=True)
def _surface(material, atlas, tex_info, prim, s, t):
    tex = int(material[prim, 5])
    if tex >= 0:
        r, g, b, _ = _tex_fetch(atlas, tex_info, tex, s, t)
        return r, g, b
    return material[prim, 0], material[prim, 1], material[prim, 2]


@nb.njit(cache=True, nogil=True)
def _radiance(kind, prm, material, atlas, tex_info, env_bg, env_res, azimuth, sun, ox, oy, oz, dx, dy, dz,
              max_bounces, seed, pixel, sample):
    lr, lg, lb = 0.0, 0.0, 0.0
    tr, tg, tb = 1.0, 1.0, 1.0
    t, hit, nx, ny, nz, s, tt = _intersect(kind, prm, material, atlas, tex_info, ox, oy, oz, dx, dy, dz, INF)
    if hit < 0:
        er, eg, eb = _env_lookup(env_bg, azimuth, dx, dy, dz)
        return er, eg, eb
    sun_on = sun[6] > 0.0
    for depth in range(max_bounces + 1):
        px, py, pz = ox + t * dx, oy + t * dy, oz + t * dz
        wox, woy, woz = -dx, -dy, -dz
        if _dot(nx, ny, nz, wox, woy, woz) < 0.0:
            nx, ny, nz = -nx, -ny, -nz
        ar, ag, ab = _surface(material, atlas, tex_info, hit, s, tt)
        rough = material[hit, 3]
        spec = material[hit, 4]
        # offset along the facing normal to avoid self-hits
        qx, qy, qz = px + 1e-4 * nx, py + 1e-4 * ny, pz + 1e-4 * nz
        if sun_on:
            sx, sy, sz = sun[0], sun[1], sun[2]
            if _dot(nx, ny, nz, sx, sy, sz) > 0.0:
                if not _occluded(kind, prm, material, atlas, tex_info, qx, qy, qz, sx, sy, sz):
                    fr, fg, fb, _ = _eval_bsdf(nx, ny, nz, wox, woy, woz, sx, sy, sz, ar, ag, ab, rough, spec)
                    lr += tr * fr * sun[3]
                    lg += tg * fg * sun[4]
                    lb += tb * fb * sun[5]
        dim = 2 + 3 * depth
        u0 = _rand(seed, pixel, sample, dim)
        u1 = _rand(seed, pixel, sample, dim + 1)
        u2 = _rand(seed, pixel, sample, dim + 2)
        wx, wy, wz = _sample_dir(nx, ny, nz, wox, woy, woz, rough, spec, u0, u1, u2)
        fr, fg, fb, pdf = _eval_bsdf(nx, ny, nz, wox, woy, woz, wx, wy, wz, ar, ag, ab, rough, spec)
        if pdf <= 0.0:
            break
        tr *= fr / pdf
        tg *= fg / pdf
        tb *= fb / pdf
        ox, oy, oz, dx, dy, dz = qx, qy, qz, wx, wy, wz
        t, hit, nx, ny, nz, s, tt = _intersect(kind, prm, material, atlas, tex_info, ox, oy, oz, dx, dy, dz, INF)
        if hit < 0:
            er, eg, eb = _env_lookup(env_res, azimuth, dx, dy, dz)
            lr += tr * er
            lg += tg * eg
            lb += tb * eb
            break
    return lr, lg, lb


@nb.njit(cache=True, nogil=True)
def _camera_ray(cam, res, fx, fy):
    th = cam[12]
    x = (2.0 * fx / res - 1.0) * th
    y = (1.0 - 2.0 * fy / res) * th
    dx = cam[3] + x * cam[6] + y * cam[9]
    dy = cam[4] + x * cam[7] + y * cam[10]
    dz = cam[5] + x * cam[8] + y * cam[11]
    n = math.sqrt(dx * dx + dy * dy + dz * dz)
    return dx / n, dy / n, dz / n


@nb.njit(cache=True, nogil=True)
def _render_tile(kind, prm, material, atlas, tex_info, env_bg, env_res, azimuth, sun, cam, res, spp, max_bounces,
                 seed, y0, y1, radiance, albedo, normal, prim_index, depth, do_radiance):
    """Fill rows [y0, y1); ``prim_index`` receives the hit primitive (valid where depth < inf)."""
    clamped = 0
    ox, oy, oz = cam[0], cam[1], cam[2]
    for py in range(y0, y1):
        for px in range(res):
            pixel = py * res + px
            # label buffers from the pixel-center ray
            dx, dy, dz = _camera_ray(cam, res, px + 0.5, py + 0.5)
            t, hit, nx, ny, nz, s, tt = _intersect(kind, prm, material, atlas, tex_info, ox, oy, oz, dx, dy, dz, INF)
            if hit >= 0:
                if _dot(nx, ny, nz, dx, dy, dz) > 0.0:
                    nx, ny, nz = -nx, -ny, -nz
                ar, ag, ab = _surface(material, atlas, tex_info, hit, s, tt)
                albedo[py, px, 0], albedo[py, px, 1], albedo[py, px, 2] = ar, ag, ab
                normal[py, px, 0] = _dot(nx, ny, nz, cam[6], cam[7], cam[8])
                normal[py, px, 1] = _dot(nx, ny, nz, cam[9], cam[10], cam[11])
                normal[py, px, 2] = -_dot(nx, ny, nz, cam[3], cam[4], cam[5])
                prim_index[py, px] = hit
                depth[py, px] = t * _dot(dx, dy, dz, cam[3], cam[4], cam[5])
            else:
                prim_index[py, px] = 0
                depth[py, px] = INF
            if not do_radiance:
                continue
            sr, sg, sb = 0.0, 0.0, 0.0
            for si in range(spp):
                jx = _rand(seed, pixel, si, 0)
                jy = _rand(seed, pixel, si, 1)
                dx, dy, dz = _camera_ray(cam, res, px + jx, py + jy)
                r, g, b = _radiance(kind, prm, material, atlas, tex_info, env_bg, env_res, azimuth, sun,
                                    ox, oy, oz, dx, dy, dz, max_bounces, seed, pixel, si)
                if not (math.isfinite(r) and math.isfinite(g) and math.isfinite(b)) or r < 0 or g < 0 or b < 0:
                    clamped += 1
                    continue
                sr += r
                sg += g
                sb += b
            radiance[py, px, 0] = sr / spp
            radiance[py, px, 1] = sg / spp
            radiance[py, px, 2] = sb / spp
    return clamped


# -- Python entry points --------------------------------------------------------------


def _camera_array(camera: CameraPose) -> np.ndarray:
    cam = np.zeros(13)
    cam[0:3] = camera.position
    cam[3:6] = camera.forward
    cam[6:9] = camera.right
    cam[9:12] = camera.up
    cam[12] = camera.tan_half
    return cam


def _sun_array(sun: SunLight | None) -> np.ndarray:
    arr = np.zeros(7)
    if sun is not None and not sun.is_zero:
        d = np.asarray(sun.direction, float)
        arr[0:3] = d / np.linalg.norm(d)
        arr[3:6] = sun.irradiance
        arr[6] = 1.0
    return arr


def _empty_env() -> np.ndarray:
    return np.zeros((1, 2, 3), dtype=np.float32)


def _run(geometry, env_bg, env_res, azimuth, sun, camera, spp, max_bounces, seed, threads, tile, do_radiance):
    packed: PackedGeometry = geometry.pack() if isinstance(geometry, SceneGeometry) else geometry
    res = int(camera.resolution)
    radiance = np.zeros((res, res, 3), dtype=np.float32)
    albedo = np.zeros((res, res, 3), dtype=np.float32)
    normal = np.zeros((res, res, 3), dtype=np.float32)
    prim_index = np.zeros((res, res), dtype=np.int32)
    depth = np.zeros((res, res), dtype=np.float32)
    cam = _camera_array(camera)
    sun_arr = _sun_array(sun)
    kind = packed.kind
    if kind.size == 0:
        # keep numba signatures stable: one degenerate sphere that can never be hit
        kind = np.array([3], dtype=np.int64)
        prm = np.zeros((1, 16))
        prm[0, 2] = -1e30
        material = np.zeros((1, 6))
        material[0, 5] = -1
        inst_map = np.array([0], dtype=np.int64)
    else:
        prm, material, inst_map = packed.params, packed.material, packed.instance
    env_bg = np.ascontiguousarray(env_bg, dtype=np.float32)
    env_res = np.ascontiguousarray(env_res, dtype=np.float32)
    # seed masked to 63 bits for numba's uint64 conversion of Python ints
    seed = int(seed) & ((1 << 63) - 1)
    rows = [(y, min(y + tile, res)) for y in range(0, res, tile)]

    def work(span):
        return _render_tile(kind, prm, material, packed.atlas, packed.tex_info, env_bg, env_res, float(azimuth),
                            sun_arr, cam, res, int(spp), int(max_bounces), seed, span[0], span[1], radiance,
                            albedo, normal, prim_index, depth, do_radiance)

    if threads > 1 and len(rows) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            clamped = sum(pool.map(work, rows))
    else:
        clamped = sum(work(r) for r in rows)
    hit = depth < np.inf
    instance = np.where(hit, inst_map[prim_index], 0).astype(np.int32)
    return GBuffer(radiance, albedo, normal, instance, depth, int(clamped))


def trace(geometry: SceneGeometry, env: EnvironmentMap | None, sun: SunLight | None, camera: CameraPose,
          spp: int = 64, max_bounces: int = 2, seed: int = 0, residual: EnvironmentMap | None = None,
          threads: int = 1, tile_size: int = 32) -> GBuffer:
    """Render radiance plus label buffers.

    Args:
        geometry: scene primitives (or an already packed geometry).
        env: environment seen by primary rays that miss every surface; ``None``
            means black.
        sun: directional light sampled explicitly at every vertex.
        camera: pinhole camera; its resolution sets the raster size.
        spp: jittered samples per pixel.
        max_bounces: indirect bounces after the primary hit.
        seed: render-stage seed.
        residual: environment lighting surfaces; defaults to ``env``. Pass the
            residual from :func:`extract_sun` so the sun is not counted twice.
        threads: worker threads over row tiles; results do not depend on it.
    """
    if spp < 1:
        raise ValueError("spp must be >= 1")
    if max_bounces < 0:
        raise ValueError("max_bounces must be >= 0")
    bg = env.pixels if env is not None else _empty_env()
    res_map = residual.pixels if residual is not None else bg
    azimuth = env.azimuth if env is not None else 0.0
    return _run(geometry, bg, res_map, azimuth, sun or ZERO_SUN, camera, spp, max_bounces, seed, threads,
                tile_size, True)


def render_segmentation(geometry: SceneGeometry, camera: CameraPose, resolution: int | None = None) -> np.ndarray:
    """Instance id of the nearest surface through every pixel center (0 = background)."""
    if resolution is not None and resolution != camera.resolution:
        camera = CameraPose(camera.position, camera.forward, camera.right, camera.up, camera.fov_deg, int(resolution))
    g = _run(geometry, _empty_env(), _empty_env(), 0.0, ZERO_SUN, camera, 1, 0, 0, 1, 64, False)
    return g.instance


def render_mask(geometry: SceneGeometry, camera: CameraPose, resolution: int | None = None) -> np.ndarray:
    """Binary main-sign mask: 1 where the nearest surface is the main plate."""
    return (render_segmentation(geometry, camera, resolution) == INSTANCE_PLATE).astype(np.uint8)
