"""Raster file formats: Radiance RGBE (.hdr), planar float dumps, PNG helpers."""

from __future__ import annotations

import io
import json
import re
from pathlib import Path

import numpy as np
from PIL import Image

_HEADER_RE = re.compile(rb"^([-+])Y (\d+) ([-+])X (\d+)$")


class HdrFormatError(ValueError):
    pass


def _float_to_rgbe(rgb: np.ndarray) -> np.ndarray:
    rgb = np.maximum(np.asarray(rgb, dtype=np.float64), 0.0)
    v = rgb.max(axis=-1)
    mant, expo = np.frexp(v)
    out = np.zeros(rgb.shape[:-1] + (4,), dtype=np.uint8)
    ok = v > 1e-32
    scale = np.zeros_like(v)
    scale[ok] = mant[ok] * 256.0 / v[ok]
    out[..., :3] = np.where(ok[..., None], np.minimum(np.floor(rgb * scale[..., None]), 255), 0).astype(np.uint8)
    out[..., 3] = np.where(ok, expo + 128, 0).astype(np.uint8)
    return out


def _rgbe_to_float(rgbe: np.ndarray) -> np.ndarray:
    e = rgbe[..., 3].astype(np.int32)
    f = np.where(e > 0, np.ldexp(1.0, e - 136), 0.0)
    return ((rgbe[..., :3].astype(np.float64) + 0.5) * f[..., None] * (e > 0)[..., None]).astype(np.float32)


def _rle_encode_channel(data: bytes) -> bytes:
    out = bytearray()
    n = len(data)
    i = 0
    while i < n:
        # find next run of >= 4 equal bytes
        j = i
        run_start, run_len = n, 0
        while j < n:
            k = j + 1
            while k < n and k - j < 127 and data[k] == data[j]:
                k += 1
            if k - j >= 4:
                run_start, run_len = j, k - j
                break
            j += 1
        while i < run_start:
            chunk = min(128, run_start - i)
            out.append(chunk)
            out += data[i : i + chunk]
            i += chunk
        if run_len:
            out.append(128 + run_len)
            out.append(data[run_start])
            i = run_start + run_len
    return bytes(out)


def write_hdr(path: str | Path, rgb: np.ndarray) -> None:
    """Write a linear float RGB raster as run-length encoded Radiance RGBE."""
    rgb = np.asarray(rgb)
    h, w = rgb.shape[:2]
    rgbe = _float_to_rgbe(rgb)
    buf = bytearray(b"#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n")
    buf += f"-Y {h} +X {w}\n".encode()
    use_rle = 8 <= w < 32768
    for row in rgbe:
        if not use_rle:
            buf += row.tobytes()
            continue
        buf += bytes([2, 2, w >> 8, w & 255])
        for c in range(4):
            buf += _rle_encode_channel(row[:, c].tobytes())
    Path(path).write_bytes(bytes(buf))


def read_hdr(path: str | Path) -> np.ndarray:
    """Read a Radiance RGBE file (flat or new-style RLE) into float32 RGB."""
    data = Path(path).read_bytes()
    pos = 0
    lines = []
    while True:
        end = data.find(b"\n", pos)
        if end < 0:
            raise HdrFormatError(f"{path}: truncated header")
        line = data[pos:end]
        pos = end + 1
        if not lines and not line.startswith(b"#?"):
            raise HdrFormatError(f"{path}: not a Radiance file")
        lines.append(line)
        if line == b"":
            break
    fmt = [l for l in lines if l.startswith(b"FORMAT=")]
    if fmt and fmt[0] != b"FORMAT=32-bit_rle_rgbe":
        raise HdrFormatError(f"{path}: unsupported format {fmt[0]!r}")
    end = data.find(b"\n", pos)
    m = _HEADER_RE.match(data[pos:end].strip())
    if not m or m.group(1) != b"-" or m.group(3) != b"+":
        raise HdrFormatError(f"{path}: unsupported resolution line")
    h, w = int(m.group(2)), int(m.group(4))
    pos = end + 1
    img = np.zeros((h, w, 4), dtype=np.uint8)
    raw = memoryview(data)
    for y in range(h):
        if pos + 4 > len(data):
            raise HdrFormatError(f"{path}: truncated pixel data")
        if 8 <= w < 32768 and data[pos] == 2 and data[pos + 1] == 2 and (data[pos + 2] << 8 | data[pos + 3]) == w:
            pos += 4
            for c in range(4):
                x = 0
                chan = img[y, :, c]
                while x < w:
                    count = data[pos]
                    pos += 1
                    if count > 128:
                        count -= 128
                        chan[x : x + count] = data[pos]
                        pos += 1
                    else:
                        if count == 0 or x + count > w:
                            raise HdrFormatError(f"{path}: corrupt run in scanline {y}")
                        chan[x : x + count] = np.frombuffer(raw[pos : pos + count], dtype=np.uint8)
                        pos += count
                    x += count
        else:
            n = 4 * w
            img[y] = np.frombuffer(raw[pos : pos + n], dtype=np.uint8).reshape(w, 4)
            pos += n
    return _rgbe_to_float(img)


def dump_planar(path: str | Path, array: np.ndarray, semantics: str) -> None:
    """Planar float32 little-endian raw plus ``<path>.json`` sidecar."""
    path = Path(path)
    a = np.asarray(array, dtype="<f4")
    if a.ndim == 2:
        a = a[:, :, None]
    h, w, c = a.shape
    path.write_bytes(np.ascontiguousarray(np.moveaxis(a, -1, 0)).tobytes())
    sidecar = {"width": w, "height": h, "channels": c, "semantics": semantics, "dtype": "float32", "layout": "planar"}
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2) + "\n")


def load_planar(path: str | Path) -> tuple[np.ndarray, dict]:
    path = Path(path)
    meta = json.loads(Path(str(path) + ".json").read_text())
    h, w = meta["height"], meta["width"]
    c = meta.get("channels", 1)
    flat = np.frombuffer(path.read_bytes(), dtype="<f4")
    if flat.size != h * w * c:
        raise ValueError(f"{path}: expected {h * w * c} floats, found {flat.size}")
    arr = np.moveaxis(flat.reshape(c, h, w), 0, -1).astype(np.float32)
    return (arr[:, :, 0] if c == 1 else arr), meta


def png_bytes(array: np.ndarray) -> bytes:
    """Deterministic PNG encoding of an 8-bit gray or RGB raster."""
    a = np.ascontiguousarray(array, dtype=np.uint8)
    buf = io.BytesIO()
    Image.fromarray(a).save(buf, format="PNG", compress_level=6)
    return buf.getvalue()


def read_png(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im).copy()
