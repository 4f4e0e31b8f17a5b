"""Decision-boundary rasters for 2-D classifiers.

Rendering uses only numpy and the standard library. Output format follows the
file suffix: ``.ppm`` (binary P6), ``.png`` or ``.svg`` (PNG embedded as a data
URI). Bytes are a pure function of the inputs.
"""
from __future__ import annotations

import base64
import struct
import zlib
from pathlib import Path

import numpy as np

from memlab import nn

REGION_COLORS = np.array([
    [135, 206, 235],  # class 0: sky blue
    [255, 165, 0],    # class 1: orange
    [200, 200, 200],
    [190, 150, 220],
], dtype=np.uint8)
POINT_COLORS = np.array([
    [0, 0, 200],      # class 0: blue
    [0, 150, 0],      # class 1: green
    [80, 80, 80],
    [120, 40, 160],
], dtype=np.uint8)
ADV_COLOR = np.array([220, 0, 0], dtype=np.uint8)


def default_bounds(points, pad=0.1):
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    span = np.maximum(hi - lo, 1e-9)
    lo, hi = lo - pad * span, hi + pad * span
    return float(lo[0]), float(hi[0]), float(lo[1]), float(hi[1])


def boundary_grid(net, bounds, resolution):
    """Cell centres ``(ny, nx, 2)`` and predicted classes ``(ny, nx)``; row 0 is the top."""
    if net.input_dim != 2:
        raise ValueError(f"boundary plots need 2-D inputs, network takes {net.input_dim}")
    xmin, xmax, ymin, ymax = bounds
    nx, ny = resolution
    xs = xmin + (np.arange(nx) + 0.5) * (xmax - xmin) / nx
    ys = ymax - (np.arange(ny) + 0.5) * (ymax - ymin) / ny
    gx, gy = np.meshgrid(xs, ys)
    centres = np.stack([gx, gy], axis=-1)
    classes = nn.predict(net, centres.reshape(-1, 2)).reshape(ny, nx)
    return centres, classes


def _to_pixel(points, bounds, resolution, cell_px):
    xmin, xmax, ymin, ymax = bounds
    nx, ny = resolution
    col = np.floor((points[:, 0] - xmin) / (xmax - xmin) * nx * cell_px).astype(int)
    row = np.floor((ymax - points[:, 1]) / (ymax - ymin) * ny * cell_px).astype(int)
    return row, col


def render_boundary(net, dataset=None, bounds=None, resolution=(200, 200), cell_px=2,
                    adv=None, show_points=True) -> np.ndarray:
    """RGB raster ``(H, W, 3)`` of predicted regions with data and adversarial points on top."""
    if dataset is not None and dataset.dim != 2:
        raise ValueError(f"boundary plots need 2-D data, got dim {dataset.dim}")
    if bounds is None:
        pts = [dataset.inputs] if dataset is not None else []
        if adv is not None:
            pts.append(np.asarray(adv))
        bounds = default_bounds(np.concatenate(pts)) if pts else (-1.0, 1.0, -1.0, 1.0)
    _, classes = boundary_grid(net, bounds, resolution)
    img = REGION_COLORS[classes % len(REGION_COLORS)]
    img = np.repeat(np.repeat(img, cell_px, axis=0), cell_px, axis=1)
    h, w = img.shape[:2]

    if dataset is not None and show_points:
        rows, cols = _to_pixel(dataset.inputs, bounds, resolution, cell_px)
        colors = POINT_COLORS[dataset.labels % len(POINT_COLORS)]
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                r, c = rows + dr, cols + dc
                ok = (r >= 0) & (r < h) & (c >= 0) & (c < w)
                img[r[ok], c[ok]] = colors[ok]
    if adv is not None:
        rows, cols = _to_pixel(np.asarray(adv, dtype=np.float64), bounds, resolution, cell_px)
        for d in (-2, -1, 0, 1, 2):  # small "x" marker
            for r, c in ((rows + d, cols + d), (rows + d, cols - d)):
                ok = (r >= 0) & (r < h) & (c >= 0) & (c < w)
                img[r[ok], c[ok]] = ADV_COLOR
    return img


def ppm_bytes(img: np.ndarray) -> bytes:
    h, w = img.shape[:2]
    return f"P6\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(img, np.uint8).tobytes()


def png_bytes(img: np.ndarray) -> bytes:
    h, w = img.shape[:2]
    raw = b"".join(b"\x00" + img[r].astype(np.uint8).tobytes() for r in range(h))

    def chunk(tag, data):
        body = tag + data
        return struct.pack(">I", len(data)) + body + struct.pack(">I", zlib.crc32(body) & 0xFFFFFFFF)

    return (b"\x89PNG\r\n\x1a\n"
            + chunk(b"IHDR", struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0))
            + chunk(b"IDAT", zlib.compress(raw, 9))
            + chunk(b"IEND", b""))


def svg_bytes(img: np.ndarray) -> bytes:
    h, w = img.shape[:2]
    data = base64.b64encode(png_bytes(img)).decode("ascii")
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}">'
            f'<image width="{w}" height="{h}" href="data:image/png;base64,{data}"/></svg>\n'
            ).encode("ascii")


_WRITERS = {".ppm": ppm_bytes, ".png": png_bytes, ".svg": svg_bytes}


def boundary_plot(net, dataset, out_path, bounds=None, resolution=(200, 200), cell_px=2,
                  adv=None) -> Path:
    """Write the decision-boundary raster to ``out_path`` (format from the suffix)."""
    out_path = Path(out_path)
    writer = _WRITERS.get(out_path.suffix.lower())
    if writer is None:
        raise ValueError(f"unsupported plot format {out_path.suffix!r}; use .ppm, .png or .svg")
    img = render_boundary(net, dataset, bounds, resolution, cell_px, adv)
    out_path.write_bytes(writer(img))
    return out_path


def read_ppm(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    parts = blob.split(maxsplit=3)
    if parts[0] != b"P6":
        raise ValueError("not a binary PPM")
    w, h = int(parts[1]), int(parts[2])
    return np.frombuffer(blob[-w * h * 3:], dtype=np.uint8).reshape(h, w, 3)
