"""Raster output of element images as binary PPM.

Colormap, with x = value / range clipped to [-1, 1]:

    x = -1 -> blue  (0, 0, 255)
    x =  0 -> white (255, 255, 255)
    x = +1 -> red   (255, 0, 0)

linear in between, channels rounded half-up to integers.  Pixels outside
the mesh are white.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .mesh import Mesh

GRID = 256
_BLUE = np.array([0.0, 0.0, 255.0])
_WHITE = np.array([255.0, 255.0, 255.0])
_RED = np.array([255.0, 0.0, 0.0])


def pixel_centers(mesh: Mesh, size=GRID):
    """Pixel-centre coordinates over the mesh's square bounding box; row 0 is the top."""
    lo = mesh.nodes.min(axis=0)
    hi = mesh.nodes.max(axis=0)
    mid = 0.5 * (lo + hi)
    half = 0.5 * float((hi - lo).max())
    step = 2 * half / size
    c = -half + step * (np.arange(size) + 0.5)
    x = mid[0] + c
    y = mid[1] - c
    return np.meshgrid(x, y)


def pixel_element_map(mesh: Mesh, size=GRID):
    """Element index under each pixel centre (-1 outside); lowest index wins ties."""
    X, Y = pixel_centers(mesh, size)
    px, py = X.ravel(), Y.ravel()
    owner = np.full(px.size, -1, dtype=np.int64)
    x0, y0 = X[0, 0], Y[0, 0]
    step = X[0, 1] - X[0, 0]
    p = mesh.nodes[mesh.triangles]
    eps = 1e-12
    for k in range(mesh.n_elem - 1, -1, -1):
        tri = p[k]
        c0 = int(max(0, np.floor((tri[:, 0].min() - x0) / step)))
        c1 = int(min(size - 1, np.ceil((tri[:, 0].max() - x0) / step)))
        r0 = int(max(0, np.floor((y0 - tri[:, 1].max()) / step)))
        r1 = int(min(size - 1, np.ceil((y0 - tri[:, 1].min()) / step)))
        if c1 < c0 or r1 < r0:
            continue
        rows, cols = np.mgrid[r0:r1 + 1, c0:c1 + 1]
        flat = (rows * size + cols).ravel()
        qx, qy = px[flat], py[flat]
        a, b, c = tri
        det = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        l1 = ((qx - a[0]) * (c[1] - a[1]) - (qy - a[1]) * (c[0] - a[0])) / det
        l2 = ((b[0] - a[0]) * (qy - a[1]) - (b[1] - a[1]) * (qx - a[0])) / det
        inside = (l1 >= -eps) & (l2 >= -eps) & (l1 + l2 <= 1 + eps)
        owner[flat[inside]] = k
    return owner.reshape(size, size)


def colorize(x):
    """Map normalised values in [-1, 1] to uint8 RGB."""
    x = np.clip(np.asarray(x, dtype=np.float64), -1.0, 1.0)[..., None]
    rgb = np.where(x < 0, _WHITE + (-x) * (_BLUE - _WHITE), _WHITE + x * (_RED - _WHITE))
    return np.floor(rgb + 0.5).astype(np.uint8)


def write_ppm(rgb, path):
    h, w, _ = rgb.shape
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode() + np.ascontiguousarray(rgb).tobytes())


def read_ppm(path):
    raw = Path(path).read_bytes()
    parts = raw.split(b"\n", 3)
    if parts[0] != b"P6":
        raise ValueError("not a binary PPM")
    w, h = map(int, parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w, 3)


def render_image(image, mesh: Mesh, path, vrange=None, pixel_map=None):
    """Rasterize element values to a 256x256 PPM; ``vrange`` defaults to max|value|."""
    values = np.asarray(getattr(image, "values", image), dtype=np.float64)
    if values.shape != (mesh.n_elem,):
        raise ValueError("image does not match mesh")
    if pixel_map is None:
        pixel_map = pixel_element_map(mesh)
    if vrange is None:
        vrange = float(np.abs(values).max())
    x = np.zeros(pixel_map.shape)
    inside = pixel_map >= 0
    if vrange > 0:
        x[inside] = values[pixel_map[inside]] / vrange
    rgb = colorize(x)
    write_ppm(rgb, path)
    return rgb
