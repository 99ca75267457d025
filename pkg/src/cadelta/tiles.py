"""Quadtree PNG tiles in the layer's own planar CRS.

No Web Mercator: the data lives on a local metric grid and reprojection is
out of scope, so the pyramid is built over the layer's padded square bounding
box. Level z splits that square into 2^z by 2^z tiles of 256x256 pixels.

Tiles sample the world at each tile pixel's upper-left corner. Because a
child tile's even-indexed sample points coincide exactly with its parent's
sample points, decimating a 2x2 mosaic of children reproduces the parent
bit for bit, for nearest and bilinear alike.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
from PIL import Image

from .errors import AddressOutOfRange, InvalidArgument, MissingGeoreference, SingularTransform
from .geo import ClassMask, GeoTransform, Layer, Raster, pixel_to_world
from .raster_io import MASK_PREVIEW_COLORS

TILE_SIZE = 256


@dataclass(frozen=True)
class TileAddress:
    z: int
    x: int
    y: int

    def __post_init__(self):
        if self.z < 0:
            raise AddressOutOfRange(f"zoom {self.z} < 0")
        n = 1 << self.z
        if not (0 <= self.x < n and 0 <= self.y < n):
            raise AddressOutOfRange(
                f"tile ({self.x}, {self.y}) outside level {self.z} grid of {n}x{n}")


def bbox_for(gt: GeoTransform, width: int, height: int) -> Tuple[float, float, float, float]:
    """World-axis-aligned bbox (minx, miny, maxx, maxy) of a w x h pixel grid."""
    xs, ys = [], []
    for col, row in ((-0.5, -0.5), (width - 0.5, -0.5),
                     (-0.5, height - 0.5), (width - 0.5, height - 0.5)):
        x, y = pixel_to_world(gt, col, row)
        xs.append(x)
        ys.append(y)
    return min(xs), min(ys), max(xs), max(ys)


def square_for(bbox: Tuple[float, float, float, float]) -> Tuple[float, float, float]:
    """(x0, y_top, side) of the z=0 tile: the bbox padded out to a square."""
    minx, miny, maxx, maxy = bbox
    side = max(maxx - minx, maxy - miny)
    if side <= 0:
        raise InvalidArgument("layer has zero world extent")
    cx = (minx + maxx) / 2.0
    cy = (miny + maxy) / 2.0
    return cx - side / 2.0, cy + side / 2.0, side


def layer_bbox(layer: Layer) -> Tuple[float, float, float, float]:
    if layer.geo is None:
        raise MissingGeoreference("layer has no georeferencing")
    return bbox_for(layer.geo.transform, layer.width, layer.height)


def root_square(layer: Layer) -> Tuple[float, float, float]:
    return square_for(layer_bbox(layer))


def suggested_max_zoom(layer: Layer) -> int:
    """Smallest level whose tile pixels are at least as fine as the source."""
    if layer.geo is None:
        raise MissingGeoreference("layer has no georeferencing")
    _, _, side = root_square(layer)
    gt = layer.geo.transform
    native = min(math.hypot(gt.a, gt.d), math.hypot(gt.b, gt.e))
    if native <= 0:
        return 0
    return max(0, math.ceil(math.log2(side / (TILE_SIZE * native))))


def _sample_points(layer: Layer, addr: TileAddress):
    """Fractional source pixel coords of every tile pixel + in-footprint mask."""
    x0, y_top, side = root_square(layer)
    span = side / (1 << addr.z)
    step = span / TILE_SIZE
    u = np.arange(TILE_SIZE, dtype=np.float64)
    wx = x0 + addr.x * span + u * step
    wy = y_top - addr.y * span - u * step
    gx, gy = np.meshgrid(wx, wy)

    gt = layer.geo.transform
    det = gt.det
    if abs(det) < 1e-12:
        raise SingularTransform("layer transform not invertible")
    dx = gx - gt.c
    dy = gy - gt.f
    col = (gt.e * dx - gt.b * dy) / det
    row = (gt.a * dy - gt.d * dx) / det
    inside = (col >= -0.5) & (col < layer.width - 0.5) & \
             (row >= -0.5) & (row < layer.height - 0.5)
    return col, row, inside


def _nearest(values: np.ndarray, col, row, inside) -> np.ndarray:
    ci = np.clip(np.floor(col + 0.5).astype(np.int64), 0, values.shape[1] - 1)
    ri = np.clip(np.floor(row + 0.5).astype(np.int64), 0, values.shape[0] - 1)
    out = values[ri, ci]
    out[~inside] = 0
    return out


def _bilinear(values: np.ndarray, col, row, inside) -> np.ndarray:
    h, w = values.shape[:2]
    c = np.clip(col, 0.0, w - 1.0)
    r = np.clip(row, 0.0, h - 1.0)
    c0 = np.floor(c).astype(np.int64)
    r0 = np.floor(r).astype(np.int64)
    c1 = np.minimum(c0 + 1, w - 1)
    r1 = np.minimum(r0 + 1, h - 1)
    fc = c - c0
    fr = r - r0
    v = values.astype(np.float64)
    top = v[r0, c0] * (1 - fc) + v[r0, c1] * fc
    bot = v[r1, c0] * (1 - fc) + v[r1, c1] * fc
    out = top * (1 - fr) + bot * fr
    out = np.floor(out + 0.5).astype(np.uint8)
    out[~inside] = 0
    return out


def render_tile(layer: Layer, addr: Union[TileAddress, Tuple[int, int, int]],
                resample: Optional[str] = None) -> np.ndarray:
    """Render one 256x256 RGBA tile of a georeferenced layer.

    resample defaults to "nearest" for masks and 4-band rasters (diff images
    carry their own alpha) and "bilinear" for 1- and 3-band imagery. Pixels
    outside the layer footprint come out fully transparent.
    """
    if not isinstance(addr, TileAddress):
        addr = TileAddress(*addr)
    if layer.geo is None:
        raise MissingGeoreference("layer has no georeferencing")
    if resample is None:
        resample = "nearest" if isinstance(layer, ClassMask) or layer.bands == 4 \
            else "bilinear"
    if resample not in ("nearest", "bilinear"):
        raise InvalidArgument(f"unknown resample {resample!r}")

    col, row, inside = _sample_points(layer, addr)
    tile = np.zeros((TILE_SIZE, TILE_SIZE, 4), np.uint8)

    if isinstance(layer, ClassMask):
        labels = _nearest(np.asarray(layer.labels), col, row, inside)
        lut = np.zeros((256, 4), np.uint8)
        for cid, rgb in MASK_PREVIEW_COLORS.items():
            lut[cid, :3] = rgb
            lut[cid, 3] = 255
        lut[0] = 0  # background stays transparent
        tile = lut[labels]
        tile[~inside] = 0
        return tile

    samples = np.asarray(layer.samples)
    interp = _nearest if resample == "nearest" else _bilinear
    if layer.bands == 1:
        g = interp(samples[:, :, 0], col, row, inside)
        tile[:, :, 0] = tile[:, :, 1] = tile[:, :, 2] = g
        tile[:, :, 3] = np.where(inside, 255, 0)
    elif layer.bands == 3:
        for b in range(3):
            tile[:, :, b] = interp(samples[:, :, b], col, row, inside)
        tile[:, :, 3] = np.where(inside, 255, 0)
    else:
        for b in range(4):
            tile[:, :, b] = interp(samples[:, :, b], col, row, inside)
        tile[~inside] = 0
    return tile


def tile_is_empty(tile: np.ndarray) -> bool:
    return int(tile[:, :, 3].max(initial=0)) == 0


def encode_tile_png(tile: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(tile, mode="RGBA").save(buf, format="PNG")
    return buf.getvalue()
