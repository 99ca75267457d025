"""Sheet normalization, zoom pyramid, and the six-tile training grid.

Scanned sheets arrive at arbitrary dimensions; everything downstream assumes
the uniform 3747x2235 patch, its three zoom renditions, and a 3x2 tile grid
whose windows partition the patch exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Tuple, Union

import numpy as np

from .errors import DimensionMismatch, GeoMismatch, InvalidArgument
from .geo import ClassMask, GeoRef, GeoTransform, Layer, Raster

DEFAULT_ZOOMS: Mapping[str, float] = {"close": 1.0, "medium": 0.5, "far": 0.25}


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class PatchSpec:
    target_w: int = 3747
    target_h: int = 2235
    zoom_factors: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_ZOOMS))
    grid_cols: int = 3
    grid_rows: int = 2

    def __post_init__(self):
        if self.target_w < self.grid_cols or self.target_h < self.grid_rows:
            raise InvalidArgument("target dims must cover the grid")
        for name, f in self.zoom_factors.items():
            if not (0.0 < f <= 1.0):
                raise InvalidArgument(f"zoom factor {name}={f} outside (0, 1]")


@dataclass(frozen=True)
class SubPatch:
    parent_id: str
    index: Tuple[int, int]  # (col, row)
    pixel_window: Tuple[int, int, int, int]  # (x0, y0, x1, y1), half-open
    geo: Optional[GeoTransform]
    contains_building: bool

    @property
    def sub_id(self) -> str:
        return f"{self.parent_id}_c{self.index[0]}r{self.index[1]}"


def _rescaled_geo(geo: Optional[GeoRef], sx: float, sy: float) -> Optional[GeoRef]:
    """Transform for a resampled grid covering the same world extent.

    Column coordinates scale by sx and shift so the corner (-0.5, -0.5) maps
    to the same world point: col_src = sx*col_dst + (sx-1)/2, same for rows.
    """
    if geo is None:
        return None
    g = geo.transform
    out = GeoTransform(
        a=g.a * sx,
        b=g.b * sy,
        c=g.c + g.a * (sx - 1) / 2 + g.b * (sy - 1) / 2,
        d=g.d * sx,
        e=g.e * sy,
        f=g.f + g.d * (sx - 1) / 2 + g.e * (sy - 1) / 2,
    )
    return GeoRef(out, geo.crs)


def _source_coords(n_dst: int, scale: float) -> np.ndarray:
    idx = np.arange(n_dst, dtype=np.float64)
    return scale * idx + (scale - 1) / 2


def _resize_mask(labels: np.ndarray, w: int, h: int, sx: float, sy: float) -> np.ndarray:
    # nearest source center: floor(coord + 0.5), clamped to the grid
    cx = np.floor(_source_coords(w, sx) + 0.5).astype(np.int64)
    cy = np.floor(_source_coords(h, sy) + 0.5).astype(np.int64)
    cx = np.clip(cx, 0, labels.shape[1] - 1)
    cy = np.clip(cy, 0, labels.shape[0] - 1)
    return labels[np.ix_(cy, cx)]


def _resize_bilinear(samples: np.ndarray, w: int, h: int, sx: float, sy: float) -> np.ndarray:
    gx = _source_coords(w, sx)
    gy = _source_coords(h, sy)
    x0 = np.floor(gx)
    y0 = np.floor(gy)
    fx = gx - x0
    fy = gy - y0
    x0 = np.clip(x0.astype(np.int64), 0, samples.shape[1] - 1)
    y0 = np.clip(y0.astype(np.int64), 0, samples.shape[0] - 1)
    x1 = np.clip(x0 + 1, 0, samples.shape[1] - 1)
    y1 = np.clip(y0 + 1, 0, samples.shape[0] - 1)
    src = samples.astype(np.float64)
    fx = fx[None, :, None]
    fy = fy[:, None, None]
    top = src[np.ix_(y0, x0)] * (1 - fx) + src[np.ix_(y0, x1)] * fx
    bot = src[np.ix_(y1, x0)] * (1 - fx) + src[np.ix_(y1, x1)] * fx
    out = top * (1 - fy) + bot * fy
    return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)


def resize_layer(src: Layer, w: int, h: int) -> Layer:
    """Extent-preserving resize: bilinear for imagery, nearest for masks."""
    if w < 1 or h < 1:
        raise InvalidArgument("target dims must be >= 1")
    if (src.width, src.height) == (w, h):
        return src
    sx = src.width / w
    sy = src.height / h
    geo = _rescaled_geo(src.geo, sx, sy)
    if isinstance(src, ClassMask):
        return ClassMask.from_array(_resize_mask(np.asarray(src.labels), w, h, sx, sy),
                                    geo=geo, class_table=src.class_table)
    return Raster.from_array(_resize_bilinear(np.asarray(src.samples), w, h, sx, sy), geo=geo)


def normalize_patch(src: Layer, spec: PatchSpec = PatchSpec()) -> Layer:
    """Bring a scanned sheet to the uniform patch size."""
    return resize_layer(src, spec.target_w, spec.target_h)


def build_zoom_pyramid(patch: Layer, spec: PatchSpec = PatchSpec()) -> Dict[str, Layer]:
    """Render the named zoom levels of a normalized patch (round-half-up dims)."""
    out: Dict[str, Layer] = {}
    for name, factor in spec.zoom_factors.items():
        w = _round_half_up(spec.target_w * factor)
        h = _round_half_up(spec.target_h * factor)
        out[name] = resize_layer(patch, w, h)
    return out


def _window_geo(geo: Optional[GeoRef], x0: int, y0: int) -> Optional[GeoTransform]:
    if geo is None:
        return None
    g = geo.transform
    return GeoTransform(a=g.a, b=g.b, c=g.a * x0 + g.b * y0 + g.c,
                        d=g.d, e=g.e, f=g.d * x0 + g.e * y0 + g.f)


def grid_windows(w: int, h: int, cols: int, rows: int) -> List[Tuple[int, int, Tuple[int, int, int, int]]]:
    """Half-open tile windows; the last column/row absorbs the remainder."""
    bw = w // cols
    bh = h // rows
    out = []
    for row in range(rows):
        y0 = row * bh
        y1 = (row + 1) * bh if row < rows - 1 else h
        for col in range(cols):
            x0 = col * bw
            x1 = (col + 1) * bw if col < cols - 1 else w
            out.append((col, row, (x0, y0, x1, y1)))
    return out


def split_six(patch: Layer, annotation: ClassMask, spec: PatchSpec = PatchSpec(),
              parent_id: str = "patch") -> List[SubPatch]:
    """Cut a patch into the 3x2 grid and flag tiles that contain buildings."""
    if (patch.width, patch.height) != (annotation.width, annotation.height):
        raise DimensionMismatch(
            f"patch {patch.width}x{patch.height} vs annotation "
            f"{annotation.width}x{annotation.height}")
    if patch.geo is not None and annotation.geo is not None:
        if patch.geo.transform != annotation.geo.transform:
            raise GeoMismatch("patch and annotation transforms differ")
    labels = np.asarray(annotation.labels)
    subs: List[SubPatch] = []
    for col, row, (x0, y0, x1, y1) in grid_windows(patch.width, patch.height,
                                                   spec.grid_cols, spec.grid_rows):
        occupied = bool(np.any(labels[y0:y1, x0:x1] != 0))
        subs.append(SubPatch(
            parent_id=parent_id,
            index=(col, row),
            pixel_window=(x0, y0, x1, y1),
            geo=_window_geo(patch.geo, x0, y0),
            contains_building=occupied,
        ))
    return subs


def crop_window(layer: Layer, window: Tuple[int, int, int, int]) -> Layer:
    """Extract a sub-patch window as a standalone layer with derived geo."""
    x0, y0, x1, y1 = window
    if not (0 <= x0 < x1 <= layer.width and 0 <= y0 < y1 <= layer.height):
        raise InvalidArgument(f"window {window} outside layer bounds")
    gt = _window_geo(layer.geo, x0, y0)
    geo = GeoRef(gt, layer.geo.crs) if gt is not None else None
    if isinstance(layer, ClassMask):
        return ClassMask.from_array(np.asarray(layer.labels)[y0:y1, x0:x1],
                                    geo=geo, class_table=layer.class_table)
    return Raster.from_array(np.asarray(layer.samples)[y0:y1, x0:x1], geo=geo)
