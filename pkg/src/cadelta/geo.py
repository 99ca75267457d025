"""Georeferencing primitives: affine pixel<->world transform, CRS tags, rasters.

Conventions used throughout the package:

* A :class:`GeoTransform` maps fractional pixel coordinates to world
  coordinates via ``X = a*col + b*row + c`` and ``Y = d*col + e*row + f``.
  The coefficients reference the CENTER of the upper-left pixel, i.e. pixel
  (0, 0) maps exactly to (c, f).  The outer corner of the raster therefore
  sits at pixel coordinates (-0.5, -0.5).
* Pixel payloads are numpy uint8 arrays, shape (h, w) for class masks and
  (h, w, bands) for imagery.  Arrays are frozen (read-only) on construction
  so every type here is safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

import numpy as np

from .errors import CrsMismatch, InvalidArgument, LabelOutOfTable, MissingGeoreference, SingularTransform

INCHES_TO_METERS = 0.0254

DEFAULT_CLASS_TABLE = (0, 1, 2)  # 0=background, 1=stone house, 2=wooden house


@dataclass(frozen=True)
class GeoTransform:
    """Six-coefficient affine transform, upper-left pixel-center anchored."""

    a: float  # m/px, x scale
    b: float  # m/px, x rotation
    c: float  # m, world X of upper-left pixel center
    d: float  # m/px, y rotation
    e: float  # m/px, y scale (negative for north-up)
    f: float  # m, world Y of upper-left pixel center

    @property
    def det(self) -> float:
        return self.a * self.e - self.b * self.d

    @property
    def pixel_area(self) -> float:
        """Ground area covered by one pixel, in m^2."""
        return abs(self.det)

    def coefficients(self) -> Tuple[float, float, float, float, float, float]:
        return (self.a, self.b, self.c, self.d, self.e, self.f)


@dataclass(frozen=True)
class CrsTag:
    """Opaque CRS identifier; layers are only ever combined when codes match."""

    code: str
    units: str = "m"

    def __post_init__(self):
        if not self.code:
            raise InvalidArgument("CRS code must be non-empty")

    @property
    def is_metric(self) -> bool:
        return self.units in ("m", "metre", "meter")


@dataclass(frozen=True)
class GeoRef:
    """A GeoTransform plus the CRS its world coordinates live in."""

    transform: GeoTransform
    crs: CrsTag


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr, dtype=np.uint8)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class Raster:
    """8-bit imagery with 1, 3 or 4 bands and optional georeferencing."""

    width: int
    height: int
    bands: int
    samples: np.ndarray = field(repr=False)  # (h, w, bands) uint8
    geo: Optional[GeoRef] = None

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise InvalidArgument("raster dims must be >= 1")
        if self.bands not in (1, 3, 4):
            raise InvalidArgument(f"unsupported band count {self.bands}")
        arr = np.asarray(self.samples, dtype=np.uint8).reshape(self.height, self.width, self.bands)
        object.__setattr__(self, "samples", _freeze(arr))

    @classmethod
    def from_array(cls, arr: np.ndarray, geo: Optional[GeoRef] = None) -> "Raster":
        arr = np.asarray(arr, dtype=np.uint8)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        h, w, bands = arr.shape
        return cls(width=w, height=h, bands=bands, samples=arr, geo=geo)


@dataclass(frozen=True)
class ClassMask:
    """Per-pixel class labels drawn from a declared class table."""

    width: int
    height: int
    labels: np.ndarray = field(repr=False)  # (h, w) uint8
    geo: Optional[GeoRef] = None
    class_table: Tuple[int, ...] = DEFAULT_CLASS_TABLE

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise InvalidArgument("mask dims must be >= 1")
        arr = np.asarray(self.labels, dtype=np.uint8).reshape(self.height, self.width)
        present = np.unique(arr)
        table = set(self.class_table)
        for v in present:
            if int(v) not in table:
                raise LabelOutOfTable(f"label {int(v)} not in class table {sorted(table)}")
        object.__setattr__(self, "labels", _freeze(arr))
        object.__setattr__(self, "class_table", tuple(self.class_table))

    @classmethod
    def from_array(cls, arr: np.ndarray, geo: Optional[GeoRef] = None,
                   class_table: Tuple[int, ...] = DEFAULT_CLASS_TABLE) -> "ClassMask":
        arr = np.asarray(arr, dtype=np.uint8)
        h, w = arr.shape
        return cls(width=w, height=h, labels=arr, geo=geo, class_table=class_table)


Layer = Union[Raster, ClassMask]


def pixel_to_world(gt: GeoTransform, col: float, row: float) -> Tuple[float, float]:
    """Map a (possibly fractional) pixel coordinate to world coordinates."""
    return (gt.a * col + gt.b * row + gt.c, gt.d * col + gt.e * row + gt.f)


def world_to_pixel(gt: GeoTransform, x: float, y: float) -> Tuple[float, float]:
    """Invert :func:`pixel_to_world`; raises SingularTransform if gt is degenerate."""
    det = gt.det
    if abs(det) < 1e-12:
        raise SingularTransform(f"|a*e - b*d| = {abs(det):g} < 1e-12")
    dx = x - gt.c
    dy = y - gt.f
    col = (gt.e * dx - gt.b * dy) / det
    row = (gt.a * dy - gt.d * dx) / det
    return (col, row)


def ground_resolution(scale_denominator: float, scan_dpi: float) -> float:
    """Ground meters per pixel for a map scale scanned at a given density.

    A 1:2880 sheet scanned at 300 dpi yields 2880 * 0.0254 / 300 = 0.24384 m/px.
    """
    if scale_denominator <= 0 or scan_dpi <= 0:
        raise InvalidArgument("scale denominator and dpi must be positive")
    return scale_denominator * INCHES_TO_METERS / scan_dpi


def _nearest_indices(gt_src: GeoTransform, gt_dst: GeoTransform, w: int, h: int):
    """Source pixel indices nearest to each destination pixel center.

    Returns (rows, cols, inside) index arrays of shape (h, w); `inside` is False
    where the destination center falls outside the source grid.
    """
    dst_cols, dst_rows = np.meshgrid(np.arange(w, dtype=np.float64),
                                     np.arange(h, dtype=np.float64))
    x = gt_dst.a * dst_cols + gt_dst.b * dst_rows + gt_dst.c
    y = gt_dst.d * dst_cols + gt_dst.e * dst_rows + gt_dst.f
    det = gt_src.det
    if abs(det) < 1e-12:
        raise SingularTransform("source transform not invertible")
    dx = x - gt_src.c
    dy = y - gt_src.f
    src_col = (gt_src.e * dx - gt_src.b * dy) / det
    src_row = (gt_src.a * dy - gt_src.d * dx) / det
    # round half up for a deterministic nearest-center rule
    ci = np.floor(src_col + 0.5).astype(np.int64)
    ri = np.floor(src_row + 0.5).astype(np.int64)
    return ri, ci


def resample_nearest(src: Layer, target_gt: GeoTransform, target_w: int, target_h: int,
                     target_crs: Optional[CrsTag] = None) -> Layer:
    """Resample a georeferenced layer onto a new grid by nearest pixel center.

    Destination pixels whose centers fall outside the source become background
    (class 0) for masks and zero for imagery.
    """
    if src.geo is None:
        raise MissingGeoreference("source layer has no georeferencing")
    crs = target_crs or src.geo.crs
    if crs.code != src.geo.crs.code:
        raise CrsMismatch(f"{crs.code!r} != {src.geo.crs.code!r}")
    ri, ci = _nearest_indices(src.geo.transform, target_gt, target_w, target_h)
    inside = (ri >= 0) & (ri < src.height) & (ci >= 0) & (ci < src.width)
    ri_c = np.clip(ri, 0, src.height - 1)
    ci_c = np.clip(ci, 0, src.width - 1)
    geo = GeoRef(target_gt, crs)
    if isinstance(src, ClassMask):
        out = src.labels[ri_c, ci_c]
        out[~inside] = 0
        return ClassMask.from_array(out, geo=geo, class_table=src.class_table)
    out = src.samples[ri_c, ci_c, :]
    out[~inside] = 0
    return Raster.from_array(out, geo=geo)
