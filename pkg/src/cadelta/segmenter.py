"""Chromatic segmentation of cadastral map imagery.

Old cadastre sheets encode construction material in color: red for stone
buildings, yellow for wooden ones. This module turns 3-band imagery into
class masks with wrap-aware HSV thresholds followed by disk-based morphology,
and validates externally produced model masks for ingestion.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import ndimage

from .errors import BandCountError, GeoMismatch, InvalidArgument, LabelOutOfTable
from .geo import ClassMask, CrsTag, GeoRef, Raster, pixel_to_world
from .raster_io import LayerDescriptor, LayerRole, load_layer


@dataclass(frozen=True)
class ColorRule:
    """HSV gate for one class. hue_range wraps: [340, 20] covers reds."""

    class_id: int
    hue_range: Tuple[float, float]  # degrees
    sat_min: float
    val_min: float

    def __post_init__(self):
        if self.class_id == 0:
            raise InvalidArgument("class 0 is reserved for background")
        lo, hi = self.hue_range
        width = (hi - lo) % 360 if lo > hi else hi - lo
        if width > 360:
            raise InvalidArgument("hue range wider than a full circle")


@dataclass(frozen=True)
class MorphologyParams:
    open_radius: int = 1
    close_radius: int = 2
    min_area: int = 25  # px^2

    def __post_init__(self):
        if self.open_radius < 0 or self.close_radius < 0 or self.min_area < 0:
            raise InvalidArgument("morphology parameters must be >= 0")


# red stone houses, yellow wooden houses
DEFAULT_RULES = (
    ColorRule(class_id=1, hue_range=(340.0, 20.0), sat_min=0.35, val_min=0.25),
    ColorRule(class_id=2, hue_range=(40.0, 70.0), sat_min=0.35, val_min=0.35),
)


def rules_from_json(source: Union[str, Path]) -> List[ColorRule]:
    """Load rules from a JSON array of {class, hue, sat_min, val_min}."""
    text = Path(source).read_text() if Path(str(source)).exists() else str(source)
    raw = json.loads(text)
    rules = []
    for item in raw:
        rules.append(ColorRule(
            class_id=int(item["class"]),
            hue_range=(float(item["hue"][0]), float(item["hue"][1])),
            sat_min=float(item["sat_min"]),
            val_min=float(item["val_min"]),
        ))
    return rules


def _rgb_to_hsv(img: np.ndarray):
    """Vectorized RGB->HSV on [0,1] channels; hue in degrees [0, 360)."""
    rgb = img.astype(np.float64) / 255.0
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    v = rgb.max(axis=-1)
    c = v - rgb.min(axis=-1)
    s = np.where(v > 0, c / np.where(v > 0, v, 1), 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        hr = np.where(c > 0, ((g - b) / np.where(c > 0, c, 1)) % 6, 0.0)
        hg = np.where(c > 0, (b - r) / np.where(c > 0, c, 1) + 2, 0.0)
        hb = np.where(c > 0, (r - g) / np.where(c > 0, c, 1) + 4, 0.0)
    h = np.where(v == r, hr, np.where(v == g, hg, hb)) * 60.0
    h = np.where(c > 0, h % 360.0, 0.0)
    return h, s, v


def _hue_in_range(h: np.ndarray, lo: float, hi: float) -> np.ndarray:
    lo %= 360.0
    hi %= 360.0
    if lo <= hi:
        return (h >= lo) & (h <= hi)
    return (h >= lo) | (h <= hi)


def dilate(mask: np.ndarray, radius: float) -> np.ndarray:
    """Exact Euclidean dilation: all pixels within distance <= radius of
    foreground, measured center to center."""
    if radius < 0:
        raise InvalidArgument("radius must be >= 0")
    fg = np.asarray(mask, dtype=bool)
    if radius == 0 or not fg.any():
        return fg.copy()
    dist = ndimage.distance_transform_edt(~fg)
    return dist <= radius


def erode(mask: np.ndarray, radius: float) -> np.ndarray:
    fg = np.asarray(mask, dtype=bool)
    if radius == 0:
        return fg.copy()
    if fg.all():
        return fg.copy()  # no background to measure from
    dist = ndimage.distance_transform_edt(fg)
    return dist > radius


def _clean_binary(fg: np.ndarray, morph: MorphologyParams) -> np.ndarray:
    out = dilate(erode(fg, morph.open_radius), morph.open_radius)
    out = erode(dilate(out, morph.close_radius), morph.close_radius)
    if morph.min_area > 0 and out.any():
        labels, n = ndimage.label(out)  # default structure = 4-connectivity
        if n:
            counts = np.bincount(labels.ravel())
            keep = counts >= morph.min_area
            keep[0] = False
            out = keep[labels]
    return out


def segment_chromatic(img: Raster, rules: Sequence[ColorRule] = DEFAULT_RULES,
                      morph: MorphologyParams = MorphologyParams()) -> ClassMask:
    """Classify pixels by HSV rules (first match wins), then clean per class.

    Each class mask is opened, closed, and stripped of small components
    independently; earlier rules keep priority where cleaned masks overlap.
    """
    if img.bands != 3:
        raise BandCountError(f"expected 3 bands, got {img.bands}")
    h, s, v = _rgb_to_hsv(np.asarray(img.samples))
    claimed = np.zeros(h.shape, dtype=bool)
    raw_per_rule = []
    for rule in rules:
        match = (_hue_in_range(h, *rule.hue_range) & (s >= rule.sat_min)
                 & (v >= rule.val_min) & ~claimed)
        claimed |= match
        raw_per_rule.append(match)

    out = np.zeros(h.shape, dtype=np.uint8)
    # paint in reverse so earlier rules overwrite where cleanups overlap
    for rule, raw in list(zip(rules, raw_per_rule))[::-1]:
        cleaned = _clean_binary(raw, morph)
        out[cleaned] = rule.class_id
    table = (0,) + tuple(sorted({r.class_id for r in rules}))
    return ClassMask.from_array(out, geo=img.geo, class_table=table)


def _corner_offset(expected: GeoRef, actual: GeoRef, w: int, h: int) -> float:
    worst = 0.0
    for col, row in ((-0.5, -0.5), (w - 0.5, -0.5), (-0.5, h - 0.5), (w - 0.5, h - 0.5)):
        ex, ey = pixel_to_world(expected.transform, col, row)
        ax, ay = pixel_to_world(actual.transform, col, row)
        worst = max(worst, abs(ax - ex), abs(ay - ey))
    return worst


def ingest_external_mask(path: Union[str, Path], class_table: Tuple[int, ...],
                         expected_geo: Optional[GeoRef] = None,
                         crs: Optional[CrsTag] = None) -> ClassMask:
    """Load a model-produced mask and check labels and georeferencing.

    Corner world coordinates must agree with expected_geo within 1e-6 m; the
    raised GeoMismatch reports the worst offset.
    """
    if crs is None:
        crs = expected_geo.crs if expected_geo is not None else CrsTag("local")
    desc = LayerDescriptor("external", LayerRole.HISTORICAL_MASK, Path(path),
                           crs=crs, class_table=class_table)
    try:
        mask = load_layer(desc)
    except Exception as exc:
        # surface out-of-table labels under the contract's error name
        msg = str(exc)
        if "class table" in msg:
            raise LabelOutOfTable(msg) from exc
        raise
    assert isinstance(mask, ClassMask)
    if expected_geo is not None:
        if mask.geo is None:
            raise GeoMismatch("mask has no world file but georeferencing was expected")
        if mask.geo.crs.code != expected_geo.crs.code:
            raise GeoMismatch(f"CRS {mask.geo.crs.code!r} != {expected_geo.crs.code!r}")
        off = _corner_offset(expected_geo, mask.geo, mask.width, mask.height)
        if off > 1e-6:
            raise GeoMismatch(f"corner offset {off:.6g} m exceeds 1e-6 m")
    return mask
