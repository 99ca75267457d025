"""Historical-vs-present differencing: negative profiles and diff rasters.

The historical and present footprint layers are superimposed on a metric
working grid. Present-day coverage is dilated by a generosity buffer (models
systematically trace buildings a little small, and development disturbs
terrain beyond the walls), subtracted from the historical coverage, and the
surviving patches become candidate sites for review. All boolean geometry is
raster-space at the working resolution: robust against slivers, and exact
enough for buildings drawn at 1:2880.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import ndimage

from .errors import CrsMismatch, DimensionMismatch, InvalidArgument, MissingLayer
from .geo import ClassMask, CrsTag, GeoRef, GeoTransform, Raster
from .segmenter import dilate
from .vectorizer import Footprint, FootprintLayer, Ring, rasterize, trace_footprints

STATUS_VALUES = ("unreviewed", "confirmed", "rejected")


@dataclass(frozen=True)
class OverlayParams:
    buffer_m: float = 3.0
    min_site_area_m2: float = 10.0
    uncovered_ratio_threshold: float = 0.5
    working_resolution_m: float = 0.25

    def __post_init__(self):
        if self.working_resolution_m <= 0:
            raise InvalidArgument("working resolution must be > 0")
        if self.buffer_m < 0 or self.min_site_area_m2 < 0:
            raise InvalidArgument("buffer and min area must be >= 0")
        if not (0.0 <= self.uncovered_ratio_threshold <= 1.0):
            raise InvalidArgument("uncovered_ratio_threshold must be in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "buffer_m": self.buffer_m,
            "min_site_area_m2": self.min_site_area_m2,
            "uncovered_ratio_threshold": self.uncovered_ratio_threshold,
            "working_resolution_m": self.working_resolution_m,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "OverlayParams":
        return cls(**{k: float(doc[k]) for k in (
            "buffer_m", "min_site_area_m2", "uncovered_ratio_threshold",
            "working_resolution_m")})


@dataclass(frozen=True)
class CandidateSite:
    site_id: str
    geometry: Footprint
    bbox: Tuple[float, float, float, float]
    area_m2: float
    uncovered_ratio: float
    source_historical_ids: Tuple[int, ...]  # indices into the historical layer
    status: str = "unreviewed"
    notes: str = ""
    updated_at: str = ""

    def __post_init__(self):
        if self.status not in STATUS_VALUES:
            raise InvalidArgument(f"bad status {self.status!r}")


def _now_iso() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def site_id_for(geometry: Footprint) -> str:
    """Deterministic id: hash of the rounded geometry, stable across reruns."""
    h = hashlib.sha1()
    h.update(str(geometry.class_id).encode())
    for ring in geometry.rings():
        for x, y in ring.points:
            h.update(f"{x:.6f},{y:.6f};".encode())
    return h.hexdigest()[:12]


def _layer_bounds(layers: Sequence[FootprintLayer]) -> Optional[Tuple[float, float, float, float]]:
    boxes = [fp.bbox for layer in layers for fp in layer.footprints]
    if not boxes:
        return None
    return (min(b[0] for b in boxes), min(b[1] for b in boxes),
            max(b[2] for b in boxes), max(b[3] for b in boxes))


def working_grid(bounds: Tuple[float, float, float, float], res: float,
                 pad_px: int) -> Tuple[GeoTransform, int, int]:
    """North-up grid covering bounds with pad_px extra pixels on each side."""
    min_x, min_y, max_x, max_y = bounds
    w = int(np.ceil((max_x - min_x) / res)) + 2 * pad_px
    h = int(np.ceil((max_y - min_y) / res)) + 2 * pad_px
    gt = GeoTransform(a=res, b=0.0, c=min_x - pad_px * res + res / 2,
                      d=0.0, e=-res, f=max_y + pad_px * res - res / 2)
    return gt, max(w, 1), max(h, 1)


def _footprint_pixels(fp: Footprint, crs: CrsTag, gt: GeoTransform,
                      w: int, h: int) -> Tuple[np.ndarray, np.ndarray]:
    one = FootprintLayer("historical", crs, (fp,))
    mask = rasterize(one, gt, w, h, class_table=(0, fp.class_id))
    return np.nonzero(np.asarray(mask.labels))


def negative_profile(hist: FootprintLayer, present: FootprintLayer,
                     params: OverlayParams = OverlayParams(),
                     now_iso: Optional[str] = None) -> List[CandidateSite]:
    """Historical buildings with no (buffered) present-day counterpart.

    An empty historical layer yields no sites; an empty present layer leaves
    every historical component uncovered. Neither case is an error.
    """
    if hist.crs.code != present.crs.code:
        raise CrsMismatch(f"{hist.crs.code!r} != {present.crs.code!r}")
    res = params.working_resolution_m
    buffer_px = int(round(params.buffer_m / res))
    bounds = _layer_bounds([hist, present])
    if bounds is None or not hist.footprints:
        return []
    gt, w, h = working_grid(bounds, res, pad_px=buffer_px + 1)

    hist_pixels = [_footprint_pixels(fp, hist.crs, gt, w, h) for fp in hist.footprints]
    hist_mask = np.zeros((h, w), dtype=bool)
    for ys, xs in hist_pixels:
        hist_mask[ys, xs] = True

    present_mask = np.zeros((h, w), dtype=bool)
    if present.footprints:
        binary = rasterize(
            FootprintLayer("present", present.crs,
                           tuple(replace(fp, class_id=1) for fp in present.footprints)),
            gt, w, h, class_table=(0, 1))
        present_mask = np.asarray(binary.labels) != 0

    negative = hist_mask & ~dilate(present_mask, buffer_px)

    ratios = []
    for ys, xs in hist_pixels:
        ratios.append(float(negative[ys, xs].mean()) if len(ys) else 0.0)

    comp, n_comp = ndimage.label(negative)
    if not n_comp:
        return []
    counts = np.bincount(comp.ravel())

    sources: Dict[int, List[int]] = {}
    for i, (ys, xs) in enumerate(hist_pixels):
        for cid in np.unique(comp[ys, xs]):
            if cid:
                sources.setdefault(int(cid), []).append(i)

    stamp = now_iso or _now_iso()
    sites: List[CandidateSite] = []
    for cid in range(1, n_comp + 1):
        area = float(counts[cid]) * res * res
        if area < params.min_site_area_m2:
            continue
        src = sources.get(cid, [])
        src_ratios = [ratios[i] for i in src]
        if not src_ratios or max(src_ratios) < params.uncovered_ratio_threshold:
            continue
        comp_mask = ClassMask.from_array((comp == cid).astype(np.uint8),
                                         geo=GeoRef(gt, hist.crs), class_table=(0, 1))
        traced = trace_footprints(comp_mask, epoch="historical").footprints
        assert len(traced) == 1, "one 4-connected component must trace to one footprint"
        geometry = traced[0]
        sites.append(CandidateSite(
            site_id=site_id_for(geometry),
            geometry=geometry,
            bbox=geometry.bbox,
            area_m2=geometry.area_m2,
            uncovered_ratio=max(src_ratios),
            source_historical_ids=tuple(src),
            status="unreviewed",
            notes="",
            updated_at=stamp,
        ))
    sites.sort(key=lambda s: (-s.area_m2, s.site_id))
    return sites


RED = (255, 0, 0, 255)
GREEN = (0, 255, 0, 255)
WHITE = (255, 255, 255, 255)


def diff_raster(gt: Union[ClassMask, np.ndarray], pred: Union[ClassMask, np.ndarray],
                background: str = "transparent") -> Raster:
    """Per-pixel comparison image: red = false positive, green = false
    negative, white = agreement; anything else is background."""
    geo = None
    if isinstance(gt, ClassMask):
        geo = gt.geo
        g = np.asarray(gt.labels) != 0
    else:
        g = np.asarray(gt) != 0
    p = np.asarray(pred.labels if isinstance(pred, ClassMask) else pred) != 0
    if g.shape != p.shape:
        raise DimensionMismatch(f"{g.shape} vs {p.shape}")
    if background not in ("transparent", "black"):
        raise InvalidArgument(f"bad background {background!r}")
    out = np.zeros(g.shape + (4,), dtype=np.uint8)
    if background == "black":
        out[..., 3] = 255
    out[p & ~g] = RED
    out[g & ~p] = GREEN
    out[g & p] = WHITE
    return Raster.from_array(out, geo=geo)


def recompute(hist: Optional[FootprintLayer], present: Optional[FootprintLayer],
              params: OverlayParams,
              previous_sites: Sequence[CandidateSite] = (),
              previous_archive: Sequence[CandidateSite] = (),
              now_iso: Optional[str] = None) -> Tuple[List[CandidateSite], List[CandidateSite]]:
    """Re-run the overlay, carrying review state across by geometry hash.

    Returns (sites, archive). A site whose geometry persists keeps its
    status/notes/timestamp; reviewed sites whose geometry disappears move to
    the archive; archived reviews whose geometry reappears are restored.
    """
    if hist is None:
        raise MissingLayer("historical footprint layer missing")
    if present is None:
        raise MissingLayer("present footprint layer missing")
    fresh = negative_profile(hist, present, params, now_iso=now_iso)

    by_id = {s.site_id: s for s in previous_sites}
    archive_by_id = {s.site_id: s for s in previous_archive}
    sites: List[CandidateSite] = []
    for site in fresh:
        old = by_id.get(site.site_id) or archive_by_id.pop(site.site_id, None)
        if old is not None:
            site = replace(site, status=old.status, notes=old.notes,
                           updated_at=old.updated_at)
        sites.append(site)

    fresh_ids = {s.site_id for s in sites}
    for old in previous_sites:
        reviewed = old.status != "unreviewed" or old.notes
        if old.site_id not in fresh_ids and reviewed:
            archive_by_id[old.site_id] = old
    archive = sorted(archive_by_id.values(), key=lambda s: s.site_id)
    return sites, archive


def site_to_dict(site: CandidateSite) -> dict:
    rings = [[list(p) for p in site.geometry.exterior.points]]
    rings += [[list(p) for p in h.points] for h in site.geometry.holes]
    return {
        "site_id": site.site_id,
        "rings": rings,
        "class_id": site.geometry.class_id,
        "bbox": list(site.bbox),
        "area_m2": site.area_m2,
        "uncovered_ratio": site.uncovered_ratio,
        "source_historical_ids": list(site.source_historical_ids),
        "status": site.status,
        "notes": site.notes,
        "updated_at": site.updated_at,
    }


def site_from_dict(doc: dict) -> CandidateSite:
    rings = [Ring(tuple((float(x), float(y)) for x, y in ring)) for ring in doc["rings"]]
    geometry = Footprint(
        exterior=rings[0],
        holes=tuple(rings[1:]),
        class_id=int(doc.get("class_id", 1)),
        area_m2=float(doc["area_m2"]),
        bbox=tuple(doc["bbox"]),
    )
    return CandidateSite(
        site_id=doc["site_id"],
        geometry=geometry,
        bbox=tuple(doc["bbox"]),
        area_m2=float(doc["area_m2"]),
        uncovered_ratio=float(doc["uncovered_ratio"]),
        source_historical_ids=tuple(int(i) for i in doc.get("source_historical_ids", [])),
        status=doc.get("status", "unreviewed"),
        notes=doc.get("notes", ""),
        updated_at=doc.get("updated_at", ""),
    )


def candidates_to_geojson(sites: Sequence[CandidateSite]) -> dict:
    features = []
    for s in sites:
        coords = [[list(p) for p in s.geometry.exterior.points]]
        coords += [[list(p) for p in h.points] for h in s.geometry.holes]
        features.append({
            "type": "Feature",
            "geometry": {"type": "Polygon", "coordinates": coords},
            "properties": {
                "site_id": s.site_id,
                "area_m2": s.area_m2,
                "uncovered_ratio": s.uncovered_ratio,
                "status": s.status,
                "notes": s.notes,
            },
        })
    return {"type": "FeatureCollection", "features": features}
