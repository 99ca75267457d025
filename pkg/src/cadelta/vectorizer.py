"""Mask-to-polygon conversion and back.

Footprints are traced along pixel edges (the boundary of the union of unit
squares), which keeps area bookkeeping exact and makes mask -> polygons ->
mask a bit-exact round trip. Smoothing is a separate, explicit simplification
step so the lossless path stays available as an oracle.

Tracing walks directed boundary edges with the foreground on its right in
pixel space. Where two diagonal pixels of one component meet at a corner,
both contours pass through; the walker always turns via (dy, -dx), which
keeps every ring simple (rings may share isolated corner points, never
edges). Enclosed 4-connected background pockets come out as negative rings
and are attached as holes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from .errors import CrsMismatch, InvalidArgument, MissingGeoreference, NonMetricCrs
from .geo import ClassMask, CrsTag, GeoRef, GeoTransform, pixel_to_world, world_to_pixel

Point = Tuple[float, float]


def shoelace(points: Sequence[Point]) -> float:
    """Signed area of a closed ring (first point repeated at the end)."""
    total = 0.0
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        total += x0 * y1 - x1 * y0
    return total / 2.0


@dataclass(frozen=True)
class Ring:
    points: Tuple[Point, ...]  # closed: first == last, >= 4 entries

    def __post_init__(self):
        if len(self.points) < 4:
            raise InvalidArgument("ring needs >= 4 points including closure")
        if self.points[0] != self.points[-1]:
            raise InvalidArgument("ring must be closed (first == last)")
        object.__setattr__(self, "points", tuple((float(x), float(y)) for x, y in self.points))

    @property
    def signed_area(self) -> float:
        return shoelace(self.points)

    def reversed(self) -> "Ring":
        return Ring(tuple(self.points[::-1]))


@dataclass(frozen=True)
class Footprint:
    exterior: Ring  # CCW in world coordinates (Y-up)
    holes: Tuple[Ring, ...]  # CW
    class_id: int
    area_m2: float
    bbox: Tuple[float, float, float, float]  # minX, minY, maxX, maxY

    def rings(self) -> Iterable[Ring]:
        yield self.exterior
        yield from self.holes


@dataclass(frozen=True)
class FootprintLayer:
    epoch: str  # "historical" | "present"
    crs: CrsTag
    footprints: Tuple[Footprint, ...]

    def __post_init__(self):
        object.__setattr__(self, "footprints", tuple(self.footprints))


def _bbox_of(points: Sequence[Point]) -> Tuple[float, float, float, float]:
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    return (min(xs), min(ys), max(xs), max(ys))


def _merge_collinear(corners: List[Tuple[int, int]]) -> List[Tuple[int, int]]:
    """Drop vertices where the walk direction does not change.

    Input is an open corner loop of unit axis-aligned steps; output keeps
    only direction changes, rotated so index 0 is itself a turn.
    """
    n = len(corners)
    keep = []
    for i in range(n):
        px, py = corners[i - 1]
        cx, cy = corners[i]
        nx, ny = corners[(i + 1) % n]
        if (cx - px, cy - py) != (nx - cx, ny - cy):
            keep.append(corners[i])
    return keep


def _trace_component_rings(edges: Dict[Tuple[int, int], List[Tuple[int, int]]]):
    """Stitch directed boundary edges into corner loops.

    ``edges`` maps start corner -> list of end corners (at most 2, only at
    saddle corners). Consumes the dict.
    """
    rings: List[List[Tuple[int, int]]] = []
    starts = sorted(edges.keys())
    for start in starts:
        while edges.get(start):
            loop = [start]
            prev = start
            cur = edges[start].pop()
            while cur != start:
                loop.append(cur)
                outs = edges[cur]
                if len(outs) == 1:
                    nxt = outs.pop()
                else:
                    # saddle: continue with the (dy, -dx) turn of the incoming direction
                    dx, dy = cur[0] - prev[0], cur[1] - prev[1]
                    want = (cur[0] + dy, cur[1] - dx)
                    nxt = outs.pop(outs.index(want))
                prev = cur
                cur = nxt
            rings.append(loop)
    return rings


def _component_edges(binary: np.ndarray, ox: int, oy: int) -> Dict[Tuple[int, int], List[Tuple[int, int]]]:
    """Directed unit edges of the union-of-squares boundary, offset to (ox, oy)."""
    b = binary
    north = np.zeros_like(b)
    north[1:, :] = b[:-1, :]
    south = np.zeros_like(b)
    south[:-1, :] = b[1:, :]
    west = np.zeros_like(b)
    west[:, 1:] = b[:, :-1]
    east = np.zeros_like(b)
    east[:, :-1] = b[:, 1:]

    edges: Dict[Tuple[int, int], List[Tuple[int, int]]] = {}

    def add(x0, y0, x1, y1):
        for a, c, d, e in zip(x0, y0, x1, y1):
            edges.setdefault((int(a), int(c)), []).append((int(d), int(e)))

    ys, xs = np.nonzero(b & ~north)
    add(xs + ox, ys + oy, xs + 1 + ox, ys + oy)  # top, walking east
    ys, xs = np.nonzero(b & ~east)
    add(xs + 1 + ox, ys + oy, xs + 1 + ox, ys + 1 + oy)  # right, walking south
    ys, xs = np.nonzero(b & ~south)
    add(xs + 1 + ox, ys + 1 + oy, xs + ox, ys + 1 + oy)  # bottom, walking west
    ys, xs = np.nonzero(b & ~west)
    add(xs + ox, ys + 1 + oy, xs + ox, ys + oy)  # left, walking north
    return edges


def _corner_to_world(gt: GeoTransform, corner: Tuple[int, int]) -> Point:
    # corner (i, j) sits half a pixel up-left of pixel center (i, j)
    return pixel_to_world(gt, corner[0] - 0.5, corner[1] - 0.5)


def trace_footprints(mask: ClassMask, epoch: str = "historical") -> FootprintLayer:
    """Vectorize every 4-connected component of every non-zero class."""
    if mask.geo is None:
        raise MissingGeoreference("mask must be georeferenced to vectorize")
    if not mask.geo.crs.is_metric:
        raise NonMetricCrs(f"CRS {mask.geo.crs.code} has units {mask.geo.crs.units!r}")
    gt = mask.geo.transform
    flip = gt.det < 0  # world Y-up orientation opposite to pixel orientation
    labels = np.asarray(mask.labels)
    footprints: List[Footprint] = []
    for class_id in sorted(set(mask.class_table) - {0}):
        binary = labels == class_id
        if not binary.any():
            continue
        comp, n = ndimage.label(binary)
        slices = ndimage.find_objects(comp)
        for idx in range(1, n + 1):
            sl = slices[idx - 1]
            sub = comp[sl] == idx
            edges = _component_edges(sub, sl[1].start, sl[0].start)
            loops = _trace_component_rings(edges)
            exterior_pts: Optional[List[Tuple[int, int]]] = None
            pixel_area = 0.0
            hole_loops: List[List[Tuple[int, int]]] = []
            for loop in loops:
                area2 = 0.0
                for (x0, y0), (x1, y1) in zip(loop, loop[1:] + loop[:1]):
                    area2 += x0 * y1 - x1 * y0
                pixel_area += area2 / 2.0
                merged = _merge_collinear(loop)
                if area2 > 0:
                    assert exterior_pts is None, "component produced two exterior rings"
                    exterior_pts = merged
                else:
                    hole_loops.append(merged)
            assert exterior_pts is not None, "component produced no exterior ring"

            def to_ring(pts: List[Tuple[int, int]]) -> Ring:
                world = [_corner_to_world(gt, p) for p in pts]
                if flip:
                    world = world[::-1]
                return Ring(tuple(world) + (world[0],))

            exterior = to_ring(exterior_pts)
            holes = tuple(to_ring(h) for h in hole_loops)
            footprints.append(Footprint(
                exterior=exterior,
                holes=holes,
                class_id=class_id,
                area_m2=pixel_area * gt.pixel_area,
                bbox=_bbox_of(exterior.points),
            ))
    return FootprintLayer(epoch=epoch, crs=mask.geo.crs, footprints=tuple(footprints))


# --- simplification -------------------------------------------------------

def _seg_dist(p: Point, a: Point, b: Point) -> float:
    ax, ay = a
    bx, by = b
    px, py = p
    dx, dy = bx - ax, by - ay
    den = dx * dx + dy * dy
    if den == 0:
        return math.hypot(px - ax, py - ay)
    t = max(0.0, min(1.0, ((px - ax) * dx + (py - ay) * dy) / den))
    return math.hypot(px - (ax + t * dx), py - (ay + t * dy))


def _dp_chain(pts: List[Point], eps: float) -> List[Point]:
    if len(pts) <= 2:
        return list(pts)
    worst_i = 0
    worst_d = -1.0
    for i in range(1, len(pts) - 1):
        d = _seg_dist(pts[i], pts[0], pts[-1])
        if d > worst_d:
            worst_d = d
            worst_i = i
    if worst_d <= eps and _chord_area_ok(pts, eps):
        return [pts[0], pts[-1]]
    left = _dp_chain(pts[: worst_i + 1], eps)
    right = _dp_chain(pts[worst_i:], eps)
    return left[:-1] + right


def _chord_area_ok(pts: List[Point], eps: float) -> bool:
    """Accept a chord only when the area it sweeps stays staircase-small.

    The area enclosed between the chain and its chord is the shoelace sum of
    the chain closed by the chord. A unit staircase along a diagonal encloses
    0.354 * chord_len, so eps * chord_len / 2 admits those collapses while
    refusing deeper cuts (arc chords shave 2/3 * sagitta * chord_len, which
    crosses the threshold at sagitta 0.75 * eps). Keeping those extra points
    is what holds raster round-trip overlap high on small curved blobs.
    """
    swept = abs(shoelace(pts + [pts[0]]))
    chord = math.hypot(pts[-1][0] - pts[0][0], pts[-1][1] - pts[0][1])
    return swept <= eps * chord * 0.5


def _segments_cross(a: Point, b: Point, c: Point, d: Point) -> bool:
    def orient(p, q, r):
        v = (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
        if v > 1e-12:
            return 1
        if v < -1e-12:
            return -1
        return 0

    def on_seg(p, q, r):
        return (min(p[0], q[0]) - 1e-12 <= r[0] <= max(p[0], q[0]) + 1e-12
                and min(p[1], q[1]) - 1e-12 <= r[1] <= max(p[1], q[1]) + 1e-12)

    o1, o2 = orient(a, b, c), orient(a, b, d)
    o3, o4 = orient(c, d, a), orient(c, d, b)
    if o1 != o2 and o3 != o4:
        return True
    for p, q, r in ((a, b, c), (a, b, d), (c, d, a), (c, d, b)):
        if orient(p, q, r) == 0 and on_seg(p, q, r):
            return True
    return False


def _ring_is_simple(points: Sequence[Point]) -> bool:
    segs = list(zip(points[:-1], points[1:]))
    n = len(segs)
    for i in range(n):
        for j in range(i + 1, n):
            adjacent = j == i + 1 or (i == 0 and j == n - 1)
            if adjacent:
                continue
            if _segments_cross(*segs[i], *segs[j]):
                return False
    return True


def _simplify_ring(ring: Ring, eps: float) -> Tuple[Ring, bool]:
    """Returns (ring, degenerate_flag); on failure the original comes back."""
    open_pts = list(ring.points[:-1])
    if len(open_pts) <= 4:
        return ring, False
    anchor0 = 0
    x0, y0 = open_pts[0]
    anchor1 = max(range(1, len(open_pts)),
                  key=lambda i: (open_pts[i][0] - x0) ** 2 + (open_pts[i][1] - y0) ** 2)
    chain_a = _dp_chain(open_pts[anchor0:anchor1 + 1], eps)
    chain_b = _dp_chain(open_pts[anchor1:] + [open_pts[0]], eps)
    result = chain_a[:-1] + chain_b[:-1]
    if len(result) < 3:
        return ring, True
    closed = result + [result[0]]
    area = shoelace(closed)
    if area == 0 or (area > 0) != (ring.signed_area > 0) or not _ring_is_simple(closed):
        return ring, True
    return Ring(tuple(closed)), False


def simplify(fp: Footprint, epsilon: float) -> Tuple[Footprint, bool]:
    """Douglas-Peucker each ring; every dropped vertex stays within epsilon.

    Rings that would collapse below 4 points, lose simplicity, or flip
    orientation are returned unsimplified and flagged (second return value).
    """
    if epsilon < 0:
        raise InvalidArgument("epsilon must be >= 0")
    if epsilon == 0:
        return fp, False
    exterior, flag = _simplify_ring(fp.exterior, epsilon)
    holes: List[Ring] = []
    for hole in fp.holes:
        out, f = _simplify_ring(hole, epsilon)
        flag = flag or f
        holes.append(out)
    # area from world-space shoelace: exterior magnitude minus hole magnitudes
    area = abs(shoelace(exterior.points)) - sum(abs(shoelace(h.points)) for h in holes)
    return Footprint(
        exterior=exterior,
        holes=tuple(holes),
        class_id=fp.class_id,
        area_m2=area,
        bbox=_bbox_of(exterior.points),
    ), flag


def simplify_layer(layer: FootprintLayer, epsilon: float) -> Tuple[FootprintLayer, int]:
    """Simplify every footprint; returns the new layer and the flagged count."""
    out = []
    flagged = 0
    for fp in layer.footprints:
        s, f = simplify(fp, epsilon)
        out.append(s)
        flagged += int(f)
    return replace(layer, footprints=tuple(out)), flagged


# --- rasterization --------------------------------------------------------

def _ring_crossings(ring_px: List[Point], y: float) -> List[float]:
    """x coordinates where the ring crosses the horizontal line at y.

    Half-open rule (y0 <= y < y1 or y1 <= y < y0) counts each vertex crossing
    once and skips horizontal edges.
    """
    xs = []
    for (x0, y0), (x1, y1) in zip(ring_px, ring_px[1:]):
        if (y0 <= y < y1) or (y1 <= y < y0):
            xs.append(x0 + (y - y0) * (x1 - x0) / (y1 - y0))
    return xs


def rasterize(layer: FootprintLayer, gt: GeoTransform, w: int, h: int,
              crs: Optional[CrsTag] = None,
              class_table: Optional[Tuple[int, ...]] = None) -> ClassMask:
    """Paint footprints onto a pixel grid by center-in-polygon (even-odd).

    Later footprints overwrite earlier ones where they overlap.
    """
    if crs is not None and crs.code != layer.crs.code:
        raise CrsMismatch(f"{crs.code!r} != {layer.crs.code!r}")
    out = np.zeros((h, w), dtype=np.uint8)
    for fp in layer.footprints:
        rings_px: List[List[Point]] = []
        for ring in fp.rings():
            rings_px.append([world_to_pixel(gt, x, y) for x, y in ring.points])
        all_pts = [p for ring in rings_px for p in ring]
        min_x = max(0, int(math.ceil(min(p[0] for p in all_pts) - 0.5)))
        max_x = min(w - 1, int(math.floor(max(p[0] for p in all_pts) + 0.5)))
        min_y = max(0, int(math.ceil(min(p[1] for p in all_pts) - 0.5)))
        max_y = min(h - 1, int(math.floor(max(p[1] for p in all_pts) + 0.5)))
        if min_x > max_x or min_y > max_y:
            continue
        cols = np.arange(min_x, max_x + 1)
        for y in range(min_y, max_y + 1):
            crossings: List[float] = []
            for ring_px in rings_px:
                crossings.extend(_ring_crossings(ring_px, float(y)))
            if not crossings:
                continue
            xs = np.sort(np.asarray(crossings))
            # center inside iff an odd number of edges cross strictly to its right
            right = len(xs) - np.searchsorted(xs, cols, side="right")
            inside = (right % 2) == 1
            out[y, cols[inside]] = fp.class_id
    table = class_table or (0,) + tuple(sorted({fp.class_id for fp in layer.footprints}))
    return ClassMask.from_array(out, geo=GeoRef(gt, layer.crs), class_table=table)


# --- GeoJSON --------------------------------------------------------------

def export_geojson(layer: FootprintLayer) -> dict:
    features = []
    for fp in layer.footprints:
        coords = [[list(p) for p in fp.exterior.points]]
        for hole in fp.holes:
            coords.append([list(p) for p in hole.points])
        features.append({
            "type": "Feature",
            "geometry": {"type": "Polygon", "coordinates": coords},
            "properties": {
                "class_id": fp.class_id,
                "area_m2": fp.area_m2,
                "epoch": layer.epoch,
                "bbox": list(fp.bbox),
            },
        })
    return {"type": "FeatureCollection", "crs_tag": layer.crs.code, "features": features}


def import_geojson(doc: dict, crs: Optional[CrsTag] = None) -> FootprintLayer:
    if doc.get("type") != "FeatureCollection":
        raise InvalidArgument("expected a FeatureCollection")
    tag = crs or CrsTag(doc.get("crs_tag", "local"))
    footprints = []
    epoch = "historical"
    for feat in doc.get("features", []):
        geom = feat["geometry"]
        if geom["type"] != "Polygon":
            raise InvalidArgument(f"unsupported geometry {geom['type']}")
        rings = [Ring(tuple((float(x), float(y)) for x, y in ring))
                 for ring in geom["coordinates"]]
        props = feat.get("properties", {})
        epoch = props.get("epoch", epoch)
        exterior, holes = rings[0], tuple(rings[1:])
        area = props.get("area_m2")
        if area is None:
            area = abs(shoelace(exterior.points)) - sum(abs(shoelace(h.points)) for h in holes)
        footprints.append(Footprint(
            exterior=exterior,
            holes=holes,
            class_id=int(props.get("class_id", 1)),
            area_m2=float(area),
            bbox=tuple(props.get("bbox", _bbox_of(exterior.points))),
        ))
    return FootprintLayer(epoch=epoch, crs=tag, footprints=tuple(footprints))


def layer_to_json(layer: FootprintLayer) -> str:
    return json.dumps(export_geojson(layer), sort_keys=True, separators=(",", ":")) + "\n"
