"""Synthetic cadastral scenes with exact ground truth.

Real georeferenced cadastre scans are not redistributable, so tests and
demos run on generated pages: beige paper, red (stone) and yellow (wood)
building rectangles, Gaussian color jitter, and hatching linework on open
terrain. The generator also produces a present-day building mask with a
chosen subset of buildings removed, giving the overlay stage scenes whose
expected candidate sites are known exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import List, Tuple

import numpy as np

from .geo import ClassMask, CrsTag, GeoRef, GeoTransform, Raster
from .raster_io import save_layer

PAGE_COLOR = (245, 235, 210)
STONE_COLOR = (190, 60, 50)   # hue ~4 deg, well inside the red rule
WOOD_COLOR = (210, 180, 60)   # hue ~48 deg, inside the yellow rule
HATCH_COLOR = (90, 80, 70)    # low saturation: must NOT match any rule

SYNTH_CRS = CrsTag("local-metric")


@dataclass(frozen=True)
class SynthScene:
    image: Raster
    truth: ClassMask
    present_mask: ClassMask
    buildings: Tuple[Tuple[int, int, int, int, int], ...]  # x0, y0, x1, y1, class
    removed: Tuple[int, ...]  # indices into buildings absent from present


def _scene_geo(width: int, height: int, resolution: float) -> GeoRef:
    gt = GeoTransform(a=resolution, b=0.0, c=resolution / 2,
                      d=0.0, e=-resolution, f=height * resolution - resolution / 2)
    return GeoRef(gt, SYNTH_CRS)


def _place_buildings(rng: np.random.Generator, width: int, height: int,
                     count: int, min_side: int, max_side: int,
                     margin: int) -> List[Tuple[int, int, int, int, int]]:
    placed: List[Tuple[int, int, int, int, int]] = []
    attempts = 0
    while len(placed) < count and attempts < count * 200:
        attempts += 1
        bw = int(rng.integers(min_side, max_side + 1))
        bh = int(rng.integers(min_side, max_side + 1))
        x0 = int(rng.integers(margin, max(width - bw - margin, margin + 1)))
        y0 = int(rng.integers(margin, max(height - bh - margin, margin + 1)))
        rect = (x0, y0, x0 + bw, y0 + bh)
        clear = all(
            rect[2] + margin <= ox0 or ox1 + margin <= rect[0]
            or rect[3] + margin <= oy0 or oy1 + margin <= rect[1]
            for ox0, oy0, ox1, oy1, _ in placed)
        if clear:
            cls = 1 if rng.random() < 0.6 else 2
            placed.append((x0, y0, rect[2], rect[3], cls))
    return placed


def _draw_hatching(rng: np.random.Generator, page: np.ndarray,
                   keep_out: np.ndarray, n_lines: int) -> None:
    h, w, _ = page.shape
    for _ in range(n_lines):
        x0, x1 = rng.integers(0, w, size=2)
        y0, y1 = rng.integers(0, h, size=2)
        steps = int(max(abs(int(x1) - int(x0)), abs(int(y1) - int(y0))) * 2 + 1)
        ts = np.linspace(0.0, 1.0, steps)
        xs = np.clip(np.round(x0 + ts * (int(x1) - int(x0))).astype(int), 0, w - 1)
        ys = np.clip(np.round(y0 + ts * (int(y1) - int(y0))).astype(int), 0, h - 1)
        ok = ~keep_out[ys, xs]
        page[ys[ok], xs[ok]] = HATCH_COLOR


def synth_scene(seed: int = 0, width: int = 400, height: int = 300,
                n_buildings: int = 10, n_removed: int = 3,
                resolution: float = 0.25, jitter_sigma: float = 8.0,
                n_hatch_lines: int = 40,
                min_side: int = 16, max_side: int = 48,
                present_shift_px: Tuple[int, int] = (2, 1)) -> SynthScene:
    """Build one deterministic scene; same seed, same bytes.

    Buildings are kept ``margin`` pixels apart so segmentation and overlay
    never merge neighbours, and the smallest building (min_side^2 px) stays
    above the default 10 m^2 site floor at the default 0.25 m resolution.
    """
    rng = np.random.default_rng(seed)
    geo = _scene_geo(width, height, resolution)

    buildings = _place_buildings(rng, width, height, n_buildings,
                                 min_side, max_side, margin=24)
    truth = np.zeros((height, width), dtype=np.uint8)
    page = np.zeros((height, width, 3), dtype=np.float64)
    page[:, :] = PAGE_COLOR
    for x0, y0, x1, y1, cls in buildings:
        truth[y0:y1, x0:x1] = cls
        page[y0:y1, x0:x1] = STONE_COLOR if cls == 1 else WOOD_COLOR

    keep_out = np.zeros((height, width), dtype=bool)
    for x0, y0, x1, y1, _ in buildings:
        keep_out[max(y0 - 3, 0):y1 + 3, max(x0 - 3, 0):x1 + 3] = True
    _draw_hatching(rng, page, keep_out, n_hatch_lines)

    page += rng.normal(0.0, jitter_sigma, size=page.shape)
    image = Raster.from_array(np.clip(np.round(page), 0, 255).astype(np.uint8), geo=geo)

    removed = tuple(sorted(int(i) for i in rng.choice(
        len(buildings), size=min(n_removed, len(buildings)), replace=False)))
    present = np.zeros((height, width), dtype=np.uint8)
    dx, dy = present_shift_px
    for i, (x0, y0, x1, y1, _) in enumerate(buildings):
        if i in removed:
            continue
        px0 = np.clip(x0 + dx, 0, width)
        px1 = np.clip(x1 + dx, 0, width)
        py0 = np.clip(y0 + dy, 0, height)
        py1 = np.clip(y1 + dy, 0, height)
        present[py0:py1, px0:px1] = 1

    return SynthScene(
        image=image,
        truth=ClassMask.from_array(truth, geo=geo),
        present_mask=ClassMask.from_array(present, geo=geo, class_table=(0, 1)),
        buildings=tuple(buildings),
        removed=removed,
    )


def write_scene(scene: SynthScene, out_dir: Path) -> dict:
    """Persist a scene as image.png / truth.png / present.png with sidecars."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_layer(scene.image, out_dir / "image.png")
    save_layer(scene.truth, out_dir / "truth.png")
    save_layer(scene.present_mask, out_dir / "present.png")
    return {
        "image": "image.png",
        "truth": "truth.png",
        "present": "present.png",
        "buildings": len(scene.buildings),
        "removed": list(scene.removed),
    }
