"""PNG + ESRI world file persistence for rasters and class masks.

Geo lives entirely in the sidecar world file (six ASCII lines in the order
a, d, b, e, c, f); the PNG itself is plain 8-bit, non-interlaced. Masks are
written as a single gray band of raw class ids, optionally with an indexed
palette variant for quick visual checks.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
from PIL import Image

from .errors import DecodeError, InvalidArgument, IoError, WorldFileMalformed
from .geo import DEFAULT_CLASS_TABLE, ClassMask, CrsTag, GeoRef, GeoTransform, Raster

_MODE_FOR_BANDS = {1: "L", 3: "RGB", 4: "RGBA"}

# fixed eyeball palette for mask previews: bg, stone, wood, then spares
MASK_PREVIEW_COLORS = {
    0: (255, 255, 255),
    1: (200, 40, 40),
    2: (230, 190, 60),
    3: (70, 130, 180),
    4: (120, 120, 120),
}


class LayerRole(str, Enum):
    HISTORICAL_MAP = "historical_map"
    PRESENT_IMAGERY = "present_imagery"
    HISTORICAL_MASK = "historical_mask"
    PRESENT_MASK = "present_mask"
    DIFF = "diff"


MASK_ROLES = (LayerRole.HISTORICAL_MASK, LayerRole.PRESENT_MASK)


@dataclass(frozen=True)
class LayerDescriptor:
    layer_id: str
    role: LayerRole
    raster_path: Path
    world_path: Optional[Path] = None
    crs: CrsTag = CrsTag("local")
    class_table: Tuple[int, ...] = DEFAULT_CLASS_TABLE

    def __post_init__(self):
        object.__setattr__(self, "raster_path", Path(self.raster_path))
        if self.world_path is not None:
            object.__setattr__(self, "world_path", Path(self.world_path))
        object.__setattr__(self, "role", LayerRole(self.role))


def write_world_file(path: Union[str, Path], gt: GeoTransform) -> None:
    """Write the six-line sidecar. repr() keeps full float64 precision."""
    lines = [gt.a, gt.d, gt.b, gt.e, gt.c, gt.f]
    try:
        with open(path, "w", encoding="ascii") as fh:
            for v in lines:
                fh.write(repr(float(v)) + "\n")
    except OSError as exc:
        raise IoError(str(exc)) from exc


def read_world_file(path: Union[str, Path]) -> GeoTransform:
    try:
        with open(path, "r", encoding="ascii") as fh:
            raw = fh.read()
    except OSError as exc:
        raise IoError(str(exc)) from exc
    fields = raw.split()
    if len(fields) != 6:
        raise WorldFileMalformed(f"{path}: expected 6 lines, got {len(fields)}")
    try:
        a, d, b, e, c, f = (float(v) for v in fields)
    except ValueError as exc:
        raise WorldFileMalformed(f"{path}: non-numeric entry") from exc
    return GeoTransform(a=a, b=b, c=c, d=d, e=e, f=f)


def world_path_for(raster_path: Union[str, Path]) -> Path:
    """Conventional sidecar name: .png -> .pgw, anything else appends .wld."""
    p = Path(raster_path)
    if p.suffix.lower() == ".png":
        return p.with_suffix(".pgw")
    return Path(str(p) + ".wld")


def save_layer(obj: Union[Raster, ClassMask], raster_path: Union[str, Path],
               world_path: Optional[Union[str, Path]] = None,
               preview_palette: bool = False) -> None:
    """Write a layer as PNG (+ world file when georeferenced).

    ``preview_palette`` switches masks to indexed color so the class ids stay
    intact in the pixel values but render as distinguishable colors.
    """
    raster_path = Path(raster_path)
    if isinstance(obj, ClassMask):
        img = Image.fromarray(np.asarray(obj.labels), mode="L")
        if preview_palette:
            img = img.convert("P")
            palette = [0] * 768
            for cid in range(256):
                r, g, b = MASK_PREVIEW_COLORS.get(cid, (0, 0, 0))
                palette[cid * 3:cid * 3 + 3] = [r, g, b]
            img.putpalette(palette)
    else:
        arr = np.asarray(obj.samples)
        if obj.bands == 1:
            img = Image.fromarray(arr[:, :, 0], mode="L")
        else:
            img = Image.fromarray(arr, mode=_MODE_FOR_BANDS[obj.bands])
    try:
        raster_path.parent.mkdir(parents=True, exist_ok=True)
        img.save(raster_path, format="PNG")
    except OSError as exc:
        raise IoError(str(exc)) from exc
    if obj.geo is not None:
        write_world_file(world_path or world_path_for(raster_path), obj.geo.transform)


def load_layer(desc: LayerDescriptor) -> Union[Raster, ClassMask]:
    if not desc.raster_path.exists():
        raise FileNotFoundError(str(desc.raster_path))
    try:
        img = Image.open(desc.raster_path)
        img.load()
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise DecodeError(f"{desc.raster_path}: {exc}") from exc

    geo = None
    world_path = desc.world_path or world_path_for(desc.raster_path)
    if desc.world_path is not None or world_path.exists():
        geo = GeoRef(read_world_file(world_path), desc.crs)

    if desc.role in MASK_ROLES:
        if img.mode not in ("L", "P"):
            img = img.convert("L")
        arr = np.asarray(img, dtype=np.uint8)
        if arr.ndim != 2:
            raise DecodeError(f"{desc.raster_path}: mask must be single-band")
        bad = sorted(set(np.unique(arr).tolist()) - set(desc.class_table))
        if bad:
            raise DecodeError(
                f"{desc.raster_path}: label value {bad[0]} outside class table "
                f"{sorted(desc.class_table)}")
        return ClassMask.from_array(arr, geo=geo, class_table=desc.class_table)

    if img.mode == "P":
        img = img.convert("RGB")
    if img.mode not in _MODE_FOR_BANDS.values():
        img = img.convert("RGB")
    arr = np.asarray(img, dtype=np.uint8)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return Raster.from_array(arr, geo=geo)


def load_raster(path: Union[str, Path], crs: CrsTag = CrsTag("local")) -> Raster:
    """Shorthand for loading imagery without building a descriptor by hand."""
    out = load_layer(LayerDescriptor("adhoc", LayerRole.PRESENT_IMAGERY, Path(path), crs=crs))
    assert isinstance(out, Raster)
    return out


def load_mask(path: Union[str, Path], crs: CrsTag = CrsTag("local"),
              class_table: Tuple[int, ...] = DEFAULT_CLASS_TABLE) -> ClassMask:
    out = load_layer(LayerDescriptor("adhoc", LayerRole.HISTORICAL_MASK, Path(path),
                                     crs=crs, class_table=class_table))
    assert isinstance(out, ClassMask)
    return out


def atomic_write_bytes(path: Union[str, Path], data: bytes) -> None:
    """Write via a temp file in the same directory, then rename into place.

    os.replace is atomic on POSIX, so readers either see the old complete file
    or the new complete file, never a torn write.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp.{os.getpid()}")
    try:
        with open(tmp, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except OSError as exc:
        try:
            tmp.unlink(missing_ok=True)
        finally:
            pass
        raise IoError(str(exc)) from exc


def atomic_write_text(path: Union[str, Path], text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))
