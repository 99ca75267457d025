"""File-backed project store.

One directory per project, no database:

    <root>/<project_id>/
        project.json          metadata, layer registry, params
        layers/<id>.png(.pgw) imagery (historical map, aerial, diff)
        masks/<id>.png(.pgw)  class masks
        vectors/<epoch>.geojson
        candidates.json / archive.json
        reports/              evaluation reports
        split.json

Every JSON write goes through a temp-file rename so a killed process can
never leave a torn file behind; readers see old-or-new, nothing else.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

from .errors import DuplicateId, InvalidArgument, MissingLayer
from .geo import ClassMask, CrsTag, Raster
from .overlay import CandidateSite, OverlayParams, site_from_dict, site_to_dict
from .raster_io import (
    LayerDescriptor,
    LayerRole,
    MASK_ROLES,
    atomic_write_bytes,
    atomic_write_text,
    load_layer,
    save_layer,
    world_path_for,
)
from .splitting import SplitManifest
from .vectorizer import FootprintLayer, export_geojson, import_geojson


def _now_iso() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def slugify(name: str) -> str:
    slug = re.sub(r"[^a-z0-9]+", "-", name.lower()).strip("-")
    return slug or "project"


@dataclass
class Project:
    project_id: str
    name: str
    crs: CrsTag
    root: Path  # directory of this project
    params: OverlayParams = field(default_factory=OverlayParams)
    layers: List[LayerDescriptor] = field(default_factory=list)
    eval_reports: List[str] = field(default_factory=list)
    created_at: str = ""
    updated_at: str = ""

    # ---- paths ----
    @property
    def meta_path(self) -> Path:
        return self.root / "project.json"

    def layer_dir(self, role: LayerRole) -> Path:
        return self.root / ("masks" if role in MASK_ROLES else "layers")

    # ---- layer registry ----
    def find_layer(self, layer_id: str) -> Optional[LayerDescriptor]:
        for desc in self.layers:
            if desc.layer_id == layer_id:
                return desc
        return None

    def layer_for_role(self, role: LayerRole) -> Optional[LayerDescriptor]:
        for desc in self.layers:
            if desc.role == role:
                return desc
        return None

    def add_layer(self, role: Union[LayerRole, str], obj: Union[Raster, ClassMask],
                  layer_id: Optional[str] = None) -> LayerDescriptor:
        """Save a layer into the project tree and register it.

        Non-diff roles are singletons named after the role; re-adding one
        replaces the previous file. Diff layers get numbered ids.
        """
        role = LayerRole(role)
        if layer_id is None:
            if role == LayerRole.DIFF:
                n = sum(1 for d in self.layers if d.role == LayerRole.DIFF)
                layer_id = "diff" if n == 0 else f"diff-{n + 1}"
            else:
                layer_id = role.value
        existing = self.find_layer(layer_id)
        if existing is not None and existing.role != role:
            raise DuplicateId(f"layer id {layer_id!r} already used for {existing.role.value}")
        rel_dir = "masks" if role in MASK_ROLES else "layers"
        raster_path = self.root / rel_dir / f"{layer_id}.png"
        save_layer(obj, raster_path)
        table = obj.class_table if isinstance(obj, ClassMask) else (0, 1, 2)
        desc = LayerDescriptor(
            layer_id=layer_id,
            role=role,
            raster_path=raster_path,
            world_path=world_path_for(raster_path) if obj.geo is not None else None,
            crs=obj.geo.crs if obj.geo is not None else self.crs,
            class_table=tuple(table),
        )
        self.layers = [d for d in self.layers if d.layer_id != layer_id] + [desc]
        self.save_meta()
        return desc

    def load(self, layer_id: str) -> Union[Raster, ClassMask]:
        desc = self.find_layer(layer_id)
        if desc is None:
            raise MissingLayer(f"no layer {layer_id!r}")
        return load_layer(desc)

    # ---- persistence ----
    def to_meta(self) -> dict:
        return {
            "project_id": self.project_id,
            "name": self.name,
            "crs": {"code": self.crs.code, "units": self.crs.units},
            "params": self.params.to_dict(),
            "layers": [
                {
                    "layer_id": d.layer_id,
                    "role": d.role.value,
                    "raster_path": str(d.raster_path.relative_to(self.root)),
                    "world_path": (str(d.world_path.relative_to(self.root))
                                   if d.world_path else None),
                    "crs": {"code": d.crs.code, "units": d.crs.units},
                    "class_table": list(d.class_table),
                }
                for d in self.layers
            ],
            "eval_reports": list(self.eval_reports),
            "created_at": self.created_at,
            "updated_at": self.updated_at,
        }

    def save_meta(self) -> None:
        self.updated_at = _now_iso()
        atomic_write_text(self.meta_path,
                          json.dumps(self.to_meta(), sort_keys=True, indent=2) + "\n")

    def save_candidates(self, sites: List[CandidateSite]) -> None:
        doc = {"sites": [site_to_dict(s) for s in sites]}
        atomic_write_text(self.root / "candidates.json",
                          json.dumps(doc, sort_keys=True, indent=2) + "\n")

    def load_candidates(self) -> List[CandidateSite]:
        path = self.root / "candidates.json"
        if not path.exists():
            return []
        doc = json.loads(path.read_text())
        return [site_from_dict(d) for d in doc.get("sites", [])]

    def save_archive(self, sites: List[CandidateSite]) -> None:
        doc = {"sites": [site_to_dict(s) for s in sites]}
        atomic_write_text(self.root / "archive.json",
                          json.dumps(doc, sort_keys=True, indent=2) + "\n")

    def load_archive(self) -> List[CandidateSite]:
        path = self.root / "archive.json"
        if not path.exists():
            return []
        doc = json.loads(path.read_text())
        return [site_from_dict(d) for d in doc.get("sites", [])]

    def save_vectors(self, layer: FootprintLayer) -> None:
        path = self.root / "vectors" / f"{layer.epoch}.geojson"
        atomic_write_text(path, json.dumps(export_geojson(layer),
                                           sort_keys=True, indent=2) + "\n")

    def load_vectors(self, epoch: str) -> Optional[FootprintLayer]:
        path = self.root / "vectors" / f"{epoch}.geojson"
        if not path.exists():
            return None
        layer = import_geojson(json.loads(path.read_text()))
        return replace(layer, epoch=epoch)

    def save_split(self, manifest: SplitManifest) -> None:
        atomic_write_text(self.root / "split.json", manifest.to_json())

    def load_split(self) -> Optional[SplitManifest]:
        path = self.root / "split.json"
        if not path.exists():
            return None
        return SplitManifest.from_json(path.read_text())

    def save_report(self, name: str, payload: dict) -> Path:
        path = self.root / "reports" / f"{name}.json"
        atomic_write_text(path, json.dumps(payload, sort_keys=True, indent=2) + "\n")
        if f"reports/{name}.json" not in self.eval_reports:
            self.eval_reports.append(f"reports/{name}.json")
            self.save_meta()
        return path

    def set_params(self, params: OverlayParams) -> None:
        self.params = params
        self.save_meta()


def create_project(root: Union[str, Path], name: str,
                   crs: CrsTag = CrsTag("local-metric"),
                   params: Optional[OverlayParams] = None) -> Project:
    """Allocate a project directory under root; slug ids, -2/-3 on collision."""
    root = Path(root)
    base = slugify(name)
    project_id = base
    k = 1
    while (root / project_id).exists():
        k += 1
        project_id = f"{base}-{k}"
    pdir = root / project_id
    pdir.mkdir(parents=True)
    project = Project(
        project_id=project_id,
        name=name,
        crs=crs,
        root=pdir,
        params=params or OverlayParams(),
        created_at=_now_iso(),
    )
    project.save_meta()
    return project


def load_project(root: Union[str, Path], project_id: str) -> Project:
    pdir = Path(root) / project_id
    meta_path = pdir / "project.json"
    if not meta_path.exists():
        raise FileNotFoundError(f"no project {project_id!r} under {root}")
    doc = json.loads(meta_path.read_text())
    crs = CrsTag(doc["crs"]["code"], doc["crs"].get("units", "m"))
    layers = []
    for item in doc.get("layers", []):
        layers.append(LayerDescriptor(
            layer_id=item["layer_id"],
            role=LayerRole(item["role"]),
            raster_path=pdir / item["raster_path"],
            world_path=(pdir / item["world_path"]) if item.get("world_path") else None,
            crs=CrsTag(item["crs"]["code"], item["crs"].get("units", "m")),
            class_table=tuple(item.get("class_table", (0, 1, 2))),
        ))
    return Project(
        project_id=doc["project_id"],
        name=doc.get("name", doc["project_id"]),
        crs=crs,
        root=pdir,
        params=OverlayParams.from_dict(doc["params"]),
        layers=layers,
        eval_reports=list(doc.get("eval_reports", [])),
        created_at=doc.get("created_at", ""),
        updated_at=doc.get("updated_at", ""),
    )


def list_projects(root: Union[str, Path]) -> List[str]:
    root = Path(root)
    if not root.exists():
        return []
    return sorted(p.name for p in root.iterdir() if (p / "project.json").exists())
