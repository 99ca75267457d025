"""HTTP front of the pipeline.

FastAPI app over the file-backed project store. All project mutations
serialize behind a per-project lock; reads go straight to disk, which is safe
because every file lands via an atomic rename. Jobs run in daemon threads and
live only in memory; a restart forgets them, and that is fine because every
pipeline step is idempotent.
"""

from __future__ import annotations

import io
import math
import tempfile
import threading
import zipfile
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
from fastapi import FastAPI, File, Form, Request, UploadFile
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, Response
from PIL import Image
from starlette.exceptions import HTTPException as StarletteHTTPException

from . import errors as err
from .errors import CadeltaError
from .evaluator import evaluate
from .geo import ClassMask, CrsTag, GeoRef, Raster
from .overlay import (
    OverlayParams,
    STATUS_VALUES,
    candidates_to_geojson,
    diff_raster,
    recompute,
    site_to_dict,
)
from .project import Project, create_project, list_projects, load_project
from .raster_io import LayerRole, MASK_ROLES, read_world_file
from .segmenter import DEFAULT_RULES, segment_chromatic
from .tiles import (
    TileAddress,
    bbox_for,
    encode_tile_png,
    render_tile,
    square_for,
    tile_is_empty,
)
from .vectorizer import trace_footprints

RUN_STEPS = ("segment", "vectorize", "overlay")

_HTTP_STATUS = {
    err.InvalidArgument: 422,
    err.WorldFileMalformed: 422,
    err.CrsMismatch: 422,
    err.NonMetricCrs: 422,
    err.DecodeError: 422,
    err.LabelOutOfTable: 422,
    err.GeoMismatch: 422,
    err.DimensionMismatch: 422,
    err.BandCountError: 422,
    err.BadRatios: 422,
    err.MissingGeoreference: 422,
    err.EmptyBatch: 422,
    err.MissingLayer: 404,
    err.AddressOutOfRange: 404,
    err.DuplicateId: 409,
}


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str, detail=None):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message
        self.detail = detail


def _error_body(code: str, message: str, detail=None) -> dict:
    return {"code": code, "message": message, "detail": detail}


def _now_iso() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _parse_crs(value) -> CrsTag:
    if value is None:
        return CrsTag("local-metric")
    if isinstance(value, str):
        return CrsTag(value)
    if isinstance(value, dict) and "code" in value:
        return CrsTag(value["code"], value.get("units", "m"))
    raise err.InvalidArgument(f"bad crs {value!r}")


class _LayerCache:
    """Tiny mtime-keyed cache so tile bursts do not re-decode the PNG."""

    def __init__(self, limit: int = 8):
        self.limit = limit
        self._items: Dict[tuple, object] = {}

    def get(self, project: Project, layer_id: str):
        desc = project.find_layer(layer_id)
        if desc is None:
            raise err.MissingLayer(f"no layer {layer_id!r}")
        key = (str(desc.raster_path), desc.raster_path.stat().st_mtime_ns)
        if key not in self._items:
            if len(self._items) >= self.limit:
                self._items.pop(next(iter(self._items)))
            self._items[key] = project.load(layer_id)
        return self._items[key]


def _decode_mask_upload(data: bytes, geo: Optional[GeoRef]) -> ClassMask:
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except Exception as exc:
        raise err.DecodeError(f"unreadable image: {exc}") from exc
    if img.mode not in ("L", "P", "1"):
        raise err.InvalidArgument(
            f"mask must be single-channel, got mode {img.mode!r}")
    if img.mode == "1":
        img = img.convert("L")
    # for palette images the indices themselves are the labels
    labels = np.asarray(img, dtype=np.uint8)
    return ClassMask.from_array(labels, geo=geo)


def _decode_image_upload(data: bytes, geo: Optional[GeoRef]) -> Raster:
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except Exception as exc:
        raise err.DecodeError(f"unreadable image: {exc}") from exc
    if img.mode == "P":
        img = img.convert("RGBA" if "transparency" in img.info else "RGB")
    if img.mode not in ("L", "RGB", "RGBA"):
        img = img.convert("RGB")
    return Raster.from_array(np.asarray(img, dtype=np.uint8), geo=geo)


def _project_meta(project: Project) -> dict:
    layers = []
    for desc in project.layers:
        item = {
            "layer_id": desc.layer_id,
            "role": desc.role.value,
            "crs": desc.crs.code,
        }
        try:
            with Image.open(desc.raster_path) as img:
                w, h = img.size
            item["width"], item["height"] = w, h
            if desc.world_path is not None and desc.world_path.exists():
                gt = read_world_file(desc.world_path)
                bbox = bbox_for(gt, w, h)
                x0, y_top, side = square_for(bbox)
                item["bbox"] = list(bbox)
                item["tile_root"] = {"x0": x0, "y_top": y_top, "side": side}
                native = min(math.hypot(gt.a, gt.d), math.hypot(gt.b, gt.e))
                if native > 0:
                    item["max_zoom"] = max(
                        0, math.ceil(math.log2(side / (256 * native))))
        except FileNotFoundError:
            pass
        layers.append(item)
    return {
        "project_id": project.project_id,
        "name": project.name,
        "crs": {"code": project.crs.code, "units": project.crs.units},
        "params": project.params.to_dict(),
        "layers": layers,
        "eval_reports": list(project.eval_reports),
        "created_at": project.created_at,
        "updated_at": project.updated_at,
    }


def _run_steps(project: Project, steps: List[str], job: dict) -> None:
    if "segment" in steps:
        job["step"] = "segment"
        desc = project.layer_for_role(LayerRole.HISTORICAL_MAP)
        if desc is not None:
            img = project.load(desc.layer_id)
            mask = segment_chromatic(img, DEFAULT_RULES)
            project.add_layer(LayerRole.HISTORICAL_MASK, mask)

    if "vectorize" in steps:
        job["step"] = "vectorize"
        for role, epoch in ((LayerRole.HISTORICAL_MASK, "historical"),
                            (LayerRole.PRESENT_MASK, "present")):
            desc = project.layer_for_role(role)
            if desc is None:
                continue
            mask = project.load(desc.layer_id)
            project.save_vectors(trace_footprints(mask, epoch=epoch))

    if "overlay" in steps:
        job["step"] = "overlay"
        hist = project.load_vectors("historical")
        present = project.load_vectors("present")
        sites, archive = recompute(hist, present, project.params,
                                   project.load_candidates(),
                                   project.load_archive())
        project.save_candidates(sites)
        project.save_archive(archive)
        h_desc = project.layer_for_role(LayerRole.HISTORICAL_MASK)
        p_desc = project.layer_for_role(LayerRole.PRESENT_MASK)
        if h_desc is not None and p_desc is not None:
            h_mask = project.load(h_desc.layer_id)
            p_mask = project.load(p_desc.layer_id)
            if (h_mask.width, h_mask.height) == (p_mask.width, p_mask.height):
                project.add_layer(LayerRole.DIFF, diff_raster(h_mask, p_mask),
                                  layer_id="diff")


def create_app(root: Path) -> FastAPI:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    app = FastAPI(title="cadelta", docs_url=None, redoc_url=None)
    locks: Dict[str, threading.Lock] = {}
    locks_guard = threading.Lock()
    jobs: Dict[str, dict] = {}
    job_seq = {"n": 0}
    cache = _LayerCache()

    def lock_for(project_id: str) -> threading.Lock:
        with locks_guard:
            return locks.setdefault(project_id, threading.Lock())

    def get_project(project_id: str) -> Project:
        try:
            return load_project(root, project_id)
        except FileNotFoundError:
            raise ApiError(404, "unknown_project", f"no project {project_id!r}")

    @app.exception_handler(CadeltaError)
    async def _cadelta_error(request: Request, exc: CadeltaError):
        status = _HTTP_STATUS.get(type(exc), 500)
        return JSONResponse(status_code=status,
                            content=_error_body(exc.code, str(exc)))

    @app.exception_handler(ApiError)
    async def _api_error(request: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status,
                            content=_error_body(exc.code, exc.message, exc.detail))

    @app.exception_handler(RequestValidationError)
    async def _validation_error(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=422,
                            content=_error_body("validation_error",
                                                "request did not validate",
                                                exc.errors()))

    @app.exception_handler(StarletteHTTPException)
    async def _http_error(request: Request, exc: StarletteHTTPException):
        return JSONResponse(status_code=exc.status_code,
                            content=_error_body("http_error", str(exc.detail)))

    @app.get("/projects")
    def projects_index():
        return {"projects": [
            _project_meta(load_project(root, pid)) for pid in list_projects(root)]}

    @app.post("/projects", status_code=201)
    def projects_create(body: dict):
        name = body.get("name")
        if not name or not isinstance(name, str):
            raise err.InvalidArgument("project name is required")
        params = OverlayParams.from_dict(body["params"]) if "params" in body \
            else OverlayParams()
        project = create_project(root, name, crs=_parse_crs(body.get("crs")),
                                 params=params)
        return _project_meta(project)

    @app.get("/projects/{project_id}")
    def projects_get(project_id: str):
        return _project_meta(get_project(project_id))

    @app.post("/projects/{project_id}/layers", status_code=201)
    def layers_create(project_id: str,
                      role: str = Form(...),
                      image: UploadFile = File(...),
                      world: Optional[UploadFile] = File(None),
                      crs: Optional[str] = Form(None)):
        with lock_for(project_id):
            project = get_project(project_id)
            try:
                layer_role = LayerRole(role)
            except ValueError:
                raise err.InvalidArgument(f"unknown layer role {role!r}")
            if crs is not None and crs != project.crs.code:
                raise err.CrsMismatch(
                    f"layer crs {crs!r} != project crs {project.crs.code!r}")
            geo = None
            if world is not None:
                text = world.file.read().decode("utf-8", errors="replace")
                with tempfile.NamedTemporaryFile("w", suffix=".pgw",
                                                 delete=False) as fh:
                    fh.write(text)
                    world_tmp = fh.name
                try:
                    gt = read_world_file(world_tmp)
                finally:
                    Path(world_tmp).unlink(missing_ok=True)
                geo = GeoRef(gt, project.crs)
            data = image.file.read()
            if layer_role in MASK_ROLES:
                obj = _decode_mask_upload(data, geo)
            else:
                obj = _decode_image_upload(data, geo)
            desc = project.add_layer(layer_role, obj)
            return {"layer_id": desc.layer_id, "role": desc.role.value}

    @app.post("/projects/{project_id}/run", status_code=202)
    def run_create(project_id: str, body: Optional[dict] = None):
        get_project(project_id)  # 404 before queueing
        steps = (body or {}).get("steps", list(RUN_STEPS))
        if not isinstance(steps, list) or not steps:
            raise err.InvalidArgument("steps must be a non-empty list")
        bad = [s for s in steps if s not in RUN_STEPS]
        if bad:
            raise err.InvalidArgument(f"unknown steps {bad}")
        ordered = [s for s in RUN_STEPS if s in steps]
        job_seq["n"] += 1
        job_id = f"job-{job_seq['n']}"
        job = {"job_id": job_id, "project_id": project_id, "state": "queued",
               "step": None, "error": None}
        jobs[job_id] = job

        def worker():
            with lock_for(project_id):
                job["state"] = "running"
                try:
                    _run_steps(load_project(root, project_id), ordered, job)
                except CadeltaError as exc:
                    job["state"] = "failed"
                    job["error"] = {"code": exc.code, "message": str(exc)}
                except Exception as exc:  # pragma: no cover - defensive
                    job["state"] = "failed"
                    job["error"] = {"code": "internal", "message": str(exc)}
                else:
                    job["state"] = "done"
                    job["step"] = None

        threading.Thread(target=worker, daemon=True).start()
        return {"job_id": job_id, "state": job["state"]}

    @app.get("/jobs/{job_id}")
    def jobs_get(job_id: str):
        job = jobs.get(job_id)
        if job is None:
            raise ApiError(404, "unknown_job", f"no job {job_id!r}")
        return job

    @app.put("/projects/{project_id}/params")
    def params_put(project_id: str, body: dict):
        with lock_for(project_id):
            project = get_project(project_id)
            try:
                params = OverlayParams.from_dict(body)
            except (KeyError, TypeError, ValueError) as exc:
                raise err.InvalidArgument(f"bad params: {exc}") from exc
            project.set_params(params)
            hist = project.load_vectors("historical")
            present = project.load_vectors("present")
            recomputed = hist is not None or present is not None
            n = 0
            if recomputed:
                sites, archive = recompute(hist, present, params,
                                           project.load_candidates(),
                                           project.load_archive())
                project.save_candidates(sites)
                project.save_archive(archive)
                n = len(sites)
            return {"params": params.to_dict(), "recomputed": recomputed,
                    "n_candidates": n}

    @app.get("/projects/{project_id}/candidates")
    def candidates_get(project_id: str, status: Optional[str] = None):
        project = get_project(project_id)
        if status is not None and status not in STATUS_VALUES:
            raise err.InvalidArgument(
                f"status must be one of {list(STATUS_VALUES)}")
        sites = project.load_candidates()
        if status is not None:
            sites = [s for s in sites if s.status == status]
        return candidates_to_geojson(sites)

    @app.patch("/projects/{project_id}/candidates/{site_id}")
    def candidates_patch(project_id: str, site_id: str, body: dict):
        with lock_for(project_id):
            project = get_project(project_id)
            sites = project.load_candidates()
            hit = next((s for s in sites if s.site_id == site_id), None)
            if hit is None:
                raise ApiError(404, "unknown_site", f"no candidate {site_id!r}")
            status = body.get("status", hit.status)
            if status not in STATUS_VALUES:
                raise ApiError(409, "bad_status",
                               f"cannot move {hit.status!r} to {status!r}",
                               {"allowed": list(STATUS_VALUES)})
            notes = body.get("notes", hit.notes)
            if not isinstance(notes, str):
                raise err.InvalidArgument("notes must be a string")
            updated = replace(hit, status=status, notes=notes,
                              updated_at=_now_iso())
            project.save_candidates([updated if s.site_id == site_id else s
                                     for s in sites])
            return site_to_dict(updated)

    @app.get("/projects/{project_id}/tiles/{layer_id}/{z}/{x}/{y}.png")
    def tiles_get(project_id: str, layer_id: str, z: int, x: int, y: int):
        project = get_project(project_id)
        desc = project.find_layer(layer_id)
        if desc is None:
            raise err.MissingLayer(f"no layer {layer_id!r}")
        layer = cache.get(project, layer_id)
        resample = "nearest" if desc.role in MASK_ROLES + (LayerRole.DIFF,) \
            else "bilinear"
        tile = render_tile(layer, TileAddress(z, x, y), resample)
        if tile_is_empty(tile):
            return Response(status_code=204)
        return Response(content=encode_tile_png(tile), media_type="image/png")

    @app.get("/projects/{project_id}/eval")
    def eval_get(project_id: str, gt: str, pred: str):
        project = get_project(project_id)
        gt_mask = project.load(gt)
        pred_mask = project.load(pred)
        if not isinstance(gt_mask, ClassMask) or not isinstance(pred_mask, ClassMask):
            raise err.InvalidArgument("eval layers must be class masks")
        report = evaluate(gt_mask, pred_mask)
        payload = report.to_dict()
        payload["gt"] = gt
        payload["pred"] = pred
        with lock_for(project_id):
            project.save_report(f"eval-{gt}-vs-{pred}", payload)
        return payload

    @app.get("/projects/{project_id}/export")
    def export_get(project_id: str):
        project = get_project(project_id)
        buf = io.BytesIO()
        names = ["project.json", "candidates.json", "archive.json", "split.json"]
        names += sorted(str(p.relative_to(project.root))
                        for pat in ("vectors/*.geojson", "reports/*.json")
                        for p in project.root.glob(pat))
        with zipfile.ZipFile(buf, "w", zipfile.ZIP_DEFLATED) as zf:
            for name in names:
                path = project.root / name
                if not path.exists():
                    continue
                info = zipfile.ZipInfo(name, date_time=(1980, 1, 1, 0, 0, 0))
                info.compress_type = zipfile.ZIP_DEFLATED
                zf.writestr(info, path.read_bytes())
        headers = {"Content-Disposition":
                   f'attachment; filename="{project.project_id}.zip"'}
        return Response(content=buf.getvalue(), media_type="application/zip",
                        headers=headers)

    return app
