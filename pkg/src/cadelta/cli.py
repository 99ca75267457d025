"""Command line entry points.

Every subcommand works against a project root directory (``--root`` or the
``CADELTA_ROOT`` environment variable). Exit codes: 0 on success, 2 when the
input was rejected, 1 when something broke internally. Errors go to stderr as
one JSON object so scripts can parse them.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click

from .errors import CadeltaError, InvalidArgument
from .evaluator import evaluate, format_report_table
from .geo import ClassMask, CrsTag
from .overlay import OverlayParams, recompute
from .patching import (
    PatchSpec,
    build_zoom_pyramid,
    crop_window,
    grid_windows,
    normalize_patch,
    split_six,
)
from .project import create_project, load_project
from .raster_io import LayerRole, load_mask, load_raster, save_layer
from .segmenter import DEFAULT_RULES, MorphologyParams, rules_from_json, segment_chromatic
from .splitting import make_split
from .synth import synth_scene, write_scene
from .vectorizer import simplify_layer, trace_footprints


def _fail(code: str, message: str, exit_code: int) -> None:
    sys.stderr.write(json.dumps({"code": code, "message": message}) + "\n")
    sys.exit(exit_code)


def guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except CadeltaError as exc:
            _fail(exc.code, str(exc), 2)
        except (click.ClickException, SystemExit):
            raise
        except FileNotFoundError as exc:
            _fail("not_found", str(exc), 2)
        except Exception as exc:  # pragma: no cover - defensive
            _fail("internal", f"{type(exc).__name__}: {exc}", 1)
    return wrapper


@click.group()
@click.option("--root", envvar="CADELTA_ROOT", default="cadelta-projects",
              show_default=True, help="Project root directory.")
@click.pass_context
def main(ctx, root):
    """Cadastre change detection toolkit."""
    ctx.obj = Path(root)


@main.command()
@click.argument("name")
@click.option("--map", "map_path", type=click.Path(exists=True),
              help="Historical map scan (PNG + world file).")
@click.option("--present-imagery", type=click.Path(exists=True))
@click.option("--historical-mask", type=click.Path(exists=True))
@click.option("--present-mask", type=click.Path(exists=True))
@click.option("--crs", default="local-metric", show_default=True)
@click.pass_obj
@guarded
def ingest(root, name, map_path, present_imagery, historical_mask, present_mask, crs):
    """Create a project and pull input layers into it."""
    tag = CrsTag(crs)
    project = create_project(root, name, crs=tag)
    added = []
    for role, path, loader in (
            (LayerRole.HISTORICAL_MAP, map_path, load_raster),
            (LayerRole.PRESENT_IMAGERY, present_imagery, load_raster),
            (LayerRole.HISTORICAL_MASK, historical_mask, load_mask),
            (LayerRole.PRESENT_MASK, present_mask, load_mask)):
        if path is None:
            continue
        desc = project.add_layer(role, loader(path, crs=tag))
        added.append(desc.layer_id)
    click.echo(json.dumps({"project_id": project.project_id, "layers": added}))


@main.command()
@click.option("--project", "project_id", required=True)
@click.option("--layer", "layer_id", default="historical_map", show_default=True)
@click.option("--width", default=3747, show_default=True)
@click.option("--height", default=2235, show_default=True)
@click.pass_obj
@guarded
def patch(root, project_id, layer_id, width, height):
    """Normalize a layer, render its zoom levels, cut the 3x2 grid."""
    project = load_project(root, project_id)
    spec = PatchSpec(target_w=width, target_h=height)
    normalized = normalize_patch(project.load(layer_id), spec)
    out_dir = project.root / "patches" / layer_id
    summary = {"layer": layer_id, "zooms": {}}
    for zoom, level in build_zoom_pyramid(normalized, spec).items():
        windows = []
        for col, row, window in grid_windows(level.width, level.height,
                                             spec.grid_cols, spec.grid_rows):
            sub = crop_window(level, window)
            save_layer(sub, out_dir / zoom / f"{layer_id}_c{col}r{row}.png")
            windows.append({"col": col, "row": row, "window": list(window)})
        summary["zooms"][zoom] = {"width": level.width, "height": level.height,
                                  "tiles": windows}
    click.echo(json.dumps(summary, sort_keys=True))


@main.command()
@click.option("--project", "project_id", required=True)
@click.option("--layer", "layer_id", default="historical_mask", show_default=True)
@click.option("--ratios", default="0.6,0.2,0.2", show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--parent-id", default="patch", show_default=True)
@click.pass_obj
@guarded
def split(root, project_id, layer_id, ratios, seed, parent_id):
    """Assign the six grid tiles of an annotated patch to train/test/val."""
    project = load_project(root, project_id)
    mask = project.load(layer_id)
    if not isinstance(mask, ClassMask):
        raise InvalidArgument(f"layer {layer_id!r} is not a mask")
    parts = tuple(float(x) for x in ratios.split(","))
    subs = split_six(mask, mask, parent_id=parent_id)
    manifest = make_split(subs, parts, seed=seed)
    project.save_split(manifest)
    sys.stdout.write(manifest.to_json())


@main.command()
@click.option("--project", "project_id", required=True)
@click.option("--layer", "layer_id", default="historical_map", show_default=True)
@click.option("--rules", "rules_path", type=click.Path(exists=True),
              help="JSON color rules; defaults to the built-in red/yellow set.")
@click.option("--open-radius", default=1.0, show_default=True)
@click.option("--close-radius", default=2.0, show_default=True)
@click.option("--min-area", default=25, show_default=True)
@click.pass_obj
@guarded
def segment(root, project_id, layer_id, rules_path, open_radius, close_radius, min_area):
    """Threshold the historical map into a class mask."""
    project = load_project(root, project_id)
    rules = rules_from_json(rules_path) if rules_path else DEFAULT_RULES
    morph = MorphologyParams(open_radius=open_radius, close_radius=close_radius,
                             min_area=min_area)
    mask = segment_chromatic(project.load(layer_id), rules, morph)
    desc = project.add_layer(LayerRole.HISTORICAL_MASK, mask)
    counts = {int(c): int((mask.labels == c).sum()) for c in mask.class_table}
    click.echo(json.dumps({"layer_id": desc.layer_id, "pixels": counts}))


@main.command()
@click.option("--project", "project_id", required=True)
@click.option("--simplify-px", type=float, default=None,
              help="Douglas-Peucker tolerance in pixels; omit to keep exact outlines.")
@click.pass_obj
@guarded
def vectorize(root, project_id, simplify_px):
    """Trace building outlines from the stored masks."""
    project = load_project(root, project_id)
    out = {}
    for role, epoch in ((LayerRole.HISTORICAL_MASK, "historical"),
                        (LayerRole.PRESENT_MASK, "present")):
        desc = project.layer_for_role(role)
        if desc is None:
            continue
        mask = project.load(desc.layer_id)
        layer = trace_footprints(mask, epoch=epoch)
        flagged = 0
        if simplify_px is not None:
            eps_m = simplify_px * mask.geo.transform.pixel_area ** 0.5
            layer, flagged = simplify_layer(layer, eps_m)
        project.save_vectors(layer)
        out[epoch] = {"footprints": len(layer.footprints), "flagged": flagged}
    click.echo(json.dumps(out, sort_keys=True))


@main.command()
@click.option("--project", "project_id", required=True)
@click.option("--buffer-m", type=float, default=None)
@click.option("--min-site-area-m2", type=float, default=None)
@click.option("--uncovered-ratio", type=float, default=None)
@click.option("--resolution-m", type=float, default=None)
@click.pass_obj
@guarded
def overlay(root, project_id, buffer_m, min_site_area_m2, uncovered_ratio, resolution_m):
    """Difference the two epochs into candidate sites."""
    project = load_project(root, project_id)
    p = project.params
    params = OverlayParams(
        buffer_m=buffer_m if buffer_m is not None else p.buffer_m,
        min_site_area_m2=(min_site_area_m2 if min_site_area_m2 is not None
                          else p.min_site_area_m2),
        uncovered_ratio_threshold=(uncovered_ratio if uncovered_ratio is not None
                                   else p.uncovered_ratio_threshold),
        working_resolution_m=(resolution_m if resolution_m is not None
                              else p.working_resolution_m))
    project.set_params(params)
    sites, archive = recompute(project.load_vectors("historical"),
                               project.load_vectors("present"),
                               params, project.load_candidates(),
                               project.load_archive())
    project.save_candidates(sites)
    project.save_archive(archive)
    click.echo(f"{len(sites)} candidate sites")


@main.command("eval")
@click.option("--gt", "gt_path", required=True, type=click.Path(exists=True))
@click.option("--pred", "pred_path", required=True, type=click.Path(exists=True))
@click.option("--classes", default=None, help="Comma-separated class table override.")
@guarded
def eval_cmd(gt_path, pred_path, classes):
    """Score a predicted mask against ground truth (file to file)."""
    table = tuple(int(c) for c in classes.split(",")) if classes else (0, 1, 2)
    gt = load_mask(gt_path, class_table=table)
    pred = load_mask(pred_path, class_table=table)
    report = evaluate(gt, pred)
    click.echo(format_report_table(report))


@main.command()
@click.option("--port", default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.pass_obj
@guarded
def serve(root, port, host):
    """Run the HTTP API."""
    import uvicorn

    from .service import create_app
    uvicorn.run(create_app(root), host=host, port=port)


@main.command()
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--seed", default=0, show_default=True)
@click.option("--width", default=400, show_default=True)
@click.option("--height", default=300, show_default=True)
@click.option("--buildings", default=10, show_default=True)
@click.option("--removed", default=3, show_default=True)
@guarded
def synth(out_dir, seed, width, height, buildings, removed):
    """Generate a synthetic cadastre scene with ground truth."""
    scene = synth_scene(seed=seed, width=width, height=height,
                        n_buildings=buildings, n_removed=removed)
    info = write_scene(scene, Path(out_dir))
    info["seed"] = seed
    click.echo(json.dumps(info, sort_keys=True))


if __name__ == "__main__":
    main()
