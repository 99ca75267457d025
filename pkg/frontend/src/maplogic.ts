/** Pure map planning: which tiles to request, which polygons to draw,
 * what a click hits. The canvas adapter executes these plans; tests drive
 * them directly. */

import type {
  LayerMeta,
  ProjectMeta,
  SiteFeature,
  SiteStatus,
  TileRoot,
} from "./types.js";
import type { TilePlacement, Viewport } from "./tilemath.js";
import { visibleTiles, worldToScreen } from "./tilemath.js";
import type { ViewState } from "./viewstate.js";

/** Bottom to top. Masks sit over imagery, the diff rides on top. */
const DRAW_ORDER = [
  "historical_map",
  "present_imagery",
  "historical_mask",
  "present_mask",
  "diff",
];

export interface TileRequest {
  layerId: string;
  opacity: number;
  placement: TilePlacement;
}

function drawRank(layer: LayerMeta): number {
  const i = DRAW_ORDER.indexOf(layer.role);
  return i < 0 ? DRAW_ORDER.length : i;
}

/** Single world-to-pixel anchor for the whole project: the tile root of
 * the bottom-most drawable layer. Every pane and polygon projects with
 * this one so layers with different padded squares still line up. */
export function projectViewRoot(project: ProjectMeta): TileRoot | null {
  const layers = [...project.layers].sort((a, b) => drawRank(a) - drawRank(b));
  for (const layer of layers) {
    if (layer.tile_root !== undefined) return layer.tile_root;
  }
  return null;
}

/** Tiles needed for one repaint, bottom layer first. Layers without a
 * tile root (no georeference) or with zero opacity request nothing. */
export function planTiles(
  project: ProjectMeta,
  state: ViewState,
  vp: Viewport,
): TileRequest[] {
  const viewRoot = projectViewRoot(project);
  if (viewRoot === null) return [];
  const layers = [...project.layers].sort((a, b) => drawRank(a) - drawRank(b));
  const out: TileRequest[] = [];
  for (const layer of layers) {
    const opacity = state.visibleLayers.get(layer.layer_id);
    if (opacity === undefined || opacity <= 0) continue;
    if (layer.tile_root === undefined) continue;
    const maxZoom = layer.max_zoom ?? 0;
    for (const placement of visibleTiles(layer.tile_root, vp, maxZoom, viewRoot)) {
      out.push({ layerId: layer.layer_id, opacity, placement });
    }
  }
  return out;
}

export interface PolygonPlan {
  siteId: string;
  status: SiteStatus;
  active: boolean;
  /** Outer ring in canvas coordinates. */
  screenRing: { px: number; py: number }[];
  /** Screen-space bbox [x0, y0, x1, y1] (y down). */
  screenBbox: [number, number, number, number];
}

function featureBbox(f: SiteFeature): [number, number, number, number] {
  let x0 = Infinity;
  let y0 = Infinity;
  let x1 = -Infinity;
  let y1 = -Infinity;
  for (const ring of f.geometry.coordinates) {
    for (const pt of ring) {
      const [x, y] = pt as unknown as [number, number];
      x0 = Math.min(x0, x);
      y0 = Math.min(y0, y);
      x1 = Math.max(x1, x);
      y1 = Math.max(y1, y);
    }
  }
  return [x0, y0, x1, y1];
}

/** Candidate polygons to draw, honoring the status filter. */
export function planSites(
  features: SiteFeature[],
  state: ViewState,
  vp: Viewport,
  root: { x0: number; y_top: number; side: number },
): PolygonPlan[] {
  const out: PolygonPlan[] = [];
  for (const f of features) {
    if (!state.filter.has(f.properties.status)) continue;
    const outer = f.geometry.coordinates[0] ?? [];
    const screenRing = outer.map((pt) => {
      const [x, y] = pt as unknown as [number, number];
      return worldToScreen(vp, root, x, y);
    });
    const [wx0, wy0, wx1, wy1] = featureBbox(f);
    const tl = worldToScreen(vp, root, wx0, wy1);
    const br = worldToScreen(vp, root, wx1, wy0);
    out.push({
      siteId: f.properties.site_id,
      status: f.properties.status,
      active: f.properties.site_id === state.activeSite,
      screenRing,
      screenBbox: [tl.px, tl.py, br.px, br.py],
    });
  }
  return out;
}

function pointInRing(
  x: number,
  y: number,
  ring: readonly (readonly number[])[],
): boolean {
  let inside = false;
  for (let i = 0, j = ring.length - 1; i < ring.length; j = i++) {
    const xi = ring[i]![0]!;
    const yi = ring[i]![1]!;
    const xj = ring[j]![0]!;
    const yj = ring[j]![1]!;
    if (
      yi > y !== yj > y &&
      x < ((xj - xi) * (y - yi)) / (yj - yi) + xi
    ) {
      inside = !inside;
    }
  }
  return inside;
}

/** Which visible site a world-space point lands in (even-odd over all
 * rings, so clicks inside holes miss). Later features win ties. */
export function hitTest(
  features: SiteFeature[],
  filter: Set<SiteStatus>,
  wx: number,
  wy: number,
): string | null {
  let hit: string | null = null;
  for (const f of features) {
    if (!filter.has(f.properties.status)) continue;
    let crossings = 0;
    for (const ring of f.geometry.coordinates) {
      if (pointInRing(wx, wy, ring)) crossings += 1;
    }
    if (crossings % 2 === 1) hit = f.properties.site_id;
  }
  return hit;
}

/** Side-by-side mode: split the container into two panes that share the
 * identical world viewport, so panning one pans both over the same extent. */
export function sideBySideViewports(
  containerW: number,
  containerH: number,
  state: ViewState,
): [Viewport, Viewport] {
  const pane: Viewport = {
    center: { ...state.center },
    zoom: state.zoom,
    widthPx: Math.floor(containerW / 2),
    heightPx: containerH,
  };
  return [pane, { ...pane, center: { ...pane.center } }];
}
