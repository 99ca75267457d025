/** Client-side mirror of the server's planar quadtree.
 *
 * Zoom 0 is one 256 px tile covering the layer's padded square
 * (tile_root from the project metadata); every level halves the tile's
 * world span. The y index grows downward from y_top. All math here is in
 * the layer CRS, no geodetic projection anywhere.
 */

import type { TileRoot } from "./types.js";

export const TILE_SIZE = 256;

export interface Viewport {
  center: { x: number; y: number };
  zoom: number;
  widthPx: number;
  heightPx: number;
}

export interface TilePlacement {
  z: number;
  x: number;
  y: number;
  /** Top-left corner on the canvas, px. */
  screenX: number;
  screenY: number;
  /** Rendered edge length on the canvas, px. */
  screenSize: number;
}

export function tileSpan(root: TileRoot, z: number): number {
  return root.side / Math.pow(2, z);
}

export function tileWorldBounds(
  root: TileRoot,
  z: number,
  x: number,
  y: number,
): [number, number, number, number] {
  const span = tileSpan(root, z);
  const x0 = root.x0 + x * span;
  const yTop = root.y_top - y * span;
  return [x0, yTop - span, x0 + span, yTop];
}

/** Pixels per world metre at a (possibly fractional) zoom. */
export function scaleFor(root: TileRoot, zoom: number): number {
  return (TILE_SIZE * Math.pow(2, zoom)) / root.side;
}

export function worldToScreen(
  vp: Viewport,
  root: TileRoot,
  wx: number,
  wy: number,
): { px: number; py: number } {
  const s = scaleFor(root, vp.zoom);
  return {
    px: vp.widthPx / 2 + (wx - vp.center.x) * s,
    py: vp.heightPx / 2 - (wy - vp.center.y) * s,
  };
}

export function screenToWorld(
  vp: Viewport,
  root: TileRoot,
  px: number,
  py: number,
): { x: number; y: number } {
  const s = scaleFor(root, vp.zoom);
  return {
    x: vp.center.x + (px - vp.widthPx / 2) / s,
    y: vp.center.y - (py - vp.heightPx / 2) / s,
  };
}

/** World extent [x0, y0, x1, y1] covered by the viewport. */
export function viewportWorldExtent(
  vp: Viewport,
  root: TileRoot,
): [number, number, number, number] {
  const s = scaleFor(root, vp.zoom);
  const halfW = vp.widthPx / 2 / s;
  const halfH = vp.heightPx / 2 / s;
  return [
    vp.center.x - halfW,
    vp.center.y - halfH,
    vp.center.x + halfW,
    vp.center.y + halfH,
  ];
}

/** Integer tile level used for a fractional zoom, clamped to the server
 * range; tiles from this level are drawn scaled by the fractional rest. */
export function tileLevel(zoom: number, maxZoom: number): number {
  return Math.max(0, Math.min(maxZoom, Math.round(zoom)));
}

/** Enumerate the tiles intersecting the viewport, with canvas placement.
 *
 * Tiles are indexed in `root`, the pyramid being drawn. Screen projection
 * uses `viewRoot` so that layers with differently sized padded squares all
 * land on the same world-to-pixel mapping; by default they coincide. The
 * pyramid level compensates for the side ratio so the fetched tiles stay
 * near native resolution.
 */
export function visibleTiles(
  root: TileRoot,
  vp: Viewport,
  maxZoom: number,
  viewRoot: TileRoot = root,
): TilePlacement[] {
  const zEff = vp.zoom + Math.log2(root.side / viewRoot.side);
  const z = tileLevel(zEff, maxZoom);
  const span = tileSpan(root, z);
  const n = Math.pow(2, z);
  const [wx0, wy0, wx1, wy1] = viewportWorldExtent(vp, viewRoot);
  const xFirst = Math.max(0, Math.floor((wx0 - root.x0) / span));
  const xLast = Math.min(n - 1, Math.floor((wx1 - root.x0) / span));
  const yFirst = Math.max(0, Math.floor((root.y_top - wy1) / span));
  const yLast = Math.min(n - 1, Math.floor((root.y_top - wy0) / span));
  const s = scaleFor(viewRoot, vp.zoom);
  const out: TilePlacement[] = [];
  for (let y = yFirst; y <= yLast; y++) {
    for (let x = xFirst; x <= xLast; x++) {
      const [tx0, , , tyTop] = tileWorldBounds(root, z, x, y);
      const { px, py } = worldToScreen(vp, viewRoot, tx0, tyTop);
      out.push({
        z,
        x,
        y,
        screenX: px,
        screenY: py,
        screenSize: span * s,
      });
    }
  }
  return out;
}
