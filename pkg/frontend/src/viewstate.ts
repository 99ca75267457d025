/** Shareable view state, serialized into the URL fragment so a link can
 * carry "this project, this spot, this site" to another person. */

import type { SiteStatus } from "./types.js";
import { SITE_STATUSES } from "./types.js";

export interface ViewState {
  /** World coordinates of the viewport centre, metres. */
  center: { x: number; y: number };
  /** Quadtree level, fractional values allowed between levels. */
  zoom: number;
  /** layer_id -> opacity in [0, 1]; absent layers are hidden. */
  visibleLayers: Map<string, number>;
  activeSite: string | null;
  /** Which review statuses the candidate overlay shows. */
  filter: Set<SiteStatus>;
}

export function defaultViewState(): ViewState {
  return {
    center: { x: 0, y: 0 },
    zoom: 0,
    visibleLayers: new Map(),
    activeSite: null,
    filter: new Set(SITE_STATUSES),
  };
}

export function clampOpacity(value: number): number {
  if (!Number.isFinite(value)) return 1;
  return Math.min(1, Math.max(0, value));
}

export function clampZoom(zoom: number, maxZoom: number): number {
  if (!Number.isFinite(zoom)) return 0;
  return Math.min(maxZoom, Math.max(0, zoom));
}

/** Normalize in place against the server-advertised zoom range. */
export function clampViewState(state: ViewState, maxZoom: number): ViewState {
  const layers = new Map<string, number>();
  for (const [id, op] of state.visibleLayers) {
    layers.set(id, clampOpacity(op));
  }
  return {
    center: state.center,
    zoom: clampZoom(state.zoom, maxZoom),
    visibleLayers: layers,
    activeSite: state.activeSite,
    filter: new Set(state.filter),
  };
}

const NUM = (v: number) => String(Math.round(v * 1e6) / 1e6);

export function encodeFragment(state: ViewState): string {
  const parts: string[] = [];
  parts.push(`c=${NUM(state.center.x)},${NUM(state.center.y)}`);
  parts.push(`z=${NUM(state.zoom)}`);
  if (state.visibleLayers.size > 0) {
    const layers = [...state.visibleLayers.entries()]
      .map(([id, op]) => `${encodeURIComponent(id)}:${NUM(op)}`)
      .join(",");
    parts.push(`l=${layers}`);
  }
  if (state.activeSite !== null) {
    parts.push(`s=${encodeURIComponent(state.activeSite)}`);
  }
  if (state.filter.size !== SITE_STATUSES.length) {
    parts.push(`f=${[...state.filter].join(",")}`);
  }
  return "#" + parts.join("&");
}

/** Parse a fragment; anything malformed falls back to defaults per field. */
export function decodeFragment(fragment: string): ViewState {
  const state = defaultViewState();
  const raw = fragment.startsWith("#") ? fragment.slice(1) : fragment;
  if (raw === "") return state;
  for (const part of raw.split("&")) {
    const eq = part.indexOf("=");
    if (eq < 0) continue;
    const key = part.slice(0, eq);
    const value = part.slice(eq + 1);
    if (key === "c") {
      const [xs, ys] = value.split(",");
      const x = Number(xs);
      const y = Number(ys);
      if (Number.isFinite(x) && Number.isFinite(y)) {
        state.center = { x, y };
      }
    } else if (key === "z") {
      const z = Number(value);
      if (Number.isFinite(z) && z >= 0) state.zoom = z;
    } else if (key === "l") {
      state.visibleLayers = new Map();
      for (const entry of value.split(",")) {
        const colon = entry.lastIndexOf(":");
        if (colon < 0) continue;
        const id = decodeURIComponent(entry.slice(0, colon));
        const op = Number(entry.slice(colon + 1));
        if (id !== "" && Number.isFinite(op)) {
          state.visibleLayers.set(id, clampOpacity(op));
        }
      }
    } else if (key === "s") {
      state.activeSite = decodeURIComponent(value);
    } else if (key === "f") {
      const statuses = value
        .split(",")
        .filter((s): s is SiteStatus =>
          (SITE_STATUSES as readonly string[]).includes(s),
        );
      if (statuses.length > 0) state.filter = new Set(statuses);
    }
  }
  return state;
}
