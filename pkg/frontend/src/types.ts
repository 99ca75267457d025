/** Payload shapes of the cadelta HTTP service. */

export interface CrsTag {
  code: string;
  units: string;
}

export interface OverlayParams {
  buffer_m: number;
  min_site_area_m2: number;
  uncovered_ratio_threshold: number;
  working_resolution_m: number;
}

export interface TileRoot {
  x0: number;
  y_top: number;
  side: number;
}

export interface LayerMeta {
  layer_id: string;
  role: string;
  crs: string;
  width?: number;
  height?: number;
  /** [x0, y0, x1, y1] in world metres; present when the layer has geo. */
  bbox?: [number, number, number, number];
  tile_root?: TileRoot;
  max_zoom?: number;
}

export interface ProjectMeta {
  project_id: string;
  name: string;
  crs: CrsTag;
  params: OverlayParams;
  layers: LayerMeta[];
  eval_reports: string[];
  created_at: string;
  updated_at: string;
}

export type SiteStatus = "unreviewed" | "confirmed" | "rejected";

export const SITE_STATUSES: readonly SiteStatus[] = [
  "unreviewed",
  "confirmed",
  "rejected",
];

export interface SiteProperties {
  site_id: string;
  area_m2: number;
  uncovered_ratio: number;
  status: SiteStatus;
  notes: string;
}

export interface SiteFeature {
  type: "Feature";
  geometry: { type: "Polygon"; coordinates: number[][][] };
  properties: SiteProperties;
}

export interface FeatureCollection {
  type: "FeatureCollection";
  features: SiteFeature[];
}

export type JobState = "queued" | "running" | "done" | "failed";

export interface JobInfo {
  job_id: string;
  project_id?: string;
  state: JobState;
  step: string | null;
  error: string | null;
}

export interface PutParamsResponse {
  params: OverlayParams;
  recomputed: boolean;
  n_candidates: number;
}

export interface ErrorBody {
  code: string;
  message: string;
  detail: unknown;
}
