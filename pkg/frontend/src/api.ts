/** Typed client for the cadelta service.
 *
 * Every request the UI makes goes through this class, so a recording fetch
 * dropped in via the constructor sees the complete traffic. Mutations are
 * limited to the three documented write endpoints (run, params, candidate
 * patch); everything else is a GET.
 */

import type {
  FeatureCollection,
  JobInfo,
  OverlayParams,
  ProjectMeta,
  PutParamsResponse,
  SiteStatus,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
    readonly detail: unknown = null,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

/** Fired when a network-level failure happens or the connection recovers. */
export type ConnectionListener = (up: boolean) => void;

export interface ApiOptions {
  fetch?: FetchLike;
  onConnection?: ConnectionListener;
  /** Backoff schedule in ms for retried GETs. */
  retryDelays?: number[];
  /** Sleep hook, injectable for tests. */
  sleep?: (ms: number) => Promise<void>;
}

const DEFAULT_DELAYS = [500, 1000, 2000, 4000];

export class ApiClient {
  private fetchImpl: FetchLike;
  private onConnection: ConnectionListener;
  private retryDelays: number[];
  private sleep: (ms: number) => Promise<void>;

  constructor(
    readonly baseUrl: string,
    opts: ApiOptions = {},
  ) {
    this.fetchImpl = opts.fetch ?? ((url, init) => fetch(url, init));
    this.onConnection = opts.onConnection ?? (() => {});
    this.retryDelays = opts.retryDelays ?? DEFAULT_DELAYS;
    this.sleep =
      opts.sleep ?? ((ms) => new Promise((resolve) => setTimeout(resolve, ms)));
  }

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<T> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.headers = { "content-type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const res = await this.fetchImpl(this.baseUrl + path, init);
    if (!res.ok) {
      let code = "http_error";
      let message = `HTTP ${res.status}`;
      let detail: unknown = null;
      try {
        const parsed = (await res.json()) as {
          code?: string;
          message?: string;
          detail?: unknown;
        };
        code = parsed.code ?? code;
        message = parsed.message ?? message;
        detail = parsed.detail ?? null;
      } catch {
        // non-JSON error body, keep the HTTP fallback
      }
      throw new ApiError(res.status, code, message, detail);
    }
    if (res.status === 204) {
      return undefined as T;
    }
    return (await res.json()) as T;
  }

  /** GET with backoff on network failure; API errors pass through. */
  private async getWithRetry<T>(path: string): Promise<T> {
    let attempt = 0;
    for (;;) {
      try {
        const out = await this.request<T>("GET", path);
        this.onConnection(true);
        return out;
      } catch (err) {
        if (err instanceof ApiError) {
          this.onConnection(true); // the server answered, just negatively
          throw err;
        }
        this.onConnection(false);
        if (attempt >= this.retryDelays.length) {
          throw err;
        }
        await this.sleep(this.retryDelays[attempt]!);
        attempt += 1;
      }
    }
  }

  async listProjects(): Promise<ProjectMeta[]> {
    const body = await this.getWithRetry<{ projects: ProjectMeta[] }>(
      "/projects",
    );
    return body.projects;
  }

  getProject(projectId: string): Promise<ProjectMeta> {
    return this.getWithRetry(`/projects/${encodeURIComponent(projectId)}`);
  }

  getCandidates(
    projectId: string,
    status?: SiteStatus,
  ): Promise<FeatureCollection> {
    const suffix = status === undefined ? "" : `?status=${status}`;
    return this.getWithRetry(
      `/projects/${encodeURIComponent(projectId)}/candidates${suffix}`,
    );
  }

  getJob(jobId: string): Promise<JobInfo> {
    return this.getWithRetry(`/jobs/${encodeURIComponent(jobId)}`);
  }

  runSteps(projectId: string, steps: string[]): Promise<JobInfo> {
    return this.request(
      "POST",
      `/projects/${encodeURIComponent(projectId)}/run`,
      { steps },
    );
  }

  putParams(
    projectId: string,
    params: OverlayParams,
  ): Promise<PutParamsResponse> {
    return this.request(
      "PUT",
      `/projects/${encodeURIComponent(projectId)}/params`,
      params,
    );
  }

  patchCandidate(
    projectId: string,
    siteId: string,
    patch: { status?: SiteStatus; notes?: string },
  ): Promise<unknown> {
    return this.request(
      "PATCH",
      `/projects/${encodeURIComponent(projectId)}/candidates/${encodeURIComponent(siteId)}`,
      patch,
    );
  }

  tileUrl(projectId: string, layerId: string, z: number, x: number, y: number): string {
    return (
      `${this.baseUrl}/projects/${encodeURIComponent(projectId)}` +
      `/tiles/${encodeURIComponent(layerId)}/${z}/${x}/${y}.png`
    );
  }

  exportUrl(projectId: string): string {
    return `${this.baseUrl}/projects/${encodeURIComponent(projectId)}/export`;
  }
}
