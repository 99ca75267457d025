/** Review workflow state: the sortable candidate list, keyboard triage,
 * and optimistic status updates with rollback.
 *
 * Every mutation goes through ApiClient.patchCandidate. The local list is
 * updated first so the UI feels immediate; a failed PATCH rolls the item
 * back and surfaces a toast. A 409 means our view of the site went stale,
 * so the whole list is refetched (server wins, last write stands).
 */

import { ApiClient, ApiError } from "./api.js";
import type { SiteFeature, SiteStatus } from "./types.js";
import { SITE_STATUSES } from "./types.js";

export type SortKey = "area_m2" | "uncovered_ratio" | "status";

const STATUS_RANK: Record<SiteStatus, number> = {
  unreviewed: 0,
  confirmed: 1,
  rejected: 2,
};

export interface TriageOptions {
  onToast?: (message: string) => void;
  onChange?: () => void;
}

interface LastAction {
  siteId: string;
  prevStatus: SiteStatus;
  prevNotes: string;
}

export class TriageStore {
  features: SiteFeature[] = [];
  sortKey: SortKey = "area_m2";
  sortDir: 1 | -1 = -1;
  filter: Set<SiteStatus> = new Set(SITE_STATUSES);
  selectedId: string | null = null;

  private lastAction: LastAction | null = null;
  private onToast: (message: string) => void;
  private onChange: () => void;

  constructor(
    private api: ApiClient,
    private projectId: string,
    opts: TriageOptions = {},
  ) {
    this.onToast = opts.onToast ?? (() => {});
    this.onChange = opts.onChange ?? (() => {});
  }

  load(features: SiteFeature[]): void {
    this.features = features.map((f) => ({
      ...f,
      properties: { ...f.properties },
    }));
    if (
      this.selectedId !== null &&
      this.find(this.selectedId) === undefined
    ) {
      this.selectedId = null;
    }
    this.onChange();
  }

  async refetch(): Promise<void> {
    const fc = await this.api.getCandidates(this.projectId);
    this.load(fc.features);
  }

  find(siteId: string): SiteFeature | undefined {
    return this.features.find((f) => f.properties.site_id === siteId);
  }

  /** Current list view: filtered, then sorted by the active column. */
  list(): SiteFeature[] {
    const rows = this.features.filter((f) =>
      this.filter.has(f.properties.status),
    );
    const key = this.sortKey;
    rows.sort((a, b) => {
      const va =
        key === "status"
          ? STATUS_RANK[a.properties.status]
          : a.properties[key];
      const vb =
        key === "status"
          ? STATUS_RANK[b.properties.status]
          : b.properties[key];
      if (va !== vb) return (va < vb ? -1 : 1) * this.sortDir;
      // stable tie-break so re-sorts do not shuffle equal rows
      return a.properties.site_id < b.properties.site_id ? -1 : 1;
    });
    return rows;
  }

  sortBy(key: SortKey): void {
    if (this.sortKey === key) {
      this.sortDir = this.sortDir === 1 ? -1 : 1;
    } else {
      this.sortKey = key;
      this.sortDir = key === "status" ? 1 : -1;
    }
    this.onChange();
  }

  setFilter(statuses: Iterable<SiteStatus>): void {
    this.filter = new Set(statuses);
    this.onChange();
  }

  select(siteId: string | null): void {
    this.selectedId = siteId;
    this.onChange();
  }

  /** Advance the selection to the next row in list order (skip). */
  skip(): void {
    const rows = this.list();
    if (rows.length === 0) {
      this.selectedId = null;
      this.onChange();
      return;
    }
    const idx = rows.findIndex(
      (f) => f.properties.site_id === this.selectedId,
    );
    const next = rows[(idx + 1) % rows.length]!;
    this.selectedId = next.properties.site_id;
    this.onChange();
  }

  /** Optimistic status change; rolls back on failure, refetches on 409. */
  async setStatus(
    siteId: string,
    status: SiteStatus,
    notes?: string,
  ): Promise<boolean> {
    const feature = this.find(siteId);
    if (feature === undefined) return false;
    const prevStatus = feature.properties.status;
    const prevNotes = feature.properties.notes;
    feature.properties.status = status;
    if (notes !== undefined) feature.properties.notes = notes;
    this.onChange();
    try {
      const patch: { status: SiteStatus; notes?: string } = { status };
      if (notes !== undefined) patch.notes = notes;
      await this.api.patchCandidate(this.projectId, siteId, patch);
      this.lastAction = { siteId, prevStatus, prevNotes };
      return true;
    } catch (err) {
      feature.properties.status = prevStatus;
      feature.properties.notes = prevNotes;
      this.onChange();
      const message =
        err instanceof ApiError ? err.message : "request failed";
      this.onToast(`update failed: ${message}`);
      if (err instanceof ApiError && err.status === 409) {
        await this.refetch();
      }
      return false;
    }
  }

  /** Revert the last successful status change with a second PATCH. */
  async undo(): Promise<boolean> {
    const action = this.lastAction;
    if (action === null) return false;
    this.lastAction = null;
    return this.setStatus(action.siteId, action.prevStatus, action.prevNotes);
  }

  /** Keyboard triage: c confirms, r rejects, s or space skips, u undoes. */
  async handleKey(key: string): Promise<void> {
    if (key === "s" || key === " ") {
      this.skip();
      return;
    }
    if (key === "u") {
      await this.undo();
      return;
    }
    if (this.selectedId === null) return;
    if (key === "c") {
      await this.setStatus(this.selectedId, "confirmed");
      this.skip();
    } else if (key === "r") {
      await this.setStatus(this.selectedId, "rejected");
      this.skip();
    }
  }
}
