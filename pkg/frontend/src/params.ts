/** What-if console for the overlay parameters.
 *
 * Apply pushes the pending values with PUT, then refreshes the candidate
 * list. On any failure the previous candidate set stays on screen and the
 * error is surfaced instead. Each successful apply is recorded so the
 * console can show the buffer-vs-count relationship; a wider buffer must
 * never yield more candidates, and the history check makes that visible.
 */

import { ApiClient, ApiError } from "./api.js";
import type { FeatureCollection, OverlayParams } from "./types.js";

export interface ParamsEntry {
  params: OverlayParams;
  count: number;
}

export interface ConsoleOptions {
  onCandidates?: (fc: FeatureCollection) => void;
  onError?: (message: string) => void;
  onChange?: () => void;
}

type NumericField = keyof OverlayParams;

export class ParameterConsole {
  current: OverlayParams;
  pending: OverlayParams;
  history: ParamsEntry[] = [];
  lastError: string | null = null;
  applying = false;

  private onCandidates: (fc: FeatureCollection) => void;
  private onError: (message: string) => void;
  private onChange: () => void;

  constructor(
    private api: ApiClient,
    private projectId: string,
    initial: OverlayParams,
    opts: ConsoleOptions = {},
  ) {
    this.current = { ...initial };
    this.pending = { ...initial };
    this.onCandidates = opts.onCandidates ?? (() => {});
    this.onError = opts.onError ?? (() => {});
    this.onChange = opts.onChange ?? (() => {});
  }

  setPending(field: NumericField, value: number): void {
    if (!Number.isFinite(value)) return;
    let v = Math.max(0, value);
    if (field === "working_resolution_m" && v <= 0) return;
    if (field === "uncovered_ratio_threshold") v = Math.min(1, v);
    this.pending = { ...this.pending, [field]: v };
    this.onChange();
  }

  reset(): void {
    this.pending = { ...this.current };
    this.onChange();
  }

  async apply(): Promise<boolean> {
    this.applying = true;
    this.onChange();
    try {
      const res = await this.api.putParams(this.projectId, this.pending);
      const fc = await this.api.getCandidates(this.projectId);
      this.current = { ...res.params };
      this.pending = { ...res.params };
      this.history.push({ params: { ...res.params }, count: fc.features.length });
      this.lastError = null;
      this.onCandidates(fc);
      return true;
    } catch (err) {
      // keep the previous candidate set; only surface the failure
      this.lastError =
        err instanceof ApiError ? err.message : "request failed";
      this.onError(this.lastError);
      return false;
    } finally {
      this.applying = false;
      this.onChange();
    }
  }

  /** First recorded pair where a wider buffer produced MORE candidates
   * (all other parameters equal); null when the history is consistent. */
  monotonicityViolation(): { a: ParamsEntry; b: ParamsEntry } | null {
    const same = (p: OverlayParams, q: OverlayParams) =>
      p.min_site_area_m2 === q.min_site_area_m2 &&
      p.uncovered_ratio_threshold === q.uncovered_ratio_threshold &&
      p.working_resolution_m === q.working_resolution_m;
    for (let i = 0; i < this.history.length; i++) {
      for (let j = 0; j < this.history.length; j++) {
        const a = this.history[i]!;
        const b = this.history[j]!;
        if (!same(a.params, b.params)) continue;
        if (a.params.buffer_m < b.params.buffer_m && b.count > a.count) {
          return { a, b };
        }
      }
    }
    return null;
  }
}
