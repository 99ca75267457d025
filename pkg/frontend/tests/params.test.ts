import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { ParameterConsole } from "../src/params.js";
import type { FeatureCollection } from "../src/types.js";
import { FakeService } from "./fake.js";

function setup(nSites = 6) {
  const service = new FakeService(nSites);
  const api = new ApiClient("", { fetch: service.fetch });
  const collections: FeatureCollection[] = [];
  const errors: string[] = [];
  const consolePanel = new ParameterConsole(api, "p1", service.params, {
    onCandidates: (fc) => collections.push(fc),
    onError: (m) => errors.push(m),
  });
  return { service, consolePanel, collections, errors };
}

describe("apply", () => {
  it("PUTs the pending values and refreshes the candidate list", async () => {
    const { service, consolePanel, collections } = setup(6);
    consolePanel.setPending("buffer_m", 3);
    consolePanel.setPending("min_site_area_m2", 25);
    expect(await consolePanel.apply()).toBe(true);

    const put = service.log.find((r) => r.method === "PUT")!;
    expect(put.url).toBe("/projects/p1/params");
    expect(put.body).toMatchObject({ buffer_m: 3, min_site_area_m2: 25 });

    expect(consolePanel.current.buffer_m).toBe(3);
    expect(consolePanel.history).toHaveLength(1);
    expect(consolePanel.history[0]!.count).toBe(3); // 6 sites - floor(3)
    expect(collections).toHaveLength(1);
    expect(collections[0]!.features).toHaveLength(3);
    expect(consolePanel.lastError).toBeNull();
  });

  it("keeps the previous candidate set and surfaces a failed apply", async () => {
    const { service, consolePanel, collections, errors } = setup();
    consolePanel.setPending("buffer_m", 1);
    await consolePanel.apply();
    expect(collections).toHaveLength(1);

    service.failNextPut = { status: 422, code: "invalid_argument" };
    consolePanel.setPending("buffer_m", 2);
    expect(await consolePanel.apply()).toBe(false);

    // no new candidate push: the view keeps showing the last good set
    expect(collections).toHaveLength(1);
    expect(errors).toEqual(["scripted invalid_argument"]);
    expect(consolePanel.lastError).toBe("scripted invalid_argument");
    // the pending edit survives so the user can retry or adjust
    expect(consolePanel.pending.buffer_m).toBe(2);
    expect(consolePanel.current.buffer_m).toBe(1);
    expect(consolePanel.history).toHaveLength(1);
  });

  it("carries review statuses across a recompute", async () => {
    const { service, consolePanel } = setup(5);
    service.features[0]!.properties.status = "confirmed";
    consolePanel.setPending("buffer_m", 2);
    await consolePanel.apply();
    const kept = service.features.find(
      (f) => f.properties.site_id === "site-001",
    )!;
    expect(kept.properties.status).toBe("confirmed");
  });
});

describe("pending edits", () => {
  it("clamps slider input to the valid ranges", () => {
    const { consolePanel } = setup();
    consolePanel.setPending("buffer_m", -2);
    expect(consolePanel.pending.buffer_m).toBe(0);
    consolePanel.setPending("uncovered_ratio_threshold", 1.5);
    expect(consolePanel.pending.uncovered_ratio_threshold).toBe(1);
    consolePanel.setPending("working_resolution_m", 0);
    expect(consolePanel.pending.working_resolution_m).toBe(0.5);
    consolePanel.setPending("working_resolution_m", Number.NaN);
    expect(consolePanel.pending.working_resolution_m).toBe(0.5);
  });

  it("reset drops pending edits back to the applied values", async () => {
    const { consolePanel } = setup();
    consolePanel.setPending("buffer_m", 9);
    consolePanel.reset();
    expect(consolePanel.pending.buffer_m).toBe(2);
  });
});

describe("buffer monotonicity display", () => {
  it("holds for a well-behaved service", async () => {
    const { consolePanel } = setup(8);
    for (const buffer of [1, 2, 4, 6]) {
      consolePanel.setPending("buffer_m", buffer);
      expect(await consolePanel.apply()).toBe(true);
    }
    const counts = consolePanel.history.map((h) => h.count);
    expect(counts).toEqual([7, 6, 4, 2]);
    expect(consolePanel.monotonicityViolation()).toBeNull();
  });

  it("flags a wider buffer that gained candidates", async () => {
    const { service, consolePanel } = setup(8);
    service.countForBuffer = (b) => (b === 3 ? 9 : 5);
    consolePanel.setPending("buffer_m", 1);
    await consolePanel.apply();
    consolePanel.setPending("buffer_m", 3);
    await consolePanel.apply();
    const bad = consolePanel.monotonicityViolation()!;
    expect(bad).not.toBeNull();
    expect(bad.a.params.buffer_m).toBe(1);
    expect(bad.b.params.buffer_m).toBe(3);
    expect(bad.b.count).toBeGreaterThan(bad.a.count);
  });

  it("does not compare applies that changed other parameters too", async () => {
    const { service, consolePanel } = setup(8);
    service.countForBuffer = (b) => (b === 3 ? 9 : 5);
    consolePanel.setPending("buffer_m", 1);
    await consolePanel.apply();
    consolePanel.setPending("buffer_m", 3);
    consolePanel.setPending("min_site_area_m2", 50);
    await consolePanel.apply();
    expect(consolePanel.monotonicityViolation()).toBeNull();
  });
});
