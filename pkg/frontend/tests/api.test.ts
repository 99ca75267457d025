import { describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";
import { ParameterConsole } from "../src/params.js";
import { TriageStore } from "../src/triage.js";
import { FakeService } from "./fake.js";

function client(service: FakeService, onConnection?: (up: boolean) => void) {
  return new ApiClient("", {
    fetch: service.fetch,
    onConnection,
    retryDelays: [1, 2],
    sleep: async () => {},
  });
}

describe("error handling", () => {
  it("surfaces the service's uniform error body", async () => {
    const service = new FakeService();
    const api = client(service);
    await expect(api.getJob("nope")).rejects.toMatchObject({
      name: "ApiError",
      status: 404,
      code: "not_found",
      message: "no route for GET /jobs/nope",
    });
  });

  it("falls back to the HTTP status for non-JSON error bodies", async () => {
    const api = new ApiClient("", {
      fetch: async () => new Response("boom", { status: 500 }),
    });
    await expect(api.listProjects()).rejects.toMatchObject({
      status: 500,
      code: "http_error",
      message: "HTTP 500",
    });
  });
});

describe("connection loss", () => {
  it("retries GETs with backoff and reports recovery", async () => {
    const service = new FakeService();
    let failures = 2;
    const events: boolean[] = [];
    const slept: number[] = [];
    const api = new ApiClient("", {
      fetch: async (url, init) => {
        if (failures > 0) {
          failures -= 1;
          throw new TypeError("fetch failed");
        }
        return service.fetch(url, init);
      },
      onConnection: (up) => events.push(up),
      retryDelays: [5, 10],
      sleep: async (ms) => {
        slept.push(ms);
      },
    });
    const projects = await api.listProjects();
    expect(projects[0]!.project_id).toBe("p1");
    expect(events).toEqual([false, false, true]);
    expect(slept).toEqual([5, 10]);
  });

  it("gives up after the backoff schedule is spent", async () => {
    const events: boolean[] = [];
    const api = new ApiClient("", {
      fetch: async () => {
        throw new TypeError("fetch failed");
      },
      onConnection: (up) => events.push(up),
      retryDelays: [1],
      sleep: async () => {},
    });
    await expect(api.listProjects()).rejects.toThrow("fetch failed");
    expect(events).toEqual([false, false]);
  });

  it("does not retry API-level errors and marks the link up", async () => {
    const service = new FakeService();
    const events: boolean[] = [];
    let calls = 0;
    const api = new ApiClient("", {
      fetch: async (url, init) => {
        calls += 1;
        return service.fetch(url, init);
      },
      onConnection: (up) => events.push(up),
    });
    await expect(api.getJob("nope")).rejects.toBeInstanceOf(ApiError);
    expect(calls).toBe(1);
    expect(events).toEqual([true]);
  });
});

describe("mutation surface", () => {
  it("full workflows write only through the documented endpoints", async () => {
    const service = new FakeService(5);
    const api = client(service);

    // a representative session: browse, triage, re-run, tune parameters
    await api.listProjects();
    await api.getProject("p1");
    const store = new TriageStore(api, "p1");
    await store.refetch();
    store.select("site-001");
    await store.handleKey("c");
    await store.handleKey("r");
    await store.handleKey("u");
    await store.setStatus("site-002", "confirmed", "checked on site");
    const job = await api.runSteps("p1", ["overlay"]);
    await api.getJob(job.job_id);
    const consolePanel = new ParameterConsole(api, "p1", service.params);
    consolePanel.setPending("buffer_m", 3);
    await consolePanel.apply();
    await api.getCandidates("p1", "confirmed");

    const writes = service.log.filter((r) => r.method !== "GET");
    expect(writes.length).toBeGreaterThanOrEqual(5);
    const allowed = [
      { method: "POST", path: /^\/projects\/[^/]+\/run$/ },
      { method: "PUT", path: /^\/projects\/[^/]+\/params$/ },
      { method: "PATCH", path: /^\/projects\/[^/]+\/candidates\/[^/]+$/ },
    ];
    for (const req of writes) {
      const pathOnly = req.url.split("?")[0]!;
      const ok = allowed.some(
        (rule) => rule.method === req.method && rule.path.test(pathOnly),
      );
      expect(ok, `${req.method} ${req.url} is not a documented write`).toBe(
        true,
      );
    }
  });

  it("builds tile and export URLs under the service base", () => {
    const api = new ApiClient("http://host:9") ;
    expect(api.tileUrl("p1", "layer-x", 2, 1, 3)).toBe(
      "http://host:9/projects/p1/tiles/layer-x/2/1/3.png",
    );
    expect(api.exportUrl("p1")).toBe("http://host:9/projects/p1/export");
  });
});
