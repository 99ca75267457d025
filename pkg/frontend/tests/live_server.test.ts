/** End-to-end probe against the real service.
 *
 * Spawns `cadelta serve` on a scratch root, builds a synthetic scene with
 * the CLI, pushes it through the HTTP pipeline, then drives the actual UI
 * client (ApiClient + ParameterConsole) to check that widening the buffer
 * never increases the candidate count on a live server. Skipped when the
 * cadelta binary is not on PATH.
 */

import { spawn, spawnSync, type ChildProcess } from "node:child_process";
import { mkdtempSync, readFileSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { ParameterConsole } from "../src/params.js";
import type { OverlayParams, ProjectMeta } from "../src/types.js";

const PORT = 8900 + (process.pid % 900);
const BASE = `http://127.0.0.1:${PORT}`;

function cliAvailable(): boolean {
  return spawnSync("cadelta", ["--help"], { stdio: "ignore" }).status === 0;
}

async function waitForServer(timeoutMs: number): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  for (;;) {
    try {
      const res = await fetch(`${BASE}/projects`);
      if (res.ok) return;
    } catch {
      // not up yet
    }
    if (Date.now() > deadline) {
      throw new Error(`service did not come up on ${BASE}`);
    }
    await new Promise((r) => setTimeout(r, 250));
  }
}

async function postJson(path: string, body: unknown): Promise<any> {
  const res = await fetch(`${BASE}${path}`, {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify(body),
  });
  if (!res.ok) throw new Error(`POST ${path} -> ${res.status}`);
  return res.json();
}

async function uploadLayer(
  projectId: string,
  role: string,
  imagePath: string,
  worldPath: string,
): Promise<void> {
  const fd = new FormData();
  fd.set("role", role);
  fd.set(
    "image",
    new Blob([readFileSync(imagePath)], { type: "image/png" }),
    "layer.png",
  );
  fd.set(
    "world",
    new Blob([readFileSync(worldPath)], { type: "text/plain" }),
    "layer.pgw",
  );
  const res = await fetch(`${BASE}/projects/${projectId}/layers`, {
    method: "POST",
    body: fd,
  });
  if (!res.ok) {
    throw new Error(`upload ${role} -> ${res.status}: ${await res.text()}`);
  }
}

describe.skipIf(!cliAvailable())("live service", () => {
  let tmp: string;
  let server: ChildProcess | null = null;
  let serverLog = "";
  let project: ProjectMeta;

  beforeAll(async () => {
    tmp = mkdtempSync(join(tmpdir(), "review-ui-live-"));
    const scene = join(tmp, "scene");
    const synth = spawnSync(
      "cadelta",
      ["synth", "--out", scene, "--seed", "7"],
      { encoding: "utf8" },
    );
    if (synth.status !== 0) {
      throw new Error(`synth failed: ${synth.stderr}`);
    }

    server = spawn(
      "cadelta",
      ["--root", join(tmp, "projects"), "serve", "--port", String(PORT)],
      { stdio: ["ignore", "pipe", "pipe"] },
    );
    server.stdout?.on("data", (d: Buffer) => (serverLog += d.toString()));
    server.stderr?.on("data", (d: Buffer) => (serverLog += d.toString()));
    await waitForServer(20_000);

    const created = await postJson("/projects", { name: "live probe" });
    await uploadLayer(
      created.project_id,
      "historical_map",
      join(scene, "image.png"),
      join(scene, "image.pgw"),
    );
    await uploadLayer(
      created.project_id,
      "present_mask",
      join(scene, "present.png"),
      join(scene, "present.pgw"),
    );

    const job = await postJson(`/projects/${created.project_id}/run`, {
      steps: ["segment", "vectorize", "overlay"],
    });
    for (;;) {
      const res = await fetch(`${BASE}/jobs/${job.job_id}`);
      const info = await res.json();
      if (info.state === "done") break;
      if (info.state === "failed") {
        throw new Error(`pipeline failed: ${info.error}\n${serverLog}`);
      }
      await new Promise((r) => setTimeout(r, 300));
    }
    const metaRes = await fetch(`${BASE}/projects/${created.project_id}`);
    project = await metaRes.json();
  }, 120_000);

  afterAll(() => {
    server?.kill();
    if (tmp !== undefined) rmSync(tmp, { recursive: true, force: true });
  });

  it(
    "widening the buffer never increases the candidate count",
    { timeout: 60_000 },
    async () => {
      const api = new ApiClient(BASE);
      const counts: number[] = [];
      for (const buffer of [0.5, 1, 2, 3, 5]) {
        const params: OverlayParams = { ...project.params, buffer_m: buffer };
        const res = await api.putParams(project.project_id, params);
        expect(res.recomputed).toBe(true);
        // the reported count matches what a follow-up fetch returns
        const fc = await api.getCandidates(project.project_id);
        expect(fc.features).toHaveLength(res.n_candidates);
        counts.push(res.n_candidates);
      }
      expect(counts[0]).toBeGreaterThan(0);
      for (let i = 1; i < counts.length; i++) {
        expect(counts[i]!).toBeLessThanOrEqual(counts[i - 1]!);
      }
    },
  );

  it(
    "the parameter console sees the same monotone behaviour",
    { timeout: 60_000 },
    async () => {
      const api = new ApiClient(BASE);
      const consolePanel = new ParameterConsole(
        api,
        project.project_id,
        project.params,
      );
      for (const buffer of [0.5, 2, 4]) {
        consolePanel.setPending("buffer_m", buffer);
        expect(await consolePanel.apply()).toBe(true);
      }
      expect(consolePanel.monotonicityViolation()).toBeNull();
      expect(consolePanel.history.at(-1)!.count).toBeLessThanOrEqual(
        consolePanel.history[0]!.count,
      );
    },
  );

  it(
    "review statuses survive a recompute",
    { timeout: 60_000 },
    async () => {
      const api = new ApiClient(BASE);
      // tighten back to the defaults so every site is present again
      await api.putParams(project.project_id, project.params);
      const before = await api.getCandidates(project.project_id);
      const first = before.features[0]!;
      await api.patchCandidate(project.project_id, first.properties.site_id, {
        status: "confirmed",
        notes: "live probe",
      });
      await api.putParams(project.project_id, project.params);
      const after = await api.getCandidates(project.project_id);
      const kept = after.features.find(
        (f) => f.properties.site_id === first.properties.site_id,
      )!;
      expect(kept.properties.status).toBe("confirmed");
      expect(kept.properties.notes).toBe("live probe");
    },
  );
});
