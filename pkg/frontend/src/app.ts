/** Browser wiring: two canvases, a triage table, a parameter console.
 *
 * All decisions live in the logic modules (tilemath, maplogic, triage,
 * params, viewstate); this file only moves pixels and DOM nodes around.
 * It is exercised by hand against a running service, not by unit tests.
 */

import { ApiClient, ApiError } from "./api.js";
import {
  hitTest,
  planSites,
  planTiles,
  projectViewRoot,
  sideBySideViewports,
} from "./maplogic.js";
import { ParameterConsole } from "./params.js";
import { screenToWorld, scaleFor, type Viewport } from "./tilemath.js";
import { TriageStore } from "./triage.js";
import type {
  OverlayParams,
  ProjectMeta,
  SiteFeature,
  SiteStatus,
  TileRoot,
} from "./types.js";
import { SITE_STATUSES } from "./types.js";
import {
  clampViewState,
  decodeFragment,
  encodeFragment,
  type ViewState,
} from "./viewstate.js";

/** Which roles each pane shows; the diff rides on both sides. */
const PANE_ROLES: [Set<string>, Set<string>] = [
  new Set(["historical_map", "historical_mask", "diff"]),
  new Set(["present_imagery", "present_mask", "diff"]),
];

const DEFAULT_OPACITY: Record<string, number> = {
  historical_map: 1,
  present_imagery: 1,
  historical_mask: 0.45,
  present_mask: 0.45,
  diff: 0.7,
};

const STATUS_COLOR: Record<SiteStatus, string> = {
  unreviewed: "#d99a1f",
  confirmed: "#2f9e44",
  rejected: "#868e96",
};

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  cls?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (cls !== undefined) node.className = cls;
  if (text !== undefined) node.textContent = text;
  return node;
}

class TileImageCache {
  private images = new Map<string, HTMLImageElement>();

  constructor(private onLoad: () => void) {}

  get(url: string): HTMLImageElement | null {
    let img = this.images.get(url);
    if (img === undefined) {
      img = new Image();
      img.src = url;
      img.addEventListener("load", this.onLoad);
      this.images.set(url, img);
    }
    return img.complete && img.naturalWidth > 0 ? img : null;
  }
}

export class App {
  private api: ApiClient;
  private project: ProjectMeta;
  private state: ViewState;
  private store: TriageStore;
  private consolePanel: ParameterConsole;
  private tiles: TileImageCache;
  private viewRoot: TileRoot;

  private canvases: [HTMLCanvasElement, HTMLCanvasElement];
  private mapBox: HTMLElement;
  private layerBox: HTMLElement;
  private tbody: HTMLTableSectionElement;
  private detailBox: HTMLElement;
  private historyList: HTMLOListElement;
  private monotone: HTMLElement;
  private toastBox: HTMLElement;
  private banner: HTMLElement;
  private jobLabel: HTMLElement;
  private paramInputs: Record<keyof OverlayParams, HTMLInputElement>;

  private drag: { px: number; py: number; cx: number; cy: number } | null =
    null;
  private dragMoved = false;
  private renderQueued = false;

  constructor(
    private root: HTMLElement,
    api: ApiClient,
    project: ProjectMeta,
  ) {
    this.api = api;
    this.project = project;
    const viewRoot = projectViewRoot(project);
    if (viewRoot === null) {
      throw new Error("project has no georeferenced layer to display");
    }
    this.viewRoot = viewRoot;
    this.tiles = new TileImageCache(() => this.scheduleRender());

    this.state = clampViewState(
      decodeFragment(location.hash),
      this.maxZoom(),
    );
    if (this.state.visibleLayers.size === 0) {
      for (const layer of project.layers) {
        this.state.visibleLayers.set(
          layer.layer_id,
          DEFAULT_OPACITY[layer.role] ?? 1,
        );
      }
    }
    if (location.hash === "" || location.hash === "#") {
      // fresh entry: start centred on the data
      this.state.center = {
        x: viewRoot.x0 + viewRoot.side / 2,
        y: viewRoot.y_top - viewRoot.side / 2,
      };
    }

    this.store = new TriageStore(api, project.project_id, {
      onToast: (m) => this.toast(m),
      onChange: () => {
        this.state.activeSite = this.store.selectedId;
        this.state.filter = new Set(this.store.filter);
        this.syncFragment();
        this.renderTriage();
        this.scheduleRender();
      },
    });
    this.store.setFilter(this.state.filter);
    if (this.state.activeSite !== null) {
      this.store.select(this.state.activeSite);
    }

    this.consolePanel = new ParameterConsole(
      api,
      project.project_id,
      project.params,
      {
        onCandidates: (fc) => this.store.load(fc.features),
        onError: (m) => this.toast(`apply failed: ${m}`),
        onChange: () => this.renderConsole(),
      },
    );

    this.banner = el("div", "banner hidden", "connection lost, retrying…");
    this.toastBox = el("div", "toast hidden");
    this.mapBox = el("div", "map-box");
    this.canvases = [el("canvas"), el("canvas")];
    this.layerBox = el("div", "layer-box");
    this.tbody = document.createElement("tbody");
    this.detailBox = el("div", "detail", "no site selected");
    this.historyList = document.createElement("ol");
    this.monotone = el("div", "monotone");
    this.jobLabel = el("span", "job-label", "");
    this.paramInputs = {
      buffer_m: el("input"),
      min_site_area_m2: el("input"),
      uncovered_ratio_threshold: el("input"),
      working_resolution_m: el("input"),
    };

    this.buildDom();
    this.bindEvents();
    this.renderTriage();
    this.renderConsole();
    this.scheduleRender();
  }

  private maxZoom(): number {
    let z = 0;
    for (const layer of this.project.layers) {
      z = Math.max(z, layer.max_zoom ?? 0);
    }
    return z;
  }

  private buildDom(): void {
    this.root.textContent = "";
    this.root.append(this.banner);

    const head = el("header");
    head.append(el("h1", undefined, this.project.name));
    const exp = el("a", "export", "download export");
    exp.href = this.api.exportUrl(this.project.project_id);
    const run = el("button", "run", "run overlay");
    run.addEventListener("click", () => void this.runOverlay(run));
    head.append(run, this.jobLabel, exp);
    this.root.append(head);

    const main = el("div", "columns");
    const left = el("div", "map-col");
    for (const [i, canvas] of this.canvases.entries()) {
      const wrap = el("div", "pane");
      wrap.append(
        el("div", "pane-label", i === 0 ? "historical" : "present"),
        canvas,
      );
      this.mapBox.append(wrap);
    }
    left.append(this.mapBox, this.layerBox);
    this.buildLayerControls();

    const right = el("div", "side-col");
    right.append(this.buildTriagePanel(), this.buildConsolePanel());
    main.append(left, right);
    this.root.append(main, this.toastBox);
  }

  private buildLayerControls(): void {
    this.layerBox.textContent = "";
    for (const layer of this.project.layers) {
      if (layer.tile_root === undefined) continue;
      const row = el("label", "layer-row");
      const box = el("input");
      box.type = "checkbox";
      const slider = el("input");
      slider.type = "range";
      slider.min = "0";
      slider.max = "1";
      slider.step = "0.05";
      const current = this.state.visibleLayers.get(layer.layer_id) ?? 0;
      box.checked = current > 0;
      slider.value = String(current > 0 ? current : 1);
      const update = () => {
        const op = box.checked ? Number(slider.value) : 0;
        this.state.visibleLayers.set(layer.layer_id, op);
        this.syncFragment();
        this.scheduleRender();
      };
      box.addEventListener("change", update);
      slider.addEventListener("input", update);
      row.append(box, el("span", undefined, layer.role), slider);
      this.layerBox.append(row);
    }
  }

  private buildTriagePanel(): HTMLElement {
    const panel = el("section", "triage");
    panel.append(el("h2", undefined, "candidates"));

    const filters = el("div", "filters");
    for (const status of SITE_STATUSES) {
      const lab = el("label");
      const box = el("input");
      box.type = "checkbox";
      box.checked = this.state.filter.has(status);
      box.addEventListener("change", () => {
        const next = new Set(this.store.filter);
        if (box.checked) next.add(status);
        else next.delete(status);
        this.store.setFilter(next);
      });
      lab.append(box, document.createTextNode(status));
      filters.append(lab);
    }
    panel.append(filters);

    const table = el("table", "sites");
    const thead = document.createElement("thead");
    const hr = document.createElement("tr");
    const cols: [string, "area_m2" | "uncovered_ratio" | "status" | null][] = [
      ["site", null],
      ["area m²", "area_m2"],
      ["uncovered", "uncovered_ratio"],
      ["status", "status"],
    ];
    for (const [label, key] of cols) {
      const th = document.createElement("th");
      th.textContent = label;
      if (key !== null) {
        th.classList.add("sortable");
        th.addEventListener("click", () => this.store.sortBy(key));
      }
      hr.append(th);
    }
    thead.append(hr);
    table.append(thead, this.tbody);
    panel.append(table);

    const actions = el("div", "actions");
    const mk = (label: string, fn: () => void) => {
      const b = el("button", undefined, label);
      b.addEventListener("click", fn);
      actions.append(b);
    };
    mk("confirm (c)", () => void this.store.handleKey("c"));
    mk("reject (r)", () => void this.store.handleKey("r"));
    mk("skip (s)", () => void this.store.handleKey("s"));
    mk("undo (u)", () => void this.store.handleKey("u"));
    panel.append(actions, this.detailBox);
    return panel;
  }

  /** One-line readout of the selected site under the action buttons. */
  private renderDetail(): void {
    const f =
      this.store.selectedId === null
        ? undefined
        : this.store.find(this.store.selectedId);
    if (f === undefined) {
      this.detailBox.textContent = "no site selected";
      return;
    }
    const p = f.properties;
    this.detailBox.textContent =
      `${p.site_id}: ${p.area_m2.toFixed(1)} m², ` +
      `${(p.uncovered_ratio * 100).toFixed(1)}% uncovered, ${p.status}` +
      (p.notes !== "" ? ` (${p.notes})` : "");
  }

  private buildConsolePanel(): HTMLElement {
    const panel = el("section", "console");
    panel.append(el("h2", undefined, "overlay parameters"));
    const fields: [keyof OverlayParams, string, string][] = [
      ["buffer_m", "present buffer (m)", "0.1"],
      ["min_site_area_m2", "min site area (m²)", "1"],
      ["uncovered_ratio_threshold", "uncovered ratio", "0.05"],
      ["working_resolution_m", "resolution (m/px)", "0.1"],
    ];
    for (const [key, label, step] of fields) {
      const row = el("label", "param-row");
      const input = this.paramInputs[key];
      input.type = "number";
      input.step = step;
      input.min = "0";
      input.addEventListener("change", () => {
        this.consolePanel.setPending(key, Number(input.value));
      });
      row.append(el("span", undefined, label), input);
      panel.append(row);
    }
    const apply = el("button", "apply", "apply");
    apply.addEventListener("click", () => void this.consolePanel.apply());
    panel.append(apply, el("h3", undefined, "applies"), this.historyList);
    panel.append(this.monotone);
    return panel;
  }

  private bindEvents(): void {
    window.addEventListener("hashchange", () => {
      this.state = clampViewState(decodeFragment(location.hash), this.maxZoom());
      this.store.setFilter(this.state.filter);
      this.store.select(this.state.activeSite);
    });
    window.addEventListener("resize", () => this.scheduleRender());
    window.addEventListener("keydown", (ev) => {
      const target = ev.target as HTMLElement | null;
      if (
        target !== null &&
        (target.tagName === "INPUT" || target.tagName === "TEXTAREA")
      ) {
        return;
      }
      if (["c", "r", "s", "u", " "].includes(ev.key)) {
        ev.preventDefault();
        void this.store.handleKey(ev.key);
      }
    });

    for (const canvas of this.canvases) {
      canvas.addEventListener("pointerdown", (ev) => {
        canvas.setPointerCapture(ev.pointerId);
        this.drag = {
          px: ev.offsetX,
          py: ev.offsetY,
          cx: this.state.center.x,
          cy: this.state.center.y,
        };
        this.dragMoved = false;
      });
      canvas.addEventListener("pointermove", (ev) => {
        if (this.drag === null) return;
        const dx = ev.offsetX - this.drag.px;
        const dy = ev.offsetY - this.drag.py;
        if (Math.abs(dx) + Math.abs(dy) > 3) this.dragMoved = true;
        const s = scaleFor(this.viewRoot, this.state.zoom);
        this.state.center = {
          x: this.drag.cx - dx / s,
          y: this.drag.cy + dy / s,
        };
        this.syncFragment();
        this.scheduleRender();
      });
      canvas.addEventListener("pointerup", (ev) => {
        const wasDrag = this.dragMoved;
        this.drag = null;
        if (wasDrag) return;
        const vp = this.paneViewport();
        const w = screenToWorld(vp, this.viewRoot, ev.offsetX, ev.offsetY);
        const hit = hitTest(this.store.features, this.state.filter, w.x, w.y);
        this.store.select(hit);
      });
      canvas.addEventListener(
        "wheel",
        (ev) => {
          ev.preventDefault();
          const vp = this.paneViewport();
          const anchor = screenToWorld(
            vp,
            this.viewRoot,
            ev.offsetX,
            ev.offsetY,
          );
          const next = Math.min(
            this.maxZoom() + 2,
            Math.max(0, this.state.zoom - ev.deltaY * 0.002),
          );
          this.state.zoom = next;
          const s = scaleFor(this.viewRoot, next);
          this.state.center = {
            x: anchor.x - (ev.offsetX - vp.widthPx / 2) / s,
            y: anchor.y + (ev.offsetY - vp.heightPx / 2) / s,
          };
          this.syncFragment();
          this.scheduleRender();
        },
        { passive: false },
      );
    }
  }

  private paneViewport(): Viewport {
    const rect = this.mapBox.getBoundingClientRect();
    const [vp] = sideBySideViewports(rect.width, rect.height, this.state);
    return vp;
  }

  private syncFragment(): void {
    history.replaceState(null, "", encodeFragment(this.state));
  }

  private scheduleRender(): void {
    if (this.renderQueued) return;
    this.renderQueued = true;
    requestAnimationFrame(() => {
      this.renderQueued = false;
      this.renderMap();
    });
  }

  private renderMap(): void {
    const vp = this.paneViewport();
    const requests = planTiles(this.project, this.state, vp);
    const plans = planSites(
      this.store.features,
      this.state,
      vp,
      this.viewRoot,
    );
    const roleOf = new Map<string, string>();
    for (const layer of this.project.layers) {
      roleOf.set(layer.layer_id, layer.role);
    }

    for (const [i, canvas] of this.canvases.entries()) {
      canvas.width = vp.widthPx;
      canvas.height = vp.heightPx;
      const ctx = canvas.getContext("2d");
      if (ctx === null) continue;
      ctx.imageSmoothingEnabled = false;
      ctx.fillStyle = "#1b1e23";
      ctx.fillRect(0, 0, canvas.width, canvas.height);
      const roles = PANE_ROLES[i]!;
      for (const req of requests) {
        if (!roles.has(roleOf.get(req.layerId) ?? "")) continue;
        const url = this.api.tileUrl(
          this.project.project_id,
          req.layerId,
          req.placement.z,
          req.placement.x,
          req.placement.y,
        );
        const img = this.tiles.get(url);
        if (img === null) continue;
        ctx.globalAlpha = req.opacity;
        ctx.drawImage(
          img,
          req.placement.screenX,
          req.placement.screenY,
          req.placement.screenSize,
          req.placement.screenSize,
        );
      }
      ctx.globalAlpha = 1;
      for (const plan of plans) {
        if (plan.screenRing.length < 3) continue;
        const [bx0, by0, bx1, by1] = plan.screenBbox;
        ctx.setLineDash([4, 3]);
        ctx.strokeStyle = STATUS_COLOR[plan.status];
        ctx.lineWidth = 1;
        ctx.strokeRect(bx0, by0, bx1 - bx0, by1 - by0);
        ctx.setLineDash([]);
        ctx.beginPath();
        const first = plan.screenRing[0]!;
        ctx.moveTo(first.px, first.py);
        for (const p of plan.screenRing.slice(1)) ctx.lineTo(p.px, p.py);
        ctx.closePath();
        ctx.lineWidth = plan.active ? 3 : 1.5;
        ctx.stroke();
        if (plan.active) {
          ctx.fillStyle = STATUS_COLOR[plan.status] + "33";
          ctx.fill();
        }
      }
    }
  }

  private renderTriage(): void {
    this.renderDetail();
    this.tbody.textContent = "";
    for (const f of this.store.list()) {
      const p = f.properties;
      const tr = document.createElement("tr");
      if (p.site_id === this.store.selectedId) tr.classList.add("selected");
      const cells = [
        p.site_id,
        p.area_m2.toFixed(1),
        p.uncovered_ratio.toFixed(3),
        p.status,
      ];
      for (const text of cells) {
        const td = document.createElement("td");
        td.textContent = text;
        tr.append(td);
      }
      tr.style.color = STATUS_COLOR[p.status];
      tr.addEventListener("click", () => {
        this.store.select(p.site_id);
        this.centerOn(f);
      });
      this.tbody.append(tr);
    }
  }

  private centerOn(f: SiteFeature): void {
    const ring = f.geometry.coordinates[0];
    if (ring === undefined || ring.length === 0) return;
    let sx = 0;
    let sy = 0;
    for (const pt of ring) {
      sx += pt[0] ?? 0;
      sy += pt[1] ?? 0;
    }
    this.state.center = { x: sx / ring.length, y: sy / ring.length };
    this.syncFragment();
    this.scheduleRender();
  }

  private renderConsole(): void {
    for (const key of Object.keys(this.paramInputs) as (keyof OverlayParams)[]) {
      const input = this.paramInputs[key];
      if (document.activeElement !== input) {
        input.value = String(this.consolePanel.pending[key]);
      }
      input.disabled = this.consolePanel.applying;
    }
    this.historyList.textContent = "";
    for (const entry of this.consolePanel.history) {
      this.historyList.append(
        el(
          "li",
          undefined,
          `buffer ${entry.params.buffer_m} m → ${entry.count} candidates`,
        ),
      );
    }
    const bad = this.consolePanel.monotonicityViolation();
    this.monotone.textContent =
      bad === null
        ? "wider buffer never adds candidates: holds"
        : `wider buffer added candidates: ${bad.a.params.buffer_m} m → ` +
          `${bad.a.count}, ${bad.b.params.buffer_m} m → ${bad.b.count}`;
    this.monotone.classList.toggle("violated", bad !== null);
  }

  private async runOverlay(button: HTMLButtonElement): Promise<void> {
    button.disabled = true;
    this.jobLabel.textContent = "running…";
    try {
      const job = await this.api.runSteps(this.project.project_id, [
        "overlay",
      ]);
      let info = job;
      while (info.state === "queued" || info.state === "running") {
        await new Promise((r) => setTimeout(r, 400));
        info = await this.api.getJob(info.job_id);
      }
      if (info.state === "failed") {
        // previous candidate list stays as-is
        this.jobLabel.textContent = "failed";
        this.toast(`overlay failed: ${info.error ?? "unknown error"}`);
        return;
      }
      this.jobLabel.textContent = "done";
      this.project = await this.api.getProject(this.project.project_id);
      for (const layer of this.project.layers) {
        if (!this.state.visibleLayers.has(layer.layer_id)) {
          this.state.visibleLayers.set(
            layer.layer_id,
            DEFAULT_OPACITY[layer.role] ?? 1,
          );
        }
      }
      this.buildLayerControls();
      await this.store.refetch();
    } catch (err) {
      this.jobLabel.textContent = "failed";
      const msg = err instanceof ApiError ? err.message : "request failed";
      this.toast(`overlay failed: ${msg}`);
    } finally {
      button.disabled = false;
    }
  }

  private toastTimer: ReturnType<typeof setTimeout> | null = null;

  private toast(message: string): void {
    this.toastBox.textContent = message;
    this.toastBox.classList.remove("hidden");
    if (this.toastTimer !== null) clearTimeout(this.toastTimer);
    this.toastTimer = setTimeout(() => {
      this.toastBox.classList.add("hidden");
    }, 4000);
  }

  setConnection(up: boolean): void {
    this.banner.classList.toggle("hidden", up);
  }

  loadCandidates(features: SiteFeature[]): void {
    this.store.load(features);
  }
}

/** Entry point: pick the project from ?project=, else the first one. */
export async function bootstrap(
  root: HTMLElement,
  baseUrl = "",
): Promise<App> {
  let app: App | null = null;
  const api = new ApiClient(baseUrl, {
    onConnection: (up) => app?.setConnection(up),
  });
  const wanted = new URLSearchParams(location.search).get("project");
  let project: ProjectMeta;
  if (wanted !== null) {
    project = await api.getProject(wanted);
  } else {
    const all = await api.listProjects();
    const first = all[0];
    if (first === undefined) {
      root.textContent = "no projects on the server yet";
      throw new Error("no projects");
    }
    project = await api.getProject(first.project_id);
  }
  app = new App(root, api, project);
  const fc = await api.getCandidates(project.project_id);
  app.loadCandidates(fc.features);
  return app;
}
