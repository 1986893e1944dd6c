/**
 * Time-slider map view.
 *
 * Tiles are fetched once per viewport without a time parameter and decoded
 * in the browser; moving the slider only re-filters the already decoded
 * features by their half-open [start_date, end_date) span, so no tile is
 * ever refetched for a time change.
 */

import { ApiClient } from "./api.js";
import { TileFeature } from "./mvt.js";
import { aliveAt, yearToDay } from "./temporal.js";
import { TileAddress, TileCache, tileKey, tilesForBbox } from "./tilecache.js";

const SVG_NS = "http://www.w3.org/2000/svg";

interface PlacedFeature {
  feature: TileFeature;
  tile: TileAddress;
  layer: string;
}

export interface MapViewOptions {
  zoom?: number;
  minYear?: number;
  maxYear?: number;
  initialYear?: number;
}

export class MapView {
  readonly cache: TileCache;
  readonly svg: SVGSVGElement;
  readonly slider: HTMLInputElement;
  readonly yearLabel: HTMLElement;
  readonly detail: HTMLElement;
  readonly toast: HTMLElement;

  private readonly featuresById = new Map<number, PlacedFeature>();
  private year: number;
  private readonly zoom: number;
  private extent = 4096;
  private viewTiles: TileAddress[] = [];

  constructor(
    readonly container: HTMLElement,
    api: ApiClient,
    opts: MapViewOptions = {},
  ) {
    this.cache = new TileCache(api);
    this.zoom = opts.zoom ?? 15;
    const min = opts.minYear ?? 1900;
    const max = opts.maxYear ?? 2000;
    this.year = Math.min(max, Math.max(min, opts.initialYear ?? min));

    const doc = container.ownerDocument;
    this.slider = doc.createElement("input");
    this.slider.type = "range";
    this.slider.min = String(min);
    this.slider.max = String(max);
    this.slider.value = String(this.year);
    this.slider.className = "time-slider";
    this.slider.addEventListener("input", () => {
      this.setYear(Number(this.slider.value));
    });

    this.yearLabel = doc.createElement("span");
    this.yearLabel.className = "year-label";
    this.yearLabel.textContent = String(this.year);

    this.svg = doc.createElementNS(SVG_NS, "svg") as SVGSVGElement;
    this.svg.setAttribute("class", "map-canvas");

    this.detail = doc.createElement("div");
    this.detail.className = "feature-detail";
    this.detail.hidden = true;

    this.toast = doc.createElement("div");
    this.toast.className = "toast";
    this.toast.hidden = true;

    container.append(this.slider, this.yearLabel, this.svg, this.detail, this.toast);
  }

  get currentYear(): number {
    return this.year;
  }

  /** Feature ids currently drawn (after the temporal filter). */
  visibleFeatureIds(): number[] {
    const out: number[] = [];
    this.svg
      .querySelectorAll("[data-feature-id]")
      .forEach((el) => out.push(Number(el.getAttribute("data-feature-id"))));
    return out.sort((a, b) => a - b);
  }

  /** Fetch (with de-duplication) every tile covering the bbox, then draw. */
  async setViewport(bbox: [number, number, number, number]): Promise<void> {
    this.viewTiles = tilesForBbox(bbox, this.zoom);
    const results = await Promise.allSettled(
      this.viewTiles.map(async (t) => ({ t, layers: await this.cache.get(t) })),
    );
    let failures = 0;
    for (const res of results) {
      if (res.status === "rejected") {
        failures += 1;
        continue;
      }
      for (const layer of res.value.layers) {
        this.extent = layer.extent;
        for (const f of res.value.layers.flatMap((l) => l.features)) {
          if (!this.featuresById.has(f.id)) {
            this.featuresById.set(f.id, {
              feature: f,
              tile: res.value.t,
              layer: layer.name,
            });
          }
        }
      }
    }
    if (failures > 0) {
      // Non-blocking notice; whatever decoded earlier stays on screen.
      this.toast.textContent = `${failures} tile request(s) failed`;
      this.toast.hidden = false;
    } else {
      this.toast.hidden = true;
    }
    this.render();
  }

  setYear(year: number): void {
    this.year = year;
    this.slider.value = String(year);
    this.yearLabel.textContent = String(year);
    this.render();
  }

  private render(): void {
    const day = yearToDay(this.year);
    while (this.svg.firstChild) this.svg.removeChild(this.svg.firstChild);
    if (this.viewTiles.length) {
      const xs = this.viewTiles.map((t) => t.x);
      const ys = this.viewTiles.map((t) => t.y);
      const x0 = Math.min(...xs) * this.extent;
      const y0 = Math.min(...ys) * this.extent;
      const w = (Math.max(...xs) - Math.min(...xs) + 1) * this.extent;
      const h = (Math.max(...ys) - Math.min(...ys) + 1) * this.extent;
      this.svg.setAttribute("viewBox", `${x0} ${y0} ${w} ${h}`);
    }
    const inView = new Set(this.viewTiles.map(tileKey));
    for (const placed of this.featuresById.values()) {
      if (!inView.has(tileKey(placed.tile))) continue;
      if (!aliveAt(placed.feature.tags, day)) continue;
      this.svg.appendChild(this.renderFeature(placed));
    }
  }

  private renderFeature(placed: PlacedFeature): Element {
    const doc = this.container.ownerDocument;
    const { feature, tile } = placed;
    const offX = tile.x * this.extent;
    const offY = tile.y * this.extent;
    const d = feature.paths
      .map((path) => {
        const cmds = path
          .map(([x, y], i) => `${i === 0 ? "M" : "L"}${offX + x} ${offY + y}`)
          .join(" ");
        return feature.geomType === 3 ? `${cmds} Z` : cmds;
      })
      .join(" ");
    const el = doc.createElementNS(SVG_NS, "path");
    el.setAttribute("d", d);
    el.setAttribute("data-feature-id", String(feature.id));
    el.setAttribute("class", `feature ${placed.layer}`);
    el.addEventListener("click", () => this.showDetail(feature));
    return el;
  }

  private showDetail(feature: TileFeature): void {
    const doc = this.container.ownerDocument;
    this.detail.textContent = "";
    this.detail.hidden = false;
    const list = doc.createElement("dl");
    for (const [k, v] of Object.entries(feature.tags)) {
      const dt = doc.createElement("dt");
      dt.textContent = k;
      const dd = doc.createElement("dd");
      dd.textContent = String(v);
      list.append(dt, dd);
    }
    this.detail.appendChild(list);
    const modelId = feature.tags["model_id"];
    if (typeof modelId === "number") {
      const link = doc.createElement("a");
      link.href = `/models/${modelId}`;
      link.textContent = `3D model ${modelId}`;
      link.className = "model-link";
      this.detail.appendChild(link);
    }
  }
}
