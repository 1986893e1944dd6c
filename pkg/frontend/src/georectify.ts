/**
 * Control-point georectification view.
 *
 * Clicking matching spots on the scan and the reference map appends a
 * pair; once enough pairs exist for the chosen transform the server fits
 * it and the view shows per-pair residuals, the RMS, and the warped
 * overlay at adjustable opacity. Pairs can be deleted; the pair list
 * exports as the pipeline's control-points CSV.
 */

import { ApiClient, ControlPair, FitResult, pairsToCsv } from "./api.js";

const ARITY: Record<string, number> = { affine: 3, poly2: 6, poly3: 10 };

export class GeorectifyView {
  readonly pairList: HTMLOListElement;
  readonly rmsLabel: HTMLElement;
  readonly residualTable: HTMLTableElement;
  readonly errorBox: HTMLElement;
  readonly overlay: HTMLImageElement;
  readonly opacitySlider: HTMLInputElement;

  private pairs: ControlPair[] = [];
  private fit: FitResult | null = null;
  private pending: Promise<void> = Promise.resolve();

  constructor(
    readonly container: HTMLElement,
    private readonly api: ApiClient,
    readonly kind: string = "affine",
  ) {
    if (!(kind in ARITY)) throw new Error(`unknown transform kind ${kind}`);
    const doc = container.ownerDocument;
    this.pairList = doc.createElement("ol");
    this.pairList.className = "pair-list";
    this.rmsLabel = doc.createElement("div");
    this.rmsLabel.className = "rms";
    this.rmsLabel.hidden = true;
    this.residualTable = doc.createElement("table");
    this.residualTable.className = "residuals";
    this.residualTable.hidden = true;
    this.errorBox = doc.createElement("div");
    this.errorBox.className = "fit-error";
    this.errorBox.hidden = true;
    this.overlay = doc.createElement("img");
    this.overlay.className = "overlay";
    this.overlay.hidden = true;
    this.opacitySlider = doc.createElement("input");
    this.opacitySlider.type = "range";
    this.opacitySlider.min = "0";
    this.opacitySlider.max = "100";
    this.opacitySlider.value = "60";
    this.opacitySlider.addEventListener("input", () => {
      this.overlay.style.opacity = String(Number(this.opacitySlider.value) / 100);
    });
    container.append(
      this.pairList,
      this.residualTable,
      this.rmsLabel,
      this.errorBox,
      this.overlay,
      this.opacitySlider,
    );
  }

  get arity(): number {
    return ARITY[this.kind];
  }

  get currentPairs(): readonly ControlPair[] {
    return this.pairs;
  }

  get currentFit(): FitResult | null {
    return this.fit;
  }

  /** Resolves when any in-flight fit request has settled. */
  whenIdle(): Promise<void> {
    return this.pending;
  }

  loadImage(src: string): void {
    this.overlay.src = src;
  }

  addPair(pair: ControlPair): void {
    this.pairs = [...this.pairs, pair];
    this.renderPairs();
    this.maybeFit();
  }

  deletePair(index: number): void {
    if (index < 0 || index >= this.pairs.length) return;
    this.pairs = this.pairs.filter((_, i) => i !== index);
    this.renderPairs();
    this.maybeFit();
  }

  exportCsv(): string {
    return pairsToCsv(this.pairs);
  }

  setOpacity(fraction: number): void {
    this.opacitySlider.value = String(Math.round(fraction * 100));
    this.overlay.style.opacity = String(fraction);
  }

  private maybeFit(): void {
    if (this.pairs.length < this.arity) {
      this.clearFit();
      return;
    }
    const snapshot = this.pairs;
    this.pending = this.api
      .fitTransform(snapshot, this.kind)
      .then((fit) => {
        if (this.pairs !== snapshot) return; // superseded by later edit
        this.fit = fit;
        this.errorBox.hidden = true;
        this.renderFit(fit);
      })
      .catch((err: unknown) => {
        if (this.pairs !== snapshot) return;
        // Degenerate configurations are shown inline; editing continues.
        this.clearFit();
        this.errorBox.textContent = err instanceof Error ? err.message : String(err);
        this.errorBox.hidden = false;
      });
  }

  private clearFit(): void {
    this.fit = null;
    this.rmsLabel.hidden = true;
    this.rmsLabel.textContent = "";
    this.residualTable.hidden = true;
    this.residualTable.textContent = "";
    this.overlay.hidden = true;
  }

  private renderPairs(): void {
    const doc = this.container.ownerDocument;
    this.pairList.textContent = "";
    this.pairs.forEach((p, i) => {
      const li = doc.createElement("li");
      li.textContent = `(${p.px}, ${p.py}) -> (${p.lon}, ${p.lat})`;
      const del = doc.createElement("button");
      del.textContent = "delete";
      del.addEventListener("click", () => this.deletePair(i));
      li.appendChild(del);
      this.pairList.appendChild(li);
    });
  }

  private renderFit(fit: FitResult): void {
    const doc = this.container.ownerDocument;
    this.rmsLabel.textContent = `RMS ${fit.rms.toFixed(3)}`;
    this.rmsLabel.hidden = false;
    this.residualTable.textContent = "";
    fit.residuals.forEach((r, i) => {
      const row = doc.createElement("tr");
      const idx = doc.createElement("td");
      idx.textContent = String(i);
      const val = doc.createElement("td");
      val.textContent = r.toFixed(3);
      row.append(idx, val);
      this.residualTable.appendChild(row);
    });
    this.residualTable.hidden = false;
    this.overlay.hidden = false;
    this.overlay.style.opacity = String(Number(this.opacitySlider.value) / 100);
  }
}
