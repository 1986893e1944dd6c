import { beforeEach, describe, expect, it } from "vitest";
import { ApiClient, pairsToCsv } from "../src/api.js";
import { GeorectifyView } from "../src/georectify.js";
import { fixtureFetch, warpFitFixture } from "./helpers.js";

function makeView(): GeorectifyView {
  const api = new ApiClient("http://backend.test", fixtureFetch());
  const container = document.createElement("div");
  document.body.appendChild(container);
  return new GeorectifyView(container, api, "affine");
}

function displayedRms(view: GeorectifyView): number {
  const text = view.rmsLabel.textContent ?? "";
  const m = /^RMS (\d+(?:\.\d+)?)$/.exec(text);
  expect(m, `unexpected RMS label "${text}"`).not.toBeNull();
  return Number(m![1]);
}

beforeEach(() => {
  document.body.innerHTML = "";
});

describe("control point fitting", () => {
  it("stays unfit below the transform's minimum pair count", async () => {
    const view = makeView();
    expect(view.arity).toBe(3);
    for (const pair of warpFitFixture.exact.pairs.slice(0, 2)) {
      view.addPair(pair);
    }
    await view.whenIdle();
    expect(view.currentFit).toBeNull();
    expect(view.rmsLabel.hidden).toBe(true);
    expect(view.residualTable.hidden).toBe(true);
  });

  it("shows RMS 0.000 for three consistent pairs", async () => {
    const view = makeView();
    for (const pair of warpFitFixture.exact.pairs) view.addPair(pair);
    await view.whenIdle();
    expect(view.rmsLabel.hidden).toBe(false);
    expect(view.rmsLabel.textContent).toBe("RMS 0.000");
    expect(view.residualTable.hidden).toBe(false);
    expect(view.residualTable.querySelectorAll("tr").length).toBe(3);
    expect(view.currentFit?.transform.kind).toBe("affine");
  });

  it("strictly increases the displayed RMS when an outlier is added", async () => {
    const view = makeView();
    for (const pair of warpFitFixture.exact.pairs) view.addPair(pair);
    await view.whenIdle();
    const before = displayedRms(view);
    const outlier = warpFitFixture.outlier.pairs[
      warpFitFixture.outlier.pairs.length - 1
    ];
    view.addPair(outlier);
    await view.whenIdle();
    const after = displayedRms(view);
    expect(after).toBeGreaterThan(before);
    expect(view.residualTable.querySelectorAll("tr").length).toBe(4);
  });

  it("refits after a delete and clears everything below the arity", async () => {
    const view = makeView();
    for (const pair of warpFitFixture.outlier.pairs) view.addPair(pair);
    await view.whenIdle();
    expect(displayedRms(view)).toBeGreaterThan(0);

    view.deletePair(3); // drop the outlier: back to the consistent triple
    await view.whenIdle();
    expect(view.rmsLabel.textContent).toBe("RMS 0.000");

    view.deletePair(0); // below the affine arity: no fit to show
    await view.whenIdle();
    expect(view.currentFit).toBeNull();
    expect(view.rmsLabel.hidden).toBe(true);
    expect(view.residualTable.hidden).toBe(true);
    expect(view.overlay.hidden).toBe(true);
  });

  it("surfaces a fit failure inline and keeps the pairs editable", async () => {
    const api = new ApiClient(
      "http://backend.test",
      async () =>
        new Response(JSON.stringify({ detail: "degenerate control points" }), {
          status: 422,
          headers: { "Content-Type": "application/json" },
        }),
    );
    const container = document.createElement("div");
    document.body.appendChild(container);
    const view = new GeorectifyView(container, api, "affine");
    for (const pair of warpFitFixture.exact.pairs) view.addPair(pair);
    await view.whenIdle();
    expect(view.currentFit).toBeNull();
    expect(view.errorBox.hidden).toBe(false);
    expect(view.errorBox.textContent).toContain("degenerate");
    expect(view.currentPairs.length).toBe(3);
  });

  it("ignores a fit response that a later edit superseded", async () => {
    let release: (() => void) | null = null;
    const gate = new Promise<void>((resolve) => {
      release = resolve;
    });
    const slowFetch = async (_url: string, init?: RequestInit) => {
      const { pairs } = JSON.parse(String(init?.body)) as {
        pairs: unknown[];
      };
      if (pairs.length === 3) await gate; // first fit finishes last
      const match =
        pairs.length === 3 ? warpFitFixture.exact : warpFitFixture.outlier;
      return new Response(JSON.stringify(match.response), {
        status: 200,
        headers: { "Content-Type": "application/json" },
      });
    };
    const container = document.createElement("div");
    document.body.appendChild(container);
    const view = new GeorectifyView(
      container,
      new ApiClient("http://backend.test", slowFetch),
      "affine",
    );
    for (const pair of warpFitFixture.exact.pairs) view.addPair(pair);
    const stale = view.whenIdle();
    view.addPair(warpFitFixture.outlier.pairs[3]);
    await view.whenIdle();
    const after = displayedRms(view);
    release!();
    await stale;
    expect(displayedRms(view)).toBe(after); // stale exact fit was dropped
  });
});

describe("control point export", () => {
  it("writes the pipeline's CSV header and one row per pair", () => {
    const view = makeView();
    for (const pair of warpFitFixture.exact.pairs) view.addPair(pair);
    const csv = view.exportCsv();
    const lines = csv.trimEnd().split("\n");
    expect(lines[0]).toBe("px,py,lon,lat");
    expect(lines.length).toBe(4);
    expect(lines[1]).toBe("0,0,-73.986,40.749");
    expect(csv).toBe(pairsToCsv([...view.currentPairs]));
  });
});
