/**
 * Browser entry point: wires the two views against a backend origin.
 *
 * The backend origin defaults to the page origin; override with
 * ?api=http://host:port during development.
 */

import { ApiClient } from "./api.js";
import { GeorectifyView } from "./georectify.js";
import { MapView } from "./mapview.js";

function backendOrigin(): string {
  const param = new URLSearchParams(window.location.search).get("api");
  return param ?? window.location.origin;
}

export function boot(doc: Document = document): void {
  const api = new ApiClient(backendOrigin(), (url, init) => fetch(url, init));

  const mapRoot = doc.getElementById("map");
  if (mapRoot) {
    const view = new MapView(mapRoot, api, {
      zoom: 15,
      minYear: 1900,
      maxYear: 2000,
      initialYear: 1925,
    });
    void view.setViewport([-73.9865, 40.7472, -73.9795, 40.7507]);
  }

  const warpRoot = doc.getElementById("warper");
  if (warpRoot) {
    const view = new GeorectifyView(warpRoot, api);
    const picker = doc.getElementById("scan-file") as HTMLInputElement | null;
    picker?.addEventListener("change", () => {
      const file = picker.files?.[0];
      if (file) view.loadImage(URL.createObjectURL(file));
    });
    const exporter = doc.getElementById("export-csv");
    exporter?.addEventListener("click", () => {
      const blob = new Blob([view.exportCsv()], { type: "text/csv" });
      const a = doc.createElement("a");
      a.href = URL.createObjectURL(blob);
      a.download = "gcp.csv";
      a.click();
      URL.revokeObjectURL(a.href);
    });
  }
}

if (typeof window !== "undefined" && typeof document !== "undefined") {
  boot();
}
