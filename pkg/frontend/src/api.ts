/**
 * Typed client for the map service HTTP API.
 *
 * The fetch implementation is injected so tests can serve recorded
 * responses; production code passes the browser's fetch.
 */

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export interface ControlPair {
  px: number;
  py: number;
  lon: number;
  lat: number;
}

export interface FitResult {
  transform: {
    kind: string;
    degree: number;
    coeffs_x: number[];
    coeffs_y: number[];
  };
  residuals: number[];
  rms: number;
}

export interface FeatureDocument {
  type: "Feature";
  id: number;
  geometry: { type: string; coordinates: unknown };
  properties: Record<string, unknown>;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
  }
}

export class ApiClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: FetchLike,
  ) {}

  tileUrl(z: number, x: number, y: number): string {
    return `${this.baseUrl}/tiles/${z}/${x}/${y}.mvt`;
  }

  modelUrl(modelId: number): string {
    return `${this.baseUrl}/models/${modelId}`;
  }

  async fetchTile(z: number, x: number, y: number): Promise<Uint8Array> {
    const resp = await this.fetchImpl(this.tileUrl(z, x, y));
    if (!resp.ok) {
      throw new ApiError(resp.status, `tile ${z}/${x}/${y}: ${resp.status}`);
    }
    return new Uint8Array(await resp.arrayBuffer());
  }

  async fetchFeatures(
    bbox?: [number, number, number, number],
    time?: string,
  ): Promise<FeatureDocument[]> {
    const params = new URLSearchParams();
    if (bbox) params.set("bbox", bbox.join(","));
    if (time !== undefined) params.set("time", time);
    const qs = params.toString();
    const resp = await this.fetchImpl(
      `${this.baseUrl}/features${qs ? "?" + qs : ""}`,
    );
    if (!resp.ok) throw new ApiError(resp.status, `features: ${resp.status}`);
    const doc = (await resp.json()) as { features: FeatureDocument[] };
    return doc.features;
  }

  /** Server-side fit keeps residual math identical to the pipeline's. */
  async fitTransform(
    pairs: ControlPair[],
    kind = "affine",
  ): Promise<FitResult> {
    const resp = await this.fetchImpl(`${this.baseUrl}/warp/fit`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ pairs, kind }),
    });
    if (!resp.ok) {
      let detail = String(resp.status);
      try {
        const body = (await resp.json()) as { detail?: unknown };
        if (body.detail) detail = JSON.stringify(body.detail);
      } catch {
        // keep the status text
      }
      throw new ApiError(resp.status, `fit failed: ${detail}`);
    }
    return (await resp.json()) as FitResult;
  }
}

/** Control points CSV in the interchange format the pipeline reads. */
export function pairsToCsv(pairs: ControlPair[]): string {
  const lines = ["px,py,lon,lat"];
  for (const p of pairs) {
    lines.push(`${p.px},${p.py},${p.lon},${p.lat}`);
  }
  return lines.join("\n") + "\n";
}
