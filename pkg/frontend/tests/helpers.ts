/** Shared fixture loading and a fetch stub backed by recorded responses. */

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import type { ControlPair, FetchLike, FitResult } from "../src/api.js";

const FIXTURES = join(dirname(fileURLToPath(import.meta.url)), "fixtures");

export interface TileFixture {
  z: number;
  x: number;
  y: number;
  bytes_b64: string;
  feature_count: number;
  feature_ids: number[];
  layers: string[];
}

export interface TilesFixture {
  extent: number;
  tiles: TileFixture[];
}

export interface FeatureFixtureDoc {
  id: number;
  properties: Record<string, unknown>;
}

export interface FeaturesFixture {
  all: { features: FeatureFixtureDoc[] };
  by_year: Record<string, { features: FeatureFixtureDoc[] }>;
}

export interface WarpFitCase {
  pairs: ControlPair[];
  response: FitResult;
}

export interface WarpFitFixture {
  exact: WarpFitCase;
  outlier: WarpFitCase;
}

function loadJson<T>(name: string): T {
  return JSON.parse(readFileSync(join(FIXTURES, name), "utf-8")) as T;
}

export const tilesFixture = loadJson<TilesFixture>("tiles.json");
export const featuresFixture = loadJson<FeaturesFixture>("features.json");
export const warpFitFixture = loadJson<WarpFitFixture>("warpfit.json");

export function tileBytes(t: TileFixture): Uint8Array {
  return new Uint8Array(Buffer.from(t.bytes_b64, "base64"));
}

/** ids recorded for one slider year, sorted ascending. */
export function yearIds(year: number): number[] {
  return featuresFixture.by_year[String(year)].features
    .map((f) => f.id)
    .sort((a, b) => a - b);
}

/**
 * Fetch stub serving the recorded tiles plus the recorded /warp/fit
 * responses (matched by pair count). Unknown tiles 404.
 */
export function fixtureFetch(): FetchLike {
  const byKey = new Map<string, Uint8Array>();
  for (const t of tilesFixture.tiles) {
    byKey.set(`${t.z}/${t.x}/${t.y}`, tileBytes(t));
  }
  return async (url, init) => {
    const path = new URL(url, "http://backend.test").pathname;
    const tileMatch = /^\/tiles\/(\d+)\/(\d+)\/(\d+)\.mvt$/.exec(path);
    if (tileMatch) {
      const body = byKey.get(`${tileMatch[1]}/${tileMatch[2]}/${tileMatch[3]}`);
      if (!body) return new Response("not found", { status: 404 });
      return new Response(body.slice().buffer, {
        status: 200,
        headers: { "Content-Type": "application/vnd.mapbox-vector-tile" },
      });
    }
    if (path === "/warp/fit" && init?.method === "POST") {
      const body = JSON.parse(String(init.body)) as { pairs: ControlPair[] };
      const match = [warpFitFixture.exact, warpFitFixture.outlier].find(
        (c) => c.pairs.length === body.pairs.length,
      );
      if (!match) {
        return new Response(JSON.stringify({ detail: "degenerate pairs" }), {
          status: 422,
          headers: { "Content-Type": "application/json" },
        });
      }
      return new Response(JSON.stringify(match.response), {
        status: 200,
        headers: { "Content-Type": "application/json" },
      });
    }
    return new Response("not found", { status: 404 });
  };
}
