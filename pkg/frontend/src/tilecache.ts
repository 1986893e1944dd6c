/**
 * Viewport tile enumeration and a fetch cache with in-flight de-duplication:
 * each tile address is requested at most once, no matter how often the
 * viewport crosses back over it.
 */

import { ApiClient } from "./api.js";
import { decodeTile, TileLayer } from "./mvt.js";

export interface TileAddress {
  z: number;
  x: number;
  y: number;
}

export function tileKey(t: TileAddress): string {
  return `${t.z}/${t.x}/${t.y}`;
}

/** Slippy tile containing a lon/lat point. */
export function lonlatToTile(lon: number, lat: number, z: number): TileAddress {
  const n = 2 ** z;
  const x = Math.min(n - 1, Math.max(0, Math.floor(((lon + 180) / 360) * n)));
  const phi = (lat * Math.PI) / 180;
  const yRaw = ((1 - Math.asinh(Math.tan(phi)) / Math.PI) / 2) * n;
  const y = Math.min(n - 1, Math.max(0, Math.floor(yRaw)));
  return { z, x, y };
}

/** All tiles covering a lon/lat bounding box at one zoom. */
export function tilesForBbox(
  bbox: [number, number, number, number],
  z: number,
): TileAddress[] {
  const [lon0, lat0, lon1, lat1] = bbox;
  const nw = lonlatToTile(lon0, lat1, z);
  const se = lonlatToTile(lon1, lat0, z);
  const out: TileAddress[] = [];
  for (let x = nw.x; x <= se.x; x++) {
    for (let y = nw.y; y <= se.y; y++) {
      out.push({ z, x, y });
    }
  }
  return out;
}

export class TileCache {
  private readonly inflight = new Map<string, Promise<TileLayer[]>>();
  private fetchCount = 0;

  constructor(private readonly api: ApiClient) {}

  /** Number of HTTP tile requests actually issued. */
  get requestCount(): number {
    return this.fetchCount;
  }

  /** Fetch and decode a tile, reusing any previous or in-flight request. */
  get(t: TileAddress): Promise<TileLayer[]> {
    const key = tileKey(t);
    let pending = this.inflight.get(key);
    if (!pending) {
      this.fetchCount += 1;
      pending = this.api.fetchTile(t.z, t.x, t.y).then(decodeTile);
      // Failed fetches are evicted so a later pan can retry the tile.
      pending.catch(() => this.inflight.delete(key));
      this.inflight.set(key, pending);
    }
    return pending;
  }

  getMany(tiles: TileAddress[]): Promise<TileLayer[][]> {
    return Promise.all(tiles.map((t) => this.get(t)));
  }
}
