"""Record real backend responses as test fixtures for the web UI.

Boots the chronomap HTTP service in-process with the shared demo dataset,
then snapshots the responses the UI consumes: raw vector tile bytes, the
feature documents per year, and transform-fit results. Run from the
frontend directory:

    python3 scripts/generate_fixtures.py
"""

import base64
import json
import os
import sys

HERE = os.path.dirname(os.path.abspath(__file__))
FIXTURES = os.path.join(HERE, "..", "tests", "fixtures")
sys.path.insert(0, os.path.join(HERE, "..", "..", "tests"))

from fastapi.testclient import TestClient

import demo_data
from chronomap import mvt
from chronomap.geo import GeoPoint, TileAddress, lonlat_to_tile
from chronomap.server import ServiceConfig, create_app
from chronomap.store import TemporalStore


def viewport_tiles(z=15):
    lon0, lat0, lon1, lat1 = demo_data.demo_bbox()
    t0 = lonlat_to_tile(GeoPoint(lon0, lat1), z)
    t1 = lonlat_to_tile(GeoPoint(lon1, lat0), z)
    return [TileAddress(z, x, y)
            for x in range(t0.x, t1.x + 1)
            for y in range(t0.y, t1.y + 1)]


def main():
    os.makedirs(FIXTURES, exist_ok=True)
    store = TemporalStore()
    client = TestClient(create_app(ServiceConfig(data_dir=FIXTURES), store=store))
    resp = client.post("/features", json=demo_data.demo_features())
    resp.raise_for_status()

    tiles = []
    for t in viewport_tiles():
        r = client.get(f"/tiles/{t.z}/{t.x}/{t.y}.mvt")
        r.raise_for_status()
        decoded = mvt.decode_tile(r.content)
        tiles.append({
            "z": t.z, "x": t.x, "y": t.y,
            "bytes_b64": base64.b64encode(r.content).decode("ascii"),
            "feature_count": sum(len(l.features) for l in decoded),
            "feature_ids": sorted(f.id for l in decoded for f in l.features),
            "layers": sorted(l.name for l in decoded),
        })
    with open(os.path.join(FIXTURES, "tiles.json"), "w") as fh:
        json.dump({"extent": 4096, "tiles": tiles}, fh, indent=1, sort_keys=True)

    years = {}
    for year in ("1905", "1925", "1955"):
        r = client.get("/features", params={"time": year})
        r.raise_for_status()
        years[year] = r.json()
    r = client.get("/features")
    r.raise_for_status()
    with open(os.path.join(FIXTURES, "features.json"), "w") as fh:
        json.dump({"all": r.json(), "by_year": years}, fh, indent=1,
                  sort_keys=True)

    # Translation-consistent control points (zero residual fit) and the
    # same set plus one outlier, as the server answers them.
    base = [
        {"px": 0.0, "py": 0.0, "lon": -73.9860, "lat": 40.7490},
        {"px": 200.0, "py": 0.0, "lon": -73.9840, "lat": 40.7490},
        {"px": 0.0, "py": 200.0, "lon": -73.9860, "lat": 40.7474},
    ]
    outlier = base + [{"px": 100.0, "py": 100.0, "lon": -73.9790, "lat": 40.7490}]
    fits = {}
    for name, pairs in (("exact", base), ("outlier", outlier)):
        r = client.post("/warp/fit", json={"pairs": pairs, "kind": "affine"})
        r.raise_for_status()
        fits[name] = {"pairs": pairs, "response": r.json()}
    with open(os.path.join(FIXTURES, "warpfit.json"), "w") as fh:
        json.dump(fits, fh, indent=1, sort_keys=True)

    log = os.path.join(FIXTURES, "features.jsonl")
    if os.path.exists(log):
        os.remove(log)
    print(f"wrote fixtures to {os.path.abspath(FIXTURES)}")


if __name__ == "__main__":
    main()
