"""HTTP service: vector tiles, feature ingestion and query, transform
fitting, and a content-addressed 3D model repository.

All reads run against immutable store snapshots; ingestion is serialized by
the store's writer lock. Tiles are built per request with a small in-memory
cache that is keyed by snapshot version, so it invalidates itself on writes.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import threading
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import tomli
from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse
from fastapi.middleware.cors import CORSMiddleware

from .errors import ArityError, DegeneracyError, NotFoundError, ValidationError
from .geo import (
    MercatorPoint,
    TileAddress,
    WORLD_EXTENT,
    mercator_to_lonlat,
    parse_date,
    tile_mercator_bounds,
)
from .georectify import ControlPointPair, fit_transform, residual_report
from .geo import GeoPoint
from .store import TemporalStore, parse_feature_document
from .tiling import DEFAULT_BUFFER, DEFAULT_EXTENT, build_tile

MVT_MEDIA_TYPE = "application/vnd.mapbox-vector-tile"
GLB_MEDIA_TYPE = "model/gltf-binary"

#: Largest accepted model upload, in bytes.
DEFAULT_MODEL_CAP = 32 * 1024 * 1024

_TILE_CACHE_SIZE = 256


@dataclass(frozen=True)
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8080
    data_dir: str = "."
    tile_extent: int = DEFAULT_EXTENT
    tile_buffer: int = DEFAULT_BUFFER
    default_transform_kind: str = "affine"
    cors_origins: Tuple[str, ...] = ()
    max_model_bytes: int = DEFAULT_MODEL_CAP

    def __post_init__(self):
        if not 1 <= self.port <= 65535:
            raise ValidationError(f"port must be in [1, 65535], got {self.port}")
        if self.tile_extent < 1 or self.tile_buffer < 0:
            raise ValidationError("tile extent/buffer out of range")
        if self.max_model_bytes < 1:
            raise ValidationError("max_model_bytes must be positive")


_CONFIG_KEYS = {
    "host": str,
    "port": int,
    "data_dir": str,
    "tile_extent": int,
    "tile_buffer": int,
    "default_transform_kind": str,
    "cors_origins": tuple,
    "max_model_bytes": int,
}


def load_config(path: Optional[str] = None,
                env: Optional[Dict[str, str]] = None,
                overrides: Optional[Dict[str, object]] = None) -> ServiceConfig:
    """Assemble configuration; precedence: overrides > env > file > defaults.

    The file may be TOML or JSON (decided by extension, falling back to
    trying both). Recognized environment variables: TA_PORT, TA_DATA_DIR.
    """
    merged: Dict[str, object] = {}
    if path is not None:
        with open(path, "rb") as fh:
            raw = fh.read()
        if str(path).endswith(".json"):
            doc = json.loads(raw.decode("utf-8"))
        elif str(path).endswith(".toml"):
            doc = tomli.loads(raw.decode("utf-8"))
        else:
            try:
                doc = json.loads(raw.decode("utf-8"))
            except json.JSONDecodeError:
                try:
                    doc = tomli.loads(raw.decode("utf-8"))
                except tomli.TOMLDecodeError as exc:
                    raise ValidationError(
                        f"config file {path} is neither JSON nor TOML: {exc}"
                    ) from None
        if not isinstance(doc, dict):
            raise ValidationError(f"config file {path} must hold a table/object")
        for key, value in doc.items():
            if key not in _CONFIG_KEYS:
                raise ValidationError(f"unknown config key {key!r}")
            merged[key] = value
    env = os.environ if env is None else env
    if env.get("TA_PORT"):
        try:
            merged["port"] = int(env["TA_PORT"])
        except ValueError:
            raise ValidationError(f"TA_PORT is not an integer: {env['TA_PORT']!r}")
    if env.get("TA_DATA_DIR"):
        merged["data_dir"] = env["TA_DATA_DIR"]
    for key, value in (overrides or {}).items():
        if value is not None:
            merged[key] = value
    if "cors_origins" in merged:
        merged["cors_origins"] = tuple(merged["cors_origins"])
    for key in ("port", "tile_extent", "tile_buffer", "max_model_bytes"):
        if key in merged:
            merged[key] = int(merged[key])
    return ServiceConfig(**merged)


def validate_glb(blob: bytes) -> None:
    """Reject anything that is not a structurally sound GLB container."""
    if len(blob) < 20:
        raise ValidationError("too short for a GLB container")
    magic, version, length = struct.unpack_from("<III", blob, 0)
    if magic != 0x46546C67:
        raise ValidationError("bad GLB magic")
    if version != 2:
        raise ValidationError(f"unsupported GLB container version {version}")
    if length != len(blob):
        raise ValidationError("GLB declared length does not match body size")
    pos = 12
    first = True
    while pos < len(blob):
        if pos + 8 > len(blob):
            raise ValidationError("truncated GLB chunk header")
        clen, ctype = struct.unpack_from("<II", blob, pos)
        pos += 8
        if pos + clen > len(blob) or clen % 4:
            raise ValidationError("malformed GLB chunk")
        if first:
            if ctype != 0x4E4F534A:
                raise ValidationError("first GLB chunk must be JSON")
            try:
                doc = json.loads(blob[pos : pos + clen].decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError):
                raise ValidationError("GLB JSON chunk does not parse") from None
            if doc.get("asset", {}).get("version") != "2.0":
                raise ValidationError("GLB asset.version must be 2.0")
            first = False
        pos += clen
    if first:
        raise ValidationError("GLB has no chunks")


class ModelRepository:
    """Content-addressed GLB storage with a JSON metadata index.

    Blobs live at ``<dir>/<sha256>.glb``; the index maps small integer ids
    to the hash plus free metadata and is rewritten atomically on change.
    """

    def __init__(self, directory: str, max_bytes: int = DEFAULT_MODEL_CAP):
        self._dir = str(directory)
        self._max_bytes = max_bytes
        self._lock = threading.Lock()
        os.makedirs(self._dir, exist_ok=True)
        self._index_path = os.path.join(self._dir, "index.json")
        if os.path.exists(self._index_path):
            with open(self._index_path, encoding="utf-8") as fh:
                doc = json.load(fh)
            self._next_id = int(doc["next_id"])
            self._models = {int(k): v for k, v in doc["models"].items()}
        else:
            self._next_id = 1
            self._models: Dict[int, dict] = {}

    def _save_index(self) -> None:
        tmp = self._index_path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump({"next_id": self._next_id,
                       "models": {str(k): v for k, v in self._models.items()}},
                      fh, sort_keys=True)
        os.replace(tmp, self._index_path)

    def count(self) -> int:
        return len(self._models)

    def add(self, blob: bytes, title: str = "",
            feature_id: Optional[int] = None) -> Tuple[int, str]:
        """Store a validated GLB; returns (model_id, content hash)."""
        if len(blob) > self._max_bytes:
            raise ValidationError(
                f"model exceeds size cap ({len(blob)} > {self._max_bytes} bytes)"
            )
        validate_glb(blob)
        digest = hashlib.sha256(blob).hexdigest()
        with self._lock:
            path = os.path.join(self._dir, digest + ".glb")
            if not os.path.exists(path):
                tmp = path + ".tmp"
                with open(tmp, "wb") as fh:
                    fh.write(blob)
                os.replace(tmp, path)
            model_id = self._next_id
            self._next_id += 1
            self._models[model_id] = {
                "hash": digest,
                "title": title,
                "feature_id": feature_id,
                "size": len(blob),
            }
            self._save_index()
        return model_id, digest

    def get(self, model_id: int) -> Tuple[bytes, dict]:
        meta = self._models.get(model_id)
        if meta is None:
            raise NotFoundError(f"model {model_id} not found")
        path = os.path.join(self._dir, meta["hash"] + ".glb")
        with open(path, "rb") as fh:
            return fh.read(), meta

    def metadata(self, feature_id: Optional[int] = None) -> List[dict]:
        out = []
        for model_id in sorted(self._models):
            meta = self._models[model_id]
            if feature_id is not None and meta.get("feature_id") != feature_id:
                continue
            out.append({"model_id": model_id, **meta})
        return out

    def set_feature(self, model_id: int, feature_id: int) -> None:
        with self._lock:
            if model_id not in self._models:
                raise NotFoundError(f"model {model_id} not found")
            self._models[model_id] = {**self._models[model_id],
                                      "feature_id": feature_id}
            self._save_index()


def _error(status: int, message) -> JSONResponse:
    detail = message if isinstance(message, list) else str(message)
    return JSONResponse({"detail": detail}, status_code=status)


def _tile_query_bbox(t: TileAddress, extent: int, buffer: int):
    """Lon/lat bbox of the tile grown by the clip buffer, clamped to world."""
    mx0, my0, mx1, my1 = tile_mercator_bounds(t)
    pad = (mx1 - mx0) * buffer / extent
    x0 = max(mx0 - pad, -WORLD_EXTENT)
    y0 = max(my0 - pad, -WORLD_EXTENT)
    x1 = min(mx1 + pad, WORLD_EXTENT)
    y1 = min(my1 + pad, WORLD_EXTENT)
    sw = mercator_to_lonlat(MercatorPoint(x0, y0))
    ne = mercator_to_lonlat(MercatorPoint(x1, y1))
    return (sw.lon, sw.lat, ne.lon, ne.lat)


WORLD_BBOX = (-180.0, -85.05112878, 180.0, 85.05112878)


def create_app(config: ServiceConfig = ServiceConfig(),
               store: Optional[TemporalStore] = None,
               models: Optional[ModelRepository] = None) -> FastAPI:
    """Wire the HTTP application around a store and a model repository.

    When not passed explicitly, both are opened under ``config.data_dir``
    (features.jsonl log, models/ directory) so state survives restarts.
    """
    if store is None:
        os.makedirs(config.data_dir, exist_ok=True)
        store = TemporalStore(os.path.join(config.data_dir, "features.jsonl"))
    if models is None:
        models = ModelRepository(os.path.join(config.data_dir, "models"),
                                 config.max_model_bytes)

    app = FastAPI(title="chronomap", docs_url=None, redoc_url=None)
    if config.cors_origins:
        app.add_middleware(
            CORSMiddleware,
            allow_origins=list(config.cors_origins),
            allow_methods=["*"],
            allow_headers=["*"],
        )
    app.state.config = config
    app.state.store = store
    app.state.models = models
    tile_cache: Dict[Tuple, bytes] = {}

    @app.get("/healthz")
    def healthz():
        snap = store.snapshot
        return {
            "status": "ok",
            "snapshot_version": snap.version,
            "feature_count": len(snap.features),
            "model_count": models.count(),
        }

    @app.get("/tiles/{z}/{x}/{y_name}")
    def get_tile(z: str, x: str, y_name: str, request: Request,
                 time: Optional[str] = None):
        if not y_name.endswith(".mvt"):
            return _error(400, "tile path must end in .mvt")
        try:
            zi, xi, yi = int(z), int(x), int(y_name[:-4])
        except ValueError:
            return _error(400, "tile address components must be integers")
        if zi < 0 or xi < 0 or yi < 0:
            return _error(400, "tile address components must be non-negative")
        if zi > 30 or xi >= (1 << zi) or yi >= (1 << zi):
            return _error(404, f"no tile at {zi}/{xi}/{yi}")
        at = None
        if time is not None:
            try:
                at = parse_date(time)
            except ValidationError as exc:
                return _error(400, exc)
        snap = store.snapshot
        etag = f'"t{snap.version}-{zi}-{xi}-{yi}-{at if at is not None else ""}"'
        if request.headers.get("if-none-match") == etag:
            return Response(status_code=304, headers={"ETag": etag})
        key = (snap.version, zi, xi, yi, at)
        blob = tile_cache.get(key)
        if blob is None:
            t = TileAddress(zi, xi, yi)
            bbox = _tile_query_bbox(t, config.tile_extent, config.tile_buffer)
            feats = snap.query(bbox)
            blob = build_tile(feats, t, config.tile_extent,
                              config.tile_buffer, at=at)
            if len(tile_cache) >= _TILE_CACHE_SIZE:
                tile_cache.clear()
            tile_cache[key] = blob
        return Response(blob, media_type=MVT_MEDIA_TYPE,
                        headers={"ETag": etag})

    @app.post("/features")
    async def post_features(request: Request):
        try:
            body = await request.json()
        except json.JSONDecodeError as exc:
            return _error(422, [f"body is not valid JSON: {exc}"])
        if isinstance(body, dict) and body.get("type") == "FeatureCollection":
            docs = body.get("features", [])
        elif isinstance(body, dict):
            docs = [body]
        elif isinstance(body, list):
            docs = body
        else:
            return _error(422, ["body must be a Feature, FeatureCollection, or list"])
        errors = []
        for i, doc in enumerate(docs):
            try:
                parse_feature_document(doc, f"document {i}")
            except ValidationError as exc:
                errors.append(str(exc))
        if errors:
            return _error(422, errors)
        ids = store.ingest(docs)
        return {"ids": ids, "snapshot_version": store.snapshot.version}

    @app.get("/features")
    def get_features(bbox: Optional[str] = None, time: Optional[str] = None):
        box = WORLD_BBOX
        if bbox is not None:
            parts = bbox.split(",")
            try:
                if len(parts) != 4:
                    raise ValueError("need 4 numbers")
                box = tuple(float(p) for p in parts)
            except ValueError:
                return _error(422, ["bbox must be min_lon,min_lat,max_lon,max_lat"])
        at = None
        if time is not None:
            try:
                at = parse_date(time)
            except ValidationError as exc:
                return _error(422, [str(exc)])
        feats = store.snapshot.query(box, at)
        return {"type": "FeatureCollection",
                "features": [f.to_geojson() for f in feats]}

    @app.post("/warp/fit")
    async def warp_fit(request: Request):
        try:
            body = await request.json()
        except json.JSONDecodeError as exc:
            return _error(422, [f"body is not valid JSON: {exc}"])
        kind = body.get("kind") or config.default_transform_kind
        try:
            pairs = [
                ControlPointPair(float(p["px"]), float(p["py"]),
                                 GeoPoint(float(p["lon"]), float(p["lat"])))
                for p in body.get("pairs", [])
            ]
            transform = fit_transform(pairs, kind)
        except (KeyError, TypeError, ValueError):
            return _error(422, ["pairs must be objects with px, py, lon, lat"])
        except (ValidationError, ArityError, DegeneracyError) as exc:
            return _error(422, [str(exc)])
        report = residual_report(transform, pairs)
        return {
            "transform": json.loads(transform.to_json()),
            "residuals": [e for _, e in report.per_pair],
            "rms": report.rms,
        }

    @app.post("/models")
    async def post_model(request: Request, title: str = "",
                         feature_id: Optional[int] = None):
        blob = await request.body()
        if len(blob) > config.max_model_bytes:
            return _error(413, "model exceeds configured size cap")
        try:
            model_id, digest = models.add(blob, title, feature_id)
        except ValidationError as exc:
            return _error(415, exc)
        return {"model_id": model_id, "content_hash": digest}

    @app.get("/models")
    def list_models(feature_id: Optional[int] = None):
        return {"models": models.metadata(feature_id)}

    @app.get("/models/{model_id}")
    def get_model(model_id: int):
        try:
            blob, meta = models.get(model_id)
        except NotFoundError as exc:
            return _error(404, exc)
        return Response(blob, media_type=GLB_MEDIA_TYPE,
                        headers={"ETag": f'"{meta["hash"]}"'})

    @app.post("/models/{model_id}/link")
    async def link_model(model_id: int, request: Request):
        try:
            body = await request.json()
            feature_id = int(body["feature_id"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError):
            return _error(422, ["body must be JSON with an integer feature_id"])
        if model_id not in {m["model_id"] for m in models.metadata()}:
            return _error(404, f"model {model_id} not found")
        try:
            feature = store.link_model(feature_id, model_id)
        except NotFoundError as exc:
            return _error(404, exc)
        except ValidationError as exc:
            return _error(422, [str(exc)])
        models.set_feature(model_id, feature_id)
        return {"feature": feature.to_geojson(),
                "snapshot_version": store.snapshot.version}

    return app


def run_server(config: ServiceConfig) -> None:
    """Blocking entry point used by the CLI's serve subcommand."""
    import uvicorn

    uvicorn.run(create_app(config), host=config.host, port=config.port,
                log_level="warning")
