"""Temporal feature store: validation, append-only persistence, indexing,
spatiotemporal queries, and overlap quality checks.

Features are GeoJSON-style documents with `properties.start_date` /
`properties.end_date` (ISO-8601, half-open interval) and `properties.kind`.
Persistence is a newline-delimited JSON log; the live state is an immutable
snapshot swapped atomically under a single writer lock.
"""

from __future__ import annotations

import json
import math
import os
import threading
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from shapely.geometry import Polygon as ShapelyPolygon

from . import geometry
from .errors import NotFoundError, ValidationError
from .geo import (
    GeoPoint,
    TimeSpan,
    format_date,
    lonlat_to_mercator,
    parse_date,
)

KINDS = ("building", "road", "other")
GEOM_TYPES = ("point", "polyline", "polygon")

#: Spatial index cell size in Mercator meters.
GRID_CELL_M = 256.0

#: Minimum intersection area (m^2) considered a real overlap.
OVERLAP_EPSILON = 1e-4

LonLat = Tuple[float, float]


@dataclass(frozen=True)
class Feature:
    """A geolocated geometry with a lifetime and free-form properties."""

    id: int
    kind: str
    geom_type: str
    geometry: Tuple  # point: (lon, lat); polyline: pts; polygon: rings (closed)
    span: TimeSpan
    properties: Tuple[Tuple[str, object], ...] = ()

    def props(self) -> Dict[str, object]:
        return dict(self.properties)

    def coords(self) -> List[LonLat]:
        if self.geom_type == "point":
            return [self.geometry]
        if self.geom_type == "polyline":
            return list(self.geometry)
        return [p for ring in self.geometry for p in ring]

    def bbox_lonlat(self) -> Tuple[float, float, float, float]:
        return geometry.bbox(self.coords())

    def bbox_mercator(self) -> Tuple[float, float, float, float]:
        pts = [lonlat_to_mercator(GeoPoint(lon, lat)) for lon, lat in self.coords()]
        return geometry.bbox([(p.x, p.y) for p in pts])

    def to_geojson(self) -> dict:
        if self.geom_type == "point":
            geom = {"type": "Point", "coordinates": list(self.geometry)}
        elif self.geom_type == "polyline":
            geom = {"type": "LineString",
                    "coordinates": [list(p) for p in self.geometry]}
        else:
            geom = {"type": "Polygon",
                    "coordinates": [[list(p) for p in ring] for ring in self.geometry]}
        props = self.props()
        props["kind"] = self.kind
        props["start_date"] = format_date(self.span.start)
        if self.span.end is not None:
            props["end_date"] = format_date(self.span.end)
        return {"type": "Feature", "id": self.id, "geometry": geom,
                "properties": props}


@dataclass(frozen=True)
class OverlapConflict:
    feature_a: int
    feature_b: int
    area_m2: float
    span: TimeSpan


def _validate_ring(ring: Sequence[LonLat], what: str) -> Tuple[LonLat, ...]:
    if len(ring) < 4 or tuple(ring[0]) != tuple(ring[-1]):
        raise ValidationError(f"{what}: polygon ring must be closed")
    open_ring = [tuple(p) for p in ring[:-1]]
    if len(set(open_ring)) < 3:
        raise ValidationError(f"{what}: ring needs >= 3 distinct vertices")
    if not geometry.ring_is_simple(open_ring):
        raise ValidationError(f"{what}: ring is self-intersecting")
    return tuple(tuple(p) for p in ring)


def _validate_coord(pt, what: str) -> LonLat:
    lon, lat = float(pt[0]), float(pt[1])
    GeoPoint(lon, lat)  # raises DomainError -> surfaced as validation below
    return (lon, lat)


def parse_feature_document(doc: dict, what: str = "feature") -> Tuple[str, str, Tuple, TimeSpan, dict]:
    """Validate a GeoJSON Feature document; returns the normalized parts."""
    if doc.get("type") != "Feature":
        raise ValidationError(f"{what}: not a GeoJSON Feature")
    props = dict(doc.get("properties") or {})
    kind = props.pop("kind", "other")
    if kind not in KINDS:
        raise ValidationError(f"{what}: unknown kind {kind!r}")
    start = props.pop("start_date", None)
    end = props.pop("end_date", None)
    if start is None:
        raise ValidationError(f"{what}: missing properties.start_date")
    span = TimeSpan(parse_date(str(start)),
                    parse_date(str(end)) if end is not None else None)
    geom = doc.get("geometry") or {}
    gtype = geom.get("type")
    coords = geom.get("coordinates")
    try:
        if gtype == "Point":
            parsed: Tuple = _validate_coord(coords, what)
            geom_type = "point"
        elif gtype == "LineString":
            if not coords or len(coords) < 2:
                raise ValidationError(f"{what}: LineString needs >= 2 points")
            parsed = tuple(_validate_coord(p, what) for p in coords)
            geom_type = "polyline"
        elif gtype == "Polygon":
            if not coords:
                raise ValidationError(f"{what}: Polygon needs >= 1 ring")
            rings = []
            for ring in coords:
                for p in ring:
                    _validate_coord(p, what)
                rings.append(_validate_ring([tuple(map(float, p)) for p in ring], what))
            parsed = tuple(rings)
            geom_type = "polygon"
        else:
            raise ValidationError(f"{what}: unsupported geometry type {gtype!r}")
    except (ValueError, TypeError, IndexError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"{what}: invalid geometry ({exc})") from None
    return kind, geom_type, parsed, span, props


@dataclass(frozen=True)
class StoreSnapshot:
    """Immutable feature set with a Mercator grid index."""

    version: int
    features: Dict[int, Feature] = field(default_factory=dict)
    index: Dict[Tuple[int, int], Tuple[int, ...]] = field(default_factory=dict)

    def query(self, bbox: Tuple[float, float, float, float],
              at: Optional[int] = None) -> List[Feature]:
        """Features whose lon/lat bbox intersects ``bbox``; optional date filter."""
        lon0, lat0, lon1, lat1 = bbox
        m0 = lonlat_to_mercator(GeoPoint(lon0, lat0))
        m1 = lonlat_to_mercator(GeoPoint(lon1, lat1))
        ncells = _cell_count(m0.x, m0.y, m1.x, m1.y)
        if ncells > len(self.features):
            # Wide query: the cell walk would cost more than a full scan.
            ids = set(self.features)
        else:
            ids = set()
            for cell in _cells_for_box(m0.x, m0.y, m1.x, m1.y):
                ids.update(self.index.get(cell, ()))
        out = []
        for fid in sorted(ids):
            f = self.features[fid]
            if not geometry.boxes_intersect(f.bbox_lonlat(), bbox):
                continue
            if at is not None and not f.span.contains(at):
                continue
            out.append(f)
        return out


def _cell_count(x0, y0, x1, y1) -> int:
    nx = math.floor(max(x0, x1) / GRID_CELL_M) - math.floor(min(x0, x1) / GRID_CELL_M) + 1
    ny = math.floor(max(y0, y1) / GRID_CELL_M) - math.floor(min(y0, y1) / GRID_CELL_M) + 1
    return nx * ny


def _cells_for_box(x0, y0, x1, y1) -> Iterable[Tuple[int, int]]:
    cx0 = math.floor(min(x0, x1) / GRID_CELL_M)
    cx1 = math.floor(max(x0, x1) / GRID_CELL_M)
    cy0 = math.floor(min(y0, y1) / GRID_CELL_M)
    cy1 = math.floor(max(y0, y1) / GRID_CELL_M)
    for cx in range(cx0, cx1 + 1):
        for cy in range(cy0, cy1 + 1):
            yield (cx, cy)


def _index_with(index: Dict, feature: Feature) -> Dict:
    new = dict(index)
    for cell in _cells_for_box(*feature.bbox_mercator()):
        new[cell] = new.get(cell, ()) + (feature.id,)
    return new


class TemporalStore:
    """Single-writer, multi-reader store over an append-only JSONL log."""

    def __init__(self, log_path: Optional[str] = None):
        self._lock = threading.Lock()
        self._snapshot = StoreSnapshot(version=0)
        self._next_id = 1
        self._log_path = str(log_path) if log_path else None
        if self._log_path and os.path.exists(self._log_path):
            self._replay()

    @property
    def snapshot(self) -> StoreSnapshot:
        return self._snapshot

    def _replay(self) -> None:
        with open(self._log_path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                record = json.loads(line)
                self._apply(record)

    def _append_log(self, records: List[dict]) -> None:
        if not self._log_path:
            return
        with open(self._log_path, "a", encoding="utf-8") as fh:
            for r in records:
                fh.write(json.dumps(r, separators=(",", ":")) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def _apply(self, record: dict) -> None:
        """Apply one log record; records carry the snapshot version they commit."""
        op = record.get("op")
        version = int(record["v"])
        snap = self._snapshot
        if op == "add":
            fid = int(record["id"])
            kind, geom_type, geom, span, props = parse_feature_document(
                record["feature"], f"log id {fid}"
            )
            f = Feature(fid, kind, geom_type, geom, span,
                        tuple(sorted(props.items())))
            features = dict(snap.features)
            features[fid] = f
            self._snapshot = StoreSnapshot(
                version=version,
                features=features,
                index=_index_with(snap.index, f),
            )
            self._next_id = max(self._next_id, fid + 1)
        elif op == "link":
            fid = int(record["id"])
            f = snap.features[fid]
            props = dict(f.properties)
            props["model_id"] = record["model_id"]
            features = dict(snap.features)
            features[fid] = replace(f, properties=tuple(sorted(props.items())))
            self._snapshot = StoreSnapshot(
                version=version, features=features, index=snap.index
            )
        else:
            raise ValidationError(f"unknown log record op {op!r}")

    def ingest(self, docs) -> List[int]:
        """Validate and persist feature documents; all-or-nothing per batch."""
        if isinstance(docs, dict) and docs.get("type") == "FeatureCollection":
            docs = docs.get("features", [])
        elif isinstance(docs, dict):
            docs = [docs]
        docs = list(docs)
        with self._lock:
            parsed = []
            for i, doc in enumerate(docs):
                kind, geom_type, geom, span, props = parse_feature_document(
                    doc, f"document {i}"
                )
                parsed.append((kind, geom_type, geom, span, props))
            version = self._snapshot.version + 1
            ids: List[int] = []
            records: List[dict] = []
            next_id = self._next_id
            for kind, geom_type, geom, span, props in parsed:
                f = Feature(next_id, kind, geom_type, geom, span,
                            tuple(sorted(props.items())))
                ids.append(next_id)
                next_id += 1
                records.append(
                    {"op": "add", "id": f.id, "v": version, "feature": f.to_geojson()}
                )
            self._append_log(records)
            for r in records:
                self._apply(r)
            return ids

    def query(self, bbox, at: Optional[int] = None) -> List[Feature]:
        return self._snapshot.query(bbox, at)

    def get(self, fid: int) -> Feature:
        try:
            return self._snapshot.features[fid]
        except KeyError:
            raise NotFoundError(f"feature {fid} not found") from None

    def link_model(self, feature_id: int, model_id) -> Feature:
        with self._lock:
            f = self._snapshot.features.get(feature_id)
            if f is None:
                raise NotFoundError(f"feature {feature_id} not found")
            if f.kind != "building":
                raise ValidationError(
                    f"feature {feature_id} has kind {f.kind!r}, expected building"
                )
            record = {
                "op": "link",
                "id": feature_id,
                "v": self._snapshot.version + 1,
                "model_id": model_id,
            }
            self._append_log([record])
            self._apply(record)
            return self._snapshot.features[feature_id]


def _shapely_polygon(f: Feature) -> ShapelyPolygon:
    rings = []
    for ring in f.geometry:
        pts = [lonlat_to_mercator(GeoPoint(lon, lat)) for lon, lat in ring]
        rings.append([(p.x, p.y) for p in pts])
    return ShapelyPolygon(rings[0], rings[1:])


def check_overlaps(snapshot: StoreSnapshot) -> List[OverlapConflict]:
    """Building pairs whose footprints and lifetimes both intersect."""
    buildings = [f for f in snapshot.features.values()
                 if f.kind == "building" and f.geom_type == "polygon"]
    buildings.sort(key=lambda f: f.id)
    conflicts = []
    for i, a in enumerate(buildings):
        box_a = a.bbox_mercator()
        poly_a = None
        for b in buildings[i + 1:]:
            if not geometry.boxes_intersect(box_a, b.bbox_mercator()):
                continue
            overlap_span = a.span.intersect(b.span)
            if overlap_span is None:
                continue
            if poly_a is None:
                poly_a = _shapely_polygon(a)
            area = poly_a.intersection(_shapely_polygon(b)).area
            if area > OVERLAP_EPSILON:
                conflicts.append(OverlapConflict(a.id, b.id, area, overlap_span))
    return conflicts
