"""Clip, quantize, and encode temporal features into vector tiles.

Per feature: project lon/lat to Mercator, clip against the buffered tile
window, quantize to tile-local integers (y southward), and emit MVT layers
grouped by feature kind with `start_date`/`end_date` string attributes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from . import geometry, mvt
from .errors import ValidationError
from .geo import GeoPoint, TileAddress, format_date, lonlat_to_mercator, tile_mercator_bounds
from .store import Feature

log = logging.getLogger(__name__)

DEFAULT_EXTENT = 4096
DEFAULT_BUFFER = 64

LAYER_BY_KIND = {"building": "buildings", "road": "roads", "other": "other"}


@dataclass(frozen=True)
class ClipWindow:
    """Mercator rectangle of a tile expanded by the buffer margin."""

    x0: float
    y0: float
    x1: float
    y1: float

    @classmethod
    def for_tile(cls, t: TileAddress, extent: int = DEFAULT_EXTENT,
                 buffer: int = DEFAULT_BUFFER) -> "ClipWindow":
        if buffer < 0:
            raise ValidationError("buffer must be >= 0")
        mx0, my0, mx1, my1 = tile_mercator_bounds(t)
        margin = (mx1 - mx0) * buffer / extent
        return cls(mx0 - margin, my0 - margin, mx1 + margin, my1 + margin)


def _to_mercator(pts: Sequence[Tuple[float, float]]) -> List[Tuple[float, float]]:
    out = []
    for lon, lat in pts:
        m = lonlat_to_mercator(GeoPoint(lon, lat))
        out.append((m.x, m.y))
    return out


def clip_geometry(geom_type: str, paths: List[List[Tuple[float, float]]],
                  window: ClipWindow) -> List[List[Tuple[float, float]]]:
    """Clip Mercator geometry paths to the window; may return []."""
    w = (window.x0, window.y0, window.x1, window.y1)
    if geom_type == "point":
        return [
            [p for p in path if w[0] <= p[0] <= w[2] and w[1] <= p[1] <= w[3]]
            for path in paths
        ]
    if geom_type == "polyline":
        pieces: List[List[Tuple[float, float]]] = []
        for path in paths:
            pieces.extend(geometry.clip_polyline_to_rect(path, *w))
        return pieces
    if geom_type == "polygon":
        out = []
        for ring in paths:
            if not geometry.ring_is_closed(ring):
                raise ValidationError("polygon ring is not closed")
            clipped = geometry.clip_ring_to_rect(ring, *w)
            out.append(clipped)
        # Drop holes if the exterior vanished entirely.
        if not out or not out[0]:
            return []
        return [r for r in out if r]
    raise ValidationError(f"unknown geometry type {geom_type!r}")


def quantize_geometry(geom_type: str, paths: List[List[Tuple[float, float]]],
                      t: TileAddress, extent: int = DEFAULT_EXTENT
                      ) -> List[List[Tuple[int, int]]]:
    """Map Mercator paths onto the [0, extent]^2 integer grid, y down.

    Collapsed rings (< 3 distinct points) and zero-length segments are
    dropped; exterior rings are oriented to positive y-down signed area,
    interior rings negative.
    """
    mx0, my0, mx1, my1 = tile_mercator_bounds(t)
    sx = extent / (mx1 - mx0)
    sy = extent / (my1 - my0)

    def q(p):
        x = (p[0] - mx0) * sx
        y = (my1 - p[1]) * sy
        # round half away from zero
        return (int(_round_half_away(x)), int(_round_half_away(y)))

    out: List[List[Tuple[int, int]]] = []
    for pi, path in enumerate(paths):
        pts = [q(p) for p in path]
        if geom_type == "point":
            deduped = list(dict.fromkeys(pts))
            if deduped:
                out.append(deduped)
            continue
        # collapse consecutive duplicates
        dedup: List[Tuple[int, int]] = []
        for p in pts:
            if not dedup or dedup[-1] != p:
                dedup.append(p)
        if geom_type == "polyline":
            if len(dedup) >= 2:
                out.append(dedup)
            else:
                log.debug("dropping collapsed polyline piece")
            continue
        # polygon ring: strip closing duplicate, need >= 3 distinct points
        if len(dedup) >= 2 and dedup[0] == dedup[-1]:
            dedup = dedup[:-1]
        if len(set(dedup)) < 3 or abs(geometry.signed_area(dedup)) < 0.5:
            log.debug("dropping collapsed ring")
            continue
        # y-down signed area: exterior (first surviving ring) positive.
        area = geometry.signed_area([(x, -y) for x, y in dedup])
        is_exterior = not out
        if is_exterior and area > 0:
            dedup = dedup[::-1]
        elif not is_exterior and area < 0:
            dedup = dedup[::-1]
        out.append(dedup)
    return out


def _round_half_away(x: float) -> float:
    import math

    return math.floor(x + 0.5) if x >= 0 else math.ceil(x - 0.5)


_GEOM_TYPE_IDS = {
    "point": mvt.GEOM_POINT,
    "polyline": mvt.GEOM_LINESTRING,
    "polygon": mvt.GEOM_POLYGON,
}


def feature_paths_mercator(f: Feature) -> List[List[Tuple[float, float]]]:
    if f.geom_type == "point":
        return [_to_mercator([f.geometry])]
    if f.geom_type == "polyline":
        return [_to_mercator(f.geometry)]
    return [_to_mercator(ring) for ring in f.geometry]


def feature_tags(f: Feature) -> Dict[str, mvt.TagValue]:
    tags: Dict[str, mvt.TagValue] = {}
    for k, v in f.properties:
        if isinstance(v, bool) or isinstance(v, str):
            tags[k] = v
        elif isinstance(v, (int, float)):
            tags[k] = float(v)
        else:
            tags[k] = str(v)
    tags["start_date"] = format_date(f.span.start)
    if f.span.end is not None:
        tags["end_date"] = format_date(f.span.end)
    return tags


def build_tile(features: Sequence[Feature], t: TileAddress,
               extent: int = DEFAULT_EXTENT, buffer: int = DEFAULT_BUFFER,
               at: Optional[int] = None) -> bytes:
    """Encode features into one MVT tile; empty layers are omitted."""
    window = ClipWindow.for_tile(t, extent, buffer)
    layers: Dict[str, mvt.TileLayer] = {}
    for f in features:
        if at is not None and not f.span.contains(at):
            continue
        try:
            merc = feature_paths_mercator(f)
            clipped = clip_geometry(f.geom_type, merc, window)
            paths = quantize_geometry(f.geom_type, clipped, t, extent)
        except ValidationError as exc:
            raise ValidationError(f"feature {f.id}: {exc}") from None
        if not paths or not any(paths):
            continue
        name = LAYER_BY_KIND[f.kind]
        layer = layers.setdefault(name, mvt.TileLayer(name, [], extent))
        layer.features.append(
            mvt.TileFeature(f.id, _GEOM_TYPE_IDS[f.geom_type], paths, feature_tags(f))
        )
    ordered = [layers[n] for n in sorted(layers)]
    if not ordered:
        return b""
    return mvt.encode_tile(ordered)
