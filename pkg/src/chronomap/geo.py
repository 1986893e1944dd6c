"""Coordinate systems, slippy tile addressing, and calendar-time primitives.

Spherical Web Mercator (EPSG:3857) on the WGS84 equatorial radius; tile
addressing follows the OSM slippy scheme with y increasing southward.
Dates are calendar dates at day granularity, held as proleptic-Gregorian
ordinals; existence intervals are half-open [start, end).
"""

from __future__ import annotations

import datetime as _dt
import math
import re
from dataclasses import dataclass
from typing import Optional, Tuple

from .errors import DomainError, ValidationError

EARTH_RADIUS = 6378137.0
MAX_LATITUDE = 85.05112878
# World half-extent in Mercator meters: R * pi.
WORLD_EXTENT = EARTH_RADIUS * math.pi


@dataclass(frozen=True)
class GeoPoint:
    """WGS84 longitude/latitude in degrees, Mercator-projectable range."""

    lon: float
    lat: float

    def __post_init__(self):
        if not (-180.0 <= self.lon <= 180.0):
            raise DomainError(f"longitude {self.lon} outside [-180, 180]")
        if not (-MAX_LATITUDE <= self.lat <= MAX_LATITUDE):
            raise DomainError(
                f"latitude {self.lat} outside [-{MAX_LATITUDE}, {MAX_LATITUDE}]"
            )


@dataclass(frozen=True)
class MercatorPoint:
    """EPSG:3857 planar coordinates in meters."""

    x: float
    y: float

    def __post_init__(self):
        limit = WORLD_EXTENT * (1 + 1e-12)
        if abs(self.x) > limit or abs(self.y) > limit:
            raise DomainError(f"Mercator point ({self.x}, {self.y}) outside world extent")


@dataclass(frozen=True)
class TileAddress:
    """Slippy z/x/y tile address, y = 0 at the north edge."""

    z: int
    x: int
    y: int

    def __post_init__(self):
        if self.z < 0:
            raise DomainError(f"zoom {self.z} must be >= 0")
        n = 1 << self.z
        if not (0 <= self.x < n) or not (0 <= self.y < n):
            raise DomainError(f"tile ({self.x}, {self.y}) outside zoom {self.z} range")


def lonlat_to_mercator(p: GeoPoint) -> MercatorPoint:
    x = EARTH_RADIUS * math.radians(p.lon)
    phi = math.radians(p.lat)
    # asinh(tan(phi)) == ln(tan(pi/4 + phi/2)) but exact at phi = 0.
    y = EARTH_RADIUS * math.asinh(math.tan(phi))
    # lat = MAX_LATITUDE lands within rounding of the world edge; clamp.
    y = max(-WORLD_EXTENT, min(WORLD_EXTENT, y))
    return MercatorPoint(x, y)


def mercator_to_lonlat(p: MercatorPoint) -> GeoPoint:
    lon = math.degrees(p.x / EARTH_RADIUS)
    lat = math.degrees(2 * math.atan(math.exp(p.y / EARTH_RADIUS)) - math.pi / 2)
    lon = max(-180.0, min(180.0, lon))
    lat = max(-MAX_LATITUDE, min(MAX_LATITUDE, lat))
    return GeoPoint(lon, lat)


def lonlat_to_tile(p: GeoPoint, z: int) -> TileAddress:
    if z < 0:
        raise DomainError(f"zoom {z} must be >= 0")
    n = 1 << z
    xf = (p.lon + 180.0) / 360.0 * n
    phi = math.radians(p.lat)
    yf = (1.0 - math.log(math.tan(phi) + 1.0 / math.cos(phi)) / math.pi) / 2.0 * n
    x = min(n - 1, max(0, int(math.floor(xf))))
    y = min(n - 1, max(0, int(math.floor(yf))))
    return TileAddress(z, x, y)


def tile_mercator_bounds(t: TileAddress) -> Tuple[float, float, float, float]:
    """(min_x, min_y, max_x, max_y) of the tile in Mercator meters."""
    n = 1 << t.z
    size = 2 * WORLD_EXTENT / n
    min_x = -WORLD_EXTENT + t.x * size
    max_y = WORLD_EXTENT - t.y * size
    return (min_x, max_y - size, min_x + size, max_y)


def tile_bounds(t: TileAddress) -> Tuple[Tuple[float, float, float, float],
                                         Tuple[float, float, float, float]]:
    """Tile bounds as ((min_lon, min_lat, max_lon, max_lat), mercator bbox)."""
    mx0, my0, mx1, my1 = tile_mercator_bounds(t)
    sw = mercator_to_lonlat(MercatorPoint(mx0, my0))
    ne = mercator_to_lonlat(MercatorPoint(mx1, my1))
    return ((sw.lon, sw.lat, ne.lon, ne.lat), (mx0, my0, mx1, my1))


_DATE_RE = re.compile(r"^(\d{4})(?:-(\d{2})(?:-(\d{2}))?)?$")


def parse_date(text: str) -> int:
    """Parse `YYYY`, `YYYY-MM`, or `YYYY-MM-DD` to a day ordinal.

    Partial dates canonicalize to the first day of the period.
    """
    m = _DATE_RE.match(text.strip())
    if not m:
        raise ValidationError(f"unparseable date {text!r}")
    year = int(m.group(1))
    month = int(m.group(2) or 1)
    day = int(m.group(3) or 1)
    try:
        return _dt.date(year, month, day).toordinal()
    except ValueError as exc:
        raise ValidationError(f"invalid date {text!r}: {exc}") from None


def format_date(ordinal: int) -> str:
    return _dt.date.fromordinal(ordinal).isoformat()


@dataclass(frozen=True)
class TimeSpan:
    """Half-open existence interval [start, end) in day ordinals; end None = open."""

    start: int
    end: Optional[int] = None

    def __post_init__(self):
        if self.end is not None and not self.start < self.end:
            raise ValidationError(
                f"TimeSpan start {format_date(self.start)} not before end "
                f"{format_date(self.end)}"
            )

    @classmethod
    def parse(cls, start: str, end: Optional[str] = None) -> "TimeSpan":
        return cls(parse_date(start), parse_date(end) if end else None)

    def contains(self, day: int) -> bool:
        return self.start <= day and (self.end is None or day < self.end)

    def intersect(self, other: "TimeSpan") -> Optional["TimeSpan"]:
        start = max(self.start, other.start)
        ends = [e for e in (self.end, other.end) if e is not None]
        end = min(ends) if ends else None
        if end is not None and start >= end:
            return None
        return TimeSpan(start, end)


def timespan_contains(span: TimeSpan, day: int) -> bool:
    return span.contains(day)
