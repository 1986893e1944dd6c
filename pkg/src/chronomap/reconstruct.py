"""Coarse-to-fine building reconstruction: footprint extrusion, procedural
facade components, assembly, and glTF export.

Meshes live in a local z-up meter frame centered on the footprint centroid;
the Mercator position of that origin travels with the mesh as an anchor so
float32 export does not lose precision. GLB export rotates to the format's
Y-up convention.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from . import geometry
from .errors import DegeneracyError, DomainError, ValidationError
from .facade import FacadeParams
from .geo import GeoPoint, MercatorPoint, lonlat_to_mercator

Vec3 = Tuple[float, float, float]


@dataclass(frozen=True)
class ReconstructParams:
    floor_height: float = 3.0
    default_floors: int = 2
    window_recess: float = 0.12
    sill_protrusion: float = 0.05
    stair_rise: float = 0.18
    stair_run: float = 0.28

    def __post_init__(self):
        for name in ("floor_height", "window_recess", "sill_protrusion",
                     "stair_rise", "stair_run"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be positive")
        if self.default_floors < 1:
            raise ValidationError("default_floors must be >= 1")


@dataclass(frozen=True)
class Footprint:
    """Building outline in lon/lat; exterior counter-clockwise."""

    exterior: Tuple[Tuple[float, float], ...]
    holes: Tuple[Tuple[Tuple[float, float], ...], ...] = ()
    properties: Tuple[Tuple[str, object], ...] = ()

    def props(self) -> Dict[str, object]:
        return dict(self.properties)


@dataclass
class Mesh:
    """Indexed triangle set in local meters, z up, plus a Mercator anchor."""

    vertices: List[Vec3] = field(default_factory=list)
    triangles: List[Tuple[int, int, int]] = field(default_factory=list)
    components: List[Tuple[str, int, int]] = field(default_factory=list)  # (tag, tri_start, tri_count)
    anchor: MercatorPoint = MercatorPoint(0.0, 0.0)

    def add_component(self, tag: str, vertices: Sequence[Vec3],
                      triangles: Sequence[Tuple[int, int, int]]) -> None:
        base = len(self.vertices)
        start = len(self.triangles)
        self.vertices.extend(tuple(map(float, v)) for v in vertices)
        self.triangles.extend((a + base, b + base, c + base) for a, b, c in triangles)
        self.components.append((tag, start, len(triangles)))

    def signed_volume(self) -> float:
        total = 0.0
        for a, b, c in self.triangles:
            v0, v1, v2 = self.vertices[a], self.vertices[b], self.vertices[c]
            total += (
                v0[0] * (v1[1] * v2[2] - v2[1] * v1[2])
                - v0[1] * (v1[0] * v2[2] - v2[0] * v1[2])
                + v0[2] * (v1[0] * v2[1] - v2[0] * v1[1])
            )
        return total / 6.0


def building_height(props: Dict[str, object],
                    params: ReconstructParams = ReconstructParams()) -> float:
    """Extrusion height from metadata: height_m, else floors, else defaults."""
    if "height_m" in props and props["height_m"] is not None:
        h = float(props["height_m"])
        if h <= 0:
            raise ValidationError(f"height_m must be positive, got {h}")
        return h
    if "floors" in props and props["floors"] is not None:
        floors = int(props["floors"])
        if floors < 1:
            raise ValidationError(f"floors must be >= 1, got {floors}")
        return floors * params.floor_height
    return params.default_floors * params.floor_height


def _local_rings(fp: Footprint) -> Tuple[List[Tuple[float, float]],
                                         List[List[Tuple[float, float]]],
                                         MercatorPoint]:
    """Project to Mercator meters and recenter on the exterior centroid.

    Exterior normalized CCW, holes CW.
    """
    def merc(ring):
        pts = []
        for lon, lat in geometry.drop_closing_vertex(list(ring)):
            m = lonlat_to_mercator(GeoPoint(lon, lat))
            pts.append((m.x, m.y))
        return pts

    ext = merc(fp.exterior)
    if len(ext) < 3:
        raise ValidationError("footprint needs at least 3 distinct vertices")
    if not geometry.ring_is_simple(ext):
        raise ValidationError("footprint exterior ring is self-intersecting")
    if geometry.signed_area(ext) < 0:
        ext = ext[::-1]
    cx = sum(p[0] for p in ext) / len(ext)
    cy = sum(p[1] for p in ext) / len(ext)
    ext = [(x - cx, y - cy) for x, y in ext]
    holes = []
    for ring in fp.holes:
        h = [(x - cx, y - cy) for x, y in merc(ring)]
        if geometry.signed_area(h) > 0:
            h = h[::-1]
        holes.append(h)
    return ext, holes, MercatorPoint(cx, cy)


def extrude_footprint(fp: Footprint, height: float) -> Mesh:
    """Prism mesh: vertical walls, ear-clipped flat roof and floor."""
    if height <= 0:
        raise DomainError(f"extrusion height must be positive, got {height}")
    ext, holes, anchor = _local_rings(fp)
    mesh = Mesh(anchor=anchor)

    verts: List[Vec3] = []
    tris: List[Tuple[int, int, int]] = []

    def add_walls(ring):
        for i in range(len(ring)):
            a = ring[i]
            b = ring[(i + 1) % len(ring)]
            base = len(verts)
            verts.extend([
                (a[0], a[1], 0.0),
                (b[0], b[1], 0.0),
                (b[0], b[1], height),
                (a[0], a[1], height),
            ])
            # CCW exterior: outward is right of travel; this winding faces out.
            tris.append((base, base + 1, base + 2))
            tris.append((base, base + 2, base + 3))

    add_walls(ext)
    for h in holes:
        add_walls(h)

    cap_pts, cap_tris = geometry.triangulate_polygon(ext, holes)
    roof_base = len(verts)
    verts.extend((p[0], p[1], height) for p in cap_pts)
    for a, b, c in cap_tris:
        tris.append((roof_base + a, roof_base + b, roof_base + c))  # +z up
    floor_base = len(verts)
    verts.extend((p[0], p[1], 0.0) for p in cap_pts)
    for a, b, c in cap_tris:
        tris.append((floor_base + a, floor_base + c, floor_base + b))  # -z down

    mesh.add_component("extrusion", verts, tris)
    return mesh


@dataclass(frozen=True)
class WallFrame:
    """Linear map from facade coordinates (meters, origin bottom-left of the
    wall, v up) onto one extruded wall face."""

    origin: Vec3
    u_dir: Vec3  # unit vector along the edge
    normal: Vec3  # unit outward normal (horizontal)
    length: float
    height: float

    def to_world(self, u: float, v: float, depth: float = 0.0) -> Vec3:
        """(u, v) on the facade plane; positive depth sinks into the wall."""
        return (
            self.origin[0] + self.u_dir[0] * u - self.normal[0] * depth,
            self.origin[1] + self.u_dir[1] * u - self.normal[1] * depth,
            v,
        )


def facade_to_world(fp: Footprint, edge_index: int, height: float) -> WallFrame:
    """Frame of the wall face built on footprint edge ``edge_index``."""
    ext, _, _ = _local_rings(fp)
    n = len(ext)
    if not 0 <= edge_index < n:
        raise ValidationError(f"edge index {edge_index} out of range (0..{n - 1})")
    a = ext[edge_index]
    b = ext[(edge_index + 1) % n]
    dx, dy = b[0] - a[0], b[1] - a[1]
    length = math.hypot(dx, dy)
    if length == 0:
        raise DegeneracyError(f"footprint edge {edge_index} has zero length")
    u = (dx / length, dy / length, 0.0)
    outward = (dy / length, -dx / length, 0.0)  # right of travel, CCW ring
    return WallFrame((a[0], a[1], 0.0), u, outward, length, height)


def facade_pixel_mapper(fp: Footprint, edge_index: int, height: float,
                        facade_w_px: float, facade_h_px: float):
    """Map rectified facade pixel coordinates onto the wall face.

    (0, 0) is the facade's bottom-left and lands on the edge start at z=0;
    (W, 0) on the edge end; v = H reaches z = height. Linear in both axes.
    """
    if facade_w_px <= 0 or facade_h_px <= 0:
        raise DomainError("facade rectangle must have positive area")
    frame = facade_to_world(fp, edge_index, height)

    def to_world(u_px: float, v_px: float) -> Vec3:
        return frame.to_world(
            u_px / facade_w_px * frame.length,
            v_px / facade_h_px * height,
        )

    return to_world


def _box(x0, y0, z0, x1, y1, z1) -> Tuple[List[Vec3], List[Tuple[int, int, int]]]:
    """Axis-aligned cuboid with outward-facing triangles (12)."""
    v = [
        (x0, y0, z0), (x1, y0, z0), (x1, y1, z0), (x0, y1, z0),
        (x0, y0, z1), (x1, y0, z1), (x1, y1, z1), (x0, y1, z1),
    ]
    t = [
        (0, 2, 1), (0, 3, 2),  # bottom (-z)
        (4, 5, 6), (4, 6, 7),  # top (+z)
        (0, 1, 5), (0, 5, 4),  # -y
        (2, 3, 7), (2, 7, 6),  # +y
        (1, 2, 6), (1, 6, 5),  # +x
        (3, 0, 4), (3, 4, 7),  # -x
    ]
    return v, t


def _recessed_opening(w: float, h: float, depth: float, frame: float
                      ) -> Tuple[List[Vec3], List[Tuple[int, int, int]]]:
    """Window/door template: 26 triangles.

    Local frame: x across [0, w], z up [0, h], y into the wall [0, depth].
    Pieces: 4 front frame strips (8), 4 outer perimeter sides (8),
    4 reveal strips to the recessed panel (8), recessed panel (2).
    """
    f = min(frame, w / 4, h / 4)
    x0, x1 = 0.0, w
    z0, z1 = 0.0, h
    ix0, ix1 = x0 + f, x1 - f
    iz0, iz1 = z0 + f, z1 - f
    verts: List[Vec3] = []
    tris: List[Tuple[int, int, int]] = []

    def quad(a, b, c, d):
        base = len(verts)
        verts.extend([a, b, c, d])
        tris.append((base, base + 1, base + 2))
        tris.append((base, base + 2, base + 3))

    # Front frame strips at y=0 (facing -y / outward).
    quad((x0, 0, z0), (x1, 0, z0), (x1, 0, iz0), (x0, 0, iz0))        # bottom
    quad((x0, 0, iz1), (x1, 0, iz1), (x1, 0, z1), (x0, 0, z1))        # top
    quad((x0, 0, iz0), (ix0, 0, iz0), (ix0, 0, iz1), (x0, 0, iz1))    # left
    quad((ix1, 0, iz0), (x1, 0, iz0), (x1, 0, iz1), (ix1, 0, iz1))    # right
    # Outer perimeter sides from y=0 back to y=depth.
    quad((x0, 0, z0), (x0, depth, z0), (x1, depth, z0), (x1, 0, z0))  # bottom
    quad((x0, 0, z1), (x1, 0, z1), (x1, depth, z1), (x0, depth, z1))  # top
    quad((x0, 0, z0), (x0, 0, z1), (x0, depth, z1), (x0, depth, z0))  # left
    quad((x1, 0, z0), (x1, depth, z0), (x1, depth, z1), (x1, 0, z1))  # right
    # Reveal strips from the frame inner edge to the recessed panel.
    quad((ix0, 0, iz0), (ix1, 0, iz0), (ix1, depth, iz0), (ix0, depth, iz0))
    quad((ix0, 0, iz1), (ix0, depth, iz1), (ix1, depth, iz1), (ix1, 0, iz1))
    quad((ix0, 0, iz0), (ix0, depth, iz0), (ix0, depth, iz1), (ix0, 0, iz1))
    quad((ix1, 0, iz0), (ix1, 0, iz1), (ix1, depth, iz1), (ix1, depth, iz0))
    # Recessed panel at y=depth.
    quad((ix0, depth, iz0), (ix1, depth, iz0), (ix1, depth, iz1), (ix0, depth, iz1))
    return verts, tris

WINDOW_TEMPLATE_TRIANGLES = 26


def generate_component(kind: str, width: float, height: float,
                       params: ReconstructParams = ReconstructParams()
                       ) -> Tuple[List[Vec3], List[Tuple[int, int, int]]]:
    """Canonical component mesh in its local frame (x across, y depth, z up)."""
    if width <= 0 or height <= 0:
        raise DomainError(f"{kind} needs positive dimensions")
    if kind == "window":
        return _recessed_opening(width, height, params.window_recess,
                                 0.08 * min(width, height) + 0.02)
    if kind == "entry":
        return _recessed_opening(width, height, params.window_recess,
                                 0.08 * min(width, height) + 0.02)
    if kind in ("window_sill", "cornice", "roof_cornice"):
        # protruding slab: negative y sticks out of the wall
        return _box(0.0, -params.sill_protrusion, 0.0, width, 0.0, height)
    if kind == "stair":
        n_steps = math.ceil(height / params.stair_rise - 1e-9)
        verts: List[Vec3] = []
        tris: List[Tuple[int, int, int]] = []
        for k in range(n_steps):
            top = min((k + 1) * params.stair_rise, height)
            depth = (n_steps - k) * params.stair_run
            v, t = _box(0.0, -depth, k * params.stair_rise, width, 0.0, top)
            base = len(verts)
            verts.extend(v)
            tris.extend((a + base, b + base, c + base) for a, b, c in t)
        return verts, tris
    raise ValidationError(f"unsupported component kind {kind!r}")


def stair_step_count(entry_height: float,
                     params: ReconstructParams = ReconstructParams()) -> int:
    if entry_height <= 0:
        raise DomainError("entry height must be positive")
    return math.ceil(entry_height / params.stair_rise - 1e-9)


def _place(frame: WallFrame, verts: Sequence[Vec3], u0: float, v0: float) -> List[Vec3]:
    """Place component-local vertices (x across, y depth, z up) on a wall."""
    out = []
    for x, y, z in verts:
        out.append(frame.to_world(u0 + x, v0 + z, depth=y))
    return out


def _clamp_span(lo: float, size: float, limit: float, what: str) -> Tuple[float, float]:
    import logging

    log = logging.getLogger(__name__)
    if size > limit:
        log.warning("%s wider than its wall face; clamping", what)
        return 0.0, limit
    if lo < 0:
        log.warning("%s overflows wall face start; clamping", what)
        return 0.0, size
    if lo + size > limit:
        log.warning("%s overflows wall face end; clamping", what)
        return limit - size, size
    return lo, size


def assemble_building(fp: Footprint, height: float,
                      facades: Sequence[Tuple[FacadeParams, int]] = (),
                      params: ReconstructParams = ReconstructParams()) -> Mesh:
    """Extrusion plus procedural components for each annotated facade."""
    mesh = extrude_footprint(fp, height)
    for fparams, edge_index in sorted(facades, key=lambda fe: fe[1]):
        frame = facade_to_world(fp, edge_index, height)
        # Facade meters map onto the wall; scale declared width to edge length.
        su = frame.length / fparams.facade_width_m
        sv = height / fparams.facade_height_m
        for ri, row in enumerate(fparams.rows):
            w = row.window_width_m * su
            h = row.window_height_m * sv
            v0, h = _clamp_span(row.y_m * sv, h, height,
                                f"window row {ri} on edge {edge_index}")
            for ci, a in enumerate(fparams.col_abscissae):
                cu = a * frame.length
                u0, w_c = _clamp_span(cu - w / 2, w, frame.length,
                                      f"window r{ri}c{ci} on edge {edge_index}")
                verts, tris = generate_component("window", w_c, h, params)
                mesh.add_component(
                    f"edge{edge_index}_row{ri}_col{ci}_window",
                    _place(frame, verts, u0, v0), tris,
                )
        for ei, entry in enumerate(fparams.entries):
            w = entry.width_m * su
            h = min(entry.height_m * sv, height)
            u0, w = _clamp_span(entry.center_abscissa * frame.length - w / 2, w,
                                frame.length, f"entry {ei} on edge {edge_index}")
            verts, tris = generate_component("entry", w, h, params)
            mesh.add_component(
                f"edge{edge_index}_entry{ei}", _place(frame, verts, u0, 0.0), tris
            )
        for si, stair in enumerate(fparams.stairs):
            w = stair.width_m * su
            h = stair.height_m * sv
            u0, w = _clamp_span(stair.center_abscissa * frame.length - w / 2, w,
                                frame.length, f"stair {si} on edge {edge_index}")
            verts, tris = generate_component("stair", w, h, params)
            mesh.add_component(
                f"edge{edge_index}_stair{si}", _place(frame, verts, u0, 0.0), tris
            )
    return mesh


# --- glTF 2.0 binary export ---

_GLB_MAGIC = 0x46546C67
_CHUNK_JSON = 0x4E4F534A
_CHUNK_BIN = 0x004E4942


def export_gltf(mesh: Mesh) -> bytes:
    """Binary glTF: float32 positions, uint32 indices, one primitive per
    component tag. Coordinates rotated to glTF Y-up (x, z, -y)."""
    if not mesh.triangles or not mesh.vertices:
        raise DomainError("cannot export an empty mesh")

    positions = bytearray()
    mins = [math.inf] * 3
    maxs = [-math.inf] * 3
    for x, y, z in mesh.vertices:
        gx, gy, gz = float(x), float(z), float(-y)
        positions += struct.pack("<fff", gx, gy, gz)
        for i, v in enumerate((gx, gy, gz)):
            f32 = struct.unpack("<f", struct.pack("<f", v))[0]
            mins[i] = min(mins[i], f32)
            maxs[i] = max(maxs[i], f32)

    buffer = bytearray(positions)
    while len(buffer) % 4:
        buffer += b"\x00"

    buffer_views = [{
        "buffer": 0, "byteOffset": 0, "byteLength": len(positions),
        "target": 34962,
    }]
    accessors = [{
        "bufferView": 0, "componentType": 5126, "count": len(mesh.vertices),
        "type": "VEC3", "min": mins, "max": maxs,
    }]
    primitives = []
    components = mesh.components or [("mesh", 0, len(mesh.triangles))]
    for tag, start, count in components:
        if count == 0:
            continue
        idx = bytearray()
        for tri in mesh.triangles[start : start + count]:
            idx += struct.pack("<III", *tri)
        offset = len(buffer)
        buffer += idx
        buffer_views.append({
            "buffer": 0, "byteOffset": offset, "byteLength": len(idx),
            "target": 34963,
        })
        accessors.append({
            "bufferView": len(buffer_views) - 1, "componentType": 5125,
            "count": count * 3, "type": "SCALAR",
        })
        primitives.append({
            "attributes": {"POSITION": 0},
            "indices": len(accessors) - 1,
            "extras": {"component": tag},
        })

    doc = {
        "asset": {
            "version": "2.0",
            "generator": "chronomap",
            "extras": {"merc_x": mesh.anchor.x, "merc_y": mesh.anchor.y},
        },
        "scene": 0,
        "scenes": [{"nodes": [0]}],
        "nodes": [{"mesh": 0}],
        "meshes": [{"primitives": primitives}],
        "buffers": [{"byteLength": len(buffer)}],
        "bufferViews": buffer_views,
        "accessors": accessors,
    }
    json_bytes = json.dumps(doc, separators=(",", ":"), sort_keys=True).encode("utf-8")
    while len(json_bytes) % 4:
        json_bytes += b" "
    bin_bytes = bytes(buffer)
    while len(bin_bytes) % 4:
        bin_bytes += b"\x00"

    total = 12 + 8 + len(json_bytes) + 8 + len(bin_bytes)
    out = bytearray()
    out += struct.pack("<III", _GLB_MAGIC, 2, total)
    out += struct.pack("<II", len(json_bytes), _CHUNK_JSON)
    out += json_bytes
    out += struct.pack("<II", len(bin_bytes), _CHUNK_BIN)
    out += bin_bytes
    return bytes(out)


def export_obj(mesh: Mesh) -> str:
    """Debug export: ASCII OBJ, positions and faces only."""
    lines = [f"# chronomap mesh, anchor {mesh.anchor.x} {mesh.anchor.y}"]
    for x, y, z in mesh.vertices:
        lines.append(f"v {x} {y} {z}")
    for a, b, c in mesh.triangles:
        lines.append(f"f {a + 1} {b + 1} {c + 1}")
    return "\n".join(lines) + "\n"
