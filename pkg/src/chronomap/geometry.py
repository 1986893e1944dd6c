"""Planar geometry helpers: ring math, rectangle clipping, triangulation.

Coordinates are plain (x, y) tuples. Rings are vertex lists without a
repeated closing vertex unless stated otherwise.
"""

from __future__ import annotations

from typing import List, Optional, Sequence, Tuple

from .errors import ValidationError

Point = Tuple[float, float]
Ring = List[Point]


def signed_area(ring: Sequence[Point]) -> float:
    """Shoelace area; positive for counter-clockwise in y-up coordinates."""
    n = len(ring)
    acc = 0.0
    for i in range(n):
        x0, y0 = ring[i]
        x1, y1 = ring[(i + 1) % n]
        acc += x0 * y1 - x1 * y0
    return acc / 2.0


def ring_is_closed(ring: Sequence[Point]) -> bool:
    return len(ring) >= 2 and ring[0] == ring[-1]


def drop_closing_vertex(ring: Sequence[Point]) -> Ring:
    if ring_is_closed(ring):
        return list(ring[:-1])
    return list(ring)


def _segments_intersect(p1, p2, p3, p4) -> bool:
    """Proper or improper intersection of open segments, excluding shared endpoints."""

    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if abs(v) < 1e-12:
            return 0
        return 1 if v > 0 else -1

    def on_segment(a, b, c):
        return (
            min(a[0], b[0]) - 1e-12 <= c[0] <= max(a[0], b[0]) + 1e-12
            and min(a[1], b[1]) - 1e-12 <= c[1] <= max(a[1], b[1]) + 1e-12
        )

    o1, o2 = orient(p1, p2, p3), orient(p1, p2, p4)
    o3, o4 = orient(p3, p4, p1), orient(p3, p4, p2)
    if o1 != o2 and o3 != o4:
        return True
    for a, b, c in ((p1, p2, p3), (p1, p2, p4), (p3, p4, p1), (p3, p4, p2)):
        if orient(a, b, c) == 0 and on_segment(a, b, c):
            return True
    return False


def ring_is_simple(ring: Sequence[Point]) -> bool:
    """O(n^2) self-intersection check; touching at a shared vertex counts as
    non-simple except for the adjacency of consecutive edges."""
    pts = drop_closing_vertex(ring)
    n = len(pts)
    if n < 3:
        return False
    if len(set(pts)) != n:
        return False
    edges = [(pts[i], pts[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue  # adjacent edges share an endpoint by construction
            if _segments_intersect(*edges[i], *edges[j]):
                return False
    return True


def clip_ring_to_rect(ring: Sequence[Point], x0, y0, x1, y1) -> Ring:
    """Sutherland-Hodgman clip of a closed ring against an axis-aligned box."""
    pts = drop_closing_vertex(ring)
    if len(pts) < 3:
        raise ValidationError("polygon ring needs at least 3 vertices")

    def clip_edge(points, inside, intersect):
        out = []
        n = len(points)
        for i in range(n):
            cur = points[i]
            prev = points[i - 1]
            cur_in = inside(cur)
            prev_in = inside(prev)
            if cur_in:
                if not prev_in:
                    out.append(intersect(prev, cur))
                out.append(cur)
            elif prev_in:
                out.append(intersect(prev, cur))
        return out

    def x_cross(bound):
        def f(a, b):
            t = (bound - a[0]) / (b[0] - a[0])
            return (bound, a[1] + t * (b[1] - a[1]))

        return f

    def y_cross(bound):
        def f(a, b):
            t = (bound - a[1]) / (b[1] - a[1])
            return (a[0] + t * (b[0] - a[0]), bound)

        return f

    for inside, cross in (
        (lambda p: p[0] >= x0, x_cross(x0)),
        (lambda p: p[0] <= x1, x_cross(x1)),
        (lambda p: p[1] >= y0, y_cross(y0)),
        (lambda p: p[1] <= y1, y_cross(y1)),
    ):
        pts = clip_edge(pts, inside, cross)
        if not pts:
            return []
    return pts


def clip_polyline_to_rect(line: Sequence[Point], x0, y0, x1, y1) -> List[Ring]:
    """Split a polyline into the pieces inside an axis-aligned box."""

    def inside(p):
        return x0 <= p[0] <= x1 and y0 <= p[1] <= y1

    def clip_segment(a, b):
        # Liang-Barsky parametric clip of segment a-b against the box.
        t0, t1 = 0.0, 1.0
        dx, dy = b[0] - a[0], b[1] - a[1]
        for p, q in (
            (-dx, a[0] - x0),
            (dx, x1 - a[0]),
            (-dy, a[1] - y0),
            (dy, y1 - a[1]),
        ):
            if p == 0:
                if q < 0:
                    return None
            else:
                r = q / p
                if p < 0:
                    if r > t1:
                        return None
                    t0 = max(t0, r)
                else:
                    if r < t0:
                        return None
                    t1 = min(t1, r)
        if t0 > t1:
            return None
        return (
            (a[0] + t0 * dx, a[1] + t0 * dy),
            (a[0] + t1 * dx, a[1] + t1 * dy),
        )

    pieces: List[Ring] = []
    current: Ring = []
    for a, b in zip(line, line[1:]):
        seg = clip_segment(a, b)
        if seg is None:
            if len(current) >= 2:
                pieces.append(current)
            current = []
            continue
        ca, cb = seg
        if not current:
            current = [ca, cb]
        elif current[-1] == ca:
            current.append(cb)
        else:
            if len(current) >= 2:
                pieces.append(current)
            current = [ca, cb]
        if cb != b:  # exited the box
            pieces.append(current)
            current = []
    if len(current) >= 2:
        pieces.append(current)
    return pieces


def _point_in_triangle(p, a, b, c) -> bool:
    def cross(o, u, v):
        return (u[0] - o[0]) * (v[1] - o[1]) - (u[1] - o[1]) * (v[0] - o[0])

    d1 = cross(a, b, p)
    d2 = cross(b, c, p)
    d3 = cross(c, a, p)
    has_neg = d1 < 0 or d2 < 0 or d3 < 0
    has_pos = d1 > 0 or d2 > 0 or d3 > 0
    return not (has_neg and has_pos)


def triangulate_ring(ring: Sequence[Point]) -> List[Tuple[int, int, int]]:
    """Ear-clipping triangulation of a simple polygon; returns vertex index
    triples into the input ring (closing vertex stripped)."""
    pts = drop_closing_vertex(ring)
    n = len(pts)
    if n < 3:
        raise ValidationError("cannot triangulate a ring with fewer than 3 vertices")
    # Work in CCW orientation; map indices back at the end.
    ccw = signed_area(pts) > 0
    order = list(range(n)) if ccw else list(range(n - 1, -1, -1))
    tris: List[Tuple[int, int, int]] = []
    idx = order[:]
    guard = 0
    while len(idx) > 3:
        guard += 1
        if guard > 2 * n * n:
            raise ValidationError("ear clipping failed; polygon may be non-simple")
        ear_found = False
        m = len(idx)
        for k in range(m):
            i0, i1, i2 = idx[k - 1], idx[k], idx[(k + 1) % m]
            a, b, c = pts[i0], pts[i1], pts[i2]
            cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
            if cross <= 1e-14 * (abs(cross) + 1):
                continue  # reflex or degenerate corner
            corners = (a, b, c)
            if any(
                pts[j] not in corners and _point_in_triangle(pts[j], a, b, c)
                for j in idx
                if j not in (i0, i1, i2)
            ):
                continue
            tris.append((i0, i1, i2))
            del idx[k]
            ear_found = True
            break
        if not ear_found:
            # Numerical fallback: clip the least-reflex corner.
            tris.append((idx[0], idx[1], idx[2]))
            del idx[1]
    tris.append((idx[0], idx[1], idx[2]))
    return tris


def triangulate_polygon(
    exterior: Sequence[Point], holes: Sequence[Sequence[Point]] = ()
) -> Tuple[List[Point], List[Tuple[int, int, int]]]:
    """Triangulate a polygon with optional holes by bridging each hole to the
    exterior ring, then ear-clipping the combined ring.

    Returns (vertex list, triangle index triples into that list).
    """
    outer = drop_closing_vertex(exterior)
    if signed_area(outer) < 0:
        outer = outer[::-1]
    combined = list(outer)
    for hole in holes:
        hole_pts = drop_closing_vertex(hole)
        if signed_area(hole_pts) > 0:
            hole_pts = hole_pts[::-1]  # holes run CW in the combined ring
        # Bridge from the hole vertex nearest to an exterior vertex.
        best = None
        for hi, hp in enumerate(hole_pts):
            for ci, cp in enumerate(combined):
                d = (hp[0] - cp[0]) ** 2 + (hp[1] - cp[1]) ** 2
                if best is None or d < best[0]:
                    best = (d, hi, ci)
        _, hi, ci = best
        bridge = (
            combined[: ci + 1]
            + hole_pts[hi:]
            + hole_pts[: hi + 1]
            + combined[ci:]
        )
        combined = bridge
    tris = triangulate_ring(combined)
    return combined, tris


def bbox(points: Sequence[Point]) -> Tuple[float, float, float, float]:
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    return min(xs), min(ys), max(xs), max(ys)


def boxes_intersect(a, b) -> bool:
    return a[0] <= b[2] and b[0] <= a[2] and a[1] <= b[3] and b[1] <= a[3]


def polygon_area_with_holes(exterior: Sequence[Point],
                            holes: Sequence[Sequence[Point]] = ()) -> float:
    area = abs(signed_area(drop_closing_vertex(exterior)))
    for h in holes:
        area -= abs(signed_area(drop_closing_vertex(h)))
    return area
