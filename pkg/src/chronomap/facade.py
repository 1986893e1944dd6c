"""Facade post-detection processing: vanishing-point rectification, grid
regularization, and procedural parameter extraction.

Inputs are annotated single-view photos: labeled component boxes plus
(optionally) line segments. Windows are snapped into rows and columns by
median clustering so each row shares one height and each column one width,
then converted into physical parameters for procedural reconstruction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DegeneracyError, DomainError, ValidationError

LABELS = ("window", "window_sill", "cornice", "roof_cornice", "storefront",
          "entry", "stair")

RANSAC_ITERATIONS = 500
RANSAC_SEED = 20210917
ANGLE_THRESHOLD_DEG = 2.0
ORIENTATION_SPLIT_DEG = 45.0


@dataclass(frozen=True)
class LineSegment:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        if self.length == 0:
            raise ValidationError("line segment has zero length")

    @property
    def length(self) -> float:
        return float(np.hypot(self.x2 - self.x1, self.y2 - self.y1))

    @property
    def angle_deg(self) -> float:
        """Orientation in (-90, 90] degrees."""
        a = np.degrees(np.arctan2(self.y2 - self.y1, self.x2 - self.x1))
        if a <= -90:
            a += 180
        elif a > 90:
            a -= 180
        return float(a)

    def homogeneous_line(self) -> np.ndarray:
        l = np.cross([self.x1, self.y1, 1.0], [self.x2, self.y2, 1.0])
        return l / np.linalg.norm(l[:2])

    def midpoint(self) -> Tuple[float, float]:
        return ((self.x1 + self.x2) / 2, (self.y1 + self.y2) / 2)


@dataclass(frozen=True)
class VanishingPoint:
    """Unit-normalized homogeneous point; c = 0 is a direction at infinity."""

    a: float
    b: float
    c: float

    @classmethod
    def from_vector(cls, v) -> "VanishingPoint":
        v = np.asarray(v, dtype=float)
        n = np.linalg.norm(v)
        if n == 0:
            raise DegeneracyError("zero homogeneous vector")
        v = v / n
        # canonical sign: largest-magnitude entry positive
        k = int(np.argmax(np.abs(v)))
        if v[k] < 0:
            v = -v
        return cls(float(v[0]), float(v[1]), float(v[2]))

    def vector(self) -> np.ndarray:
        return np.array([self.a, self.b, self.c])

    def dehomogenize(self) -> Tuple[float, float]:
        if abs(self.c) < 1e-12:
            raise DegeneracyError("vanishing point at infinity has no pixel position")
        return (self.a / self.c, self.b / self.c)


@dataclass(frozen=True)
class FacadeBox:
    label: str
    x: float
    y: float
    w: float
    h: float
    confidence: float = 1.0

    def __post_init__(self):
        if self.label not in LABELS:
            raise ValidationError(f"unknown facade label {self.label!r}")
        if self.w <= 0 or self.h <= 0:
            raise ValidationError(f"{self.label} box must have positive size")
        if not 0 <= self.confidence <= 1:
            raise ValidationError("confidence must be in [0, 1]")

    def center(self) -> Tuple[float, float]:
        return (self.x + self.w / 2, self.y + self.h / 2)

    def corners(self) -> List[Tuple[float, float]]:
        return [
            (self.x, self.y),
            (self.x + self.w, self.y),
            (self.x + self.w, self.y + self.h),
            (self.x, self.y + self.h),
        ]


def split_by_orientation(segments: Sequence[LineSegment]
                         ) -> Tuple[List[LineSegment], List[LineSegment]]:
    """Classify segments into (horizontal, vertical) at the 45-degree split."""
    horiz = [s for s in segments if abs(s.angle_deg) < ORIENTATION_SPLIT_DEG]
    vert = [s for s in segments if abs(s.angle_deg) >= ORIENTATION_SPLIT_DEG]
    return horiz, vert


def _angular_error_deg(segment: LineSegment, vp: np.ndarray) -> float:
    """Angle between the segment direction and the direction from its
    midpoint toward the candidate vanishing point."""
    mx, my = segment.midpoint()
    d = np.array([segment.x2 - segment.x1, segment.y2 - segment.y1])
    d = d / np.linalg.norm(d)
    if abs(vp[2]) < 1e-12:
        to_vp = vp[:2] / np.linalg.norm(vp[:2])
    else:
        to_vp = np.array([vp[0] / vp[2] - mx, vp[1] / vp[2] - my])
        n = np.linalg.norm(to_vp)
        if n == 0:
            return 0.0
        to_vp = to_vp / n
    cosang = abs(float(np.dot(d, to_vp)))
    return float(np.degrees(np.arccos(min(1.0, cosang))))


def _refine_vp(segments: Sequence[LineSegment]) -> np.ndarray:
    """Least-squares vanishing point: smallest singular vector of the stacked
    normalized segment lines."""
    lines = np.array([s.homogeneous_line() for s in segments])
    _, _, vt = np.linalg.svd(lines)
    return vt[-1]


def estimate_vanishing_point(segments: Sequence[LineSegment],
                             seed: int = RANSAC_SEED,
                             iterations: int = RANSAC_ITERATIONS,
                             threshold_deg: float = ANGLE_THRESHOLD_DEG
                             ) -> VanishingPoint:
    """Robust consensus intersection of one orientation class of segments."""
    if len(segments) < 2:
        raise ValidationError(
            f"need at least 2 segments per orientation class, got {len(segments)}"
        )
    rng = np.random.default_rng(seed)
    best_inliers: List[LineSegment] = []
    n = len(segments)
    for _ in range(iterations):
        i, j = rng.choice(n, size=2, replace=False)
        cand = np.cross(segments[i].homogeneous_line(),
                        segments[j].homogeneous_line())
        norm = np.linalg.norm(cand)
        if norm < 1e-15:
            continue
        cand = cand / norm
        inliers = [s for s in segments
                   if _angular_error_deg(s, cand) < threshold_deg]
        if len(inliers) > len(best_inliers):
            best_inliers = inliers
    if len(best_inliers) < 2:
        raise DegeneracyError("no consensus vanishing point found")
    return VanishingPoint.from_vector(_refine_vp(best_inliers))


def estimate_vanishing_points(segments: Sequence[LineSegment]
                              ) -> Tuple[VanishingPoint, VanishingPoint]:
    """(horizontal VP, vertical VP) from a mixed segment set."""
    horiz, vert = split_by_orientation(segments)
    if len(horiz) < 2 or len(vert) < 2:
        raise ValidationError(
            f"need >= 2 segments per class (got {len(horiz)} horizontal, "
            f"{len(vert)} vertical)"
        )
    return (
        estimate_vanishing_point(horiz),
        estimate_vanishing_point(vert, seed=RANSAC_SEED + 1),
    )


def rectifying_homography(vp_h: VanishingPoint, vp_v: VanishingPoint,
                          width: float, height: float) -> np.ndarray:
    """3x3 homography sending vp_h -> (1,0,0) and vp_v -> (0,1,0), fixing the
    image center and unit mean scale there."""
    v1 = vp_h.vector()
    v2 = vp_v.vector()
    linf = np.cross(v1, v2)
    if np.linalg.norm(linf) < 1e-12:
        raise DegeneracyError("coincident vanishing points")
    linf = linf / np.linalg.norm(linf)
    if abs(linf[0]) < 1e-12 and abs(linf[1]) < 1e-12:
        # Vanishing line already the line at infinity: no projective part.
        hp = np.eye(3)
    else:
        # Any nonsingular matrix whose third row is the vanishing line sends
        # it to infinity; the affine step below removes the leftover shear.
        k = int(np.argmax(np.abs(linf)))
        basis = [e for i, e in enumerate(np.eye(3)) if i != k]
        hp = np.vstack([basis[0], basis[1], linf])
    d1 = hp @ v1
    d2 = hp @ v2
    D = np.array([[d1[0], d2[0]], [d1[1], d2[1]]])
    if abs(np.linalg.det(D)) < 1e-12:
        raise DegeneracyError("vanishing directions are parallel after projection")
    A = np.eye(3)
    A[:2, :2] = np.linalg.inv(D)
    h0 = A @ hp

    cx, cy = width / 2.0, height / 2.0
    c = np.array([cx, cy, 1.0])
    hc = h0 @ c
    if abs(hc[2]) < 1e-15:
        raise DegeneracyError("image center maps to infinity")
    # Jacobian of the projective map at the center.
    w = hc[2]
    J = (h0[:2, :2] * w - np.outer(hc[:2], h0[2, :2])) / (w * w)
    det = abs(np.linalg.det(J))
    if det < 1e-18:
        raise DegeneracyError("rectification collapses the image center")
    s = 1.0 / np.sqrt(det)
    post = np.array([
        [s, 0.0, cx - s * hc[0] / w],
        [0.0, s, cy - s * hc[1] / w],
        [0.0, 0.0, 1.0],
    ])
    H = post @ h0
    H = H / H[2, 2] if abs(H[2, 2]) > 1e-12 else H
    return H


def apply_point(H: np.ndarray, x: float, y: float) -> Tuple[float, float]:
    v = H @ np.array([x, y, 1.0])
    if abs(v[2]) < 1e-12:
        raise DomainError(f"point ({x}, {y}) maps to infinity")
    return (float(v[0] / v[2]), float(v[1] / v[2]))


def apply_homography(H: np.ndarray, boxes: Sequence[FacadeBox]) -> List[FacadeBox]:
    """Map each box's corners and re-box as the axis-aligned hull."""
    out = []
    for b in boxes:
        try:
            pts = [apply_point(H, x, y) for x, y in b.corners()]
        except DomainError:
            raise DomainError(
                f"{b.label} box at ({b.x}, {b.y}) projects to infinity"
            ) from None
        xs = [p[0] for p in pts]
        ys = [p[1] for p in pts]
        out.append(FacadeBox(b.label, min(xs), min(ys),
                             max(xs) - min(xs), max(ys) - min(ys), b.confidence))
    return out


@dataclass(frozen=True)
class GridRow:
    y: float
    height: float
    boxes: Tuple[FacadeBox, ...]


@dataclass(frozen=True)
class GridColumn:
    x: float
    width: float


@dataclass(frozen=True)
class FacadeGrid:
    rows: Tuple[GridRow, ...]
    columns: Tuple[GridColumn, ...]

    @property
    def boxes(self) -> List[FacadeBox]:
        return [b for row in self.rows for b in row.boxes]


def _cluster_1d(values: Sequence[float], gap: float) -> List[List[int]]:
    """Indices grouped by sorted-gap clustering."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    clusters: List[List[int]] = [[order[0]]]
    for i in order[1:]:
        if values[i] - values[clusters[-1][-1]] > gap:
            clusters.append([i])
        else:
            clusters[-1].append(i)
    return clusters


def regularize_grid(boxes: Sequence[FacadeBox]) -> FacadeGrid:
    """Snap window boxes onto a shared row/column grid by median clustering."""
    windows = [b for b in boxes if b.label == "window"]
    if not windows:
        raise ValidationError("regularize_grid needs at least one window box")
    windows = sorted(windows, key=lambda b: (b.center()[1], b.center()[0]))
    med_h = float(np.median([b.h for b in windows]))
    med_w = float(np.median([b.w for b in windows]))
    y_centers = [b.center()[1] for b in windows]
    x_centers = [b.center()[0] for b in windows]
    row_clusters = _cluster_1d(y_centers, 0.5 * med_h)
    col_clusters = _cluster_1d(x_centers, 0.5 * med_w)

    col_x: Dict[int, float] = {}
    col_w: Dict[int, float] = {}
    box_col: Dict[int, int] = {}
    for ci, members in enumerate(sorted(col_clusters,
                                        key=lambda m: min(x_centers[i] for i in m))):
        cx = float(np.median([x_centers[i] for i in members]))
        cw = float(np.median([windows[i].w for i in members]))
        col_x[ci] = cx
        col_w[ci] = cw
        for i in members:
            box_col[i] = ci

    rows: List[GridRow] = []
    for members in sorted(row_clusters,
                          key=lambda m: min(y_centers[i] for i in m)):
        ry = float(np.median([windows[i].y for i in members]))
        rh = float(np.median([windows[i].h for i in members]))
        snapped = []
        for i in sorted(members, key=lambda i: x_centers[i]):
            ci = box_col[i]
            snapped.append(FacadeBox(
                "window",
                col_x[ci] - col_w[ci] / 2,
                ry,
                col_w[ci],
                rh,
                windows[i].confidence,
            ))
        rows.append(GridRow(ry, rh, tuple(snapped)))
    columns = tuple(
        GridColumn(col_x[ci] - col_w[ci] / 2, col_w[ci]) for ci in sorted(col_x)
    )
    return FacadeGrid(tuple(rows), columns)


@dataclass(frozen=True)
class RowParams:
    y_m: float
    window_width_m: float
    window_height_m: float
    width_height_ratio: float


@dataclass(frozen=True)
class OpeningParams:
    """Physical placement of an entry or stair along the facade base."""

    center_abscissa: float  # normalized 0-1 along facade width
    width_m: float
    height_m: float


@dataclass(frozen=True)
class FacadeParams:
    facade_width_m: float
    facade_height_m: float
    n_rows: int
    n_cols: int
    rows: Tuple[RowParams, ...] = ()
    col_abscissae: Tuple[float, ...] = ()  # normalized window column centers
    entries: Tuple[OpeningParams, ...] = ()
    stairs: Tuple[OpeningParams, ...] = ()


def extract_params(grid: Optional[FacadeGrid],
                   facade_box: Tuple[float, float, float, float],
                   facade_size_m: Tuple[float, float],
                   extras: Sequence[FacadeBox] = ()) -> FacadeParams:
    """Convert a regularized pixel grid into physical procedural parameters.

    ``facade_box`` is the facade rectangle in rectified pixels (x, y, w, h);
    ``facade_size_m`` its declared real size. ``extras`` may carry rectified
    entry/stair boxes.
    """
    fx, fy, fw, fh = facade_box
    if fw <= 0 or fh <= 0:
        raise DomainError("facade box must have positive area")
    width_m, height_m = facade_size_m
    if width_m <= 0 or height_m <= 0:
        raise DomainError("facade real size must be positive")
    sx = width_m / fw
    sy = height_m / fh

    rows: List[RowParams] = []
    abscissae: Tuple[float, ...] = ()
    n_rows = n_cols = 0
    if grid is not None and grid.rows:
        n_rows = len(grid.rows)
        n_cols = len(grid.columns)
        for row in grid.rows:
            w_m = row.boxes[0].w * sx
            h_m = row.height * sy
            # y measured from the facade base (pixel y grows downward)
            y_m = (fy + fh - (row.y + row.height)) * sy
            rows.append(RowParams(y_m, w_m, h_m, w_m / h_m))
        abscissae = tuple(
            sorted((c.x + c.width / 2 - fx) / fw for c in grid.columns)
        )
        if any(not 0 <= a <= 1 for a in abscissae):
            abscissae = tuple(min(1.0, max(0.0, a)) for a in abscissae)

    entries = []
    stairs = []
    for b in extras:
        cx = (b.center()[0] - fx) / fw
        item = OpeningParams(min(1.0, max(0.0, cx)), b.w * sx, b.h * sy)
        if b.label == "entry":
            entries.append(item)
        elif b.label == "stair":
            stairs.append(item)
    return FacadeParams(
        facade_width_m=width_m,
        facade_height_m=height_m,
        n_rows=n_rows,
        n_cols=n_cols,
        rows=tuple(rows),
        col_abscissae=abscissae,
        entries=tuple(entries),
        stairs=tuple(stairs),
    )


@dataclass(frozen=True)
class Annotation:
    """One annotated facade photo."""

    image_width: int
    image_height: int
    boxes: Tuple[FacadeBox, ...]
    segments: Tuple[LineSegment, ...] = ()
    link: Optional[Tuple[int, int]] = None  # (feature_id, edge_index)
    facade_size_m: Optional[Tuple[float, float]] = None


def segments_from_boxes(boxes: Sequence[FacadeBox]) -> List[LineSegment]:
    """Fallback segments: the horizontal and vertical edges of each box."""
    segs = []
    for b in boxes:
        segs.append(LineSegment(b.x, b.y, b.x + b.w, b.y))
        segs.append(LineSegment(b.x, b.y + b.h, b.x + b.w, b.y + b.h))
        segs.append(LineSegment(b.x, b.y, b.x, b.y + b.h))
        segs.append(LineSegment(b.x + b.w, b.y, b.x + b.w, b.y + b.h))
    return segs


def load_annotation(path) -> Annotation:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    try:
        boxes = tuple(
            FacadeBox(d["label"], float(d["x"]), float(d["y"]),
                      float(d["w"]), float(d["h"]),
                      float(d.get("confidence", 1.0)))
            for d in doc["boxes"]
        )
        segments = tuple(
            LineSegment(float(s["x1"]), float(s["y1"]),
                        float(s["x2"]), float(s["y2"]))
            for s in doc.get("segments", [])
        )
        link = None
        if "link" in doc:
            link = (int(doc["link"]["feature_id"]), int(doc["link"]["edge_index"]))
        size = None
        if "facade_size_m" in doc:
            size = (float(doc["facade_size_m"][0]), float(doc["facade_size_m"][1]))
        return Annotation(
            image_width=int(doc["image_width"]),
            image_height=int(doc["image_height"]),
            boxes=boxes,
            segments=segments,
            link=link,
            facade_size_m=size,
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"{path}: malformed annotation file ({exc})") from None


def annotation_params(ann: Annotation) -> FacadeParams:
    """Full single-photo pipeline: rectify, regularize, extract parameters.

    When the annotation carries no line segments, box edges stand in. When
    no real-world size is declared, row count times a 3 m storey estimates
    the height and the rectified aspect ratio supplies the width.
    """
    segments = list(ann.segments) or segments_from_boxes(ann.boxes)
    vp_h, vp_v = estimate_vanishing_points(segments)
    H = rectifying_homography(vp_h, vp_v, ann.image_width, ann.image_height)
    boxes = apply_homography(H, ann.boxes)
    corners = [apply_point(H, x, y)
               for x, y in ((0, 0), (ann.image_width, 0),
                            (ann.image_width, ann.image_height),
                            (0, ann.image_height))]
    xs = [p[0] for p in corners]
    ys = [p[1] for p in corners]
    facade_box = (min(xs), min(ys), max(xs) - min(xs), max(ys) - min(ys))

    grid = None
    if any(b.label == "window" for b in boxes):
        grid = regularize_grid(boxes)
    extras = [b for b in boxes if b.label in ("entry", "stair")]

    size = ann.facade_size_m
    if size is None:
        n_rows = len(grid.rows) if grid is not None else 1
        height_m = 3.0 * (n_rows + 1)
        size = (height_m * facade_box[2] / facade_box[3], height_m)
    return extract_params(grid, facade_box, size, extras)
