import numpy as np
import pytest

from chronomap.errors import DegeneracyError, DomainError, ValidationError
from chronomap.facade import (
    Annotation,
    FacadeBox,
    FacadeGrid,
    LineSegment,
    VanishingPoint,
    apply_homography,
    apply_point,
    estimate_vanishing_point,
    estimate_vanishing_points,
    extract_params,
    load_annotation,
    rectifying_homography,
    regularize_grid,
    segments_from_boxes,
    split_by_orientation,
)


def warp_segment(H, s):
    x1, y1 = apply_point(H, s.x1, s.y1)
    x2, y2 = apply_point(H, s.x2, s.y2)
    return LineSegment(x1, y1, x2, y2)


def frontal_grid_segments(n=5, lo=100.0, hi=900.0):
    """Horizontal and vertical lines of a frontal 1000-px facade."""
    segs = []
    for t in np.linspace(lo, hi, n):
        segs.append(LineSegment(lo, t, hi, t))
        segs.append(LineSegment(t, lo, t, hi))
    return segs


def vp_angle_deg(a: VanishingPoint, b_vec) -> float:
    u = a.vector()
    v = np.asarray(b_vec, dtype=float)
    v = v / np.linalg.norm(v)
    return float(np.degrees(np.arccos(min(1.0, abs(float(np.dot(u, v)))))))


MILD_H = np.array([
    [1.0, 0.08, 12.0],
    [0.05, 1.06, -8.0],
    [8e-5, 1.5e-4, 1.0],
])


class TestVanishingPoint:
    def test_concurrent_segments(self):
        vp_at = (100.0, 50.0)
        segs = []
        for ang in (5, 20, -10, 40, -30):
            r = np.radians(ang)
            d = (np.cos(r), np.sin(r))
            segs.append(LineSegment(
                vp_at[0] + 100 * d[0], vp_at[1] + 100 * d[1],
                vp_at[0] + 400 * d[0], vp_at[1] + 400 * d[1],
            ))
        vp = estimate_vanishing_point(segs)
        x, y = vp.dehomogenize()
        assert abs(x - 100) < 1e-6
        assert abs(y - 50) < 1e-6

    def test_parallel_horizontal(self):
        segs = [LineSegment(0, float(y), 100, float(y)) for y in (0, 10, 20)]
        vp = estimate_vanishing_point(segs)
        assert abs(vp.c) < 1e-9
        assert abs(abs(vp.a) - 1) < 1e-9
        assert abs(vp.b) < 1e-9

    def test_insufficient_segments(self):
        with pytest.raises(ValidationError):
            estimate_vanishing_point([LineSegment(0, 0, 1, 0)])

    def test_known_homography_recovery(self):
        segs = [warp_segment(MILD_H, s) for s in frontal_grid_segments()]
        vp_h, vp_v = estimate_vanishing_points(segs)
        true_h = MILD_H @ np.array([1.0, 0.0, 0.0])
        true_v = MILD_H @ np.array([0.0, 1.0, 0.0])
        assert vp_angle_deg(vp_h, true_h) < 0.5
        assert vp_angle_deg(vp_v, true_v) < 0.5


class TestRectifyingHomography:
    def test_axis_vps_give_identity(self):
        H = rectifying_homography(
            VanishingPoint(1, 0, 0), VanishingPoint(0, 1, 0), 1000, 800
        )
        assert np.allclose(H, np.eye(3), atol=1e-12)

    def test_coincident_vps_degenerate(self):
        vp = VanishingPoint.from_vector([100, 50, 1])
        with pytest.raises(DegeneracyError):
            rectifying_homography(vp, vp, 1000, 1000)

    def test_invertible(self):
        segs = [warp_segment(MILD_H, s) for s in frontal_grid_segments()]
        vp_h, vp_v = estimate_vanishing_points(segs)
        H = rectifying_homography(vp_h, vp_v, 1000, 1000)
        assert np.allclose(H @ np.linalg.inv(H), np.eye(3), atol=1e-9)

    def test_rectifies_warped_rectangle(self):
        corners = [(200.0, 200.0), (800.0, 200.0), (800.0, 700.0), (200.0, 700.0)]
        warped = [apply_point(MILD_H, x, y) for x, y in corners]
        segs = [warp_segment(MILD_H, s) for s in frontal_grid_segments()]
        vp_h, vp_v = estimate_vanishing_points(segs)
        H = rectifying_homography(vp_h, vp_v, 1000, 1000)
        rect = [apply_point(H, x, y) for x, y in warped]
        # Opposite edges parallel to the axes within 0.5 px.
        assert abs(rect[0][1] - rect[1][1]) < 0.5
        assert abs(rect[2][1] - rect[3][1]) < 0.5
        assert abs(rect[0][0] - rect[3][0]) < 0.5
        assert abs(rect[1][0] - rect[2][0]) < 0.5


def axis_aligned_residual(rectified_pts, frontal_pts):
    """Residual after removing the inherent per-axis scale/offset ambiguity."""
    r = np.asarray(rectified_pts)
    f = np.asarray(frontal_pts)
    res = 0.0
    for axis in (0, 1):
        A = np.column_stack([r[:, axis], np.ones(len(r))])
        coef, *_ = np.linalg.lstsq(A, f[:, axis], rcond=None)
        res = max(res, float(np.max(np.abs(A @ coef - f[:, axis]))))
    return res


class TestPipelineConsistency:
    @pytest.mark.parametrize("seed", range(5))
    def test_synthetic_facade_rectification(self, seed):
        rng = np.random.default_rng(seed)
        H_true = np.eye(3)
        H_true[0, 1] = rng.uniform(-0.1, 0.1)
        H_true[1, 0] = rng.uniform(-0.1, 0.1)
        H_true[0, 2] = rng.uniform(-20, 20)
        H_true[1, 2] = rng.uniform(-20, 20)
        H_true[2, 0] = rng.uniform(-1e-4, 1e-4)
        H_true[2, 1] = rng.uniform(-1e-4, 1e-4)
        frontal = frontal_grid_segments(6)
        warped = [warp_segment(H_true, s) for s in frontal]
        vp_h, vp_v = estimate_vanishing_points(warped)
        H = rectifying_homography(vp_h, vp_v, 1000, 1000)
        pts_frontal = [(s.x1, s.y1) for s in frontal] + [(s.x2, s.y2) for s in frontal]
        pts_warped = [(s.x1, s.y1) for s in warped] + [(s.x2, s.y2) for s in warped]
        rectified = [apply_point(H, x, y) for x, y in pts_warped]
        assert axis_aligned_residual(rectified, pts_frontal) < 1.0


class TestApplyHomography:
    def test_identity(self):
        boxes = [FacadeBox("window", 10, 20, 30, 40)]
        assert apply_homography(np.eye(3), boxes) == boxes

    def test_double_scale(self):
        H = np.diag([2.0, 2.0, 1.0])
        (out,) = apply_homography(H, [FacadeBox("window", 10, 20, 30, 40)])
        assert (out.w, out.h) == (60, 80)

    def test_point_at_infinity(self):
        H = np.array([[1.0, 0, 0], [0, 1.0, 0], [-0.1, 0, 1.0]])
        with pytest.raises(DomainError, match="window"):
            apply_homography(H, [FacadeBox("window", 10, 0, 1, 1)])


def make_grid_boxes(rows=3, cols=4, w=10.0, h=20.0, x0=50.0, y0=40.0,
                    dx=40.0, dy=60.0, jitter=None, rng=None):
    boxes = []
    for r in range(rows):
        for c in range(cols):
            jx = jy = 0.0
            if jitter:
                jx = rng.uniform(-jitter, jitter)
                jy = rng.uniform(-jitter, jitter)
            boxes.append(FacadeBox("window", x0 + c * dx + jx, y0 + r * dy + jy, w, h))
    return boxes


class TestRegularizeGrid:
    def test_single_box(self):
        grid = regularize_grid([FacadeBox("window", 5, 6, 7, 8)])
        assert len(grid.rows) == 1
        assert len(grid.columns) == 1
        assert grid.boxes == [FacadeBox("window", 5, 6, 7, 8)]

    def test_exact_grid_unchanged(self):
        boxes = make_grid_boxes()
        grid = regularize_grid(boxes)
        assert sorted(grid.boxes, key=lambda b: (b.y, b.x)) == sorted(
            boxes, key=lambda b: (b.y, b.x)
        )

    def test_jittered_grid_recovers(self):
        rng = np.random.default_rng(32)
        boxes = make_grid_boxes(jitter=2.0, rng=rng)
        grid = regularize_grid(boxes)
        clean = make_grid_boxes()
        for got, want in zip(
            sorted(grid.boxes, key=lambda b: (b.y, b.x)),
            sorted(clean, key=lambda b: (b.y, b.x)),
        ):
            assert abs(got.x - want.x) < 1.0
            assert abs(got.y - want.y) < 1.0

    def test_row_height_variance_zero(self):
        rng = np.random.default_rng(7)
        boxes = make_grid_boxes(jitter=2.0, rng=rng)
        grid = regularize_grid(boxes)
        for row in grid.rows:
            hs = {b.h for b in row.boxes}
            ys = {b.y for b in row.boxes}
            assert len(hs) == 1 and len(ys) == 1

    def test_idempotent(self):
        rng = np.random.default_rng(5)
        boxes = make_grid_boxes(jitter=2.0, rng=rng)
        once = regularize_grid(boxes)
        twice = regularize_grid(once.boxes)
        assert once == twice

    def test_permutation_invariant(self):
        rng = np.random.default_rng(9)
        boxes = make_grid_boxes(jitter=2.0, rng=rng)
        g1 = regularize_grid(boxes)
        g2 = regularize_grid(boxes[::-1])
        assert g1 == g2


class TestExtractParams:
    def grid_2x3(self):
        boxes = make_grid_boxes(rows=2, cols=3, w=10.0, h=20.0,
                                x0=10.0, y0=10.0, dx=30.0, dy=40.0)
        return regularize_grid(boxes)

    def test_arithmetic(self):
        # 100x80 px facade declared 10 m x 8 m: 1 px = 0.1 m on both axes.
        params = extract_params(self.grid_2x3(), (0, 0, 100, 80), (10.0, 8.0))
        assert params.n_rows == 2
        assert params.n_cols == 3
        for row in params.rows:
            assert row.window_width_m == pytest.approx(1.0)
            assert row.window_height_m == pytest.approx(2.0)
            assert row.width_height_ratio == pytest.approx(0.5)
        assert list(params.col_abscissae) == sorted(params.col_abscissae)

    def test_empty_grid(self):
        params = extract_params(None, (0, 0, 100, 80), (10.0, 8.0))
        assert params.n_rows == 0
        assert params.rows == ()

    def test_scale_invariance(self):
        p1 = extract_params(self.grid_2x3(), (0, 0, 100, 80), (10.0, 8.0))
        boxes2 = make_grid_boxes(rows=2, cols=3, w=20.0, h=40.0,
                                 x0=20.0, y0=20.0, dx=60.0, dy=80.0)
        p2 = extract_params(regularize_grid(boxes2), (0, 0, 200, 160), (10.0, 8.0))
        assert p1 == p2

    def test_zero_area_facade(self):
        with pytest.raises(DomainError):
            extract_params(self.grid_2x3(), (0, 0, 0, 80), (10.0, 8.0))


class TestAnnotationIO:
    def test_roundtrip(self, tmp_path):
        doc = {
            "image_width": 1000,
            "image_height": 800,
            "boxes": [
                {"label": "window", "x": 10, "y": 20, "w": 30, "h": 40,
                 "confidence": 0.9},
                {"label": "entry", "x": 100, "y": 700, "w": 40, "h": 90},
            ],
            "segments": [{"x1": 0, "y1": 0, "x2": 10, "y2": 1}],
            "link": {"feature_id": 3, "edge_index": 1},
            "facade_size_m": [12.0, 9.0],
        }
        path = tmp_path / "facade.json"
        path.write_text(__import__("json").dumps(doc))
        ann = load_annotation(path)
        assert ann.image_width == 1000
        assert len(ann.boxes) == 2
        assert ann.link == (3, 1)
        assert ann.facade_size_m == (12.0, 9.0)

    def test_malformed(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"boxes": []}')
        with pytest.raises(ValidationError):
            load_annotation(path)

    def test_segments_from_boxes(self):
        segs = segments_from_boxes([FacadeBox("window", 0, 0, 10, 20)])
        assert len(segs) == 4
        horiz, vert = split_by_orientation(segs)
        assert len(horiz) == 2 and len(vert) == 2
