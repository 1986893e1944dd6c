import numpy as np
import pytest

from chronomap.errors import ArityError, DegeneracyError, DomainError, ValidationError
from chronomap.geo import GeoPoint, mercator_to_lonlat, MercatorPoint
from chronomap.georectify import (
    ControlPointPair,
    RasterImage,
    Transform2D,
    apply_transform,
    evaluate,
    fit_inverse,
    fit_transform,
    monomial_exponents,
    read_pairs_csv,
    residual_report,
    warp_raster,
    write_pairs_csv,
)


def pair(px, py, mx, my):
    return ControlPointPair(px, py, mercator_to_lonlat(MercatorPoint(mx, my)))


def translation_pairs(dx=10.0, dy=5.0):
    pts = [(0.0, 0.0), (100.0, 0.0), (0.0, 100.0)]
    return [pair(u, v, u + dx, v + dy) for u, v in pts]


IDENTITY = Transform2D("affine", 1, (0, 1, 0), (0, 0, 1))


class TestFit:
    def test_translation_exact(self):
        t = fit_transform(translation_pairs(), "affine")
        # Monomial order (0,0),(1,0),(0,1): x = 10 + u, y = 5 + v.
        assert np.allclose(t.coeffs_x, [10, 1, 0], atol=1e-9)
        assert np.allclose(t.coeffs_y, [5, 0, 1], atol=1e-9)

    def test_uniform_scale(self):
        pts = [(0.0, 0.0), (50.0, 10.0), (10.0, 80.0)]
        pairs = [pair(u, v, 2 * u, 2 * v) for u, v in pts]
        t = fit_transform(pairs, "affine")
        assert np.allclose(t.coeffs_x, [0, 2, 0], atol=1e-9)
        assert np.allclose(t.coeffs_y, [0, 0, 2], atol=1e-9)

    def test_overdetermined_matches_lstsq_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            src = rng.uniform(0, 1000, size=(6, 2))
            dst = src @ rng.uniform(-2, 2, size=(2, 2)) + rng.uniform(-50, 50, 2)
            dst += rng.normal(0, 3.0, size=dst.shape)
            pairs = [pair(u, v, x, y) for (u, v), (x, y) in zip(src, dst)]
            t = fit_transform(pairs, "affine")
            # Independent oracle: SVD least squares on the raw design matrix.
            A = np.column_stack([np.ones(6), src[:, 0], src[:, 1]])
            ox, *_ = np.linalg.lstsq(A, dst[:, 0], rcond=None)
            oy, *_ = np.linalg.lstsq(A, dst[:, 1], rcond=None)
            assert np.allclose(t.coeffs_x, ox, atol=1e-6)
            assert np.allclose(t.coeffs_y, oy, atol=1e-6)

    def test_too_few_pairs(self):
        with pytest.raises(ArityError):
            fit_transform(translation_pairs()[:2], "affine")
        with pytest.raises(ArityError):
            fit_transform(translation_pairs(), "poly2")

    def test_collinear_degenerate(self):
        pairs = [pair(i * 10.0, i * 10.0, i * 10.0, i * 10.0) for i in range(4)]
        with pytest.raises(DegeneracyError):
            fit_transform(pairs, "affine")

    def test_poly1_equals_affine(self):
        pairs = translation_pairs(3.5, -2.0) + [pair(40.0, 60.0, 43.2, 58.4)]
        ta = fit_transform(pairs, "affine")
        tp = fit_transform(pairs, "poly1")
        assert np.allclose(ta.coeffs_x, tp.coeffs_x, atol=1e-12)
        assert np.allclose(ta.coeffs_y, tp.coeffs_y, atol=1e-12)

    def test_least_squares_optimality(self):
        rng = np.random.default_rng(11)
        src = rng.uniform(0, 500, size=(8, 2))
        dst = src * 1.5 + rng.normal(0, 5, size=(8, 2))
        pairs = [pair(u, v, x, y) for (u, v), (x, y) in zip(src, dst)]
        t = fit_transform(pairs, "affine")
        base = sum(e**2 for _, e in residual_report(t, pairs).per_pair)
        for axis in ("coeffs_x", "coeffs_y"):
            for k in range(3):
                for delta in (1e-3, -1e-3):
                    c = list(getattr(t, axis))
                    c[k] += delta
                    kw = {axis: tuple(c)}
                    t2 = Transform2D(
                        t.kind,
                        t.degree,
                        kw.get("coeffs_x", t.coeffs_x),
                        kw.get("coeffs_y", t.coeffs_y),
                    )
                    ss = sum(e**2 for _, e in residual_report(t2, pairs).per_pair)
                    assert ss >= base - 1e-9


class TestApply:
    def test_identity(self):
        m = apply_transform(IDENTITY, 7, 9)
        assert (m.x, m.y) == (7, 9)

    def test_translation(self):
        t = fit_transform(translation_pairs(), "affine")
        m = apply_transform(t, 0, 0)
        assert m.x == pytest.approx(10, abs=1e-9)
        assert m.y == pytest.approx(5, abs=1e-9)

    def test_cubic_monomial(self):
        exps = monomial_exponents(3)
        cx = [1.0 if e == (3, 0) else 0.0 for e in exps]
        cy = [0.0] * len(exps)
        t = Transform2D("poly3", 3, tuple(cx), tuple(cy))
        x, _ = evaluate(t, 2.0, 0.0)
        assert float(x) == 8.0


class TestInverse:
    def test_translation_inverse(self):
        inv = fit_inverse(translation_pairs(), "affine")
        assert np.allclose(inv.coeffs_x, [-10, 1, 0], atol=1e-9)
        assert np.allclose(inv.coeffs_y, [-5, 0, 1], atol=1e-9)

    def test_roundtrip_exact_fit(self):
        pairs = translation_pairs()
        fwd = fit_transform(pairs, "affine")
        inv = fit_inverse(pairs, "affine")
        for p in pairs:
            m = apply_transform(fwd, p.px, p.py)
            u, v = evaluate(inv, m.x, m.y)
            assert float(u) == pytest.approx(p.px, abs=1e-6)
            assert float(v) == pytest.approx(p.py, abs=1e-6)

    def test_quadratic_synthetic_warp(self):
        rng = np.random.default_rng(3)
        src = np.column_stack([rng.uniform(0, 100, 12), rng.uniform(0, 100, 12)])

        def fwd(u, v):
            return 2 * u + 0.01 * u * v + 5, v + 0.002 * u**2 - 3

        pairs = [pair(u, v, *fwd(u, v)) for u, v in src]
        inv = fit_inverse(pairs, "poly2")
        for u, v in src:
            x, y = fwd(u, v)
            uu, vv = evaluate(inv, x, y)
            assert abs(float(uu) - u) < 0.5
            assert abs(float(vv) - v) < 0.5


class TestResiduals:
    def test_exact_fit_zero_rms(self):
        pairs = translation_pairs()
        t = fit_transform(pairs, "affine")
        rep = residual_report(t, pairs)
        assert rep.rms < 1e-9
        assert all(e < 1e-9 for _, e in rep.per_pair)

    def test_outlier_matches_oracle(self):
        src = np.array([(0.0, 0.0), (10.0, 0.0), (20.0, 5.0), (30.0, 2.0)])
        dst = np.array([(0.0, 0.0), (10.0, 0.0), (20.0, 0.0), (30.0, 8.0)])  # outlier
        pairs = [pair(u, v, x, y) for (u, v), (x, y) in zip(src, dst)]
        t = fit_transform(pairs, "affine")
        A = np.column_stack([np.ones(4), src[:, 0], src[:, 1]])
        ox, *_ = np.linalg.lstsq(A, dst[:, 0], rcond=None)
        oy, *_ = np.linalg.lstsq(A, dst[:, 1], rcond=None)
        pred = np.column_stack([A @ ox, A @ oy])
        oracle_rms = float(np.sqrt(np.mean(np.sum((pred - dst) ** 2, axis=1))))
        assert residual_report(t, pairs).rms == pytest.approx(oracle_rms, abs=1e-6)

    def test_no_pairs_is_error(self):
        with pytest.raises(ValidationError):
            residual_report(IDENTITY, [])


class TestCsv(object):
    def test_roundtrip(self, tmp_path):
        pairs = [ControlPointPair(1.5, 2.5, GeoPoint(-74.0, 40.7))]
        path = tmp_path / "gcp.csv"
        write_pairs_csv(path, pairs)
        assert read_pairs_csv(path) == pairs

    def test_bad_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(ValidationError):
            read_pairs_csv(path)


def flip_inverse(height):
    """Inverse placing the output grid congruent onto the source (north-up scan)."""
    return Transform2D("affine", 1, (0, 1, 0), (height, 0, -1))


class TestWarp:
    def test_congruent_identity(self):
        rng = np.random.default_rng(0)
        arr = rng.integers(0, 256, size=(5, 7, 4), dtype=np.uint8)
        img = RasterImage(7, 5, 4, arr)
        out = warp_raster(img, flip_inverse(5), (0, 0, 7, 5), (7, 5), "nearest")
        assert np.array_equal(out.samples, arr)

    def test_integer_translation_nearest(self):
        arr = np.zeros((4, 4, 4), dtype=np.uint8)
        arr[1, 1] = (200, 100, 50, 255)
        img = RasterImage(4, 4, 4, arr)
        # Source shifted +2 px in x: inverse subtracts 2 from u.
        inv = Transform2D("affine", 1, (-2, 1, 0), (4, 0, -1))
        out = warp_raster(img, inv, (0, 0, 4, 4), (4, 4), "nearest")
        assert tuple(out.samples[1, 3]) == (200, 100, 50, 255)
        assert out.samples[1, 1, 3] == 0 or tuple(out.samples[1, 1]) == (0, 0, 0, 0)

    def test_half_pixel_bilinear(self):
        arr = np.zeros((1, 2, 4), dtype=np.uint8)
        arr[0, 0] = (0, 0, 0, 255)
        arr[0, 1] = (255, 255, 255, 255)
        img = RasterImage(2, 1, 4, arr)
        inv = Transform2D("affine", 1, (0.5, 1, 0), (1, 0, -1))
        out = warp_raster(img, inv, (0, 0, 1, 1), (1, 1), "bilinear")
        # Hand-computed blend 127.5, rounded half away from zero.
        assert out.samples[0, 0, 0] == 128

    def test_out_of_source_transparent(self):
        img = RasterImage(2, 2, 4, np.full((2, 2, 4), 255, np.uint8))
        out = warp_raster(img, flip_inverse(2), (10, 10, 12, 12), (2, 2), "nearest")
        assert np.all(out.samples[:, :, 3] == 0)

    def test_zero_area_grid(self):
        img = RasterImage(2, 2, 4, np.zeros((2, 2, 4), np.uint8))
        with pytest.raises(DomainError):
            warp_raster(img, flip_inverse(2), (0, 0, 0, 5), (2, 2))


class TestJson:
    def test_roundtrip(self):
        t = fit_transform(translation_pairs(), "affine")
        t2 = Transform2D.from_json(t.to_json())
        assert t == t2
