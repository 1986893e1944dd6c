"""Fit planar transforms from ground control points and warp scanned rasters.

Transforms map scan pixel coordinates to Web Mercator meters; fitting is
done in meters so residuals are physically meaningful. Supported families:
affine and full bivariate polynomials of degree 1-3. Inverse transforms are
obtained by refitting with the point roles swapped (degree >= 2 polynomials
have no closed-form inverse).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np
from PIL import Image

from .errors import ArityError, DegeneracyError, DomainError, ValidationError
from .geo import GeoPoint, MercatorPoint, lonlat_to_mercator

CONDITION_LIMIT = 1e12

#: Monomial exponents (i, j) for u^i * v^j, by ascending total degree.
def monomial_exponents(degree: int) -> List[Tuple[int, int]]:
    if degree not in (1, 2, 3):
        raise ValidationError(f"unsupported polynomial degree {degree}")
    return [(i, d - i) for d in range(degree + 1) for i in range(d, -1, -1)]


def _kind_degree(kind: str) -> int:
    if kind == "affine":
        return 1
    if kind.startswith("poly"):
        return int(kind[4:])
    raise ValidationError(f"unknown transform kind {kind!r}")


@dataclass(frozen=True)
class ControlPointPair:
    """A scan pixel (px, py) matched to a geographic point."""

    px: float
    py: float
    target: GeoPoint

    def __post_init__(self):
        if not (np.isfinite(self.px) and np.isfinite(self.py)):
            raise ValidationError("control point pixel coordinates must be finite")
        if self.px < 0 or self.py < 0:
            raise ValidationError("control point pixel coordinates must be >= 0")


@dataclass(frozen=True)
class Transform2D:
    """Bivariate polynomial map (u, v) -> (x, y), one coefficient vector per axis.

    Coefficients follow :func:`monomial_exponents` ordering; affine is the
    degree-1 special case.
    """

    kind: str
    degree: int
    coeffs_x: Tuple[float, ...]
    coeffs_y: Tuple[float, ...]

    def __post_init__(self):
        n = len(monomial_exponents(self.degree))
        if len(self.coeffs_x) != n or len(self.coeffs_y) != n:
            raise ValidationError(
                f"degree {self.degree} needs {n} coefficients per axis"
            )
        if not all(np.isfinite(self.coeffs_x)) or not all(np.isfinite(self.coeffs_y)):
            raise ValidationError("transform coefficients must be finite")

    def to_json(self) -> str:
        return json.dumps(
            {
                "kind": self.kind,
                "degree": self.degree,
                "coeffs_x": list(self.coeffs_x),
                "coeffs_y": list(self.coeffs_y),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "Transform2D":
        doc = json.loads(text)
        return cls(
            kind=doc["kind"],
            degree=int(doc["degree"]),
            coeffs_x=tuple(doc["coeffs_x"]),
            coeffs_y=tuple(doc["coeffs_y"]),
        )


@dataclass
class ResidualReport:
    per_pair: List[Tuple[int, float]]
    rms: float = field(init=False)

    def __post_init__(self):
        errs = np.array([e for _, e in self.per_pair], dtype=float)
        self.rms = float(np.sqrt(np.mean(errs**2))) if errs.size else 0.0


def _design_matrix(u: np.ndarray, v: np.ndarray, degree: int) -> np.ndarray:
    cols = [u**i * v**j for i, j in monomial_exponents(degree)]
    return np.column_stack(cols)


def _solve_least_squares(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Normal equations with column scaling; raises on near-singular systems.

    The target is centered first so the constant column does not have to
    absorb a Mercator-sized offset, which would cost several digits.
    """
    scale = np.linalg.norm(A, axis=0)
    if np.any(scale == 0):
        scale = np.where(scale == 0, 1.0, scale)
    shift = float(b.mean())
    As = A / scale
    if As.shape[0] == As.shape[1]:
        # Exact interpolation: solve the design matrix directly, which is
        # backward stable where the normal equations square the condition.
        if np.linalg.cond(As) > CONDITION_LIMIT:
            raise DegeneracyError(
                "rank-deficient control point configuration (collinear or "
                "coincident source points)"
            )
        coef = np.linalg.solve(As, b - shift)
        coef = coef / scale
        coef[0] += shift
        return coef
    G = As.T @ As
    if np.linalg.cond(G) > CONDITION_LIMIT:
        raise DegeneracyError(
            "rank-deficient control point configuration (collinear or "
            "coincident source points)"
        )
    coef = np.linalg.solve(G, As.T @ (b - shift))
    coef = coef / scale
    coef[0] += shift
    return coef


def _fit(src: np.ndarray, dst: np.ndarray, kind: str) -> Transform2D:
    degree = _kind_degree(kind)
    needed = len(monomial_exponents(degree))
    if len(src) < needed:
        raise ArityError(
            f"{kind} fit needs at least {needed} control point pairs, got {len(src)}"
        )
    A = _design_matrix(src[:, 0], src[:, 1], degree)
    cx = _solve_least_squares(A, dst[:, 0])
    cy = _solve_least_squares(A, dst[:, 1])
    return Transform2D(kind, degree, tuple(cx.tolist()), tuple(cy.tolist()))


def _pairs_arrays(pairs: Sequence[ControlPointPair]) -> Tuple[np.ndarray, np.ndarray]:
    if not pairs:
        raise ValidationError("no control point pairs given")
    src = np.array([(p.px, p.py) for p in pairs], dtype=float)
    merc = [lonlat_to_mercator(p.target) for p in pairs]
    dst = np.array([(m.x, m.y) for m in merc], dtype=float)
    return src, dst


def fit_transform(pairs: Sequence[ControlPointPair], kind: str = "affine") -> Transform2D:
    """Least-squares fit mapping scan pixels to Mercator meters."""
    src, dst = _pairs_arrays(pairs)
    return _fit(src, dst, kind)


def fit_inverse(pairs: Sequence[ControlPointPair], kind: str = "affine") -> Transform2D:
    """Least-squares fit mapping Mercator meters back to scan pixels."""
    src, dst = _pairs_arrays(pairs)
    return _fit(dst, src, kind)


def evaluate(t: Transform2D, u, v) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorized polynomial evaluation; accepts scalars or arrays."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    x = np.zeros_like(u)
    y = np.zeros_like(u)
    for (i, j), cx, cy in zip(monomial_exponents(t.degree), t.coeffs_x, t.coeffs_y):
        m = u**i * v**j
        x += cx * m
        y += cy * m
    return x, y


def apply_transform(t: Transform2D, px: float, py: float) -> MercatorPoint:
    x, y = evaluate(t, px, py)
    return MercatorPoint(float(x), float(y))


def residual_report(t: Transform2D, pairs: Sequence[ControlPointPair]) -> ResidualReport:
    src, dst = _pairs_arrays(pairs)
    x, y = evaluate(t, src[:, 0], src[:, 1])
    errs = np.hypot(x - dst[:, 0], y - dst[:, 1])
    return ResidualReport([(i, float(e)) for i, e in enumerate(errs)])


def read_pairs_csv(path) -> List[ControlPointPair]:
    """Control points file: header `px,py,lon,lat`, one pair per line."""
    pairs = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        expected = {"px", "py", "lon", "lat"}
        if reader.fieldnames is None or not expected.issubset(reader.fieldnames):
            raise ValidationError(f"{path}: expected CSV header px,py,lon,lat")
        for row in reader:
            pairs.append(
                ControlPointPair(
                    float(row["px"]),
                    float(row["py"]),
                    GeoPoint(float(row["lon"]), float(row["lat"])),
                )
            )
    return pairs


def write_pairs_csv(path, pairs: Sequence[ControlPointPair]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["px", "py", "lon", "lat"])
        for p in pairs:
            writer.writerow([p.px, p.py, p.target.lon, p.target.lat])


@dataclass
class RasterImage:
    """8-bit raster, grayscale (1 channel) or RGBA (4 channels)."""

    width: int
    height: int
    channels: int
    samples: np.ndarray  # (height, width, channels) uint8

    def __post_init__(self):
        if self.channels not in (1, 4):
            raise ValidationError(f"unsupported channel count {self.channels}")
        if self.samples.shape != (self.height, self.width, self.channels):
            raise ValidationError("sample grid shape does not match declared size")
        self.samples = self.samples.astype(np.uint8, copy=False)

    @classmethod
    def load_png(cls, path) -> "RasterImage":
        img = Image.open(path)
        if img.mode == "L":
            arr = np.asarray(img)[:, :, None]
        else:
            arr = np.asarray(img.convert("RGBA"))
        h, w, c = arr.shape
        return cls(w, h, c, arr)

    def save_png(self, path) -> None:
        if self.channels == 1:
            Image.fromarray(self.samples[:, :, 0], mode="L").save(path)
        else:
            Image.fromarray(self.samples, mode="RGBA").save(path)


def warp_raster(
    img: RasterImage,
    inverse: Transform2D,
    out_bounds: Tuple[float, float, float, float],
    out_size: Tuple[int, int],
    resampling: str = "nearest",
) -> RasterImage:
    """Resample a scan onto a Mercator-aligned output grid.

    ``inverse`` maps Mercator meters to source pixel coordinates (x right,
    y down, origin at the top-left pixel's top-left corner). Output always
    carries an alpha channel; samples falling outside the source become
    fully transparent.
    """
    mx0, my0, mx1, my1 = out_bounds
    out_w, out_h = out_size
    if out_w <= 0 or out_h <= 0 or mx1 <= mx0 or my1 <= my0:
        raise DomainError("output grid must have positive size and area")
    if resampling not in ("nearest", "bilinear"):
        raise ValidationError(f"unknown resampling {resampling!r}")

    # Output pixel centers, row 0 at the north (max-y) edge.
    xs = mx0 + (np.arange(out_w) + 0.5) * (mx1 - mx0) / out_w
    ys = my1 - (np.arange(out_h) + 0.5) * (my1 - my0) / out_h
    gx, gy = np.meshgrid(xs, ys)
    su, sv = evaluate(inverse, gx, gy)

    src = img.samples
    if img.channels == 1:
        rgba = np.repeat(src, 3, axis=2)
        rgba = np.concatenate(
            [rgba, np.full((img.height, img.width, 1), 255, np.uint8)], axis=2
        )
    else:
        rgba = src

    out = np.zeros((out_h, out_w, 4), dtype=np.uint8)
    if resampling == "nearest":
        # Pixel centers sit at integer+0.5; round half away from zero.
        col = np.floor(su).astype(np.int64)
        row = np.floor(sv).astype(np.int64)
        valid = (col >= 0) & (col < img.width) & (row >= 0) & (row < img.height)
        out[valid] = rgba[row[valid], col[valid]]
    else:
        # Bilinear between the four neighboring pixel centers, clamped at edges.
        fu = su - 0.5
        fv = sv - 0.5
        valid = (su >= 0) & (su <= img.width) & (sv >= 0) & (sv <= img.height)
        c0 = np.clip(np.floor(fu), 0, img.width - 1).astype(np.int64)
        r0 = np.clip(np.floor(fv), 0, img.height - 1).astype(np.int64)
        c1 = np.minimum(c0 + 1, img.width - 1)
        r1 = np.minimum(r0 + 1, img.height - 1)
        wu = np.clip(fu - c0, 0.0, 1.0)[..., None]
        wv = np.clip(fv - r0, 0.0, 1.0)[..., None]
        top = rgba[r0, c0] * (1 - wu) + rgba[r0, c1] * wu
        bot = rgba[r1, c0] * (1 - wu) + rgba[r1, c1] * wu
        blend = top * (1 - wv) + bot * wv
        # Round half away from zero (documented rounding decision).
        vals = np.floor(blend + 0.5).astype(np.uint8)
        out[valid] = vals[valid]
    return RasterImage(out_w, out_h, 4, out)
