"""Command line entry points for every pipeline stage.

Subcommand layout mirrors the library modules: warp (georectification),
tile (vector tile pyramid), serve (HTTP service), reconstruct (3D models).
Data goes to files or standard output; diagnostics go to standard error.
Exit codes: 0 success, 1 validation/data error, 2 usage error.
"""

from __future__ import annotations

import json

import click

from .errors import ChronomapError
from .geo import GeoPoint, TileAddress, lonlat_to_tile, parse_date
from . import georectify
from .facade import annotation_params, load_annotation
from .reconstruct import (
    Footprint,
    ReconstructParams,
    assemble_building,
    building_height,
    export_gltf,
)
from .server import load_config, run_server
from .store import TemporalStore
from .tiling import build_tile


def _fail(message: str) -> None:
    raise click.ClickException(str(message))


@click.group()
def main():
    """Spatiotemporal map engine: georectify scans, build temporal vector
    tiles, serve them, and reconstruct 3D buildings."""


@main.group()
def warp():
    """Fit control-point transforms and warp scanned map rasters."""


@warp.command("fit")
@click.option("--pairs", "pairs_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Control points CSV with header px,py,lon,lat.")
@click.option("--kind", default="affine", show_default=True,
              type=click.Choice(["affine", "poly2", "poly3"]))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False),
              help="Output transform JSON (pixel -> Mercator meters).")
@click.option("--inverse-out", "inverse_path", type=click.Path(dir_okay=False),
              help="Also write the role-swapped fit (Mercator -> pixel), "
                   "the direction `warp apply` consumes.")
def warp_fit(pairs_path, kind, out_path, inverse_path):
    """Least-squares fit of a polynomial transform to ground control points."""
    try:
        pairs = georectify.read_pairs_csv(pairs_path)
        transform = georectify.fit_transform(pairs, kind)
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(transform.to_json() + "\n")
        if inverse_path:
            inverse = georectify.fit_inverse(pairs, kind)
            with open(inverse_path, "w", encoding="utf-8") as fh:
                fh.write(inverse.to_json() + "\n")
    except (ChronomapError, OSError) as exc:
        _fail(exc)
    report = georectify.residual_report(transform, pairs)
    click.echo(f"fitted {kind} on {len(pairs)} pairs, RMS {report.rms:.3f} m",
               err=True)


@warp.command("apply")
@click.option("--image", "image_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--transform", "transform_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Inverse transform JSON (Mercator meters -> pixel).")
@click.option("--bounds", required=True,
              help="Output extent in Mercator meters: min_x,min_y,max_x,max_y.")
@click.option("--width", type=int, default=1024, show_default=True,
              help="Output width in pixels; height follows the bounds aspect.")
@click.option("--resampling", default="nearest", show_default=True,
              type=click.Choice(["nearest", "bilinear"]))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def warp_apply(image_path, transform_path, bounds, width, resampling, out_path):
    """Resample a scan onto a north-up Mercator grid, writing a PNG."""
    try:
        parts = [float(p) for p in bounds.split(",")]
        if len(parts) != 4:
            raise ValueError
    except ValueError:
        _fail("--bounds must be min_x,min_y,max_x,max_y in Mercator meters")
    mx0, my0, mx1, my1 = parts
    try:
        with open(transform_path, encoding="utf-8") as fh:
            inverse = georectify.Transform2D.from_json(fh.read())
        img = georectify.RasterImage.load_png(image_path)
        height = max(1, round(width * (my1 - my0) / (mx1 - mx0)))
        out = georectify.warp_raster(img, inverse, (mx0, my0, mx1, my1),
                                     (width, height), resampling)
        out.save_png(out_path)
    except (ChronomapError, OSError, KeyError, ValueError) as exc:
        _fail(exc)
    click.echo(f"wrote {out_path} ({width}x{height})", err=True)


@warp.command("report")
@click.option("--pairs", "pairs_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--transform", "transform_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--figure", "figure_path", type=click.Path(dir_okay=False),
              help="Also render a residual bar chart to this image file.")
def warp_report(pairs_path, transform_path, figure_path):
    """Per-pair residuals (CSV on stdout) and the RMS for a fitted transform."""
    try:
        pairs = georectify.read_pairs_csv(pairs_path)
        with open(transform_path, encoding="utf-8") as fh:
            transform = georectify.Transform2D.from_json(fh.read())
        report = georectify.residual_report(transform, pairs)
    except (ChronomapError, OSError, KeyError, ValueError) as exc:
        _fail(exc)
    click.echo("index,px,py,residual_m")
    for (i, err), pair in zip(report.per_pair, pairs):
        click.echo(f"{i},{pair.px:g},{pair.py:g},{err:.6f}")
    click.echo(f"RMS {report.rms:.3f}")
    if figure_path:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(6, 3))
        ax.bar([i for i, _ in report.per_pair], [e for _, e in report.per_pair])
        ax.axhline(report.rms, color="crimson", linewidth=1,
                   label=f"RMS {report.rms:.3f} m")
        ax.set_xlabel("control point")
        ax.set_ylabel("residual (m)")
        ax.legend()
        fig.tight_layout()
        fig.savefig(figure_path, dpi=120)
        plt.close(fig)
        click.echo(f"wrote {figure_path}", err=True)


@main.group()
def tile():
    """Build vector tile pyramids from feature documents."""


def _parse_zoom_range(text: str):
    parts = text.split("..")
    try:
        if len(parts) == 1:
            lo = hi = int(parts[0])
        elif len(parts) == 2:
            lo, hi = int(parts[0]), int(parts[1])
        else:
            raise ValueError
    except ValueError:
        raise click.BadParameter("zoom must be Z or LO..HI", param_hint="--zoom")
    if not 0 <= lo <= hi <= 30:
        raise click.BadParameter("zoom levels must satisfy 0 <= lo <= hi <= 30",
                                 param_hint="--zoom")
    return lo, hi


@tile.command("build")
@click.option("--features", "features_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="GeoJSON Feature, FeatureCollection, or list of features.")
@click.option("--zoom", required=True, help="Zoom level Z or range LO..HI.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--time", "time_text", default=None,
              help="Only encode features alive at this date.")
def tile_build(features_path, zoom, out_dir, time_text):
    """Write {z}/{x}/{y}.mvt files covering the features' bounds."""
    import os

    lo, hi = _parse_zoom_range(zoom)
    at = None
    if time_text is not None:
        try:
            at = parse_date(time_text)
        except ChronomapError as exc:
            _fail(exc)
    try:
        with open(features_path, encoding="utf-8") as fh:
            body = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        _fail(f"{features_path}: {exc}")
    store = TemporalStore()
    try:
        store.ingest(body)
    except ChronomapError as exc:
        _fail(exc)
    feats = list(store.snapshot.features.values())
    if not feats:
        click.echo("no features, nothing to build", err=True)
        return
    lons = [c[0] for f in feats for c in f.coords()]
    lats = [c[1] for f in feats for c in f.coords()]
    written = 0
    for z in range(lo, hi + 1):
        t0 = lonlat_to_tile(GeoPoint(min(lons), max(lats)), z)
        t1 = lonlat_to_tile(GeoPoint(max(lons), min(lats)), z)
        for x in range(t0.x, t1.x + 1):
            for y in range(t0.y, t1.y + 1):
                blob = build_tile(feats, TileAddress(z, x, y), at=at)
                path = os.path.join(out_dir, str(z), str(x), f"{y}.mvt")
                os.makedirs(os.path.dirname(path), exist_ok=True)
                with open(path, "wb") as fh:
                    fh.write(blob)
                written += 1
    click.echo(f"wrote {written} tiles under {out_dir}", err=True)


@main.command("serve")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              help="TOML or JSON service configuration.")
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
@click.option("--data-dir", default=None)
def serve(config_path, host, port, data_dir):
    """Run the HTTP service (tiles, features, models)."""
    try:
        cfg = load_config(config_path, overrides={
            "host": host, "port": port, "data_dir": data_dir,
        })
    except (ChronomapError, OSError) as exc:
        _fail(exc)
    click.echo(f"listening on {cfg.host}:{cfg.port}, data in {cfg.data_dir}",
               err=True)
    run_server(cfg)


def _load_footprint(path) -> Footprint:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        _fail(f"{path}: {exc}")
    try:
        if doc.get("type") == "Feature":
            geom = doc.get("geometry") or {}
            if geom.get("type") != "Polygon":
                _fail(f"{path}: footprint geometry must be a Polygon")
            rings = geom["coordinates"]
            props = dict(doc.get("properties") or {})
        else:
            rings = doc["coordinates"]
            props = dict(doc.get("properties") or {})
        exterior = tuple((float(p[0]), float(p[1])) for p in rings[0])
        holes = tuple(tuple((float(p[0]), float(p[1])) for p in ring)
                      for ring in rings[1:])
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        _fail(f"{path}: malformed footprint ({exc})")
    return Footprint(exterior=exterior, holes=holes,
                     properties=tuple(sorted(props.items())))


def _load_reconstruct_params(path) -> ReconstructParams:
    import tomli

    try:
        with open(path, "rb") as fh:
            raw = fh.read()
        if str(path).endswith(".json"):
            doc = json.loads(raw.decode("utf-8"))
        else:
            doc = tomli.loads(raw.decode("utf-8"))
        return ReconstructParams(**doc)
    except (OSError, json.JSONDecodeError, tomli.TOMLDecodeError,
            TypeError, ChronomapError) as exc:
        _fail(f"{path}: {exc}")


@main.command("reconstruct")
@click.option("--footprint", "footprint_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="GeoJSON polygon Feature; properties may carry "
                   "height_m or floors.")
@click.option("--annotations", "annotation_paths", multiple=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Facade annotation JSON; repeatable, one per wall.")
@click.option("--params", "params_path", default=None,
              type=click.Path(exists=True, dir_okay=False),
              help="Reconstruction parameter overrides (TOML or JSON).")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def reconstruct_cmd(footprint_path, annotation_paths, params_path, out_path):
    """Extrude a footprint, attach annotated facades, and write a GLB."""
    fp = _load_footprint(footprint_path)
    params = (_load_reconstruct_params(params_path) if params_path
              else ReconstructParams())
    facades = []
    for path in annotation_paths:
        try:
            ann = load_annotation(path)
            edge = ann.link[1] if ann.link else 0
            facades.append((annotation_params(ann), edge))
        except ChronomapError as exc:
            _fail(f"{path}: {exc}")
    try:
        height = building_height(fp.props(), params)
        mesh = assemble_building(fp, height, facades, params)
        blob = export_gltf(mesh)
    except ChronomapError as exc:
        _fail(exc)
    try:
        with open(out_path, "wb") as fh:
            fh.write(blob)
    except OSError as exc:
        _fail(exc)
    click.echo(
        f"wrote {out_path}: {len(mesh.vertices)} vertices, "
        f"{len(mesh.triangles)} triangles, {len(mesh.components)} components",
        err=True,
    )


if __name__ == "__main__":
    main()
