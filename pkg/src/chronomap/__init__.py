"""chronomap: spatiotemporal map engine.

Georectifies scanned maps from control points, stores time-stamped vector
features, serves them as temporally-attributed Mapbox vector tiles, and
reconstructs 3D building meshes from footprints and facade annotations.
"""

__version__ = "0.1.0"
