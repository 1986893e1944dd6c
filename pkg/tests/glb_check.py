"""Independent GLB structural validator and re-importer for tests.

Deliberately separate from the exporter: parses the binary container and
JSON layout from scratch and checks glTF 2.0 structural rules.
"""

import json
import struct


class GlbError(AssertionError):
    pass


def parse_glb(blob: bytes):
    """Validate container structure; returns (gltf json, bin chunk bytes)."""
    if len(blob) < 12:
        raise GlbError("too short for a GLB header")
    magic, version, length = struct.unpack_from("<III", blob, 0)
    if magic != 0x46546C67:
        raise GlbError("bad magic")
    if version != 2:
        raise GlbError("unsupported container version")
    if length != len(blob):
        raise GlbError("declared length does not match blob size")
    pos = 12
    chunks = []
    while pos < len(blob):
        clen, ctype = struct.unpack_from("<II", blob, pos)
        pos += 8
        if pos + clen > len(blob):
            raise GlbError("chunk overruns blob")
        chunks.append((ctype, blob[pos : pos + clen]))
        pos += clen
        if clen % 4:
            raise GlbError("chunk not 4-byte aligned")
    if not chunks or chunks[0][0] != 0x4E4F534A:
        raise GlbError("first chunk must be JSON")
    doc = json.loads(chunks[0][1].decode("utf-8"))
    binchunk = b""
    for ctype, data in chunks[1:]:
        if ctype == 0x004E4942:
            binchunk = data
    return doc, binchunk


def validate_gltf(doc: dict, binchunk: bytes) -> None:
    if doc.get("asset", {}).get("version") != "2.0":
        raise GlbError("asset.version must be 2.0")
    buffers = doc.get("buffers", [])
    if len(buffers) != 1:
        raise GlbError("expected exactly one buffer")
    if buffers[0]["byteLength"] > len(binchunk):
        raise GlbError("buffer larger than BIN chunk")
    views = doc.get("bufferViews", [])
    for v in views:
        if v.get("buffer") != 0:
            raise GlbError("bufferView references unknown buffer")
        if v.get("byteOffset", 0) + v["byteLength"] > buffers[0]["byteLength"]:
            raise GlbError("bufferView out of buffer bounds")
    accessors = doc.get("accessors", [])
    sizes = {5126: 4, 5125: 4, 5123: 2}
    dims = {"VEC3": 3, "SCALAR": 1}
    for a in accessors:
        view = views[a["bufferView"]]
        need = a["count"] * sizes[a["componentType"]] * dims[a["type"]]
        if need > view["byteLength"]:
            raise GlbError("accessor overruns its bufferView")
    for mesh in doc.get("meshes", []):
        for prim in mesh["primitives"]:
            pos_acc = accessors[prim["attributes"]["POSITION"]]
            if pos_acc["type"] != "VEC3" or pos_acc["componentType"] != 5126:
                raise GlbError("POSITION must be float32 VEC3")
            if "min" not in pos_acc or "max" not in pos_acc:
                raise GlbError("POSITION accessor needs min/max")
            idx_acc = accessors[prim["indices"]]
            if idx_acc["count"] % 3:
                raise GlbError("index count not a multiple of 3")
    for scene in doc.get("scenes", []):
        for n in scene["nodes"]:
            if n >= len(doc.get("nodes", [])):
                raise GlbError("scene references unknown node")


def read_accessor(doc: dict, binchunk: bytes, index: int):
    a = doc["accessors"][index]
    view = doc["bufferViews"][a["bufferView"]]
    off = view.get("byteOffset", 0)
    fmt = {5126: "f", 5125: "I", 5123: "H"}[a["componentType"]]
    dim = {"VEC3": 3, "SCALAR": 1}[a["type"]]
    count = a["count"] * dim
    values = struct.unpack_from(f"<{count}{fmt}", binchunk, off)
    if dim == 1:
        return list(values)
    return [tuple(values[i : i + dim]) for i in range(0, count, dim)]


def reimport_triangles(blob: bytes):
    """All triangles as vertex-coordinate triples, across primitives."""
    doc, binchunk = parse_glb(blob)
    validate_gltf(doc, binchunk)
    tris = []
    for mesh in doc["meshes"]:
        for prim in mesh["primitives"]:
            pos = read_accessor(doc, binchunk, prim["attributes"]["POSITION"])
            idx = read_accessor(doc, binchunk, prim["indices"])
            for i in range(0, len(idx), 3):
                tris.append((pos[idx[i]], pos[idx[i + 1]], pos[idx[i + 2]]))
    return tris


def signed_volume_of(tris) -> float:
    total = 0.0
    for v0, v1, v2 in tris:
        total += (
            v0[0] * (v1[1] * v2[2] - v2[1] * v1[2])
            - v0[1] * (v1[0] * v2[2] - v2[0] * v1[2])
            + v0[2] * (v1[0] * v2[1] - v2[0] * v1[1])
        )
    return total / 6.0
