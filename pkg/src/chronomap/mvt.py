"""Mapbox Vector Tile 2.1 binary codec.

Implements the varint wire format and the tile/layer/feature message layout
directly; encode and decode round-trip structurally. Geometry is carried as
the MVT command stream (MoveTo=1, LineTo=2, ClosePath=7) over zigzag-encoded
deltas in tile-local integer coordinates, y increasing southward.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

from .errors import ParseError, ValidationError

GEOM_POINT = 1
GEOM_LINESTRING = 2
GEOM_POLYGON = 3

_GEOM_NAMES = {GEOM_POINT: "point", GEOM_LINESTRING: "linestring", GEOM_POLYGON: "polygon"}

CMD_MOVE_TO = 1
CMD_LINE_TO = 2
CMD_CLOSE_PATH = 7

TagValue = Union[str, float, int, bool]


def zigzag(n: int) -> int:
    if not -(1 << 63) <= n < (1 << 63):
        raise ValidationError(f"zigzag input {n} out of 64-bit range")
    return (n << 1) ^ (n >> 63)


def unzigzag(z: int) -> int:
    return (z >> 1) ^ -(z & 1)


def command_integer(cmd: int, count: int) -> int:
    if count <= 0:
        raise ValidationError(f"command count must be positive, got {count}")
    return (cmd & 0x7) | (count << 3)


def encode_commands(paths: Sequence[Sequence[Tuple[int, int]]], geom_type: int) -> List[int]:
    """Encode quantized integer paths as an MVT command stream.

    For polygons each path is a ring without repeated closing vertex and is
    terminated with ClosePath; linestring paths stay open; point paths become
    a single multi-count MoveTo.
    """
    out: List[int] = []
    cx, cy = 0, 0
    if geom_type == GEOM_POINT:
        pts = [p for path in paths for p in path]
        if not pts:
            raise ValidationError("point geometry needs at least one coordinate")
        out.append(command_integer(CMD_MOVE_TO, len(pts)))
        for x, y in pts:
            out.append(zigzag(x - cx))
            out.append(zigzag(y - cy))
            cx, cy = x, y
        return out
    for path in paths:
        if geom_type == GEOM_LINESTRING and len(path) < 2:
            raise ValidationError("linestring path needs at least 2 points")
        if geom_type == GEOM_POLYGON and len(path) < 3:
            raise ValidationError("polygon ring needs at least 3 points")
        x0, y0 = path[0]
        out.append(command_integer(CMD_MOVE_TO, 1))
        out.append(zigzag(x0 - cx))
        out.append(zigzag(y0 - cy))
        cx, cy = x0, y0
        rest = path[1:]
        out.append(command_integer(CMD_LINE_TO, len(rest)))
        for x, y in rest:
            out.append(zigzag(x - cx))
            out.append(zigzag(y - cy))
            cx, cy = x, y
        if geom_type == GEOM_POLYGON:
            out.append(command_integer(CMD_CLOSE_PATH, 1))
    return out


def decode_commands(stream: Sequence[int], geom_type: int) -> List[List[Tuple[int, int]]]:
    paths: List[List[Tuple[int, int]]] = []
    current: List[Tuple[int, int]] = []
    cx, cy = 0, 0
    i = 0
    n = len(stream)
    while i < n:
        cmd_int = stream[i]
        i += 1
        cmd = cmd_int & 0x7
        count = cmd_int >> 3
        if count == 0:
            raise ParseError("zero command count in geometry stream")
        if cmd in (CMD_MOVE_TO, CMD_LINE_TO):
            if i + 2 * count > n:
                raise ParseError("geometry stream truncated")
            if cmd == CMD_MOVE_TO and geom_type != GEOM_POINT:
                if current:
                    paths.append(current)
                current = []
            for _ in range(count):
                cx += unzigzag(stream[i])
                cy += unzigzag(stream[i + 1])
                i += 2
                current.append((cx, cy))
        elif cmd == CMD_CLOSE_PATH:
            if geom_type != GEOM_POLYGON:
                raise ParseError("ClosePath outside polygon geometry")
            if current:
                paths.append(current)
                current = []
        else:
            raise ParseError(f"unknown geometry command {cmd}")
    if current:
        paths.append(current)
    return paths


@dataclass
class TileFeature:
    id: int
    geom_type: int
    paths: List[List[Tuple[int, int]]]
    tags: Dict[str, TagValue] = field(default_factory=dict)

    def __post_init__(self):
        if self.geom_type not in _GEOM_NAMES:
            raise ValidationError(f"unknown geometry type {self.geom_type}")
        if self.id < 0:
            raise ValidationError("feature id must be unsigned")


@dataclass
class TileLayer:
    name: str
    features: List[TileFeature] = field(default_factory=list)
    extent: int = 4096

    def __post_init__(self):
        if self.extent <= 0 or (self.extent & (self.extent - 1)) != 0:
            raise ValidationError(f"extent {self.extent} must be a power of two")


# --- protobuf wire primitives ---

def _write_varint(buf: bytearray, value: int) -> None:
    if value < 0:
        value += 1 << 64
    while True:
        b = value & 0x7F
        value >>= 7
        if value:
            buf.append(b | 0x80)
        else:
            buf.append(b)
            return


def _decode_utf8(raw: bytes, what: str) -> str:
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"{what} is not valid UTF-8: {exc}") from None


def _read_varint(data: bytes, pos: int) -> Tuple[int, int]:
    result = 0
    shift = 0
    start = pos
    while True:
        if pos >= len(data):
            raise ParseError("truncated varint", offset=start)
        b = data[pos]
        pos += 1
        result |= (b & 0x7F) << shift
        if not b & 0x80:
            return result, pos
        shift += 7
        if shift > 63:
            raise ParseError("varint too long", offset=start)


def _write_tag(buf: bytearray, field_no: int, wire_type: int) -> None:
    _write_varint(buf, (field_no << 3) | wire_type)


def _write_len_delimited(buf: bytearray, field_no: int, payload: bytes) -> None:
    _write_tag(buf, field_no, 2)
    _write_varint(buf, len(payload))
    buf.extend(payload)


def _write_packed_varints(buf: bytearray, field_no: int, values: Sequence[int]) -> None:
    payload = bytearray()
    for v in values:
        _write_varint(payload, v)
    _write_len_delimited(buf, field_no, bytes(payload))


# --- value encoding ---

def _encode_value(value: TagValue) -> bytes:
    buf = bytearray()
    if isinstance(value, bool):
        _write_tag(buf, 7, 0)
        _write_varint(buf, 1 if value else 0)
    elif isinstance(value, str):
        _write_len_delimited(buf, 1, value.encode("utf-8"))
    elif isinstance(value, int):
        if value >= 0:
            _write_tag(buf, 5, 0)  # uint_value
            _write_varint(buf, value)
        else:
            _write_tag(buf, 6, 0)  # sint_value, zigzag
            _write_varint(buf, zigzag(value))
    elif isinstance(value, float):
        import struct

        _write_tag(buf, 3, 1)  # double_value, 64-bit
        buf.extend(struct.pack("<d", value))
    else:
        raise ValidationError(f"unsupported attribute value type {type(value)!r}")
    return bytes(buf)


def _decode_value(data: bytes) -> TagValue:
    import struct

    pos = 0
    result: Optional[TagValue] = None
    while pos < len(data):
        key, pos = _read_varint(data, pos)
        field_no, wire = key >> 3, key & 0x7
        if field_no == 1 and wire == 2:
            ln, pos = _read_varint(data, pos)
            result = _decode_utf8(data[pos : pos + ln], "string value")
            pos += ln
        elif field_no == 2 and wire == 5:
            (result,) = struct.unpack_from("<f", data, pos)
            pos += 4
        elif field_no == 3 and wire == 1:
            (result,) = struct.unpack_from("<d", data, pos)
            pos += 8
        elif field_no == 4 and wire == 0:
            v, pos = _read_varint(data, pos)
            result = v - (1 << 64) if v >= (1 << 63) else v
        elif field_no == 5 and wire == 0:
            result, pos = _read_varint(data, pos)
        elif field_no == 6 and wire == 0:
            v, pos = _read_varint(data, pos)
            result = unzigzag(v)
        elif field_no == 7 and wire == 0:
            v, pos = _read_varint(data, pos)
            result = bool(v)
        else:
            pos = _skip_field(data, pos, wire)
    if result is None:
        raise ParseError("empty value message")
    return result


def _skip_field(data: bytes, pos: int, wire: int) -> int:
    if wire == 0:
        _, pos = _read_varint(data, pos)
    elif wire == 1:
        pos += 8
    elif wire == 2:
        ln, pos = _read_varint(data, pos)
        pos += ln
    elif wire == 5:
        pos += 4
    else:
        raise ParseError(f"unsupported wire type {wire}", offset=pos)
    if pos > len(data):
        raise ParseError("field extends past end of buffer", offset=pos)
    return pos


# --- layer/tile encoding ---

def _encode_feature(feature: TileFeature, key_idx: Dict[str, int],
                    val_idx: Dict[bytes, int]) -> bytes:
    buf = bytearray()
    _write_tag(buf, 1, 0)
    _write_varint(buf, feature.id)
    tag_ints: List[int] = []
    for k, v in feature.tags.items():
        vb = _encode_value(v)
        tag_ints.append(key_idx[k])
        tag_ints.append(val_idx[vb])
    if tag_ints:
        _write_packed_varints(buf, 2, tag_ints)
    _write_tag(buf, 3, 0)
    _write_varint(buf, feature.geom_type)
    _write_packed_varints(buf, 4, encode_commands(feature.paths, feature.geom_type))
    return bytes(buf)


def _encode_layer(layer: TileLayer) -> bytes:
    key_idx: Dict[str, int] = {}
    val_idx: Dict[bytes, int] = {}
    values: List[bytes] = []
    for f in layer.features:
        for k, v in f.tags.items():
            if k not in key_idx:
                key_idx[k] = len(key_idx)
            vb = _encode_value(v)
            if vb not in val_idx:
                val_idx[vb] = len(values)
                values.append(vb)
    buf = bytearray()
    _write_tag(buf, 15, 0)  # version
    _write_varint(buf, 2)
    _write_len_delimited(buf, 1, layer.name.encode("utf-8"))
    for f in layer.features:
        _write_len_delimited(buf, 2, _encode_feature(f, key_idx, val_idx))
    for k in key_idx:
        _write_len_delimited(buf, 3, k.encode("utf-8"))
    for vb in values:
        _write_len_delimited(buf, 4, vb)
    _write_tag(buf, 5, 0)
    _write_varint(buf, layer.extent)
    return bytes(buf)


def encode_tile(layers: Sequence[TileLayer]) -> bytes:
    buf = bytearray()
    for layer in layers:
        _write_len_delimited(buf, 3, _encode_layer(layer))
    return bytes(buf)


def _decode_feature(data: bytes, keys: List[str], values: List[TagValue]) -> TileFeature:
    pos = 0
    fid = 0
    geom_type = 0
    tag_ints: List[int] = []
    geometry: List[int] = []
    while pos < len(data):
        key, pos = _read_varint(data, pos)
        field_no, wire = key >> 3, key & 0x7
        if field_no == 1 and wire == 0:
            fid, pos = _read_varint(data, pos)
        elif field_no == 2 and wire == 2:
            ln, pos = _read_varint(data, pos)
            end = pos + ln
            while pos < end:
                v, pos = _read_varint(data, pos)
                tag_ints.append(v)
        elif field_no == 3 and wire == 0:
            geom_type, pos = _read_varint(data, pos)
        elif field_no == 4 and wire == 2:
            ln, pos = _read_varint(data, pos)
            end = pos + ln
            if end > len(data):
                raise ParseError("geometry field extends past buffer", offset=pos)
            while pos < end:
                v, pos = _read_varint(data, pos)
                geometry.append(v)
        else:
            pos = _skip_field(data, pos, wire)
    if geom_type not in _GEOM_NAMES:
        raise ParseError(f"feature has invalid geometry type {geom_type}")
    if len(tag_ints) % 2:
        raise ParseError("odd-length tag list")
    tags: Dict[str, TagValue] = {}
    for ki, vi in zip(tag_ints[::2], tag_ints[1::2]):
        if ki >= len(keys) or vi >= len(values):
            raise ParseError("tag index out of range")
        tags[keys[ki]] = values[vi]
    paths = decode_commands(geometry, geom_type)
    try:
        return TileFeature(fid, geom_type, paths, tags)
    except ValidationError as exc:
        raise ParseError(f"decoded feature violates invariants: {exc}") from None


def _decode_layer(data: bytes) -> TileLayer:
    pos = 0
    name = ""
    extent = 4096
    feature_blobs: List[bytes] = []
    keys: List[str] = []
    values: List[TagValue] = []
    version = None
    while pos < len(data):
        key, pos = _read_varint(data, pos)
        field_no, wire = key >> 3, key & 0x7
        if field_no == 15 and wire == 0:
            version, pos = _read_varint(data, pos)
        elif field_no == 1 and wire == 2:
            ln, pos = _read_varint(data, pos)
            name = _decode_utf8(data[pos : pos + ln], "layer name")
            pos += ln
        elif field_no == 2 and wire == 2:
            ln, pos = _read_varint(data, pos)
            if pos + ln > len(data):
                raise ParseError("feature blob extends past buffer", offset=pos)
            feature_blobs.append(data[pos : pos + ln])
            pos += ln
        elif field_no == 3 and wire == 2:
            ln, pos = _read_varint(data, pos)
            keys.append(_decode_utf8(data[pos : pos + ln], "tag key"))
            pos += ln
        elif field_no == 4 and wire == 2:
            ln, pos = _read_varint(data, pos)
            if pos + ln > len(data):
                raise ParseError("value blob extends past buffer", offset=pos)
            values.append(_decode_value(data[pos : pos + ln]))
            pos += ln
        elif field_no == 5 and wire == 0:
            extent, pos = _read_varint(data, pos)
        else:
            pos = _skip_field(data, pos, wire)
    if version != 2:
        raise ParseError(f"unsupported layer version {version}")
    features = [_decode_feature(b, keys, values) for b in feature_blobs]
    try:
        return TileLayer(name, features, extent)
    except ValidationError as exc:
        raise ParseError(f"decoded layer violates invariants: {exc}") from None


def decode_tile(data: bytes) -> List[TileLayer]:
    layers: List[TileLayer] = []
    pos = 0
    while pos < len(data):
        key, pos = _read_varint(data, pos)
        field_no, wire = key >> 3, key & 0x7
        if field_no == 3 and wire == 2:
            ln, pos = _read_varint(data, pos)
            if pos + ln > len(data):
                raise ParseError("layer extends past buffer", offset=pos)
            layers.append(_decode_layer(data[pos : pos + ln]))
            pos += ln
        else:
            pos = _skip_field(data, pos, wire)
    return layers
