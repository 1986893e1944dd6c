/**
 * Mapbox Vector Tile decoder (protobuf wire format, hand-rolled).
 *
 * Decodes the subset the backend emits: layers with version 2, integer
 * feature ids, tag key/value tables, and command-stream geometry in
 * tile-local coordinates with y growing southward.
 */

export type TagValue = string | number | boolean;

export interface TileFeature {
  id: number;
  geomType: 1 | 2 | 3; // point, linestring, polygon
  paths: Array<Array<[number, number]>>;
  tags: Record<string, TagValue>;
}

export interface TileLayer {
  name: string;
  extent: number;
  features: TileFeature[];
}

export class TileParseError extends Error {}

class Reader {
  pos = 0;
  constructor(readonly data: Uint8Array) {}

  get eof(): boolean {
    return this.pos >= this.data.length;
  }

  varint(): number {
    let result = 0;
    let shift = 0;
    for (;;) {
      if (this.pos >= this.data.length) {
        throw new TileParseError("truncated varint");
      }
      const b = this.data[this.pos++];
      result += (b & 0x7f) * 2 ** shift;
      if ((b & 0x80) === 0) return result;
      shift += 7;
      if (shift > 63) throw new TileParseError("varint too long");
    }
  }

  bytes(length: number): Uint8Array {
    if (this.pos + length > this.data.length) {
      throw new TileParseError("length-delimited field extends past buffer");
    }
    const out = this.data.subarray(this.pos, this.pos + length);
    this.pos += length;
    return out;
  }

  skip(wireType: number): void {
    if (wireType === 0) {
      this.varint();
    } else if (wireType === 1) {
      this.bytes(8);
    } else if (wireType === 2) {
      this.bytes(this.varint());
    } else if (wireType === 5) {
      this.bytes(4);
    } else {
      throw new TileParseError(`unsupported wire type ${wireType}`);
    }
  }
}

function unzigzag(z: number): number {
  return z % 2 === 0 ? z / 2 : -(z + 1) / 2;
}

function decodeUtf8(raw: Uint8Array): string {
  return new TextDecoder("utf-8", { fatal: false }).decode(raw);
}

function decodeValue(raw: Uint8Array): TagValue {
  const r = new Reader(raw);
  let value: TagValue | null = null;
  while (!r.eof) {
    const key = r.varint();
    const field = Math.floor(key / 8);
    const wire = key & 0x7;
    if (field === 1 && wire === 2) {
      value = decodeUtf8(r.bytes(r.varint()));
    } else if (field === 3 && wire === 1) {
      const b = r.bytes(8);
      value = new DataView(b.buffer, b.byteOffset, 8).getFloat64(0, true);
    } else if (field === 2 && wire === 5) {
      const b = r.bytes(4);
      value = new DataView(b.buffer, b.byteOffset, 4).getFloat32(0, true);
    } else if ((field === 4 || field === 5) && wire === 0) {
      value = r.varint();
    } else if (field === 6 && wire === 0) {
      value = unzigzag(r.varint());
    } else if (field === 7 && wire === 0) {
      value = r.varint() !== 0;
    } else {
      r.skip(wire);
    }
  }
  if (value === null) throw new TileParseError("empty value message");
  return value;
}

function decodeGeometry(
  stream: number[],
  geomType: number,
): Array<Array<[number, number]>> {
  const paths: Array<Array<[number, number]>> = [];
  let current: Array<[number, number]> = [];
  let cx = 0;
  let cy = 0;
  let i = 0;
  while (i < stream.length) {
    const cmdInt = stream[i++];
    const cmd = cmdInt & 0x7;
    const count = cmdInt >> 3;
    if (count === 0) throw new TileParseError("zero command count");
    if (cmd === 1 || cmd === 2) {
      if (i + 2 * count > stream.length) {
        throw new TileParseError("geometry stream truncated");
      }
      if (cmd === 1 && geomType !== 1 && current.length) {
        paths.push(current);
        current = [];
      }
      for (let k = 0; k < count; k++) {
        cx += unzigzag(stream[i]);
        cy += unzigzag(stream[i + 1]);
        i += 2;
        current.push([cx, cy]);
      }
    } else if (cmd === 7) {
      if (geomType !== 3) {
        throw new TileParseError("ClosePath outside polygon geometry");
      }
      if (current.length) {
        paths.push(current);
        current = [];
      }
    } else {
      throw new TileParseError(`unknown geometry command ${cmd}`);
    }
  }
  if (current.length) paths.push(current);
  return paths;
}

function decodeFeature(
  raw: Uint8Array,
  keys: string[],
  values: TagValue[],
): TileFeature {
  const r = new Reader(raw);
  let id = 0;
  let geomType = 0;
  let tagIndexes: number[] = [];
  let geometry: number[] = [];
  while (!r.eof) {
    const key = r.varint();
    const field = Math.floor(key / 8);
    const wire = key & 0x7;
    if (field === 1 && wire === 0) {
      id = r.varint();
    } else if (field === 2 && wire === 2) {
      const sub = new Reader(r.bytes(r.varint()));
      while (!sub.eof) tagIndexes.push(sub.varint());
    } else if (field === 3 && wire === 0) {
      geomType = r.varint();
    } else if (field === 4 && wire === 2) {
      const sub = new Reader(r.bytes(r.varint()));
      while (!sub.eof) geometry.push(sub.varint());
    } else {
      r.skip(wire);
    }
  }
  if (geomType !== 1 && geomType !== 2 && geomType !== 3) {
    throw new TileParseError(`unknown geometry type ${geomType}`);
  }
  if (tagIndexes.length % 2 !== 0) {
    throw new TileParseError("odd tag index count");
  }
  const tags: Record<string, TagValue> = {};
  for (let i = 0; i < tagIndexes.length; i += 2) {
    const ki = tagIndexes[i];
    const vi = tagIndexes[i + 1];
    if (ki >= keys.length || vi >= values.length) {
      throw new TileParseError("tag index out of range");
    }
    tags[keys[ki]] = values[vi];
  }
  return { id, geomType, paths: decodeGeometry(geometry, geomType), tags };
}

function decodeLayer(raw: Uint8Array): TileLayer {
  const r = new Reader(raw);
  let name = "";
  let extent = 4096;
  let version: number | null = null;
  const keys: string[] = [];
  const values: TagValue[] = [];
  const featureBlobs: Uint8Array[] = [];
  while (!r.eof) {
    const key = r.varint();
    const field = Math.floor(key / 8);
    const wire = key & 0x7;
    if (field === 15 && wire === 0) {
      version = r.varint();
    } else if (field === 1 && wire === 2) {
      name = decodeUtf8(r.bytes(r.varint()));
    } else if (field === 2 && wire === 2) {
      featureBlobs.push(r.bytes(r.varint()));
    } else if (field === 3 && wire === 2) {
      keys.push(decodeUtf8(r.bytes(r.varint())));
    } else if (field === 4 && wire === 2) {
      values.push(decodeValue(r.bytes(r.varint())));
    } else if (field === 5 && wire === 0) {
      extent = r.varint();
    } else {
      r.skip(wire);
    }
  }
  if (version !== 2) {
    throw new TileParseError(`unsupported layer version ${version}`);
  }
  return {
    name,
    extent,
    features: featureBlobs.map((b) => decodeFeature(b, keys, values)),
  };
}

/** Decode a binary vector tile; an empty buffer is an empty tile. */
export function decodeTile(data: Uint8Array): TileLayer[] {
  const r = new Reader(data);
  const layers: TileLayer[] = [];
  while (!r.eof) {
    const key = r.varint();
    const field = Math.floor(key / 8);
    const wire = key & 0x7;
    if (field === 3 && wire === 2) {
      layers.push(decodeLayer(r.bytes(r.varint())));
    } else {
      r.skip(wire);
    }
  }
  return layers;
}
