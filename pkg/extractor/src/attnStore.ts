/**
 * attn_store directory format.
 *
 * A stack is a directory holding `manifest.json` plus one binary file per
 * layer. Each layer file is the 8-byte magic `ATTN4D\x00\x01`, a
 * little-endian uint32 resolution w, then w**4 float32 values in C order
 * forming the (w, w, w, w) tensor. Every map `[i, j, :, :]` must sum to 1
 * within 1e-4 and contain no negative entries; the writer refuses to emit
 * anything else.
 */

import * as fs from "node:fs";
import * as path from "node:path";

export const MAGIC = Buffer.from("ATTN4D\x00\x01", "latin1");
export const SUM_TOLERANCE = 1e-4;
export const FORMAT_VERSION = 1;

export interface LayerData {
  resolution: number;
  /** w**4 float32 values, C order over (i, j, a, b). */
  data: Float32Array;
}

export interface StackMeta {
  imageHeight: number;
  imageWidth: number;
  timeStep: number;
  sourceId: string;
}

export function layerFileName(index: number): string {
  return `layer_${String(index).padStart(2, "0")}.attn`;
}

/** Throws with a location-naming message on the first invalid map. */
export function validateLayer(layer: LayerData, label: string): void {
  const w = layer.resolution;
  if (!Number.isInteger(w) || w < 1) {
    throw new Error(`${label}: resolution must be a positive integer, got ${w}`);
  }
  if (layer.data.length !== w ** 4) {
    throw new Error(
      `${label}: expected ${w}**4 float32 values, got ${layer.data.length}`
    );
  }
  const mapSize = w * w;
  for (let cell = 0; cell < mapSize; cell += 1) {
    let sum = 0;
    const base = cell * mapSize;
    for (let k = 0; k < mapSize; k += 1) {
      const value = layer.data[base + k];
      if (value < 0) {
        throw new Error(
          `${label}: negative entry at map (i=${Math.floor(cell / w)}, ` +
            `j=${cell % w})`
        );
      }
      sum += value;
    }
    if (Math.abs(sum - 1) > SUM_TOLERANCE) {
      throw new Error(
        `${label}: map (i=${Math.floor(cell / w)}, j=${cell % w}) sums to ` +
          `${sum.toPrecision(8)}, outside 1 +- ${SUM_TOLERANCE}`
      );
    }
  }
}

export function encodeLayer(layer: LayerData): Buffer {
  const w = layer.resolution;
  const header = Buffer.alloc(4);
  header.writeUInt32LE(w, 0);
  const payload = Buffer.alloc(layer.data.length * 4);
  for (let k = 0; k < layer.data.length; k += 1) {
    payload.writeFloatLE(layer.data[k], k * 4);
  }
  return Buffer.concat([MAGIC, header, payload]);
}

export function decodeLayer(buffer: Buffer, label: string): LayerData {
  if (buffer.length < MAGIC.length + 4) {
    throw new Error(`${label}: file too short for the layer header`);
  }
  if (!buffer.subarray(0, MAGIC.length).equals(MAGIC)) {
    throw new Error(`${label}: bad magic bytes`);
  }
  const w = buffer.readUInt32LE(MAGIC.length);
  const expected = MAGIC.length + 4 + w ** 4 * 4;
  if (buffer.length !== expected) {
    throw new Error(
      `${label}: expected ${w}**4 float32 values, found ` +
        `${(buffer.length - MAGIC.length - 4) / 4}`
    );
  }
  const data = new Float32Array(w ** 4);
  for (let k = 0; k < data.length; k += 1) {
    data[k] = buffer.readFloatLE(MAGIC.length + 4 + k * 4);
  }
  return { resolution: w, data };
}

interface ManifestLayer {
  resolution: number;
  file: string;
}

export function buildManifest(
  meta: StackMeta,
  layers: ManifestLayer[]
): object {
  return {
    format_version: FORMAT_VERSION,
    image_height: meta.imageHeight,
    image_width: meta.imageWidth,
    time_step: meta.timeStep,
    source_id: meta.sourceId,
    layers,
  };
}

/** Validate and write a whole stack; refuses invalid tensors. */
export function writeStack(
  dir: string,
  meta: StackMeta,
  layers: LayerData[]
): void {
  if (layers.length === 0) {
    throw new Error("a stack needs at least one layer");
  }
  layers.forEach((layer, index) =>
    validateLayer(layer, `layer ${index} (${layerFileName(index)})`)
  );
  fs.mkdirSync(dir, { recursive: true });
  const entries: ManifestLayer[] = [];
  layers.forEach((layer, index) => {
    const file = layerFileName(index);
    fs.writeFileSync(path.join(dir, file), encodeLayer(layer));
    entries.push({ resolution: layer.resolution, file });
  });
  const manifest = buildManifest(meta, entries);
  fs.writeFileSync(
    path.join(dir, "manifest.json"),
    JSON.stringify(manifest, null, 2) + "\n"
  );
}

export interface ReadStack {
  meta: StackMeta;
  layers: LayerData[];
}

/** Reader used by the tests to round-trip what the writer emits. */
export function readStack(dir: string): ReadStack {
  const manifestPath = path.join(dir, "manifest.json");
  const manifest = JSON.parse(fs.readFileSync(manifestPath, "utf-8"));
  if (manifest.format_version !== FORMAT_VERSION) {
    throw new Error(
      `${manifestPath}: unsupported format_version ${manifest.format_version}`
    );
  }
  const layers = manifest.layers.map(
    (entry: ManifestLayer): LayerData => {
      const layer = decodeLayer(
        fs.readFileSync(path.join(dir, entry.file)),
        entry.file
      );
      if (layer.resolution !== entry.resolution) {
        throw new Error(
          `${entry.file}: header resolution ${layer.resolution} does not ` +
            `match manifest ${entry.resolution}`
        );
      }
      return layer;
    }
  );
  return {
    meta: {
      imageHeight: manifest.image_height,
      imageWidth: manifest.image_width,
      timeStep: manifest.time_step,
      sourceId: manifest.source_id,
    },
    layers,
  };
}
