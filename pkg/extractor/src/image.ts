import * as fs from "node:fs";
import { PNG } from "pngjs";

export interface GrayImage {
  width: number;
  height: number;
  /** Channel-averaged intensity in [0, 255]. */
  data: Float64Array;
}

export function readGrayPng(path: string): GrayImage {
  const png = PNG.sync.read(fs.readFileSync(path));
  const out = new Float64Array(png.width * png.height);
  for (let k = 0; k < out.length; k += 1) {
    const base = k * 4;
    out[k] =
      (png.data[base] + png.data[base + 1] + png.data[base + 2]) / 3;
  }
  return { width: png.width, height: png.height, data: out };
}

/** Nearest-neighbor resize to a square side. */
export function resizeGray(image: GrayImage, side: number): Float64Array {
  const out = new Float64Array(side * side);
  for (let i = 0; i < side; i += 1) {
    const srcI = Math.min(
      image.height - 1,
      Math.floor(((i + 0.5) * image.height) / side)
    );
    for (let j = 0; j < side; j += 1) {
      const srcJ = Math.min(
        image.width - 1,
        Math.floor(((j + 0.5) * image.width) / side)
      );
      out[i * side + j] = image.data[srcI * image.width + srcJ];
    }
  }
  return out;
}

/** Map [0, 255] intensities onto the [-1, 1] latent value range. */
export function toSigned(gray: Float64Array): Float64Array {
  const out = new Float64Array(gray.length);
  for (let k = 0; k < gray.length; k += 1) {
    out[k] = gray[k] / 127.5 - 1;
  }
  return out;
}

/** Test and tooling helper: write a grayscale field as an RGB PNG. */
export function writeGrayPng(
  path: string,
  data: Float64Array,
  side: number
): void {
  const png = new PNG({ width: side, height: side });
  for (let k = 0; k < side * side; k += 1) {
    const value = Math.max(0, Math.min(255, Math.round(data[k])));
    const base = k * 4;
    png.data[base] = value;
    png.data[base + 1] = value;
    png.data[base + 2] = value;
    png.data[base + 3] = 255;
  }
  fs.writeFileSync(path, PNG.sync.write(png));
}
