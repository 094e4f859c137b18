import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

import { afterEach, describe, expect, it } from "vitest";

import { readGrayPng, resizeGray, toSigned, writeGrayPng } from "../src/image.js";

const tmpDirs: string[] = [];

function tmpFile(name: string): string {
  const dir = fs.mkdtempSync(path.join(os.tmpdir(), "attnimg-"));
  tmpDirs.push(dir);
  return path.join(dir, name);
}

afterEach(() => {
  while (tmpDirs.length > 0) {
    fs.rmSync(tmpDirs.pop()!, { recursive: true, force: true });
  }
});

describe("png round trip", () => {
  it("recovers the written intensities", () => {
    const side = 8;
    const field = new Float64Array(side * side);
    for (let k = 0; k < field.length; k += 1) {
      field[k] = (k * 37) % 256;
    }
    const file = tmpFile("gray.png");
    writeGrayPng(file, field, side);
    const image = readGrayPng(file);
    expect(image.width).toBe(side);
    expect(image.height).toBe(side);
    expect(Array.from(image.data)).toEqual(Array.from(field));
  });

  it("clamps out-of-range values on write", () => {
    const file = tmpFile("clamped.png");
    writeGrayPng(file, Float64Array.from([-5, 300, 0, 255]), 2);
    const image = readGrayPng(file);
    expect(Array.from(image.data)).toEqual([0, 255, 0, 255]);
  });
});

describe("resizeGray", () => {
  it("upscales by pixel duplication", () => {
    const image = {
      width: 2,
      height: 2,
      data: Float64Array.from([10, 20, 30, 40]),
    };
    const out = resizeGray(image, 4);
    expect(Array.from(out)).toEqual([
      10, 10, 20, 20, 10, 10, 20, 20, 30, 30, 40, 40, 30, 30, 40, 40,
    ]);
  });

  it("downscales by center sampling", () => {
    const data = new Float64Array(16);
    for (let k = 0; k < 16; k += 1) data[k] = k;
    const out = resizeGray({ width: 4, height: 4, data }, 2);
    // centers of each half land on rows/cols 1 and 3
    expect(Array.from(out)).toEqual([5, 7, 13, 15]);
  });

  it("handles non-square sources", () => {
    const image = {
      width: 4,
      height: 2,
      data: Float64Array.from([0, 1, 2, 3, 4, 5, 6, 7]),
    };
    const out = resizeGray(image, 2);
    expect(out.length).toBe(4);
    expect(Array.from(out)).toEqual([1, 3, 5, 7]);
  });
});

describe("toSigned", () => {
  it("maps the intensity range onto [-1, 1]", () => {
    const out = toSigned(Float64Array.from([0, 127.5, 255]));
    expect(Array.from(out)).toEqual([-1, 0, 1]);
  });
});
