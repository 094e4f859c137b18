/**
 * Cross-package interop: stacks written here must be consumable by the
 * diffseg Python CLI, and stacks written by its synth command must be
 * readable here. Skipped when no diffseg install is on python3's path.
 */

import { spawnSync } from "node:child_process";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

import { afterEach, describe, expect, it } from "vitest";

import { PNG } from "pngjs";

import { readStack, validateLayer } from "../src/attnStore.js";
import { main } from "../src/cli.js";
import { writeGrayPng } from "../src/image.js";

const PYTHON = "python3";
// argparse-based entry point; mirrors the installed `diffseg` script
const DIFFSEG = [
  "-c",
  "import sys; from diffseg.cli import main; sys.exit(main(sys.argv[1:]))",
];

function diffsegAvailable(): boolean {
  const probe = spawnSync(PYTHON, ["-c", "import diffseg"], {
    encoding: "utf-8",
  });
  return probe.status === 0;
}

function runDiffseg(args: string[]): ReturnType<typeof spawnSync> {
  return spawnSync(PYTHON, [...DIFFSEG, ...args], { encoding: "utf-8" });
}

const tmpDirs: string[] = [];

function tmpDir(): string {
  const dir = fs.mkdtempSync(path.join(os.tmpdir(), "attninterop-"));
  tmpDirs.push(dir);
  return dir;
}

afterEach(() => {
  while (tmpDirs.length > 0) {
    fs.rmSync(tmpDirs.pop()!, { recursive: true, force: true });
  }
});

describe.skipIf(!diffsegAvailable())("diffseg interop", () => {
  it("segments an extracted stack end to end", () => {
    const work = tmpDir();

    // two flat regions so the attention structure is strongly bimodal
    const side = 64;
    const field = new Float64Array(side * side).fill(30);
    for (let i = 0; i < side; i += 1) {
      for (let j = side / 2; j < side; j += 1) {
        field[i * side + j] = 220;
      }
    }
    const image = path.join(work, "halves.png");
    writeGrayPng(image, field, side);

    const stack = path.join(work, "stack");
    expect(
      main(["--image", image, "--out", stack, "--size", "64", "--no-noise"])
    ).toBe(0);

    const prefix = path.join(work, "seg");
    const result = runDiffseg([
      "segment", stack,
      "--out-prefix", prefix,
      "--anchors", "4",
      "--tau", "2.0",
    ]);
    expect(result.stderr).not.toMatch(/Traceback/);
    expect(result.status).toBe(0);
    expect(fs.existsSync(`${prefix}_mask.png`)).toBe(true);

    const meta = JSON.parse(fs.readFileSync(`${prefix}_meta.json`, "utf-8"));
    expect(meta.num_labels).toBeGreaterThanOrEqual(1);
    expect(meta.params.anchors).toBe(4);
    expect(meta.image_size).toEqual([64, 64]);
  });

  it("rereads a stack produced by the synth command", () => {
    const work = tmpDir();

    // 16x16 half-split label card; the label loader wants single-channel,
    // so pack a true grayscale PNG rather than going through writeGrayPng
    const side = 16;
    const png = new PNG({ width: side, height: side });
    for (let i = 0; i < side; i += 1) {
      for (let j = 0; j < side; j += 1) {
        const base = (i * side + j) * 4;
        const value = j >= side / 2 ? 1 : 0;
        png.data[base] = value;
        png.data[base + 1] = value;
        png.data[base + 2] = value;
        png.data[base + 3] = 255;
      }
    }
    const labelPng = path.join(work, "labels.png");
    fs.writeFileSync(labelPng, PNG.sync.write(png, { colorType: 0 }));

    const stackDir = path.join(work, "synth");
    const result = runDiffseg([
      "synth",
      "--labels", labelPng,
      "--out", stackDir,
      "--resolutions", "16,8",
      "--epsilon", "0.05",
    ]);
    expect(result.stderr).not.toMatch(/Traceback/);
    expect(result.status).toBe(0);

    const stack = readStack(stackDir);
    expect(stack.layers.map((l) => l.resolution)).toEqual([16, 8]);
    stack.layers.forEach((layer, index) => {
      expect(() => validateLayer(layer, `synth layer ${index}`)).not.toThrow();
    });
    // synth records an image footprint of 8 px per base-resolution cell
    expect(stack.meta.imageHeight).toBe(128);
  });
});
