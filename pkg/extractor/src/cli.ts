#!/usr/bin/env node
/**
 * attn-extract: image -> attn_store directory.
 *
 *   attn-extract --image photo.png --out runs/photo_attn \
 *       [--size 512] [--t 300] [--seed 0] [--keep-heads] [--no-noise] \
 *       [--source-id name]
 *
 * Exit codes: 0 success, 1 I/O failure, 2 validation failure, 3 bad
 * flags. With --keep-heads, per-layer head divergences and their mean
 * are written to head_stats.json next to the layer files.
 */

import * as fs from "node:fs";
import * as path from "node:path";
import { parseArgs } from "node:util";

import {
  buildManifest,
  encodeLayer,
  layerFileName,
  validateLayer,
} from "./attnStore.js";
import {
  ExtractionConfig,
  checkConfig,
  extractLayer,
  latentSide,
  noisedLatent,
  unetResolutions,
} from "./backend.js";
import { readGrayPng, resizeGray, toSigned } from "./image.js";

const EXIT_OK = 0;
const EXIT_IO = 1;
const EXIT_VALIDATION = 2;
const EXIT_USAGE = 3;

interface CliOptions {
  image: string;
  out: string;
  config: ExtractionConfig;
  keepHeads: boolean;
}

function parseCli(argv: string[]): CliOptions {
  const { values } = parseArgs({
    args: argv,
    strict: true,
    options: {
      image: { type: "string" },
      out: { type: "string" },
      size: { type: "string", default: "512" },
      t: { type: "string", default: "300" },
      seed: { type: "string", default: "0" },
      "keep-heads": { type: "boolean", default: false },
      "no-noise": { type: "boolean", default: false },
      "source-id": { type: "string" },
    },
  });
  if (!values.image || !values.out) {
    throw new UsageError("--image and --out are required");
  }
  const size = Number(values.size);
  const timeStep = Number(values.t);
  const seed = Number(values.seed);
  if (!Number.isFinite(size) || !Number.isFinite(timeStep) || !Number.isFinite(seed)) {
    throw new UsageError("--size, --t, and --seed must be numbers");
  }
  return {
    image: values.image,
    out: values.out,
    keepHeads: values["keep-heads"] ?? false,
    config: {
      size,
      timeStep,
      seed,
      addNoise: !values["no-noise"],
      sourceId:
        values["source-id"] ?? path.basename(values.image).replace(/\.[^.]*$/, ""),
    },
  };
}

class UsageError extends Error {}

/** Streams one layer at a time so large stacks never sit in memory. */
function runExtraction(options: CliOptions): void {
  const { config } = options;
  checkConfig(config);
  const image = readGrayPng(options.image);
  const gray = toSigned(resizeGray(image, config.size));
  const latent = latentSide(config.size);
  const field = noisedLatent(gray, config.size, config);

  fs.mkdirSync(options.out, { recursive: true });
  const entries: { resolution: number; file: string }[] = [];
  const headStats: number[] = [];
  unetResolutions(latent).forEach((resolution, index) => {
    const layer = extractLayer(
      field,
      latent,
      resolution,
      index,
      options.keepHeads
    );
    const file = layerFileName(index);
    validateLayer(
      { resolution, data: layer.data },
      `layer ${index} (${file})`
    );
    fs.writeFileSync(
      path.join(options.out, file),
      encodeLayer({ resolution, data: layer.data })
    );
    entries.push({ resolution, file });
    if (layer.headStat !== null) {
      headStats.push(layer.headStat);
    }
  });

  const manifest = buildManifest(
    {
      imageHeight: config.size,
      imageWidth: config.size,
      timeStep: config.timeStep,
      sourceId: config.sourceId,
    },
    entries
  );
  fs.writeFileSync(
    path.join(options.out, "manifest.json"),
    JSON.stringify(manifest, null, 2) + "\n"
  );

  if (options.keepHeads) {
    const mean = headStats.reduce((a, b) => a + b, 0) / headStats.length;
    const stats = {
      head_kl_stat: mean,
      per_layer: entries.map((entry, index) => ({
        resolution: entry.resolution,
        head_kl_stat: headStats[index],
      })),
    };
    fs.writeFileSync(
      path.join(options.out, "head_stats.json"),
      JSON.stringify(stats, null, 2) + "\n"
    );
  }
  console.log(
    `wrote ${entries.length}-layer stack (w_max ${latent}) to ${options.out}`
  );
}

export function main(argv: string[]): number {
  let options: CliOptions;
  try {
    options = parseCli(argv);
  } catch (error) {
    console.error(`error: ${(error as Error).message}`);
    return EXIT_USAGE;
  }
  try {
    runExtraction(options);
    return EXIT_OK;
  } catch (error) {
    const err = error as NodeJS.ErrnoException;
    console.error(`error: ${err.message}`);
    if (err.code && typeof err.code === "string") {
      return EXIT_IO; // fs errors carry codes like ENOENT, EACCES
    }
    return EXIT_VALIDATION;
  }
}

const invokedDirectly =
  process.argv[1] !== undefined &&
  import.meta.url === new URL(`file://${path.resolve(process.argv[1])}`).href;
if (invokedDirectly) {
  process.exit(main(process.argv.slice(2)));
}
