/**
 * Procedural attention backend.
 *
 * Running a pretrained diffusion UNet is out of reach here (no GPU, no
 * weights), so this backend synthesizes self-attention deterministically
 * from the image content while keeping every structural property of real
 * extraction: the image is reduced to a latent at 1/8 scale, noised to
 * time step t with the training schedule, and each UNet attention site
 * emits a (w, w, w, w) tensor whose maps are softmax distributions.
 * Attention between cells falls off with feature distance and spatial
 * distance; the 8 heads use different bandwidths, so they disagree the
 * way real heads do, and averaging them yields the stored per-layer map.
 *
 * Layer sites follow the UNet: two attention layers per down block at
 * w_max, w_max/2, w_max/4, one mid-block layer at w_max/8, then three
 * per up block mirrored back, giving counts {w_max: 5, w_max/2: 5,
 * w_max/4: 5, w_max/8: 1} in network order.
 */

import { LayerData, StackMeta } from "./attnStore.js";
import { symmetrizedKl } from "./headStats.js";
import { SeededRng } from "./rng.js";
import { noiseScales } from "./schedule.js";

export const NUM_HEADS = 8;
export const LATENT_FACTOR = 8;

export interface ExtractionConfig {
  /** Square working size; a positive multiple of 64. */
  size: number;
  /** Schedule position in [0, 1000). */
  timeStep: number;
  /** Noise seed; unused with addNoise = false. */
  seed: number;
  addNoise: boolean;
  sourceId: string;
}

export function checkConfig(config: ExtractionConfig): void {
  if (
    !Number.isInteger(config.size) ||
    config.size <= 0 ||
    config.size % 64 !== 0
  ) {
    throw new Error(
      `size must be a positive multiple of 64, got ${config.size}`
    );
  }
  noiseScales(config.timeStep); // validates the range
}

export function latentSide(size: number): number {
  return size / LATENT_FACTOR;
}

/** Attention-layer resolutions in network order for one latent side. */
export function unetResolutions(latent: number): number[] {
  if (!Number.isInteger(latent) || latent < 8 || latent % 8 !== 0) {
    throw new Error(
      `latent side must be a positive multiple of 8, got ${latent}`
    );
  }
  const w = latent;
  const down = [w, w, w / 2, w / 2, w / 4, w / 4];
  const mid = [w / 8];
  const up = [w / 4, w / 4, w / 4, w / 2, w / 2, w / 2, w, w, w];
  return [...down, ...mid, ...up];
}

/** Integer-factor box average of a square field. */
export function boxDownsample(
  src: Float64Array,
  srcSize: number,
  dstSize: number
): Float64Array {
  if (srcSize % dstSize !== 0) {
    throw new Error(
      `cannot box-average ${srcSize} down to ${dstSize}: not a divisor`
    );
  }
  const factor = srcSize / dstSize;
  if (factor === 1) {
    return src.slice();
  }
  const out = new Float64Array(dstSize * dstSize);
  const norm = 1 / (factor * factor);
  for (let i = 0; i < dstSize; i += 1) {
    for (let j = 0; j < dstSize; j += 1) {
      let sum = 0;
      for (let di = 0; di < factor; di += 1) {
        const row = (i * factor + di) * srcSize + j * factor;
        for (let dj = 0; dj < factor; dj += 1) {
          sum += src[row + dj];
        }
      }
      out[i * dstSize + j] = sum * norm;
    }
  }
  return out;
}

/**
 * Clean latent -> noised latent at the configured time step, using
 * x_t = sqrt(abar_t) x_0 + sqrt(1 - abar_t) eps with seeded noise.
 */
export function noisedLatent(
  graySigned: Float64Array,
  size: number,
  config: ExtractionConfig
): Float64Array {
  const latent = boxDownsample(graySigned, size, latentSide(size));
  if (!config.addNoise) {
    return latent;
  }
  const { signal, noise } = noiseScales(config.timeStep);
  const rng = new SeededRng(config.seed);
  const out = new Float64Array(latent.length);
  for (let k = 0; k < latent.length; k += 1) {
    out[k] = signal * latent[k] + noise * rng.gaussian();
  }
  return out;
}

export interface ExtractedLayer {
  resolution: number;
  data: Float32Array;
  /** Mean pairwise head divergence at this layer, when requested. */
  headStat: number | null;
}

/**
 * One attention site. Head h scores key (a, b) from query (i, j) as
 * -gamma_h (f_ij - f_ab)^2 - d^2 / (2 sigma_h^2) and softmaxes over
 * keys; gamma and sigma vary per head and drift with the layer index so
 * sites at the same resolution are not clones of each other.
 */
export function extractLayer(
  latentField: Float64Array,
  latentSize: number,
  resolution: number,
  layerIndex: number,
  computeHeadStat: boolean
): ExtractedLayer {
  const w = resolution;
  const mapSize = w * w;
  const features = boxDownsample(latentField, latentSize, w);
  const data = new Float32Array(mapSize * mapSize);

  const gammas: number[] = [];
  const invTwoSigmaSq: number[] = [];
  for (let h = 0; h < NUM_HEADS; h += 1) {
    gammas.push((0.5 + 0.75 * h) * (1 + 0.1 * layerIndex));
    const sigma = Math.max(1, w / 8) * (1 + h / 2) * (1 + 0.05 * layerIndex);
    invTwoSigmaSq.push(1 / (2 * sigma * sigma));
  }

  const headMap = new Float64Array(mapSize);
  const headMaps = computeHeadStat
    ? Array.from({ length: NUM_HEADS }, () => new Float64Array(mapSize))
    : null;
  let statTotal = 0;
  let statTerms = 0;

  for (let i = 0; i < w; i += 1) {
    for (let j = 0; j < w; j += 1) {
      const query = features[i * w + j];
      const rowBase = (i * w + j) * mapSize;
      for (let h = 0; h < NUM_HEADS; h += 1) {
        const gamma = gammas[h];
        const spatial = invTwoSigmaSq[h];
        let maxLogit = -Infinity;
        for (let a = 0; a < w; a += 1) {
          const di = i - a;
          for (let b = 0; b < w; b += 1) {
            const dj = j - b;
            const diff = query - features[a * w + b];
            const logit =
              -gamma * diff * diff - (di * di + dj * dj) * spatial;
            headMap[a * w + b] = logit;
            if (logit > maxLogit) maxLogit = logit;
          }
        }
        let sum = 0;
        for (let k = 0; k < mapSize; k += 1) {
          const value = Math.exp(headMap[k] - maxLogit);
          headMap[k] = value;
          sum += value;
        }
        // accumulate the head average in one pass
        const inv = 1 / (sum * NUM_HEADS);
        for (let k = 0; k < mapSize; k += 1) {
          data[rowBase + k] += headMap[k] * inv;
        }
        if (headMaps) {
          const target = headMaps[h];
          const invSum = 1 / sum;
          for (let k = 0; k < mapSize; k += 1) {
            target[k] = headMap[k] * invSum;
          }
        }
      }
      if (headMaps) {
        for (let g = 0; g < NUM_HEADS; g += 1) {
          for (let h = g + 1; h < NUM_HEADS; h += 1) {
            statTotal += symmetrizedKl(headMaps[g], headMaps[h]);
            statTerms += 1;
          }
        }
      }
    }
  }

  return {
    resolution: w,
    data,
    headStat: computeHeadStat ? statTotal / statTerms : null,
  };
}

export interface ExtractionResult {
  meta: StackMeta;
  layers: LayerData[];
  headStats: number[] | null;
}

/** Materialize the full stack; suited to desk-scale sizes. */
export function extractStack(
  graySigned: Float64Array,
  config: ExtractionConfig,
  computeHeadStats = false
): ExtractionResult {
  checkConfig(config);
  const size = config.size;
  if (graySigned.length !== size * size) {
    throw new Error(
      `expected a ${size}x${size} grayscale field, got ` +
        `${graySigned.length} values`
    );
  }
  const latent = latentSide(size);
  const field = noisedLatent(graySigned, size, config);
  const layers: LayerData[] = [];
  const headStats: number[] = [];
  unetResolutions(latent).forEach((resolution, index) => {
    const extracted = extractLayer(
      field,
      latent,
      resolution,
      index,
      computeHeadStats
    );
    layers.push({ resolution, data: extracted.data });
    if (extracted.headStat !== null) {
      headStats.push(extracted.headStat);
    }
  });
  return {
    meta: {
      imageHeight: size,
      imageWidth: size,
      timeStep: config.timeStep,
      sourceId: config.sourceId,
    },
    layers,
    headStats: computeHeadStats ? headStats : null,
  };
}
