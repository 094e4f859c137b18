/** Divergence diagnostics over the retained multi-head axis. */

const LOG_FLOOR = 1e-12;

/** Symmetrized KL between two distributions of equal length. */
export function symmetrizedKl(
  p: ArrayLike<number>,
  q: ArrayLike<number>
): number {
  if (p.length !== q.length) {
    throw new Error(
      `distribution lengths differ: ${p.length} vs ${q.length}`
    );
  }
  let total = 0;
  for (let k = 0; k < p.length; k += 1) {
    const a = p[k];
    const b = q[k];
    if (a === b) continue; // exact zero contribution, keeps D(p,p) = 0
    const logDiff =
      Math.log(Math.max(a, LOG_FLOOR)) - Math.log(Math.max(b, LOG_FLOOR));
    total += (a - b) * logDiff;
  }
  return total / 2;
}

export interface HeadLayer {
  resolution: number;
  heads: number;
  /** heads * w**4 float32 values, C order over (h, i, j, a, b). */
  data: Float32Array;
}

/**
 * Mean symmetrized KL across unordered head pairs, averaged over every
 * query location of every layer. Zero when all heads agree everywhere.
 */
export function headKlStat(layers: HeadLayer[]): number {
  if (layers.length === 0) {
    throw new Error("head_kl_stat needs at least one layer");
  }
  let total = 0;
  let terms = 0;
  for (const layer of layers) {
    const w = layer.resolution;
    const mapSize = w * w;
    const perHead = mapSize * mapSize;
    if (layer.heads < 2) {
      throw new Error("head_kl_stat needs at least two heads per layer");
    }
    if (layer.data.length !== layer.heads * perHead) {
      throw new Error(
        `layer data length ${layer.data.length} does not match ` +
          `${layer.heads} heads of ${w}**4 values`
      );
    }
    for (let cell = 0; cell < mapSize; cell += 1) {
      for (let g = 0; g < layer.heads; g += 1) {
        const pOff = g * perHead + cell * mapSize;
        const p = layer.data.subarray(pOff, pOff + mapSize);
        for (let h = g + 1; h < layer.heads; h += 1) {
          const qOff = h * perHead + cell * mapSize;
          const q = layer.data.subarray(qOff, qOff + mapSize);
          total += symmetrizedKl(p, q);
          terms += 1;
        }
      }
    }
  }
  return total / terms;
}
