/**
 * Diffusion noise schedule used when noising the latent to time step t:
 * the scaled-linear beta schedule (linear in sqrt(beta)) over 1000
 * training steps, with x_t = sqrt(abar_t) * x_0 + sqrt(1 - abar_t) * eps.
 */

export const NUM_TRAIN_TIMESTEPS = 1000;
const BETA_START = 0.00085;
const BETA_END = 0.012;

export function betas(): Float64Array {
  const out = new Float64Array(NUM_TRAIN_TIMESTEPS);
  const start = Math.sqrt(BETA_START);
  const end = Math.sqrt(BETA_END);
  for (let i = 0; i < NUM_TRAIN_TIMESTEPS; i += 1) {
    const root = start + (i / (NUM_TRAIN_TIMESTEPS - 1)) * (end - start);
    out[i] = root * root;
  }
  return out;
}

export function alphaBars(): Float64Array {
  const schedule = betas();
  const out = new Float64Array(NUM_TRAIN_TIMESTEPS);
  let product = 1;
  for (let i = 0; i < NUM_TRAIN_TIMESTEPS; i += 1) {
    product *= 1 - schedule[i];
    out[i] = product;
  }
  return out;
}

export interface NoiseScales {
  /** sqrt(abar_t), multiplies the clean latent. */
  signal: number;
  /** sqrt(1 - abar_t), multiplies the gaussian noise. */
  noise: number;
}

export function noiseScales(timeStep: number): NoiseScales {
  if (
    !Number.isInteger(timeStep) ||
    timeStep < 0 ||
    timeStep >= NUM_TRAIN_TIMESTEPS
  ) {
    throw new Error(
      `time step must be an integer in [0, ${NUM_TRAIN_TIMESTEPS}), ` +
        `got ${timeStep}`
    );
  }
  const abar = alphaBars()[timeStep];
  return { signal: Math.sqrt(abar), noise: Math.sqrt(1 - abar) };
}
