import seedrandom from "seedrandom";

/** Deterministic RNG: seedrandom stream plus Box-Muller gaussians. */
export class SeededRng {
  private readonly uniformFn: seedrandom.PRNG;
  private spare: number | null = null;

  constructor(seed: number | string) {
    this.uniformFn = seedrandom(String(seed));
  }

  /** Uniform draw in [0, 1). */
  uniform(): number {
    return this.uniformFn();
  }

  /** Standard normal draw. */
  gaussian(): number {
    if (this.spare !== null) {
      const value = this.spare;
      this.spare = null;
      return value;
    }
    let u = 0;
    do {
      u = this.uniformFn();
    } while (u === 0); // log(0) guard
    const v = this.uniformFn();
    const radius = Math.sqrt(-2 * Math.log(u));
    this.spare = radius * Math.sin(2 * Math.PI * v);
    return radius * Math.cos(2 * Math.PI * v);
  }
}
