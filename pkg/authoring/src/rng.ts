/**
 * SplitMix64, the documented generator behind deterministic weight init.
 *
 * The package format pins this exact stream so any compliant tool, in any
 * language, produces byte-identical initial weights from one spec+seed.
 */

const MASK = (1n << 64n) - 1n;
const GAMMA = 0x9e3779b97f4a7c15n;
const M1 = 0xbf58476d1ce4e5b9n;
const M2 = 0x94d049bb133111ebn;

export class SplitMix64 {
  private state: bigint;

  constructor(seed: number | bigint) {
    this.state = BigInt(seed) & MASK;
  }

  nextU64(): bigint {
    this.state = (this.state + GAMMA) & MASK;
    let z = this.state;
    z = ((z ^ (z >> 30n)) * M1) & MASK;
    z = ((z ^ (z >> 27n)) * M2) & MASK;
    return z ^ (z >> 31n);
  }

  /** Uniform double in [0, 1): top 53 bits of the next output. */
  nextUnit(): number {
    return Number(this.nextU64() >> 11n) * 2 ** -53;
  }
}
