/** Canonical tensor encoding and initialization. */

import { createHash } from "node:crypto";
import { SplitMix64 } from "./rng.js";
import type { LayerSpec } from "./types.js";

/**
 * Xavier-uniform weights and zero biases in canonical order
 * (weight_0, bias_0, weight_1, bias_1, ...).
 *
 * One SplitMix64 stream serves the whole package; weight tensors draw
 * input_dim*output_dim uniforms row-major, each value
 * (2u-1)*sqrt(6/(fan_in+fan_out)) computed in double precision and cast
 * to float32. Biases draw nothing.
 */
export function initialTensors(layers: LayerSpec[], seed: number): Float32Array[] {
  const stream = new SplitMix64(seed);
  const tensors: Float32Array[] = [];
  for (const layer of layers) {
    const { input_dim: fanIn, output_dim: fanOut } = layer;
    const bound = Math.sqrt(6 / (fanIn + fanOut));
    const weight = new Float32Array(fanIn * fanOut);
    for (let i = 0; i < weight.length; i++) {
      weight[i] = Math.fround((2 * stream.nextUnit() - 1) * bound);
    }
    tensors.push(weight);
    tensors.push(new Float32Array(fanOut)); // zero bias
  }
  return tensors;
}

/** Concatenate tensors as little-endian float32 bytes. */
export function encodeTensors(tensors: Float32Array[]): Uint8Array {
  const total = tensors.reduce((n, t) => n + t.length, 0);
  const out = new Uint8Array(total * 4);
  const view = new DataView(out.buffer);
  let offset = 0;
  for (const tensor of tensors) {
    for (let i = 0; i < tensor.length; i++) {
      view.setFloat32(offset, tensor[i], true);
      offset += 4;
    }
  }
  return out;
}

export function sha256Hex(data: Uint8Array): string {
  return createHash("sha256").update(data).digest("hex");
}

/** Decode an encoding back into flat float32 arrays of the given sizes. */
export function decodeTensors(data: Uint8Array, sizes: number[]): Float32Array[] {
  const total = sizes.reduce((a, b) => a + b, 0);
  if (data.length !== total * 4) {
    throw new Error(`encoding is ${data.length} bytes, schema needs ${total * 4}`);
  }
  const view = new DataView(data.buffer, data.byteOffset, data.byteLength);
  const out: Float32Array[] = [];
  let offset = 0;
  for (const size of sizes) {
    const tensor = new Float32Array(size);
    for (let i = 0; i < size; i++) {
      tensor[i] = view.getFloat32(offset, true);
      offset += 4;
    }
    out.push(tensor);
  }
  return out;
}
