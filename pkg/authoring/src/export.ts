/** Package export and spec version bumping. */

import { buildManifest, canonicalJson } from "./manifest.js";
import { encodeTensors, initialTensors, sha256Hex } from "./tensors.js";
import { InvalidSpec, validateSpec, type AuthoringSpec } from "./types.js";
import { writeZip } from "./zip.js";

export interface ExportResult {
  bytes: Uint8Array;
  paramsDigest: string;
  totalElements: number;
}

/**
 * Build the package archive: manifest.json plus one identical parameter
 * blob per platform variant. Deterministic: same spec+seed, same bytes.
 */
export function exportPackage(raw: unknown): ExportResult {
  const spec = validateSpec(raw);
  const tensors = initialTensors(spec.layers, spec.init.seed);
  const blob = encodeTensors(tensors);
  const digest = sha256Hex(blob);
  const manifest = buildManifest(spec, digest);
  const bytes = writeZip([
    { name: "manifest.json", data: new TextEncoder().encode(canonicalJson(manifest)) },
    { name: "index_map.bin", data: blob },
    { name: "layer_tree.bin", data: blob },
  ]);
  return { bytes, paramsDigest: digest, totalElements: manifest.schema.total_elements };
}

export interface BumpChanges {
  widen?: number;
  seed?: number;
}

/**
 * Next version of a spec. Widening changes the first hidden width; an
 * empty change set still bumps (explicit redeploys are allowed). Weights
 * are regenerated at export time, so the new package is always fresh.
 */
export function bumpVersion(raw: unknown, changes: BumpChanges = {}): AuthoringSpec {
  const spec = validateSpec(raw);
  const layers = spec.layers.map((l) => ({ ...l }));
  if (changes.widen !== undefined) {
    if (layers.length < 2) {
      throw new InvalidSpec("layers", "widening needs at least two layers");
    }
    if (!Number.isInteger(changes.widen) || changes.widen < 1) {
      throw new InvalidSpec("widen", "must be a positive integer");
    }
    layers[0].output_dim = changes.widen;
    layers[1].input_dim = changes.widen;
  }
  return {
    ...spec,
    version: spec.version + 1,
    layers,
    init: { ...spec.init, seed: changes.seed ?? spec.init.seed },
  };
}
