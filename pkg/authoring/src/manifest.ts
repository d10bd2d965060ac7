/** Manifest assembly and canonical JSON. */

import type { AuthoringSpec, Manifest, TensorSpec } from "./types.js";

/**
 * Canonical JSON: keys sorted recursively, compact separators. Digests and
 * byte-identical exports depend on this exact serialization.
 */
export function canonicalJson(value: unknown): string {
  if (value === null || typeof value !== "object") {
    return JSON.stringify(value);
  }
  if (Array.isArray(value)) {
    return `[${value.map(canonicalJson).join(",")}]`;
  }
  const entries = Object.entries(value as Record<string, unknown>)
    .sort(([a], [b]) => (a < b ? -1 : a > b ? 1 : 0))
    .map(([k, v]) => `${JSON.stringify(k)}:${canonicalJson(v)}`);
  return `{${entries.join(",")}}`;
}

/**
 * Canonical schema: weight_k then bias_k per layer, index-based names,
 * layer paths under dense_<k> nodes with the slot index as the final
 * element. Only the final layer is updatable, which forces tree-layout
 * consumers through the navigation write path everywhere else.
 */
export function schemaForLayers(layers: AuthoringSpec["layers"]): Manifest["schema"] {
  const tensors: TensorSpec[] = [];
  let total = 0;
  layers.forEach((layer, k) => {
    const updatable = k === layers.length - 1;
    tensors.push({
      name: `parameter_${2 * k}`,
      shape: [layer.input_dim, layer.output_dim],
      role: "weight",
      layer_path: [`dense_${k}`, "0"],
      updatable,
    });
    tensors.push({
      name: `parameter_${2 * k + 1}`,
      shape: [layer.output_dim],
      role: "bias",
      layer_path: [`dense_${k}`, "1"],
      updatable,
    });
    total += layer.input_dim * layer.output_dim + layer.output_dim;
  });
  return { tensors, total_elements: total };
}

export function buildManifest(spec: AuthoringSpec, paramsDigest: string): Manifest {
  return {
    name: spec.name,
    version: spec.version,
    data_type: spec.data_type,
    architecture: spec.layers,
    loss: spec.loss,
    schema: schemaForLayers(spec.layers),
    variants: { index_map: "index_map.bin", layer_tree: "layer_tree.bin" },
    params_digest: paramsDigest,
    init: { scheme: spec.init.scheme, seed: spec.init.seed },
  };
}
