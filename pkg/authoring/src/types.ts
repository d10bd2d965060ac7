/** Model spec and manifest types shared across the tool. */

export type Activation = "relu" | "identity" | "softmax";
export type Loss = "mse" | "cross_entropy";

export interface LayerSpec {
  input_dim: number;
  output_dim: number;
  activation: Activation;
}

export interface AuthoringSpec {
  name: string;
  version: number;
  data_type: string;
  layers: LayerSpec[];
  loss: Loss;
  init: { scheme: "xavier_uniform"; seed: number };
}

export interface TensorSpec {
  name: string;
  shape: number[];
  role: "weight" | "bias";
  layer_path: string[];
  updatable: boolean;
}

export interface Manifest {
  name: string;
  version: number;
  data_type: string;
  architecture: LayerSpec[];
  loss: Loss;
  schema: { tensors: TensorSpec[]; total_elements: number };
  variants: Record<string, string>;
  params_digest: string;
  init: { scheme: string; seed: number };
}

export class InvalidSpec extends Error {
  constructor(public readonly field: string, detail: string) {
    super(`${field}: ${detail}`);
    this.name = "InvalidSpec";
  }
}

const ACTIVATIONS: readonly string[] = ["relu", "identity", "softmax"];
const LOSSES: readonly string[] = ["mse", "cross_entropy"];

/** Validate an untrusted spec document; throws InvalidSpec naming the field. */
export function validateSpec(raw: unknown): AuthoringSpec {
  if (typeof raw !== "object" || raw === null) {
    throw new InvalidSpec("spec", "not an object");
  }
  const spec = raw as Record<string, unknown>;
  if (typeof spec.name !== "string" || !/^[A-Za-z0-9][A-Za-z0-9._-]*$/.test(spec.name)) {
    throw new InvalidSpec("name", "must be a filesystem-safe string");
  }
  if (!Number.isInteger(spec.version) || (spec.version as number) < 1) {
    throw new InvalidSpec("version", "must be an integer >= 1");
  }
  if (typeof spec.data_type !== "string" || spec.data_type.length === 0) {
    throw new InvalidSpec("data_type", "must be a non-empty string");
  }
  if (!Array.isArray(spec.layers) || spec.layers.length === 0) {
    throw new InvalidSpec("layers", "must be a non-empty array");
  }
  const layers: LayerSpec[] = [];
  let prevOut: number | null = null;
  (spec.layers as unknown[]).forEach((entry, i) => {
    const layer = entry as Record<string, unknown>;
    if (!Number.isInteger(layer.input_dim) || (layer.input_dim as number) < 1) {
      throw new InvalidSpec(`layers[${i}].input_dim`, "must be a positive integer");
    }
    if (!Number.isInteger(layer.output_dim) || (layer.output_dim as number) < 1) {
      throw new InvalidSpec(`layers[${i}].output_dim`, "must be a positive integer");
    }
    if (typeof layer.activation !== "string" || !ACTIVATIONS.includes(layer.activation)) {
      throw new InvalidSpec(`layers[${i}].activation`, `must be one of ${ACTIVATIONS.join(", ")}`);
    }
    if (prevOut !== null && layer.input_dim !== prevOut) {
      throw new InvalidSpec(
        `layers[${i}].input_dim`,
        `is ${layer.input_dim} but the previous layer's output_dim is ${prevOut}`,
      );
    }
    if (layer.activation === "softmax" && i !== (spec.layers as unknown[]).length - 1) {
      throw new InvalidSpec(`layers[${i}].activation`, "softmax is only allowed on the final layer");
    }
    prevOut = layer.output_dim as number;
    layers.push({
      input_dim: layer.input_dim as number,
      output_dim: layer.output_dim as number,
      activation: layer.activation as Activation,
    });
  });
  if (typeof spec.loss !== "string" || !LOSSES.includes(spec.loss)) {
    throw new InvalidSpec("loss", `must be one of ${LOSSES.join(", ")}`);
  }
  const lastAct = layers[layers.length - 1].activation;
  if ((spec.loss === "cross_entropy") !== (lastAct === "softmax")) {
    throw new InvalidSpec("loss", `${spec.loss} does not pair with final activation ${lastAct}`);
  }
  const init = spec.init as Record<string, unknown> | undefined;
  if (!init || init.scheme !== "xavier_uniform") {
    throw new InvalidSpec("init.scheme", "must be 'xavier_uniform'");
  }
  if (!Number.isInteger(init.seed) || (init.seed as number) < 0) {
    throw new InvalidSpec("init.seed", "must be a non-negative integer");
  }
  return {
    name: spec.name,
    version: spec.version as number,
    data_type: spec.data_type,
    layers,
    loss: spec.loss as Loss,
    init: { scheme: "xavier_uniform", seed: init.seed as number },
  };
}
