import { describe, expect, it } from "vitest";

import { bumpVersion, exportPackage } from "../src/export.js";
import { sha256Hex } from "../src/tensors.js";
import type { Manifest } from "../src/types.js";
import { readZip } from "../src/zip.js";

const blobsSpec = () => ({
  name: "demo-blobs",
  version: 1,
  data_type: "blobs",
  layers: [
    { input_dim: 4, output_dim: 16, activation: "relu" },
    { input_dim: 16, output_dim: 2, activation: "softmax" },
  ],
  loss: "cross_entropy",
  init: { scheme: "xavier_uniform", seed: 11 },
});

// Shared cross-implementation vector: any compliant exporter fed this spec
// must produce exactly this parameter digest.
const BLOBS_SEED11_DIGEST =
  "7660a927292d49340bcc85c6fbee7e9a79796939f29e89a14093414d42a0cb97";

function manifestOf(bytes: Uint8Array): Manifest {
  const entries = readZip(bytes);
  return JSON.parse(new TextDecoder().decode(entries.get("manifest.json")));
}

describe("exportPackage", () => {
  it("produces the frozen digest for the reference spec", () => {
    expect(exportPackage(blobsSpec()).paramsDigest).toBe(BLOBS_SEED11_DIGEST);
  });

  it("is byte-identical for identical spec and seed", () => {
    const a = exportPackage(blobsSpec()).bytes;
    const b = exportPackage(blobsSpec()).bytes;
    expect(Buffer.from(a).equals(Buffer.from(b))).toBe(true);
  });

  it("changes the digest when the seed changes", () => {
    const other = { ...blobsSpec(), init: { scheme: "xavier_uniform", seed: 12 } };
    expect(exportPackage(other).paramsDigest).not.toBe(BLOBS_SEED11_DIGEST);
  });

  it("writes both variants with identical blobs", () => {
    const entries = readZip(exportPackage(blobsSpec()).bytes);
    expect([...entries.keys()]).toEqual(["manifest.json", "index_map.bin", "layer_tree.bin"]);
    const a = entries.get("index_map.bin")!;
    const b = entries.get("layer_tree.bin")!;
    expect(Buffer.from(a).equals(Buffer.from(b))).toBe(true);
    expect(sha256Hex(a)).toBe(BLOBS_SEED11_DIGEST);
  });

  it("generates index-based names, paths, and updatable flags", () => {
    const manifest = manifestOf(exportPackage(blobsSpec()).bytes);
    expect(manifest.schema.tensors.map((t) => t.name)).toEqual([
      "parameter_0", "parameter_1", "parameter_2", "parameter_3",
    ]);
    expect(manifest.schema.tensors.map((t) => t.updatable)).toEqual([
      false, false, true, true,
    ]);
    expect(manifest.schema.tensors[0].layer_path).toEqual(["dense_0", "0"]);
    expect(manifest.schema.tensors[3].layer_path).toEqual(["dense_1", "1"]);
    expect(manifest.schema.total_elements).toBe(4 * 16 + 16 + 16 * 2 + 2);
    expect(manifest.variants).toEqual({
      index_map: "index_map.bin",
      layer_tree: "layer_tree.bin",
    });
  });

  it("rejects specs with broken dimension chains", () => {
    const bad = blobsSpec();
    bad.layers[1].input_dim = 9;
    expect(() => exportPackage(bad)).toThrowError(/layers\[1\].input_dim/);
  });
});

describe("bumpVersion", () => {
  it("widens the hidden layer and bumps the version", () => {
    const bumped = bumpVersion(blobsSpec(), { widen: 24 });
    expect(bumped.version).toBe(2);
    expect(bumped.layers[0].output_dim).toBe(24);
    expect(bumped.layers[1].input_dim).toBe(24);
  });

  it("bumps even with no changes (explicit redeploys allowed)", () => {
    expect(bumpVersion(blobsSpec()).version).toBe(2);
  });

  it("chains strictly increasing versions", () => {
    let spec: unknown = blobsSpec();
    const versions: number[] = [];
    for (let i = 0; i < 3; i++) {
      const bumped = bumpVersion(spec);
      versions.push(bumped.version);
      spec = bumped;
    }
    expect(versions).toEqual([2, 3, 4]);
  });

  it("bumped spec exports fresh shapes", () => {
    const bumped = bumpVersion(blobsSpec(), { widen: 24 });
    const manifest = manifestOf(exportPackage(bumped).bytes);
    expect(manifest.version).toBe(2);
    expect(manifest.schema.tensors[0].shape).toEqual([4, 24]);
    expect(manifest.params_digest).not.toBe(BLOBS_SEED11_DIGEST);
  });
});
