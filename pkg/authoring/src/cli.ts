#!/usr/bin/env node
/**
 * author export --spec spec.json --out model.pkg
 * author bump   --spec spec.json [--widen 16] [--seed 9] [--out new.json]
 */

import { readFileSync, writeFileSync } from "node:fs";
import { parseArgs } from "node:util";
import { bumpVersion, exportPackage } from "./export.js";
import { InvalidSpec } from "./types.js";

function fail(message: string): never {
  console.error(`error: ${message}`);
  process.exit(1);
}

function loadSpec(path: string): unknown {
  try {
    return JSON.parse(readFileSync(path, "utf-8"));
  } catch (err) {
    fail(`cannot read spec ${path}: ${(err as Error).message}`);
  }
}

function cmdExport(argv: string[]): void {
  const { values } = parseArgs({
    args: argv,
    options: {
      spec: { type: "string" },
      out: { type: "string" },
    },
  });
  if (!values.spec || !values.out) {
    fail("usage: author export --spec spec.json --out model.pkg");
  }
  const result = exportPackage(loadSpec(values.spec));
  writeFileSync(values.out, result.bytes);
  console.log(
    `wrote ${values.out}: ${result.totalElements} parameters, ` +
      `digest ${result.paramsDigest}`,
  );
}

function cmdBump(argv: string[]): void {
  const { values } = parseArgs({
    args: argv,
    options: {
      spec: { type: "string" },
      widen: { type: "string" },
      seed: { type: "string" },
      out: { type: "string" },
    },
  });
  if (!values.spec) {
    fail("usage: author bump --spec spec.json [--widen N] [--seed N] [--out new.json]");
  }
  const bumped = bumpVersion(loadSpec(values.spec), {
    widen: values.widen === undefined ? undefined : Number(values.widen),
    seed: values.seed === undefined ? undefined : Number(values.seed),
  });
  const target = values.out ?? values.spec;
  writeFileSync(target, JSON.stringify(bumped, null, 2) + "\n");
  console.log(`wrote ${target}: ${bumped.name} v${bumped.version}`);
}

function main(): void {
  const [command, ...rest] = process.argv.slice(2);
  try {
    if (command === "export") {
      cmdExport(rest);
    } else if (command === "bump") {
      cmdBump(rest);
    } else {
      fail("commands: export, bump");
    }
  } catch (err) {
    if (err instanceof InvalidSpec) {
      fail(`invalid spec - ${err.message}`);
    }
    throw err;
  }
}

main();
