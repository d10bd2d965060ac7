#!/usr/bin/env python3
"""Export a model package from a JSON spec (or a built-in demo spec).

Examples:
    python scripts/export_package.py --builtin blobs --out demo-blobs.pkg
    python scripts/export_package.py --spec my_model.json --out model.pkg
"""

import argparse
import json
from pathlib import Path

from crossfl.harness import modelgen


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    group = parser.add_mutually_exclusive_group(required=True)
    group.add_argument("--spec", help="path to a model spec JSON file")
    group.add_argument("--builtin", choices=["blobs", "sleep"])
    parser.add_argument("--seed", type=int, default=None, help="override init seed")
    parser.add_argument("--out", required=True)
    args = parser.parse_args()

    if args.spec:
        spec = json.loads(Path(args.spec).read_text())
    elif args.builtin == "blobs":
        spec = modelgen.blobs_spec()
    else:
        spec = modelgen.sleep_spec()
    if args.seed is not None:
        spec["init"]["seed"] = args.seed

    data = modelgen.package_bytes_from_spec(spec)
    Path(args.out).write_bytes(data)
    pkg = modelgen.package_from_spec(spec)
    print(f"wrote {args.out}: {pkg.manifest.name} v{pkg.manifest.version} "
          f"digest {pkg.manifest.params_digest}")


if __name__ == "__main__":
    main()
