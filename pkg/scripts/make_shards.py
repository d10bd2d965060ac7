#!/usr/bin/env python3
"""Generate synthetic task shards as CSV files for CLI clients.

Example:
    python scripts/make_shards.py --task blobs_classification --n 200 \
        --clients 2 --seed 7 --out ./shards
"""

import argparse
from pathlib import Path

from crossfl.harness import datasets


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--task", choices=datasets.TASK_KINDS,
                        default=datasets.BLOBS)
    parser.add_argument("--n", type=int, default=200, help="total examples")
    parser.add_argument("--clients", type=int, default=2)
    parser.add_argument("--partition", choices=["iid", "label_skew"], default="iid")
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--out", default="./shards")
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    task = datasets.SyntheticTask(kind=args.task, n_examples=args.n, seed=args.seed)
    shards = datasets.generate_shards(task, args.clients, args.partition)
    for i, shard in enumerate(shards):
        path = out / f"{args.task}-client{i}.csv"
        datasets.save_shard_csv(shard, path)
        print(f"wrote {path} ({shard.num_examples} examples)")


if __name__ == "__main__":
    main()
