#!/usr/bin/env python3
"""Run the full two-task demo and print the loss/telemetry summary.

Thin wrapper over `crossfl demo`; useful when iterating on the harness.
"""

import argparse
import sys
from collections import defaultdict

from crossfl.harness.demo import DemoConfig, demo_run


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--rounds", type=int, default=10)
    parser.add_argument("--examples", type=int, default=200)
    parser.add_argument("--out", default="artifacts")
    args = parser.parse_args()

    result = demo_run(DemoConfig(
        seed=args.seed, rounds=args.rounds,
        examples_per_client=args.examples, out_dir=args.out,
    ))
    if not result.ok:
        print(f"FAILED: {result.failed}", file=sys.stderr)
        return 1

    trajectories = defaultdict(list)
    for row in result.loss_rows:
        trajectories[(row["task"], row["phase"])].append(row["eval_loss"])
    print(f"demo ok in {result.elapsed_s:.1f}s")
    for (task, phase), losses in sorted(trajectories.items()):
        print(f"  {task}/{phase}: round-1 {losses[0]:.4f} -> "
              f"round-{len(losses)} {losses[-1]:.4f}")
    walls = defaultdict(list)
    for row in result.telemetry_rows:
        walls[row["platform"]].append(row["wall_time_s"])
    means = {p: sum(w) / len(w) for p, w in walls.items()}
    for platform, mean in sorted(means.items()):
        print(f"  telemetry {platform}: mean wall {mean * 1000:.1f} ms")
    if len(means) == 2:
        hi, lo = max(means.values()), min(means.values())
        print(f"  wall-time ratio: {hi / lo:.2f}x")
    print(f"  artifacts: {result.losses_path}, {result.telemetry_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
