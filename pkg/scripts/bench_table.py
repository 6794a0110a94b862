#!/usr/bin/env python3
"""Print the compression / speed-up table for this machine.

Measures median single-image forward latency at the given resolution and
renders the comparison against the published baseline networks. The first
table uses the published parameter count for our network so the headline
ratios can be checked against the reference arithmetic; the second uses
the parameter census of the actual weights plus the measured latency.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from uwnet import bench, model, reports


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--image-size", type=int, default=256)
    parser.add_argument("--warmup-runs", type=int, default=5)
    parser.add_argument("--timed-runs", type=int, default=30)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    print("published arithmetic (alpha 219,840, beta 0.02 s):")
    for row in bench.comparison_rows(alpha=219_840, beta_seconds=0.02):
        print(
            f"  vs {row['name']:<10} compression gain {row['compression_gain']:6.2f}x   "
            f"speed-up gain {row['speed_up_gain']:6.2f}x"
        )

    store = model.build_network(model.NetworkConfig(), init_seed=args.seed)
    total, rows = model.count_parameters(store)
    image = np.random.default_rng(args.seed).random(
        (1, 3, args.image_size, args.image_size), dtype=np.float32
    )
    print(f"\nmeasuring {args.timed_runs} runs at {args.image_size}x{args.image_size}...")
    latency = bench.measure_latency(
        lambda: model.forward(store, image, mode="infer"),
        warmup_runs=args.warmup_runs,
        timed_runs=args.timed_runs,
    )
    report = bench.build_report(total, rows, latency)
    print()
    print(reports.render_bench_table(report), end="")
    return 0


if __name__ == "__main__":
    sys.exit(main())
