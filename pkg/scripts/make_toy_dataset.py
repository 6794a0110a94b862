#!/usr/bin/env python3
"""Generate a small synthetic paired dataset for smoke tests and demos.

References are smooth color fields; raw inputs are the same fields pushed
through a fixed channel attenuation plus offset, which mimics the flat,
color-cast look of underwater footage closely enough for overfit runs.

Usage:
    python3 scripts/make_toy_dataset.py --out /tmp/toy --pairs 4 --size 64
"""

import argparse
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from uwnet import data

CHANNEL_GAINS = (0.35, 0.85, 0.60)
CHANNEL_OFFSETS = (0.02, 0.06, 0.03)


def reference_field(seed: int, size: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size] / max(size - 1, 1)
    channels = []
    for _ in range(3):
        a, b, c = rng.uniform(-1.0, 1.0, size=3)
        f1, f2 = rng.uniform(1.0, 3.0, size=2)
        plane = a * yy + b * xx + c * np.sin(f1 * np.pi * yy) * np.cos(f2 * np.pi * xx)
        lo, hi = plane.min(), plane.max()
        plane = (plane - lo) / (hi - lo) if hi > lo else np.zeros_like(plane)
        channels.append(0.2 + 0.6 * plane)  # keep inside [0.2, 0.8]
    return np.stack(channels)[None].astype(np.float32)


def degrade(reference: np.ndarray) -> np.ndarray:
    gains = np.array(CHANNEL_GAINS, dtype=np.float32).reshape(1, 3, 1, 1)
    offsets = np.array(CHANNEL_OFFSETS, dtype=np.float32).reshape(1, 3, 1, 1)
    return np.clip(reference * gains + offsets, 0.0, 1.0)


def build(root, pairs: int = 4, size: int = 64, seed: int = 0) -> None:
    root = Path(root)
    (root / "raw").mkdir(parents=True, exist_ok=True)
    (root / "ref").mkdir(parents=True, exist_ok=True)
    for i in range(pairs):
        ref = reference_field(seed * 1000 + i, size)
        raw = degrade(ref)
        data.write_image(root / "ref" / f"pair{i}.ppm", ref)
        data.write_image(root / "raw" / f"pair{i}.ppm", raw)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", required=True, help="dataset root to create")
    parser.add_argument("--pairs", type=int, default=4)
    parser.add_argument("--size", type=int, default=64)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    build(args.out, args.pairs, args.size, args.seed)
    print(f"wrote {args.pairs} pairs of {args.size}x{args.size} images under {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
