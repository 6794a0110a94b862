import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))  # makes `import oracles` work

from uwnet import data

settings.register_profile("suite", deadline=None, max_examples=25)
settings.load_profile("suite")


def smooth_reference(seed: int, size: int = 64) -> np.ndarray:
    """Low-frequency target image: sums of gentle ramps, values in [0.2, 0.8]."""
    rng = np.random.default_rng(seed)
    yy, xx = np.meshgrid(
        np.linspace(0.0, 1.0, size), np.linspace(0.0, 1.0, size), indexing="ij"
    )
    channels = []
    for _ in range(3):
        a, b, c = rng.uniform(-1.0, 1.0, size=3)
        phase = rng.uniform(0.0, np.pi)
        plane = a * yy + b * xx + c * np.sin(2.0 * np.pi * (yy + xx) / 2.0 + phase)
        lo, hi = plane.min(), plane.max()
        plane = (plane - lo) / (hi - lo + 1e-9) * 0.6 + 0.2
        channels.append(plane)
    return np.stack(channels)[None].astype(np.float32)


def degrade(reference: np.ndarray) -> np.ndarray:
    """Strong per-channel color cast, the hue shift typical of raw captures."""
    gains = np.array([0.35, 0.85, 0.6], dtype=np.float32).reshape(1, 3, 1, 1)
    offsets = np.array([0.02, 0.06, 0.03], dtype=np.float32).reshape(1, 3, 1, 1)
    return np.clip(reference * gains + offsets, 0.0, 1.0)


def build_toy_dataset(root: Path, pairs: int = 4, size: int = 64) -> Path:
    (root / "raw").mkdir(parents=True)
    (root / "ref").mkdir()
    for i in range(pairs):
        ref = smooth_reference(seed=100 + i, size=size)
        raw = degrade(ref)
        data.write_image(root / "ref" / f"pair{i}.ppm", ref)
        data.write_image(root / "raw" / f"pair{i}.ppm", raw)
    return root


@pytest.fixture(scope="session")
def toy_dataset(tmp_path_factory) -> Path:
    """Four 64x64 pairs whose degradation is an invertible color cast."""
    return build_toy_dataset(tmp_path_factory.mktemp("toy") / "ds")
