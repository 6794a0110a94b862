"""Epoch loop over a paired dataset.

Order of examples is reshuffled every epoch from a seed derived as
SeedSequence([run_seed, epoch]), so a (seed, config) pair fixes the whole
trajectory; dropout draws are tied to the global step counter inside
model.train_step. Pairs are re-read from disk each step rather than cached,
which keeps memory flat for datasets that do not fit in RAM.
"""

from dataclasses import dataclass

import numpy as np

from . import data, losses, model


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_mse: float
    train_vgg: float
    train_total: float
    val_total: float  # nan when the split has no validation ids


@dataclass
class TrainingResult:
    state: model.TrainState
    history: list  # EpochStats per epoch
    first_step: losses.LossReport
    last_step: losses.LossReport


def _epoch_order(ids, run_seed: int, epoch: int):
    rng = np.random.default_rng(np.random.SeedSequence([run_seed, epoch]))
    return [ids[i] for i in rng.permutation(len(ids))]


def validation_loss(store, manifest, extractor, ids=None) -> float:
    ids = manifest.split_ids("val") if ids is None else ids
    if not ids:
        return float("nan")
    totals = []
    for pid in ids:
        pair = data.load_pair(manifest, pid)
        est = model.forward(store, pair.raw, mode="infer")
        totals.append(losses.total_loss(est, pair.reference, extractor).l_total)
    return float(np.mean(totals))


def run_training(
    manifest: data.DatasetManifest,
    epochs: int,
    lr: float,
    seed: int,
    extractor: losses.FeatureExtractor,
    network_config: model.NetworkConfig = None,
    max_steps: int = None,
    log=None,
) -> TrainingResult:
    """Train from a fresh seeded init; returns final state plus loss history.

    `max_steps` caps the total number of optimizer steps across all epochs,
    which small-dataset convergence checks use to stop mid-epoch.
    """
    if epochs < 1:
        raise ValueError(f"epochs must be >= 1, got {epochs}")
    if lr <= 0.0:
        raise ValueError(f"lr must be positive, got {lr}")
    train_ids = manifest.split_ids("train")
    if not train_ids:
        # No split assigned: treat every pair as training data.
        if manifest.assignments:
            raise data.DatasetError("split has no training ids")
        train_ids = manifest.ids
    loss_fn = losses.make_total_loss(extractor)
    state = model.init_train_state(network_config or model.NetworkConfig(), seed=seed, lr=lr)
    history = []
    first = last = None
    for epoch in range(epochs):
        reports = []
        for pid in _epoch_order(train_ids, seed, epoch):
            pair = data.load_pair(manifest, pid)
            state, report = model.train_step(state, (pair.raw, pair.reference), loss_fn)
            reports.append(report)
            if first is None:
                first = report
            if max_steps is not None and state.step >= max_steps:
                break
        last = reports[-1]
        stats = EpochStats(
            epoch=epoch,
            train_mse=float(np.mean([r.l_mse for r in reports])),
            train_vgg=float(np.mean([r.l_vgg for r in reports])),
            train_total=float(np.mean([r.l_total for r in reports])),
            val_total=validation_loss(state.params, manifest, extractor),
        )
        history.append(stats)
        if log is not None:
            log(
                f"epoch {epoch}: train {stats.train_total:.6f} "
                f"(mse {stats.train_mse:.6f}, vgg {stats.train_vgg:.6f}) "
                f"val {stats.val_total:.6f}"
            )
        if max_steps is not None and state.step >= max_steps:
            break
    return TrainingResult(state=state, history=history, first_step=first, last_step=last)


def enhance(store: model.ParameterStore, image: np.ndarray) -> np.ndarray:
    """Inference pass clamped back to the [0, 1] image domain."""
    return np.clip(model.forward(store, image, mode="infer"), 0.0, 1.0)
