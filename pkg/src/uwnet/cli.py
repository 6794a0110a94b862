"""Command line front end: train, enhance, eval, bench.

Exit codes: 0 on success, 1 when a run completed but some items failed
(an undecodable image, a diverged loss), 2 for an invalid invocation
(bad flags, missing paths, malformed input files discovered up front).

Every report embeds the resolved RunConfig and the sha256 of the weight
file involved, and none of them contain timestamps, so a rerun with the
same seed and inputs writes byte-identical artifacts. The one exception
is the measured latency inside bench reports, which is wall time.
"""

import argparse
import dataclasses
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import bench, data, losses, metrics, model, reports, training, weights


class ConfigError(Exception):
    """Invalid invocation; maps to exit code 2."""


class RunFailure(Exception):
    """The run started but could not finish cleanly; maps to exit code 1."""


@dataclass(frozen=True)
class RunConfig:
    command: str
    data: str = None
    weights: str = None
    out: str = None
    enhanced: str = None
    reference: str = None
    epochs: int = 50
    lr: float = 2e-4
    batch: int = 1
    seed: int = 0
    val_n: int = 0
    image_size: int = 256
    extractor: str = "identity"
    baselines: str = None
    warmup_runs: int = 5
    timed_runs: int = 30
    format: str = "json"

    def validate(self):
        if self.batch != 1:
            raise ConfigError(f"only --batch 1 is supported, got {self.batch}")
        if self.epochs < 1:
            raise ConfigError(f"--epochs must be >= 1, got {self.epochs}")
        if self.lr <= 0.0:
            raise ConfigError(f"--lr must be positive, got {self.lr}")
        if self.image_size < 2:
            raise ConfigError(f"--image-size must be >= 2, got {self.image_size}")
        if self.val_n < 0:
            raise ConfigError(f"--val-n must be >= 0, got {self.val_n}")
        if self.warmup_runs < 1 or self.timed_runs < 1:
            raise ConfigError("--warmup-runs and --timed-runs must be >= 1")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uwnet", description="Shallow underwater image enhancement toolkit."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", help="output directory", required=True)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument(
            "--format", choices=("json", "table"), default="json", help="report style"
        )

    p_train = sub.add_parser("train", help="fit the network on a paired dataset")
    common(p_train)
    p_train.add_argument("--data", required=True, help="dataset root (raw/ + ref/)")
    p_train.add_argument("--epochs", type=int, default=50)
    p_train.add_argument("--lr", type=float, default=2e-4)
    p_train.add_argument("--batch", type=int, default=1, help="only 1 is supported")
    p_train.add_argument("--val-n", type=int, default=0, help="held-out pair count")
    p_train.add_argument(
        "--image-size", type=int, default=256, help="square side pairs are resized to"
    )
    p_train.add_argument(
        "--extractor",
        default="identity",
        help="'identity' or a path to a feature-extractor manifest (.txt with a "
        "sibling .suwn weight file)",
    )

    p_enh = sub.add_parser("enhance", help="run inference over a directory of images")
    common(p_enh)
    p_enh.add_argument("--data", required=True, help="image file or directory")
    p_enh.add_argument("--weights", required=True, help="trained .suwn weight file")

    p_eval = sub.add_parser("eval", help="score enhanced images against references")
    common(p_eval)
    p_eval.add_argument("--enhanced", required=True, help="directory of outputs")
    p_eval.add_argument("--reference", required=True, help="directory of ground truth")
    p_eval.add_argument("--weights", help="weight file to fingerprint in the report")

    p_bench = sub.add_parser("bench", help="measure latency and compare to baselines")
    common(p_bench)
    p_bench.add_argument("--weights", help="weight file to benchmark (default: fresh init)")
    p_bench.add_argument("--baselines", help="JSON list of {name, alpha, beta_seconds}")
    p_bench.add_argument("--image-size", type=int, default=256)
    p_bench.add_argument("--warmup-runs", type=int, default=5)
    p_bench.add_argument("--timed-runs", type=int, default=30)
    return parser


def _config_from_args(args) -> RunConfig:
    fields = {f.name for f in dataclasses.fields(RunConfig)}
    values = {k: v for k, v in vars(args).items() if k in fields and v is not None}
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_report(cfg: RunConfig, out: Path, name: str, report: dict, render) -> Path:
    if cfg.format == "json":
        path = out / f"{name}.json"
        path.write_text(reports.json_dumps(report))
    else:
        path = out / f"{name}.txt"
        path.write_text(render(report))
    return path


def _load_extractor(spec: str) -> losses.FeatureExtractor:
    if spec == "identity":
        return losses.FeatureExtractor.identity()
    manifest_path = Path(spec)
    if not manifest_path.is_file():
        raise ConfigError(f"extractor manifest not found: {manifest_path}")
    weights_path = manifest_path.with_suffix(".suwn")
    try:
        return losses.FeatureExtractor.from_files(
            manifest_path, weights_path if weights_path.is_file() else None
        )
    except (losses.ExtractorWeightsError, ValueError) as exc:
        raise ConfigError(f"bad extractor {spec!r}: {exc}") from None


def _load_store(path_str: str) -> tuple:
    try:
        blob = Path(path_str).read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read weight file: {exc}") from None
    try:
        store = model.load_weights(blob)
    except weights.WeightsFormatError as exc:
        raise ConfigError(f"bad weight file {path_str}: {exc}") from None
    return store, weights.content_hash(blob)


def _scan_images(path_str: str) -> dict:
    path = Path(path_str)
    if path.is_file():
        return {path.stem: path}
    if not path.is_dir():
        raise ConfigError(f"no such file or directory: {path}")
    found = data._scan_side(path, [])
    if not found:
        raise ConfigError(f"no images under {path}")
    return found


# ---------------------------------------------------------------------------
# subcommands


def _cmd_train(cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    extractor = _load_extractor(cfg.extractor)
    try:
        manifest = data.scan_dataset(cfg.data)
    except data.DatasetError as exc:
        raise ConfigError(str(exc)) from None
    manifest = dataclasses.replace(
        manifest, resize_target=(cfg.image_size, cfg.image_size)
    )
    if cfg.val_n > 0:
        if cfg.val_n >= len(manifest.ids):
            raise ConfigError(
                f"--val-n {cfg.val_n} leaves no training pairs out of {len(manifest.ids)}"
            )
        split_seed = manifest.split_seed if manifest.split_seed is not None else cfg.seed
        manifest = data.split(
            manifest, len(manifest.ids) - cfg.val_n, cfg.val_n, split_seed
        )
    try:
        result = training.run_training(
            manifest,
            epochs=cfg.epochs,
            lr=cfg.lr,
            seed=cfg.seed,
            extractor=extractor,
            log=lambda line: print(line, file=sys.stderr),
        )
    except losses.NonFiniteLossError as exc:
        raise RunFailure(str(exc)) from None

    blob = model.save_weights(result.state.params)
    weights_path = out / "weights.suwn"
    weights_path.write_bytes(blob)
    (out / "history.csv").write_text(reports.history_csv(result.history))
    final = result.history[-1]
    report = {
        "config": dataclasses.asdict(cfg),
        "weights_sha256": weights.content_hash(blob),
        # the feature extractor sees the same unit-interval tensors the
        # network does, with no normalization applied first
        "extractor_input_domain": "raw [0, 1]",
        "steps": result.state.step,
        "first_step_total": result.first_step.l_total,
        "last_step_total": result.last_step.l_total,
        "final_epoch": dataclasses.asdict(final),
        "history": [dataclasses.asdict(h) for h in result.history],
    }
    path = _write_report(cfg, out, "train_report", report, _render_train)
    print(f"wrote {weights_path} and {path}")
    return 0


def _render_train(report: dict) -> str:
    lines = [
        f"steps: {report['steps']}",
        f"first step loss: {report['first_step_total']:.6f}",
        f"last step loss:  {report['last_step_total']:.6f}",
        "",
        "epoch  train_total  val_total",
    ]
    for h in report["history"]:
        val = "-" if h["val_total"] is None else f"{h['val_total']:.6f}"
        lines.append(f"{h['epoch']:>5}  {h['train_total']:>11.6f}  {val:>9}")
    return "\n".join(lines) + "\n"


def _cmd_enhance(cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    store, sha = _load_store(cfg.weights)
    images = _scan_images(cfg.data)
    outputs, failures = [], []
    for stem in sorted(images):
        src = images[stem]
        try:
            tensor = data.read_image(src)
            enhanced = training.enhance(store, tensor)
            dest = out / src.name
            data.write_image(dest, enhanced)
            outputs.append(dest.name)
        except (data.ImageFormatError, OSError) as exc:
            failures.append({"file": src.name, "error": str(exc)})
    report = {
        "config": dataclasses.asdict(cfg),
        "weights_sha256": sha,
        "outputs": outputs,
        "failures": failures,
    }
    _write_report(cfg, out, "enhance_report", report, _render_enhance)
    for f in failures:
        print(f"failed: {f['file']}: {f['error']}", file=sys.stderr)
    print(f"enhanced {len(outputs)} of {len(images)} images into {out}")
    return 1 if failures else 0


def _render_enhance(report: dict) -> str:
    lines = [f"enhanced {len(report['outputs'])} images"]
    lines += [f"  {name}" for name in report["outputs"]]
    for f in report["failures"]:
        lines.append(f"failed {f['file']}: {f['error']}")
    return "\n".join(lines) + "\n"


def _cmd_eval(cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    sha = None
    if cfg.weights:
        _, sha = _load_store(cfg.weights)
    enhanced = _scan_images(cfg.enhanced)
    reference = _scan_images(cfg.reference)
    shared = sorted(set(enhanced) & set(reference))
    if not shared:
        raise ConfigError("no shared stems between --enhanced and --reference")
    rows, failures = [], []
    for stem in shared:
        try:
            est = metrics.tensor_to_image(data.read_image(enhanced[stem]))
            ref = metrics.tensor_to_image(data.read_image(reference[stem]))
            if est.shape != ref.shape:
                raise RunFailure(f"size mismatch {est.shape} vs {ref.shape}")
            quality = metrics.uiqm(est)
            rows.append(
                {
                    "id": stem,
                    "psnr_db": metrics.psnr(est, ref),
                    "ssim": metrics.ssim(est, ref),
                    **quality,
                }
            )
        except (data.ImageFormatError, RunFailure, OSError) as exc:
            failures.append({"file": stem, "error": str(exc)})
    if not rows:
        raise RunFailure("every pair failed to evaluate")
    report = {
        "config": dataclasses.asdict(cfg),
        "weights_sha256": sha,
        "failures": failures,
        **reports.eval_report(rows),
    }
    path = _write_report(cfg, out, "eval_report", report, reports.render_eval_table)
    if cfg.format == "table":
        print(path.read_text(), end="")
    else:
        print(f"wrote {path}")
    for f in failures:
        print(f"failed: {f['file']}: {f['error']}", file=sys.stderr)
    return 1 if failures else 0


def _cmd_bench(cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    if cfg.weights:
        store, sha = _load_store(cfg.weights)
    else:
        store = model.build_network(model.NetworkConfig(), init_seed=cfg.seed)
        sha = weights.content_hash(model.save_weights(store))
    baselines = bench.DEFAULT_BASELINES
    if cfg.baselines:
        try:
            baselines = bench.parse_baselines_json(Path(cfg.baselines).read_text())
        except (OSError, ValueError) as exc:
            raise ConfigError(f"bad --baselines file: {exc}") from None
    total, rows = model.count_parameters(store)
    image = np.random.default_rng(cfg.seed).random(
        (1, 3, cfg.image_size, cfg.image_size), dtype=np.float32
    )
    latency = bench.measure_latency(
        lambda: model.forward(store, image, mode="infer"),
        warmup_runs=cfg.warmup_runs,
        timed_runs=cfg.timed_runs,
    )
    report = {
        "config": dataclasses.asdict(cfg),
        "weights_sha256": sha,
        **bench.build_report(total, rows, latency, baselines),
    }
    path = _write_report(cfg, out, "bench_report", report, reports.render_bench_table)
    if cfg.format == "table":
        print(path.read_text(), end="")
    else:
        print(f"wrote {path}")
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "enhance": _cmd_enhance,
    "eval": _cmd_eval,
    "bench": _cmd_bench,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _config_from_args(args)
        return _COMMANDS[cfg.command](cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RunFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
