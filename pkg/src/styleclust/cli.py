"""Command-line interface: train, translate, evaluate, cluster-report,
make-synthetic.

The config file is the single source of truth for training; command-line
flags override individual keys. Every command honors ``--seed``; the
``STYLECLUST_OUT_ROOT`` environment variable, when set, prefixes relative
output paths.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from pathlib import Path

import numpy as np
import torch

from . import cluster_metrics, gen_metrics
from .config import RunConfig, TrainConfig, load_config
from .data import (
    ImageDataset,
    SyntheticSpec,
    load_image_folder,
    make_synthetic,
    save_image_folder,
    to_uint8_bgr,
)
from .errors import CheckpointError, ConfigError, DatasetError
from .training import (
    TrainState,
    encode_dataset,
    load_checkpoint,
    run_training,
    to_torch,
    translate_images,
)

OUT_ROOT_ENV = "STYLECLUST_OUT_ROOT"


def _out_path(raw: str) -> Path:
    path = Path(raw)
    root = os.environ.get(OUT_ROOT_ENV)
    if root and not path.is_absolute():
        return Path(root) / path
    return path


def _load_dataset(path: str, resolution: int) -> ImageDataset:
    return load_image_folder(path, resolution)


def _apply_overrides(config: TrainConfig, args: argparse.Namespace) -> TrainConfig:
    updates = {}
    for flag, key in [
        ("mode", "mode"),
        ("gamma_label", "gamma_label"),
        ("seed", "seed"),
        ("k_hat", "k_hat"),
        ("guiding_iters", "guiding_iters"),
        ("joint_iters", "joint_iters"),
        ("batch_size", "batch_size"),
    ]:
        value = getattr(args, flag, None)
        if value is not None:
            updates[key] = value
    if not updates:
        return config
    return dataclasses.replace(config, **updates)


def cmd_train(args: argparse.Namespace) -> int:
    run_cfg: RunConfig = load_config(args.config)
    config = _apply_overrides(run_cfg.train, args)
    if args.data is not None:
        dataset = _load_dataset(args.data, config.resolution)
    elif run_cfg.synthetic is not None:
        dataset = make_synthetic(run_cfg.synthetic)
    else:
        raise ConfigError("no dataset: pass --data or add a [synthetic] section")
    out_dir = _out_path(args.out)
    state, _ = run_training(config, dataset, out_dir=out_dir)
    print(f"trained {state.iteration} iterations; outputs in {out_dir}")
    return 0


def _load_eval_state(path: str) -> TrainState:
    state = load_checkpoint(path)
    state.ema_guiding.eval()
    state.ema_generator.eval()
    return state


def _resolve_reference_styles(
    state: TrainState, ref_spec: str, n_sources: int, data: ImageDataset | None
) -> tuple[np.ndarray, str]:
    """Style codes (one per source) plus a name for output files."""
    if ref_spec.startswith("cluster:"):
        if data is None:
            raise ConfigError("cluster:<id> reference mode requires --data")
        cluster_id = int(ref_spec.split(":", 1)[1])
        pred, styles = encode_dataset(state.ema_guiding, data)
        if cluster_id < 0 or cluster_id >= state.config.k_hat:
            raise ConfigError(
                f"unknown cluster id {cluster_id} (k_hat={state.config.k_hat})"
            )
        if not np.any(pred == cluster_id):
            raise ConfigError(f"cluster {cluster_id} has no members in --data")
        averages = cluster_metrics.average_style(
            styles[pred == cluster_id], np.zeros((pred == cluster_id).sum(), int), 1
        )
        style = averages[0]
        return np.tile(style, (n_sources, 1)).astype(np.float32), f"cluster{cluster_id}"
    ref_path = Path(ref_spec)
    if not ref_path.is_file():
        raise DatasetError(f"reference image {ref_path} does not exist")
    import cv2

    raw = cv2.imread(str(ref_path), cv2.IMREAD_COLOR)
    if raw is None:
        raise DatasetError(f"cannot decode reference image {ref_path}")
    res = state.config.resolution
    rgb = cv2.resize(
        cv2.cvtColor(raw, cv2.COLOR_BGR2RGB), (res, res),
        interpolation=cv2.INTER_AREA,
    )
    image = rgb.astype(np.float32) / 127.5 - 1.0
    with torch.no_grad():
        _, style = state.ema_guiding.encode(to_torch(image[None]))
    style_np = style.numpy()
    return (
        np.tile(style_np, (n_sources, 1)).astype(np.float32),
        ref_path.stem,
    )


def cmd_translate(args: argparse.Namespace) -> int:
    state = _load_eval_state(args.checkpoint)
    res = state.config.resolution
    sources = _load_dataset(args.source, res)
    data = _load_dataset(args.data, res) if args.data else None
    styles, ref_name = _resolve_reference_styles(
        state, args.ref, len(sources), data
    )
    out_dir = _out_path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = translate_images(state.ema_generator, sources.images, styles)
    import cv2

    source_names = [f"{i:05d}" for i in range(len(sources))]
    for name, image in zip(source_names, outputs):
        cv2.imwrite(str(out_dir / f"{name}__{ref_name}.png"), to_uint8_bgr(image))
    print(f"wrote {len(outputs)} translations to {out_dir}")
    return 0


def _evaluate_checkpoint(
    state: TrainState, dataset: ImageDataset, args: argparse.Namespace
) -> dict[str, float | None]:
    """All metrics available for the dataset (labeled ones skipped if needed)."""
    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    embedder = gen_metrics.make_stub_embedder(seed=0)
    pred, styles = encode_dataset(state.ema_guiding, dataset)
    metrics: dict[str, float | None] = {}

    metrics["ioi"] = cluster_metrics.ioi(styles, pred) if len(np.unique(pred)) > 1 else None

    if dataset.labels is not None:
        metrics["cluster_accuracy"] = cluster_metrics.cluster_accuracy(
            pred, dataset.labels
        )
        real_sets, fake_sets = {}, {}
        for cls in np.unique(dataset.labels):
            pairs = gen_metrics.protocol_sample(
                dataset.labels, int(cls), n_refs=args.n_refs, rng=rng
            )
            src_idx = np.array([p[0] for p in pairs])
            ref_idx = np.array([p[1] for p in pairs])
            fakes = translate_images(
                state.ema_generator,
                dataset.images[src_idx],
                styles[ref_idx].astype(np.float32),
            )
            real_sets[int(cls)] = dataset.images[dataset.labels == cls]
            fake_sets[int(cls)] = fakes
        mfid_value, per_class = gen_metrics.mfid(real_sets, fake_sets, embedder)
        metrics["mfid"] = mfid_value
        for cls, value in per_class.items():
            metrics[f"fid_class_{cls}"] = value
    else:
        print("dataset has no labels: skipping cluster accuracy and mFID")

    n_fakes = len(dataset)
    src = rng.integers(0, len(dataset), size=n_fakes)
    ref = rng.integers(0, len(dataset), size=n_fakes)
    fakes = translate_images(
        state.ema_generator, dataset.images[src], styles[ref].astype(np.float32)
    )
    real_feats = embedder(dataset.images)
    fake_feats = embedder(fakes)
    density, coverage = gen_metrics.density_coverage(
        real_feats, fake_feats, k=args.dc_k
    )
    metrics["density"] = density
    metrics["coverage"] = coverage
    return metrics


def cmd_evaluate(args: argparse.Namespace) -> int:
    checkpoints = list(args.checkpoint)
    out_dir = _out_path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    all_metrics: list[dict[str, float | None]] = []
    for ckpt in checkpoints:
        state = _load_eval_state(ckpt)
        dataset = _load_dataset(args.data, state.config.resolution)
        metrics = _evaluate_checkpoint(state, dataset, args)
        all_metrics.append(metrics)

    report = dict(all_metrics[-1])
    if args.report == "best5":
        mfids = [m["mfid"] for m in all_metrics if m.get("mfid") is not None]
        if not mfids:
            raise ConfigError("best5 report requires labeled data (mFID)")
        report["mfid_best5"] = gen_metrics.best_k_mean(mfids, k=5)
    gen_metrics.write_metric_report(
        report, out_dir / "metrics.txt", out_dir / "metrics.kv"
    )
    for key, value in report.items():
        shown = "n/a" if value is None else f"{value:.6f}"
        print(f"{key}: {shown}")
    return 0


def cmd_cluster_report(args: argparse.Namespace) -> int:
    state = _load_eval_state(args.checkpoint)
    dataset = _load_dataset(args.data, state.config.resolution)
    out_dir = _out_path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    pred, styles = encode_dataset(state.ema_guiding, dataset)
    cluster_metrics.export_embeddings(
        styles, pred, out_dir / "embeddings.tsv", true_labels=dataset.labels
    )

    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    res = dataset.resolution
    per_row = args.samples_per_cluster
    grid = np.full(
        (state.config.k_hat * res, per_row * res, 3), 1.0, dtype=np.float32
    )
    for cid in range(state.config.k_hat):
        members = np.flatnonzero(pred == cid)
        if len(members) == 0:
            continue
        chosen = rng.choice(members, size=min(per_row, len(members)), replace=False)
        for col, idx in enumerate(chosen):
            grid[cid * res : (cid + 1) * res, col * res : (col + 1) * res] = (
                dataset.images[idx]
            )
    import cv2

    cv2.imwrite(str(out_dir / "clusters.png"), to_uint8_bgr(grid))
    print(f"wrote embeddings.tsv ({len(pred)} rows) and clusters.png to {out_dir}")
    return 0


def cmd_make_synthetic(args: argparse.Namespace) -> int:
    spec = SyntheticSpec(
        k_domains=args.k,
        n_samples=args.n,
        resolution=args.resolution,
        seed=args.seed if args.seed is not None else 0,
    )
    dataset = make_synthetic(spec)
    out_dir = _out_path(args.out)
    save_image_folder(dataset, out_dir)
    print(f"wrote {len(dataset)} images ({spec.k_domains} domains) to {out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="styleclust",
        description="Unsupervised image-to-image translation via style clusters.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="run the two-phase training schedule")
    train.add_argument("--config", required=True, help="TOML config file")
    train.add_argument("--data", help="image folder (omit to use [synthetic])")
    train.add_argument("--out", default="runs/train", help="output directory")
    train.add_argument("--mode", choices=["joint", "sequential"])
    train.add_argument("--gamma-label", dest="gamma_label", type=float)
    train.add_argument("--seed", type=int)
    train.add_argument("--k-hat", dest="k_hat", type=int)
    train.add_argument("--guiding-iters", dest="guiding_iters", type=int)
    train.add_argument("--joint-iters", dest="joint_iters", type=int)
    train.add_argument("--batch-size", dest="batch_size", type=int)
    train.set_defaults(fn=cmd_train)

    translate = sub.add_parser("translate", help="reference-guided translation")
    translate.add_argument("--checkpoint", required=True)
    translate.add_argument("--source", required=True, help="source image folder")
    translate.add_argument(
        "--ref", required=True,
        help="reference image path, or cluster:<id> for average-style mode",
    )
    translate.add_argument(
        "--data", help="dataset folder for cluster:<id> average styles"
    )
    translate.add_argument("--out", default="runs/translate")
    translate.add_argument("--seed", type=int)
    translate.set_defaults(fn=cmd_translate)

    evaluate = sub.add_parser("evaluate", help="metric report for checkpoints")
    evaluate.add_argument(
        "--checkpoint", required=True, action="append",
        help="checkpoint path (repeat for best5 reports)",
    )
    evaluate.add_argument("--data", required=True)
    evaluate.add_argument("--out", default="runs/evaluate")
    evaluate.add_argument("--dc-k", dest="dc_k", type=int, default=5)
    evaluate.add_argument("--n-refs", dest="n_refs", type=int, default=5)
    evaluate.add_argument("--report", choices=["last", "best5"], default="last")
    evaluate.add_argument("--seed", type=int)
    evaluate.set_defaults(fn=cmd_evaluate)

    report = sub.add_parser(
        "cluster-report", help="embedding TSV plus per-cluster sample montage"
    )
    report.add_argument("--checkpoint", required=True)
    report.add_argument("--data", required=True)
    report.add_argument("--out", default="runs/cluster_report")
    report.add_argument(
        "--samples-per-cluster", dest="samples_per_cluster", type=int, default=8
    )
    report.add_argument("--seed", type=int)
    report.set_defaults(fn=cmd_cluster_report)

    synth = sub.add_parser("make-synthetic", help="generate the synthetic dataset")
    synth.add_argument("--k", type=int, required=True, help="number of domains")
    synth.add_argument("--n", type=int, required=True, help="total sample count")
    synth.add_argument("--resolution", type=int, default=64)
    synth.add_argument("--out", required=True)
    synth.add_argument("--seed", type=int)
    synth.set_defaults(fn=cmd_make_synthetic)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, DatasetError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
