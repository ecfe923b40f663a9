"""Command-line harness: data generation, pretraining, fine-tuning, evaluation and analyses."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .affinity import cosine_curve, record_series, segment_stages, write_analysis
from .config import ConfigError, RunConfig, add_config_arguments, config_from_args
from .encoder import STEncoder, masked_mae, mean_oracle_mae
from .engine import CheckpointError, load_checkpoint
from .model import future_edge_mask
from .pose.data import DatasetError, SchemaError, TaskSchema, load_dataset, save_dataset, stack_frames, stack_labels
from .pose.synthetic import generate_benchmark, generate_scenario, transition_script
from .pipeline import (
    Benchmark,
    default_tokens,
    load_autoencoder,
    load_model,
    make_benchmark,
    prepare,
    pretrain_encoder,
    run_scalability,
    save_autoencoder,
    save_model,
    train_variant,
)
from .tokens import load_default_fixture, save_similarity_csv, similarity_matrix
from .training import evaluate, prepare_inputs

log = logging.getLogger(__name__)


# -- shared plumbing --------------------------------------------------------------------------


def load_benchmark(cfg: RunConfig) -> Benchmark:
    if cfg.data:
        ds = load_dataset(cfg.data)
        if ds.schema.profile != cfg.profile:
            raise SchemaError(f"{cfg.data}: dataset profile {ds.schema.profile!r} does not match config profile {cfg.profile!r}")
        if ds.samples and ds.window != cfg.window:
            raise SchemaError(f"{cfg.data}: dataset window {ds.window} does not match config window {cfg.window}")
        return make_benchmark(seed=cfg.data_seed, profile=cfg.profile, augment=cfg.augment, samples=ds.samples)
    return make_benchmark(cfg.scenarios, cfg.data_seed, cfg.profile, cfg.augment, **cfg.generator_options())


def _check_schema(meta: dict, cfg: RunConfig, source) -> None:
    for key, want in (("profile", cfg.profile), ("window", cfg.window)):
        have = meta.get(key)
        if have is not None and have != want:
            raise SchemaError(f"{source}: checkpoint {key} {have!r} does not match config {key} {want!r}")


def load_encoder(cfg: RunConfig) -> STEncoder:
    if cfg.from_scratch:
        return STEncoder(cfg.encoder_config(), seed=cfg.seed)
    if not cfg.checkpoint:
        raise ConfigError("a pretrained encoder checkpoint is required (set checkpoint, or use --from-scratch)")
    ck = load_checkpoint(cfg.checkpoint)
    _check_schema(ck.metadata, cfg, cfg.checkpoint)
    if ck.metadata.get("kind") == "autoencoder":
        return load_autoencoder(cfg.checkpoint)[0].encoder
    return load_model(cfg.checkpoint)[0].encoder


def write_report(out_dir, name: str, report: dict, cfg: RunConfig, seed: int | None = None) -> Path:
    """``<name>.json`` with config hash and seed; per-task ``<name>.csv``; confusion matrices as CSV."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    full = {"config_hash": cfg.hash(), "seed": cfg.seed if seed is None else seed, **report}
    (out / f"{name}.json").write_text(json.dumps(full, indent=1, sort_keys=True))
    tasks = report.get("tasks")
    if isinstance(tasks, dict) and tasks and "macro_f1" in next(iter(tasks.values())):
        with open(out / f"{name}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["task", "macro_f1", "accuracy"])
            for t, r in tasks.items():
                w.writerow([t, repr(r["macro_f1"]), repr(r["accuracy"])])
            w.writerow(["average", repr(report["avg_f1"]), ""])
        for t, r in tasks.items():
            np.savetxt(out / f"{name}_confusion_{t}.csv", np.asarray(r["confusion"]), fmt="%d", delimiter=",")
    return out / f"{name}.json"


# -- verbs ------------------------------------------------------------------------------------


def cmd_gen_data(cfg: RunConfig) -> dict:
    samples = generate_benchmark(cfg.scenarios, cfg.data_seed, cfg.profile, **cfg.generator_options())
    path = Path(cfg.data or Path(cfg.out) / "dataset.jsonl")
    save_dataset(path, samples, TaskSchema.for_profile(cfg.profile), cfg.window)
    info = {"path": str(path), "windows": len(samples), "scenarios": len({s.scenario for s in samples})}
    print(json.dumps(info))
    return info


def cmd_pretrain(cfg: RunConfig) -> dict:
    bench = load_benchmark(cfg)
    res = pretrain_encoder(
        bench, cfg.encoder_config(), cfg.seed, epochs=cfg.pretrain_epochs, loss=cfg.pretrain_loss,
        batch_size=cfg.batch_size, lr=cfg.pretrain_lr, warmup=cfg.pretrain_warmup,
    )  # fmt: skip
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = save_autoencoder(out / "pretrain.ckpt", res.model, res.curve, {"profile": cfg.profile, "window": cfg.window, "config_hash": cfg.hash()})
    with open(out / "pretrain_curve.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["epoch", "train_loss", "val_loss"])
        w.writeheader()
        for row in res.curve:
            w.writerow({k: row.get(k) for k in w.fieldnames})
    test = [s for s in bench.test if s.clean is not None]
    report: dict = {"checkpoint": str(ckpt), "curve": res.curve}
    if test:
        frames = stack_frames(test)
        clean = np.stack([s.clean for s in test])
        train_xy = stack_frames(bench.train)[..., :2]
        report["masked_mae"] = masked_mae(res.model, frames, clean, cfg.mask_ratio, cfg.seed)
        report["oracle_mae"] = mean_oracle_mae(train_xy, frames, clean, cfg.mask_ratio, cfg.seed)
    write_report(out, "pretrain_report", report, cfg)
    print(json.dumps({k: v for k, v in report.items() if k != "curve"}))
    return report


def cmd_train(cfg: RunConfig) -> dict:
    bench = load_benchmark(cfg)
    encoder = load_encoder(cfg)
    prep = prepare(encoder, bench, cfg.mode)
    tokens = default_tokens(bench.schema.names, cfg.token_init, cfg.seed)
    opts = cfg.graph_options() if cfg.variant != "parallel" else {}
    model, fit_result, report = train_variant(cfg.variant, encoder, prep, cfg.train_config(), tokens, bench.schema.names, opts)
    out = Path(cfg.out)
    ckpt = save_model(out / "model.ckpt", model, {"profile": cfg.profile, "window": cfg.window, "variant": cfg.variant, "mode": cfg.mode, "config_hash": cfg.hash()})
    report = {**report, "variant": cfg.variant, "epochs": fit_result.history, "best_epoch": fit_result.best_epoch, "checkpoint": str(ckpt)}
    write_report(out, "train_report", report, cfg)
    print(json.dumps({"avg_f1": report["avg_f1"], "best_epoch": fit_result.best_epoch, "checkpoint": str(ckpt)}))
    return report


def cmd_eval(cfg: RunConfig, split: str = "test") -> dict:
    if not cfg.checkpoint:
        raise ConfigError("eval needs a model checkpoint")
    model, meta = load_model(cfg.checkpoint)
    _check_schema(meta, cfg, cfg.checkpoint)
    bench = load_benchmark(cfg)
    samples = {"train": bench.train, "val": bench.val, "test": bench.test, "all": bench.train + bench.val + bench.test}[split]
    missing = [t for t in model.tasks if t not in bench.schema.names]
    if missing:
        raise SchemaError(f"dataset has no labels for tasks {missing}")
    for t in model.tasks:
        if meta["num_classes"][t] != bench.num_classes[t]:
            raise SchemaError(f"task {t!r}: checkpoint has {meta['num_classes'][t]} classes, dataset has {bench.num_classes[t]}")
    mode = meta.get("mode", "full")
    x = prepare_inputs(model.encoder, stack_frames(samples), mode)
    report = evaluate(model, x, stack_labels(samples, model.tasks), mode, bench.num_classes, model.tasks)
    report["split"] = split
    write_report(cfg.out, f"eval_{split}", report, cfg)
    print(json.dumps({"avg_f1": report["avg_f1"], "split": split}))
    return report


def cmd_scalability(cfg: RunConfig) -> dict:
    bench = load_benchmark(cfg)
    encoder = load_encoder(cfg)
    prep = prepare(encoder, bench, cfg.mode)
    setting = cfg.scalability_setting()
    report = run_scalability(setting, encoder, prep, cfg.train_config(), default_tokens(bench.schema.names, cfg.token_init, cfg.seed))
    out = Path(cfg.out)
    write_report(out, f"scalability_{setting.name}", report, cfg)
    for label in ("socialldg_ft", "independent_ft"):
        write_report(out, f"scalability_{setting.name}_{label}", report[label]["after"], cfg)
    print(json.dumps({k: {m: report[k][m] for m in ("avg_f1", "initial_before", "initial_after", "additional_after")} for k in ("socialldg_ft", "independent_ft")}))
    return report


def cmd_affinity(cfg: RunConfig, scenario: str | None = None, change_window: int = 5, total_windows: int = 10) -> dict:
    if not cfg.checkpoint:
        raise ConfigError("affinity needs a model checkpoint")
    model, meta = load_model(cfg.checkpoint)
    if meta["kind"] != "socialldg":
        raise ConfigError("affinity needs a task-graph model, not independent heads")
    if scenario:
        if not cfg.data:
            raise ConfigError("--scenario selects a scenario from the dataset given by --data")
        windows = sorted((s for s in load_dataset(cfg.data).samples if s.scenario == scenario), key=lambda s: s.window)
        if len(windows) < 2:
            raise DatasetError(f"scenario {scenario!r} has fewer than two windows in {cfg.data}")
    else:
        rng = np.random.default_rng(cfg.seed)
        script = transition_script(rng, f"transition-{cfg.seed}", change_window, cfg.window, total_windows, cfg.profile)
        windows = generate_scenario(script, int(rng.integers(2**31)), cfg.window).windows()
    series = record_series(model, stack_frames(windows), "full", [s.window for s in windows])
    mask = future_edge_mask(model.tasks, model.head.cfg.mask_future_edges)
    curve = cosine_curve(series, mask)
    seg = segment_stages(curve)
    out = write_analysis(cfg.out, series, curve, seg, mask)
    info = {"out": str(out), "boundary_windows": [series.windows[b + 1] for b in seg.boundaries]}
    print(json.dumps(info))
    return info


def cmd_token_sim(cfg: RunConfig) -> dict:
    if cfg.checkpoint:
        model, _ = load_model(cfg.checkpoint)
        tokens = {t: model.head.tokens[t].data for t in model.tasks}
    else:
        tokens = {t: load_default_fixture().token(t) for t in TaskSchema.for_profile(cfg.profile).names}
    names = list(tokens)
    S = similarity_matrix([tokens[t] for t in names])
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    save_similarity_csv(out / "token_similarity.csv", names, S)
    report = {"tasks": names, "similarity": S.tolist()}
    (out / "token_similarity.json").write_text(json.dumps({"config_hash": cfg.hash(), "seed": cfg.seed, **report}, indent=1))
    print(json.dumps(report))
    return report


# -- entry point ------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="socialldg", description=__doc__)
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb, text in (
        ("gen-data", "generate a synthetic benchmark and write it as JSON lines"),
        ("pretrain", "masked-autoencoder pretraining of the encoder"),
        ("train", "fine-tune a classifier and report test metrics"),
        ("eval", "evaluate a classifier checkpoint"),
        ("scalability", "add tasks to a trained model and fine-tune briefly"),
        ("affinity", "affinity dynamics over one scenario"),
        ("token-sim", "cosine similarity between task tokens"),
    ):
        p = sub.add_parser(verb, help=text)
        add_config_arguments(p)
        if verb == "eval":
            p.add_argument("--split", choices=("train", "val", "test", "all"), default="test")
        if verb == "affinity":
            p.add_argument("--scenario", help="scenario name inside --data; default: a generated transition scenario")
            p.add_argument("--change-window", type=int, default=5)
            p.add_argument("--total-windows", type=int, default=10)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        logging.basicConfig(level=getattr(logging, cfg.log_level.upper(), logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
        if args.verb == "gen-data":
            cmd_gen_data(cfg)
        elif args.verb == "pretrain":
            cmd_pretrain(cfg)
        elif args.verb == "train":
            cmd_train(cfg)
        elif args.verb == "eval":
            cmd_eval(cfg, args.split)
        elif args.verb == "scalability":
            cmd_scalability(cfg)
        elif args.verb == "affinity":
            cmd_affinity(cfg, args.scenario, args.change_window, args.total_windows)
        else:
            cmd_token_sim(cfg)
    except (ConfigError, DatasetError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
