"""End-to-end experiment pipelines shared by the CLI and the acceptance suite."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .affinity import cosine_curve, segment_stages
from .encoder import EncoderConfig, MaskedAutoencoder, PretrainResult, STEncoder, pretrain
from .engine import CheckpointError, load_checkpoint, save_checkpoint
from .metrics import majority_baseline_f1, subset_average
from .model import GraphConfig, ParallelHeads, SocialModel, TaskGraphHead, future_edge_mask
from .pose.data import TASKS, TaskSchema, WindowSample, augment_all, split_by_scenario, stack_frames, stack_labels
from .pose.synthetic import generate_benchmark, generate_scenario, transition_script
from .tokens import EmbeddingFixture, load_default_fixture, random_fixture
from .training import TrainConfig, build_model, evaluate, fit, predict, prepare_inputs

log = logging.getLogger(__name__)

VARIANTS = {
    "socialldg": ("socialldg", {}),
    "parallel": ("parallel", {}),
    "no_edge_bias": ("socialldg", {"edge_bias": False}),
    "no_prompt_injection": ("socialldg", {"prompt_injection": False}),
}

SETTINGS = {
    "A": ("con_fut", "act_fut"),
    "B": ("intent", "attitude"),
    "C": ("act_cur", "act_fut"),
}


@dataclass
class ScalabilitySetting:
    name: str
    additional: tuple[str, ...]
    shared_lr_scale: float = 0.01
    initial_loss_weight: float = 0.5
    finetune_epochs: int = 1
    tasks: tuple[str, ...] = TASKS

    def __post_init__(self):
        extra = set(self.additional)
        if not extra <= set(self.tasks) or len(extra) != len(self.additional):
            raise ValueError(f"setting {self.name}: additional tasks {self.additional} must be distinct members of {self.tasks}")

    @property
    def initial(self) -> tuple[str, ...]:
        return tuple(t for t in self.tasks if t not in self.additional)

    @classmethod
    def named(cls, name: str, **kw) -> "ScalabilitySetting":
        if name not in SETTINGS:
            raise ValueError(f"unknown scalability setting {name!r}; expected A, B or C")
        return cls(name, SETTINGS[name], **kw)


# -- data -------------------------------------------------------------------------------------


@dataclass
class Benchmark:
    schema: TaskSchema
    train: list[WindowSample]
    val: list[WindowSample]
    test: list[WindowSample]
    train_aug: list[WindowSample] = field(default_factory=list)

    @property
    def num_classes(self) -> dict[str, int]:
        return self.schema.num_classes


def make_benchmark(
    n_scenarios: int = 200,
    seed: int = 0,
    profile: str = "jpl",
    augment: int = 20,
    samples: Sequence[WindowSample] | None = None,
    **gen,
) -> Benchmark:
    """Generate (or take) windows, split 6:2:2 by scenario, augment the training part."""
    schema = TaskSchema.for_profile(profile)
    if samples is None:
        samples = generate_benchmark(n_scenarios, seed, profile, **gen)
    train, val, test = split_by_scenario(samples, (6, 2, 2), seed)
    train_aug = augment_all(train, augment, seed + 1) if augment > 0 else list(train)
    return Benchmark(schema, train, val, test, train_aug)


@dataclass
class Prepared:
    """Model inputs for one fine-tuning mode, with labels."""

    mode: str
    x_train: np.ndarray
    y_train: dict[str, np.ndarray]
    x_val: np.ndarray
    y_val: dict[str, np.ndarray]
    x_test: np.ndarray
    y_test: dict[str, np.ndarray]
    num_classes: dict[str, int]


def prepare(encoder: STEncoder, bench: Benchmark, mode: str = "temporal") -> Prepared:
    tasks = bench.schema.names

    def part(samples):
        return prepare_inputs(encoder, stack_frames(samples), mode), stack_labels(samples, tasks)

    xt, yt = part(bench.train_aug)
    xv, yv = part(bench.val)
    xs, ys = part(bench.test)
    return Prepared(mode, xt, yt, xv, yv, xs, ys, bench.num_classes)


# -- pretraining --------------------------------------------------------------------------------


def pretrain_encoder(
    bench: Benchmark,
    cfg: EncoderConfig | None = None,
    seed: int = 0,
    epochs: int = 15,
    loss: str = "weighted_mse",
    use_augmented: bool = False,
    **kw,
) -> PretrainResult:
    cfg = cfg or EncoderConfig()
    train = stack_frames(bench.train_aug if use_augmented else bench.train)
    val = stack_frames(bench.val) if bench.val else None
    return pretrain(train, cfg, seed, val=val, epochs=epochs, loss=loss, **kw)


# -- classifier runs --------------------------------------------------------------------------


def default_tokens(tasks: Sequence[str], init: str = "lexical", seed: int = 0, dim: int = 64) -> dict[str, np.ndarray]:
    """Initial task tokens: ``lexical`` uses the shipped fixture, ``random`` seeded pseudo-embeddings."""
    if init == "lexical":
        fx = load_default_fixture()
    elif init == "random":
        fx = random_fixture(tasks, dim, seed)
    else:
        fx = EmbeddingFixture.load(init)
    return {t: fx.token(t) for t in tasks}


def train_variant(
    variant: str,
    encoder: STEncoder,
    prep: Prepared,
    train_cfg: TrainConfig,
    tokens: Mapping[str, np.ndarray] | None = None,
    tasks: Sequence[str] = TASKS,
    graph_options: Mapping | None = None,
):
    kind, flags = VARIANTS[variant]
    opts = {**flags, **(graph_options or {})}
    model = build_model(kind, encoder, tasks, prep.num_classes, tokens or default_tokens(tasks), train_cfg.seed, **opts)
    result = fit(model, prep.x_train, prep.y_train, prep.x_val, prep.y_val, train_cfg, prep.num_classes, tasks)
    report = evaluate(model, prep.x_test, prep.y_test, prep.mode, prep.num_classes, tasks)
    return model, result, report


def compare_variants(
    encoder: STEncoder,
    prep: Prepared,
    train_cfg: TrainConfig,
    seeds: Sequence[int],
    variants: Sequence[str] = tuple(VARIANTS),
    tokens=None,
) -> dict[str, list[float]]:
    """Test avg macro F1 for each variant and seed."""
    scores: dict[str, list[float]] = {v: [] for v in variants}
    for seed in seeds:
        cfg = replace(train_cfg, seed=seed)
        for v in variants:
            _, _, report = train_variant(v, encoder, prep, cfg, tokens)
            scores[v].append(report["avg_f1"])
            log.info("seed %d %s: avg F1 %.4f", seed, v, report["avg_f1"])
    return scores


def _finetune_lr_scale(name: str, new_tasks: Sequence[str], shared_scale: float) -> float:
    """New tasks' tokens and classifiers train fully, old ones stay fixed, the rest is shared."""
    if name.startswith(("head.tokens.", "head.classifiers.")):
        return 1.0 if name.split(".")[2] in new_tasks else 0.0
    return shared_scale


def run_scalability(
    setting: ScalabilitySetting,
    encoder: STEncoder,
    prep: Prepared,
    train_cfg: TrainConfig,
    tokens: Mapping[str, np.ndarray] | None = None,
    kinds: Sequence[str] = ("socialldg", "parallel"),
) -> dict:
    """Train on the initial tasks, then add the remaining tasks and fine-tune briefly.

    Only the new tasks' tokens and classifiers train at the full rate; the
    initial tasks' own tokens and classifiers are held fixed, and shared
    parameters (everything else) run at ``shared_lr_scale`` of the rate.
    Initial-task loss terms are scaled by ``initial_loss_weight``.  ``parallel`` is the independent fine-tuning
    baseline: new heads on ``Z`` with no task graph.
    """
    tokens = dict(tokens or default_tokens(setting.tasks))
    init, extra = list(setting.initial), list(setting.additional)
    out: dict = {"setting": setting.name, "initial": init, "additional": extra}
    ft_cfg = replace(train_cfg, epochs=setting.finetune_epochs)
    for kind in kinds:
        model = build_model(kind, encoder, init, prep.num_classes, {t: tokens[t] for t in init}, train_cfg.seed)
        fit(model, prep.x_train, prep.y_train, prep.x_val, prep.y_val, train_cfg, prep.num_classes, init)
        before = evaluate(model, prep.x_test, prep.y_test, prep.mode, prep.num_classes, init)
        for k, t in enumerate(extra):
            model.head.add_task(t, prep.num_classes[t], tokens[t], seed=train_cfg.seed + 101 + k)
        scale = {t: setting.initial_loss_weight for t in init}
        fit(
            model, prep.x_train, prep.y_train, prep.x_val, prep.y_val, ft_cfg, prep.num_classes, model.tasks,
            loss_scale=scale,
            lr_scale_fn=lambda n: _finetune_lr_scale(n, extra, setting.shared_lr_scale),
            use_schedule=False,
            restore_best=False,
        )  # fmt: skip
        after = evaluate(model, prep.x_test, prep.y_test, prep.mode, prep.num_classes, list(setting.tasks))
        label = "socialldg_ft" if kind == "socialldg" else "independent_ft"
        out[label] = {
            "before": before,
            "after": after,
            "avg_f1": after["avg_f1"],
            "initial_before": before["avg_f1"],
            "initial_after": subset_average(after, init),
            "additional_after": subset_average(after, extra),
        }
        out[label]["retention_drop"] = out[label]["initial_before"] - out[label]["initial_after"]
    out["majority_additional"] = float(
        np.mean([majority_baseline_f1(prep.y_train[t], prep.y_test[t], prep.num_classes[t]) for t in extra])
    )
    return out


# -- affinity and token trials ----------------------------------------------------------------


def transition_trial(
    model: SocialModel,
    seed: int,
    change_window: int | None = None,
    total_windows: int = 10,
    profile: str = "jpl",
    tolerance: int = 1,
    prominence: float = 0.0,
) -> dict:
    """Run one scripted scenario whose stage changes at a known window.

    Reports whether any accepted cosine-curve minimum, and whether the
    deepest one, falls within ``tolerance`` windows of the change.
    """
    rng = np.random.default_rng(seed)
    if change_window is None:
        change_window = int(rng.integers(3, total_windows - 2))
    window = model.encoder.cfg.window
    script = transition_script(rng, f"transition-{seed}", change_window, window, total_windows, profile)
    scen = generate_scenario(script, int(rng.integers(2**31)), window)
    frames = stack_frames(scen.windows())
    _, aff = predict(model, frames, "full", with_affinity=True)
    mask = future_edge_mask(model.tasks, model.head.cfg.mask_future_edges)
    curve = cosine_curve(list(aff), mask)
    seg = segment_stages(curve, prominence)
    found = seg.boundary_windows()
    deepest = seg.ranked[0] + 1 if seg.ranked else None
    return {
        "seed": seed,
        "change_window": change_window,
        "curve": curve.tolist(),
        "boundary_windows": found,
        "deepest_window": deepest,
        "hit_any": any(abs(b - change_window) <= tolerance for b in found),
        "hit_deepest": deepest is not None and abs(deepest - change_window) <= tolerance,
    }


def token_cosine(model: SocialModel, a: str, b: str) -> float:
    ta, tb = model.head.tokens[a].data, model.head.tokens[b].data
    return float(ta @ tb / (np.linalg.norm(ta) * np.linalg.norm(tb)))


# -- whole-model checkpoints ------------------------------------------------------------------


def save_model(path, model: SocialModel, metadata: Mapping | None = None, optimizer=None) -> Path:
    head = model.head
    meta = {
        "kind": "socialldg" if isinstance(head, TaskGraphHead) else "parallel",
        "encoder": model.encoder.cfg.to_dict(),
        "tasks": list(head.tasks),
        "num_classes": {t: int(c) for t, c in (head.cfg.num_classes if isinstance(head, TaskGraphHead) else head.num_classes).items() if t in head.tasks},
        **(metadata or {}),
    }
    if isinstance(head, TaskGraphHead):
        meta["graph"] = head.cfg.to_dict()
    return save_checkpoint(path, model.state_dict(), meta, optimizer.state_dict() if optimizer is not None else None)


def load_model(path) -> tuple[SocialModel, dict]:
    ck = load_checkpoint(path)
    meta = ck.metadata
    if meta.get("kind") not in ("socialldg", "parallel"):
        raise CheckpointError(f"{path}: not a classifier checkpoint")
    enc = STEncoder(EncoderConfig(**meta["encoder"]))
    tasks = meta["tasks"]
    if meta["kind"] == "parallel":
        head = ParallelHeads(tasks, meta["num_classes"], enc.cfg.repr_dim)
    else:
        g = dict(meta["graph"])
        g["tasks"] = tuple(g["tasks"])
        cfg = GraphConfig(**g)
        head = TaskGraphHead(cfg, {t: np.zeros(cfg.token_dim) for t in tasks})
    model = SocialModel(enc, head)
    model.load_state_dict(ck.params)
    return model, meta


def save_autoencoder(path, mae: MaskedAutoencoder, curve: list[dict] | None = None, metadata: Mapping | None = None) -> Path:
    meta = {"kind": "autoencoder", "encoder": mae.cfg.to_dict(), "curve": curve or [], **(metadata or {})}
    return save_checkpoint(path, mae.state_dict(), meta)


def load_autoencoder(path) -> tuple[MaskedAutoencoder, dict]:
    ck = load_checkpoint(path)
    if ck.metadata.get("kind") != "autoencoder":
        raise CheckpointError(f"{path}: not an autoencoder checkpoint")
    mae = MaskedAutoencoder(EncoderConfig(**ck.metadata["encoder"]))
    mae.load_state_dict(ck.params)
    return mae, ck.metadata
