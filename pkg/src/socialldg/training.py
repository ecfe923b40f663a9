"""Multi-task fine-tuning loops, prediction and evaluation.

Three fine-tuning depths share one loop:

``full``
    inputs are raw windows ``(S, T, N, 3)``; every parameter trains.
``temporal``
    inputs are cached per-frame embeddings ``(S, T, C)`` from the graph
    attention stage, which stays frozen; the temporal stack, the ``Z``
    projection and the head train.
``head``
    inputs are cached time-pooled tokens ``(S, D)``; only the ``Z``
    projection and the head train.
"""

from __future__ import annotations

import copy
import logging
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .encoder import STEncoder
from .engine import AdamW, LrSchedule, Parameter, Tensor, no_grad
from .engine.tensor import NonFiniteError
from .metrics import task_report
from .model import GraphConfig, GraphOutput, ParallelHeads, SocialModel, TaskGraphHead, inverse_log_frequency, multitask_loss

log = logging.getLogger(__name__)

MODES = ("full", "temporal", "head")


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    lr: float = 1e-3
    weight_decay: float = 0.01
    warmup: int = 5
    decay: float = 0.5
    decay_patience: int = 3
    stop_patience: int = 10
    loss_weighting: str = "class_count"
    mode: str = "temporal"
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch size must be at least 1")
        if self.mode not in MODES:
            raise ValueError(f"unknown fine-tuning mode {self.mode!r}; expected one of {MODES}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class FitResult:
    history: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_metric: float = float("-inf")
    stopped_early: bool = False


# -- inputs -----------------------------------------------------------------------------------


def frame_embeddings(encoder: STEncoder, frames: np.ndarray, batch: int = 64) -> np.ndarray:
    with no_grad():
        return np.concatenate([encoder.spatial(frames[s : s + batch]).data for s in range(0, len(frames), batch)])


def pooled_tokens(encoder: STEncoder, frames: np.ndarray, batch: int = 64, from_embeddings: bool = False) -> np.ndarray:
    with no_grad():
        out = []
        for s in range(0, len(frames), batch):
            x = frames[s : s + batch]
            u = encoder.temporal(x) if from_embeddings else encoder.tokens(x)
            out.append(u.data.mean(axis=1))
        return np.concatenate(out)


def prepare_inputs(encoder: STEncoder, frames: np.ndarray, mode: str) -> np.ndarray:
    if mode == "full":
        return np.asarray(frames, dtype=np.float64)
    emb = frame_embeddings(encoder, frames)
    return emb if mode == "temporal" else pooled_tokens(encoder, emb, from_embeddings=True)


def forward(model: SocialModel, x: np.ndarray, mode: str) -> GraphOutput:
    enc = model.encoder
    if mode == "full":
        return model(x)
    if mode == "temporal":
        return model.head(enc.pool(enc.temporal(x)))
    return model.from_pooled(x)


def social_representation(model: SocialModel, x: np.ndarray, mode: str) -> np.ndarray:
    enc = model.encoder
    with no_grad():
        if mode == "full":
            return enc(x).data
        if mode == "temporal":
            return enc.pool(enc.temporal(x)).data
        return enc.to_z(Tensor(x)).data


# -- model construction -----------------------------------------------------------------------


def build_model(
    kind: str,
    encoder: STEncoder,
    tasks: Sequence[str],
    num_classes: Mapping[str, int],
    tokens: Mapping[str, np.ndarray] | None = None,
    seed: int = 0,
    **graph_options,
) -> SocialModel:
    """``kind`` is ``socialldg`` (task graph) or ``parallel`` (independent heads on ``Z``)."""
    encoder = copy.deepcopy(encoder)
    repr_dim = encoder.cfg.repr_dim
    if kind == "parallel":
        head = ParallelHeads(tasks, num_classes, repr_dim, seed)
    elif kind == "socialldg":
        dim = len(next(iter(tokens.values())))
        cfg = GraphConfig(tasks=tuple(tasks), num_classes={t: num_classes[t] for t in tasks}, repr_dim=repr_dim, token_dim=dim, **graph_options)
        head = TaskGraphHead(cfg, tokens, seed)
    else:
        raise ValueError(f"unknown classifier variant {kind!r}")
    return SocialModel(encoder, head)


_FROZEN_PREFIXES = {
    "full": (),
    "temporal": ("encoder.input.", "encoder.role", "encoder.mask_token", "encoder.spatial_layers."),
    "head": ("encoder.input.", "encoder.role", "encoder.mask_token", "encoder.spatial_layers.", "encoder.frame_proj.", "encoder.pos", "encoder.temporal"),
}


def trainable_parameters(model: SocialModel, mode: str, probe: np.ndarray, tasks: Sequence[str] | None = None) -> dict[str, Parameter]:
    """Parameters that are unfrozen in ``mode`` and actually reached by the loss."""
    tasks = list(tasks or model.tasks)
    model.zero_grad()
    out = forward(model, probe[:2], mode)
    total = None
    for t in tasks:
        term = out.logits[t].sum()
        total = term if total is None else total + term
    total.backward()
    params = {}
    for name, p in model.named_parameters():
        if name.startswith(_FROZEN_PREFIXES[mode]):
            continue
        if p.grad is not None:
            params[name] = p
    model.zero_grad()
    return params


# -- loops ------------------------------------------------------------------------------------


def predict(model: SocialModel, x: np.ndarray, mode: str, batch: int = 256, with_affinity: bool = False):
    preds: dict[str, list] = {t: [] for t in model.tasks}
    aff = []
    with no_grad():
        for s in range(0, len(x), batch):
            out = forward(model, x[s : s + batch], mode)
            for t in model.tasks:
                preds[t].append(out.logits[t].data.argmax(-1))
            if with_affinity and out.affinity is not None:
                aff.append(out.affinity.data)
    result = {t: np.concatenate(v) for t, v in preds.items()}
    if with_affinity:
        return result, (np.concatenate(aff) if aff else None)
    return result


def evaluate(model: SocialModel, x: np.ndarray, labels: Mapping[str, np.ndarray], mode: str, num_classes: Mapping[str, int], tasks: Sequence[str] | None = None) -> dict:
    tasks = list(tasks or model.tasks)
    preds = predict(model, x, mode)
    return task_report(preds, labels, num_classes, tasks)


def fit(
    model: SocialModel,
    train_x: np.ndarray,
    train_y: Mapping[str, np.ndarray],
    val_x: np.ndarray,
    val_y: Mapping[str, np.ndarray],
    cfg: TrainConfig,
    num_classes: Mapping[str, int],
    tasks: Sequence[str] | None = None,
    loss_scale: Mapping[str, float] | None = None,
    lr_scale_fn=None,
    use_schedule: bool = True,
    restore_best: bool = True,
) -> FitResult:
    """Minimize the multi-task loss with AdamW, warmup, plateau decay and early stopping.

    The validation metric is the average macro F1 over ``tasks``; the best
    epoch's parameters are restored at the end when ``restore_best`` is set.
    """
    tasks = list(tasks or model.tasks)
    rng = np.random.default_rng(cfg.seed)
    params = trainable_parameters(model, cfg.mode, train_x, tasks)
    scales = {n: lr_scale_fn(n) for n in params} if lr_scale_fn else None
    opt = AdamW(params, lr=cfg.lr, weight_decay=cfg.weight_decay, lr_scale=scales)
    sched = LrSchedule(cfg.lr, warmup=cfg.warmup, decay=cfg.decay, decay_patience=cfg.decay_patience, stop_patience=cfg.stop_patience, mode="max")
    class_weights = None
    if cfg.loss_weighting == "inverse_log_frequency":
        class_weights = {t: inverse_log_frequency(train_y[t], num_classes[t]) for t in tasks}
    result = FitResult()
    best_state = None
    prev = None
    n = len(train_x)
    for epoch in range(1, cfg.epochs + 1):
        rate = sched.step(epoch, prev) if use_schedule else cfg.lr
        if use_schedule and sched.should_stop:
            result.stopped_early = True
            break
        order = rng.permutation(n)
        total, seen = 0.0, 0
        for step, s in enumerate(range(0, n, cfg.batch_size)):
            idx = order[s : s + cfg.batch_size]
            out = forward(model, train_x[idx], cfg.mode)
            loss = multitask_loss(
                out.logits, {t: train_y[t][idx] for t in tasks}, num_classes, tasks,
                cfg.loss_weighting, loss_scale, class_weights,
            )  # fmt: skip
            if not np.isfinite(loss.data).all():
                raise NonFiniteError(f"non-finite training loss at epoch {epoch}, step {step}")
            opt.zero_grad()
            loss.backward(leaves=params.values())
            opt.step(rate)
            total += loss.item() * len(idx)
            seen += len(idx)
        report = evaluate(model, val_x, val_y, cfg.mode, num_classes, tasks)
        prev = report["avg_f1"]
        result.history.append({"epoch": epoch, "lr": rate, "train_loss": total / seen, "val_avg_f1": prev})
        log.info("epoch %d: loss %.4f val avg F1 %.4f (lr %.2e)", epoch, total / seen, prev, rate)
        if prev > result.best_metric:
            result.best_metric = prev
            result.best_epoch = epoch
            if restore_best:
                best_state = model.state_dict()
    if restore_best and best_state is not None:
        model.load_state_dict(best_state, strict=False)
    return result
