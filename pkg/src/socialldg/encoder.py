"""Spatio-temporal pose encoder with a masked-reconstruction pretext task.

Per frame, graph attention over the skeleton mixes keypoint features; the
node mean gives one embedding per frame.  Temporal self-attention with
learned positions runs over the frame embeddings, and the time-averaged
result is projected to the social representation ``Z``.  A small transformer
decoder maps the frame tokens back to keypoint coordinates.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .engine import AdamW, F, LayerNorm, LrSchedule, Linear, Module, Parameter, Tensor, TransformerBlock, no_grad
from .engine.tensor import ContractError, NonFiniteError
from .pose.layout import NUM_KEYPOINTS, SKELETON_EDGES

log = logging.getLogger(__name__)


# -- skeleton graph ---------------------------------------------------------------------------


class SkeletonGraph:
    """Undirected keypoint graph; message passing also uses one self-loop per node.

    ``roles`` assigns every node its colour-refinement (1-WL) class, so nodes
    that a graph automorphism can exchange share the same role.
    """

    def __init__(self, num_nodes: int, edges: Sequence[tuple[int, int]]):
        und = set()
        for a, b in edges:
            if a == b or not (0 <= a < num_nodes and 0 <= b < num_nodes):
                raise ValueError(f"invalid edge ({a}, {b}) for {num_nodes} nodes")
            und.add((min(a, b), max(a, b)))
        self.num_nodes = num_nodes
        self.edges = sorted(und)
        src = [a for a, b in self.edges] + [b for a, b in self.edges] + list(range(num_nodes))
        dst = [b for a, b in self.edges] + [a for a, b in self.edges] + list(range(num_nodes))
        order = np.lexsort((np.asarray(src), np.asarray(dst)))
        self.src = np.asarray(src, dtype=np.int64)[order]
        self.dst = np.asarray(dst, dtype=np.int64)[order]
        # edges are grouped by target, so per-target reductions can use reduceat
        self.dst_starts = np.searchsorted(self.dst, np.arange(num_nodes))
        self.roles = self._refine_roles()
        self.num_roles = int(self.roles.max()) + 1

    @classmethod
    def wholebody(cls) -> "SkeletonGraph":
        return cls(NUM_KEYPOINTS, SKELETON_EDGES)

    @classmethod
    def toy(cls, num_nodes: int) -> "SkeletonGraph":
        """Induced whole-body subgraph on the first ``num_nodes`` keypoints, chained if disconnected."""
        edges = [(a, b) for a, b in SKELETON_EDGES if a < num_nodes and b < num_nodes]
        g = cls(num_nodes, edges)
        comps = g.components()
        for c0, c1 in zip(comps, comps[1:]):
            edges.append((min(c0), min(c1)))
        return cls(num_nodes, edges)

    def neighbors(self) -> list[set[int]]:
        nb: list[set[int]] = [set() for _ in range(self.num_nodes)]
        for a, b in self.edges:
            nb[a].add(b)
            nb[b].add(a)
        return nb

    def components(self) -> list[set[int]]:
        nb = self.neighbors()
        seen: set[int] = set()
        comps = []
        for s in range(self.num_nodes):
            if s in seen:
                continue
            comp, stack = {s}, [s]
            while stack:
                for m in nb[stack.pop()]:
                    if m not in comp:
                        comp.add(m)
                        stack.append(m)
            seen |= comp
            comps.append(comp)
        return comps

    def is_connected(self) -> bool:
        return len(self.components()) == 1

    def is_automorphism(self, perm: Sequence[int]) -> bool:
        perm = list(perm)
        if sorted(perm) != list(range(self.num_nodes)):
            return False
        mapped = {tuple(sorted((perm[a], perm[b]))) for a, b in self.edges}
        return mapped == set(self.edges)

    def _refine_roles(self) -> np.ndarray:
        nb = self.neighbors()
        colors = [0] * self.num_nodes
        while True:
            sigs = [(colors[v], tuple(sorted(colors[u] for u in nb[v]))) for v in range(self.num_nodes)]
            table = {s: i for i, s in enumerate(sorted(set(sigs)))}
            new = [table[s] for s in sigs]
            if len(table) == len(set(colors)):
                return np.asarray(new, dtype=np.int64)
            colors = new


# -- masking ----------------------------------------------------------------------------------


@dataclass
class MaskPlan:
    """Boolean ``(T, N)`` grid of masked keypoint slots."""

    mask: np.ndarray
    seed: int | None = None

    @classmethod
    def random(cls, T: int, N: int, ratio: float, seed: int | np.random.Generator | None = None) -> "MaskPlan":
        if not 0.0 <= ratio <= 1.0:
            raise ValueError(f"mask ratio {ratio} outside [0, 1]")
        rng = np.random.default_rng(seed)
        count = int(round(ratio * T * N))
        mask = np.zeros(T * N, dtype=bool)
        mask[rng.choice(T * N, size=count, replace=False)] = True
        return cls(mask.reshape(T, N), seed if isinstance(seed, (int, np.integer)) else None)

    @property
    def count(self) -> int:
        return int(self.mask.sum())


def batch_masks(batch: int, T: int, N: int, ratio: float, rng: np.random.Generator) -> np.ndarray:
    """Independent plans for every sample, as a ``(B, T, N)`` array."""
    count = int(round(ratio * T * N))
    keys = rng.random((batch, T * N))
    order = np.argsort(keys, axis=1)[:, :count]
    mask = np.zeros((batch, T * N), dtype=bool)
    np.put_along_axis(mask, order, True, axis=1)
    return mask.reshape(batch, T, N)


def mask_inputs(frames: np.ndarray, plan: MaskPlan | np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Blank the coordinates of masked slots and return them with the mask.

    The encoder substitutes its learned mask token wherever the mask is set;
    confidences are kept so the reconstruction loss can still weight those
    slots.
    """
    mask = plan.mask if isinstance(plan, MaskPlan) else np.asarray(plan, dtype=bool)
    frames = np.asarray(frames, dtype=np.float64)
    if mask.shape != frames.shape[-3:-1]:
        if mask.shape != frames.shape[:-1]:
            raise ValueError(f"mask shape {mask.shape} does not match frames {frames.shape}")
    out = frames.copy()
    out[..., :2] = np.where(mask[..., None], 0.0, frames[..., :2])
    return out, np.broadcast_to(mask, frames.shape[:-1]).copy()


# -- reconstruction losses --------------------------------------------------------------------


class UndefinedLossError(ValueError):
    """Every confidence in a sample is zero, so the weighted mean has no denominator."""


def _per_sample_alpha(alpha: np.ndarray) -> np.ndarray:
    a = np.asarray(alpha, dtype=np.float64)
    tot = a.reshape(a.shape[0], -1).sum(1) if a.ndim >= 3 else np.array([a.sum()])
    if np.any(tot <= 0):
        raise UndefinedLossError("confidences sum to zero; filter all-zero-confidence samples first")
    return tot


def _reduce(per_slot: Tensor, alpha: np.ndarray, weighted: bool) -> Tensor:
    """Average ``per_slot`` (shape of alpha) per sample, then over the batch."""
    a = np.asarray(alpha, dtype=np.float64)
    batched = a.ndim >= 3
    if weighted:
        tot = _per_sample_alpha(a)
        w = a / (tot.reshape((-1,) + (1,) * (a.ndim - 1)) if batched else tot[0])
    else:
        count = a[0].size if batched else a.size
        w = np.full_like(a, 1.0 / count)
    s = (per_slot * w).sum()
    return s / a.shape[0] if batched else s


def weighted_mse(x, x_hat: Tensor, alpha) -> Tensor:
    """Confidence-weighted squared keypoint distance, ``sum(a * |x - x_hat|^2) / sum(a)``.

    Shapes ``(..., T, N, 2)`` with ``alpha`` of ``(..., T, N)``; with a batch
    axis the ratio is taken per sample and then averaged.
    """
    d = _wrap_target(x) - x_hat
    return _reduce((d * d).sum(axis=-1), alpha, weighted=True)


def unweighted_mse(x, x_hat: Tensor, alpha) -> Tensor:
    d = _wrap_target(x) - x_hat
    return _reduce((d * d).sum(axis=-1), alpha, weighted=False)


def weighted_l1(x, x_hat: Tensor, alpha) -> Tensor:
    d = _wrap_target(x) - x_hat
    return _reduce(F.absolute(d).sum(axis=-1), alpha, weighted=True)


def weighted_smooth_l1(x, x_hat: Tensor, alpha, beta: float = 0.05) -> Tensor:
    d = _wrap_target(x) - x_hat
    ad = F.absolute(d)
    small = np.abs(d.data) < beta
    per = F.where(small, d * d * (0.5 / beta), ad - 0.5 * beta)
    return _reduce(per.sum(axis=-1), alpha, weighted=True)


LOSSES = {
    "weighted_mse": weighted_mse,
    "mse": unweighted_mse,
    "weighted_l1": weighted_l1,
    "weighted_smooth_l1": weighted_smooth_l1,
}


def _wrap_target(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


# -- model ------------------------------------------------------------------------------------


@dataclass
class EncoderConfig:
    spatial_layers: int = 2
    spatial_heads: int = 4
    spatial_width: int = 32
    temporal_layers: int = 2
    temporal_heads: int = 4
    temporal_width: int = 64
    repr_dim: int = 32
    mask_ratio: float = 0.5
    window: int = 10
    decoder_layers: int = 1
    num_nodes: int = NUM_KEYPOINTS

    def __post_init__(self):
        if not 0.0 <= self.mask_ratio <= 1.0:
            raise ValueError(f"mask ratio {self.mask_ratio} outside [0, 1]")
        if self.spatial_width % self.spatial_heads or self.temporal_width % self.temporal_heads:
            raise ValueError("layer width must be divisible by its head count")

    def to_dict(self) -> dict:
        return asdict(self)


class GraphAttention(Module):
    """Multi-head attention restricted to skeleton neighbours (plus self).

    Works on node-major features ``(N, M, C)`` where ``M`` stacks every frame.
    """

    def __init__(self, graph: SkeletonGraph, width: int, heads: int, rng: np.random.Generator):
        self.graph = graph
        self.heads = heads
        dh = width // heads
        self.proj = Linear(width, width, rng, bias=False)
        self.att_src = Parameter(rng.normal(0.0, 1.0 / np.sqrt(dh), size=(heads, dh)))
        self.att_dst = Parameter(rng.normal(0.0, 1.0 / np.sqrt(dh), size=(heads, dh)))
        self.norm = LayerNorm(width)

    def forward(self, h: Tensor) -> Tensor:
        g = self.graph
        N, M, C = h.shape
        H = self.heads
        wh = self.proj(h.reshape(N * M, C)).reshape(N, M, H, C // H)
        s_src = (wh * self.att_src).sum(axis=-1)  # (N, M, H)
        s_dst = (wh * self.att_dst).sum(axis=-1)
        e = F.leaky_relu(F.take(s_src, g.src, 0) + F.take(s_dst, g.dst, 0), 0.2)  # (E, M, H)
        shift = np.maximum.reduceat(e.data, g.dst_starts, axis=0)[g.dst]  # constant per target
        ex = F.exp(e - shift)
        att = ex / F.take(F.segment_sum(ex, g.dst, N, 0), g.dst, 0)
        msg = F.take(wh, g.src, 0) * att.reshape(att.shape + (1,))
        agg = F.segment_sum(msg, g.dst, N, 0).reshape(N, M, C)
        return self.norm(h + F.gelu(agg))


class STEncoder(Module):
    def __init__(self, cfg: EncoderConfig, graph: SkeletonGraph | None = None, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.cfg = cfg
        self.graph = graph or (SkeletonGraph.wholebody() if cfg.num_nodes == NUM_KEYPOINTS else SkeletonGraph.toy(cfg.num_nodes))
        if self.graph.num_nodes != cfg.num_nodes:
            raise ValueError(f"graph has {self.graph.num_nodes} nodes, config expects {cfg.num_nodes}")
        C, D = cfg.spatial_width, cfg.temporal_width
        self.input = Linear(3, C, rng)
        self.role = Parameter(rng.normal(0.0, 0.1, size=(self.graph.num_roles, C)))
        self.mask_token = Parameter(rng.normal(0.0, 0.1, size=(C,)))
        self.spatial_layers = [GraphAttention(self.graph, C, cfg.spatial_heads, rng) for _ in range(cfg.spatial_layers)]
        self.frame_proj = Linear(C, D, rng)
        self.pos = Parameter(rng.normal(0.0, 0.02, size=(cfg.window, D)))
        self.temporal_layers = [TransformerBlock(D, cfg.temporal_heads, rng) for _ in range(cfg.temporal_layers)]
        self.temporal_norm = LayerNorm(D)
        self.to_z = Linear(D, cfg.repr_dim, rng)

    def spatial(self, frames, mask: np.ndarray | None = None) -> Tensor:
        """Per-frame embeddings ``(B, T, C)``: graph attention, then the node mean."""
        x = frames.data if isinstance(frames, Tensor) else np.asarray(frames, dtype=np.float64)
        if x.ndim == 3:
            x = x[None]
            if mask is not None and np.ndim(mask) == 2:
                mask = np.asarray(mask)[None]
        B, T, N, _ = x.shape
        if N != self.graph.num_nodes:
            raise ValueError(f"expected {self.graph.num_nodes} keypoints, got {N}")
        if T > self.cfg.window:
            raise ValueError(f"window of {T} frames exceeds the configured {self.cfg.window}")
        nodes = Tensor(np.ascontiguousarray(x.transpose(2, 0, 1, 3).reshape(N, B * T, 3)))
        h = self.input(nodes)
        if mask is not None:
            m = np.broadcast_to(np.asarray(mask, dtype=bool), (B, T, N)).transpose(2, 0, 1).reshape(N, B * T, 1)
            h = F.where(m, self.mask_token, h)
        h = h + F.take(self.role, self.graph.roles, 0).reshape(N, 1, -1)
        for layer in self.spatial_layers:
            h = layer(h)
        return h.mean(axis=0).reshape(B, T, -1)

    def temporal(self, frame_emb) -> Tensor:
        """Frame tokens ``(B, T, D)`` from per-frame embeddings."""
        fe = frame_emb if isinstance(frame_emb, Tensor) else Tensor(np.asarray(frame_emb, dtype=np.float64))
        T = fe.shape[1]
        u = self.frame_proj(fe) + self.pos[:T]
        for block in self.temporal_layers:
            u = block(u)
        return self.temporal_norm(u)

    def tokens(self, frames, mask: np.ndarray | None = None) -> Tensor:
        """Frame tokens ``(B, T, D)`` before temporal pooling."""
        return self.temporal(self.spatial(frames, mask))

    def pool(self, u: Tensor) -> Tensor:
        return self.to_z(u.mean(axis=1))

    def forward(self, frames, mask: np.ndarray | None = None) -> Tensor:
        """``Z`` of shape ``(B, repr_dim)`` (or ``(repr_dim,)`` for a single sequence)."""
        single = (frames.ndim if isinstance(frames, Tensor) else np.ndim(frames)) == 3
        z = self.pool(self.tokens(frames, mask))
        return z.reshape(-1) if single else z


class Decoder(Module):
    """Transformer over frame tokens followed by a per-frame coordinate readout."""

    def __init__(self, cfg: EncoderConfig, seed: int = 1):
        rng = np.random.default_rng(seed)
        D = cfg.temporal_width
        self.num_nodes = cfg.num_nodes
        self.blocks = [TransformerBlock(D, cfg.temporal_heads, rng) for _ in range(cfg.decoder_layers)]
        self.norm = LayerNorm(D)
        self.out = Linear(D, cfg.num_nodes * 2, rng)

    def forward(self, u: Tensor) -> Tensor:
        B, T, _ = u.shape
        for block in self.blocks:
            u = block(u)
        return self.out(self.norm(u)).reshape(B, T, self.num_nodes, 2)


class MaskedAutoencoder(Module):
    def __init__(self, cfg: EncoderConfig, seed: int = 0, graph: SkeletonGraph | None = None):
        self.cfg = cfg
        self.encoder = STEncoder(cfg, graph, seed)
        self.decoder = Decoder(cfg, seed + 1)

    def forward(self, frames, mask: np.ndarray | None = None) -> Tensor:
        return self.decoder(self.encoder.tokens(frames, mask))

    def loss(self, frames: np.ndarray, mask: np.ndarray, kind: str = "weighted_mse") -> Tensor:
        visible, mask = mask_inputs(frames, mask)
        recon = self(visible, mask)
        return LOSSES[kind](frames[..., :2], recon, frames[..., 2])


def masked_mae(model: MaskedAutoencoder, frames: np.ndarray, target: np.ndarray, ratio: float, seed: int, batch: int = 64) -> float:
    """Mean Euclidean error on masked slots against ``target`` coordinates."""
    masks = batch_masks(len(frames), frames.shape[1], frames.shape[2], ratio, np.random.default_rng(seed))
    errs = []
    with no_grad():
        for s in range(0, len(frames), batch):
            x = frames[s : s + batch]
            m = masks[s : s + batch]
            visible, _ = mask_inputs(x, m)
            recon = model(visible, m).data
            d = np.linalg.norm(recon - target[s : s + batch], axis=-1)
            errs.append(d[m])
    return float(np.concatenate(errs).mean())


def mean_oracle_mae(train_coords: np.ndarray, frames: np.ndarray, target: np.ndarray, ratio: float, seed: int) -> float:
    """The same masked-slot error for a predictor that outputs each keypoint's training mean."""
    mean = train_coords.reshape(-1, train_coords.shape[-2], 2).mean(0)
    m = batch_masks(len(frames), frames.shape[1], frames.shape[2], ratio, np.random.default_rng(seed))
    d = np.linalg.norm(mean[None, None] - target, axis=-1)
    return float(d[m].mean())


def check_loss(value: Tensor, epoch: int, step: int) -> None:
    if not np.isfinite(value.data).all():
        raise NonFiniteError(f"non-finite reconstruction loss at epoch {epoch}, step {step}")


@dataclass
class PretrainResult:
    model: MaskedAutoencoder
    curve: list[dict] = field(default_factory=list)  # rows of epoch, train_loss, val_loss
    optimizer: AdamW | None = None


def pretrain_parameters(model: MaskedAutoencoder) -> dict[str, Parameter]:
    """Everything the reconstruction path touches (the ``Z`` projection is not on it)."""
    return {k: v for k, v in model.param_dict().items() if not k.startswith("encoder.to_z.")}


def reconstruction_loss(model: MaskedAutoencoder, frames: np.ndarray, masks: np.ndarray, kind: str, batch: int = 64) -> float:
    total = 0.0
    with no_grad():
        for s in range(0, len(frames), batch):
            x = frames[s : s + batch]
            total += model.loss(x, masks[s : s + batch], kind).item() * len(x)
    return total / len(frames)


def pretrain(
    train: np.ndarray,
    cfg: EncoderConfig,
    seed: int = 0,
    val: np.ndarray | None = None,
    epochs: int = 10,
    batch_size: int = 32,
    lr: float = 2e-3,
    weight_decay: float = 0.01,
    warmup: int = 2,
    loss: str = "weighted_mse",
    model: MaskedAutoencoder | None = None,
) -> PretrainResult:
    """Fit the masked autoencoder on ``(S, T, N, 3)`` windows; deterministic per seed."""
    if loss not in LOSSES:
        raise ValueError(f"unknown reconstruction loss {loss!r}; choose from {sorted(LOSSES)}")
    train = np.asarray(train, dtype=np.float64)
    keep = train[..., 2].reshape(len(train), -1).sum(1) > 0
    if not keep.any():
        raise ValueError("pretraining set is empty")
    if not keep.all():
        log.warning("dropping %d windows whose confidences are all zero", int((~keep).sum()))
        train = train[keep]
    rng = np.random.default_rng(seed)
    model = model or MaskedAutoencoder(cfg, seed)
    opt = AdamW(pretrain_parameters(model), lr=lr, weight_decay=weight_decay)
    sched = LrSchedule(lr, warmup=warmup, mode="min")
    _, T, N, _ = train.shape
    val_masks = batch_masks(len(val), T, N, cfg.mask_ratio, np.random.default_rng(seed + 7919)) if val is not None and len(val) else None
    curve = []
    prev = None
    for epoch in range(1, epochs + 1):
        rate = sched.step(epoch, prev)
        order = rng.permutation(len(train))
        run, seen = 0.0, 0
        for step, s in enumerate(range(0, len(order), batch_size)):
            x = train[order[s : s + batch_size]]
            m = batch_masks(len(x), T, N, cfg.mask_ratio, rng)
            opt.zero_grad()
            value = model.loss(x, m, loss)
            check_loss(value, epoch, step)
            value.backward(leaves=opt.params.values())
            opt.step(rate)
            run += value.item() * len(x)
            seen += len(x)
        row = {"epoch": epoch, "train_loss": run / seen, "val_loss": float("nan")}
        if val_masks is not None:
            row["val_loss"] = reconstruction_loss(model, val, val_masks, loss)
        prev = row["val_loss"] if val_masks is not None else row["train_loss"]
        curve.append(row)
        log.info("pretrain epoch %d: train %.5f val %.5f lr %.2e", epoch, row["train_loss"], row["val_loss"], rate)
    return PretrainResult(model, curve, opt)


__all__ = [
    "ContractError",
    "Decoder",
    "EncoderConfig",
    "GraphAttention",
    "LOSSES",
    "MaskPlan",
    "MaskedAutoencoder",
    "STEncoder",
    "SkeletonGraph",
    "UndefinedLossError",
    "batch_masks",
    "mask_inputs",
    "masked_mae",
    "mean_oracle_mae",
    "pretrain",
    "unweighted_mse",
    "weighted_l1",
    "weighted_mse",
    "weighted_smooth_l1",
]
