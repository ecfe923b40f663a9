"""Task graph head: one node per task, sigmoid-gated attention with lexical edge biases.

Node features combine the social representation ``Z`` with each task's
token.  Edge weights are ``sigmoid(S + B)``, where ``S`` is scaled dot-product
attention between node features and ``B`` is an edge bias from the tokens,
modulated by ``Z``.  Edges from anticipatory tasks into immediate-state tasks
are forced to zero.  After one round of message passing, every task head
reads its updated node concatenated with ``Z``.

Affinity matrices index information flow from task ``j`` (column) into task
``i`` (row).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .encoder import STEncoder
from .engine import F, MLP, Linear, Module, Parameter, Tensor
from .engine.tensor import ContractError
from .pose.data import CURRENT_TASKS, FUTURE_TASKS, TASKS

TAU_FLOOR = 1e-3


@dataclass
class GraphConfig:
    tasks: tuple[str, ...] = TASKS
    num_classes: dict[str, int] = field(default_factory=lambda: {"con_cur": 2, "con_fut": 2, "intent": 3, "attitude": 2, "act_cur": 11, "act_fut": 11})
    repr_dim: int = 32
    hidden_dim: int = 32
    heads: int = 4
    token_dim: int = 64
    token_hidden: int = 64
    edge_bias: bool = True
    prompt_injection: bool = True
    mask_future_edges: bool = True
    attention: str = "sigmoid"  # "softmax" exists only as a comparison toggle

    def __post_init__(self):
        self.tasks = tuple(self.tasks)
        if self.hidden_dim % self.heads:
            raise ValueError(f"hidden dim {self.hidden_dim} not divisible by {self.heads} heads")
        if self.attention not in ("sigmoid", "softmax"):
            raise ValueError(f"unknown attention {self.attention!r}")
        missing = [t for t in self.tasks if t not in self.num_classes]
        if missing:
            raise ValueError(f"no class count for tasks {missing}")
        if any(self.num_classes[t] < 2 for t in self.tasks):
            raise ValueError("every task needs at least 2 classes")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["tasks"] = list(self.tasks)
        return d


def future_edge_mask(tasks: Sequence[str], enabled: bool = True) -> np.ndarray:
    """``mask[i, j]`` is True when the edge from task ``j`` into task ``i`` is forbidden."""
    K = len(tasks)
    mask = np.zeros((K, K), dtype=bool)
    if enabled:
        for i, ti in enumerate(tasks):
            for j, tj in enumerate(tasks):
                mask[i, j] = ti in CURRENT_TASKS and tj in FUTURE_TASKS
    return mask


def _split_heads(x: Tensor, heads: int) -> Tensor:
    """``(..., K, d)`` to ``(..., H, K, d/H)``."""
    *lead, K, d = x.shape
    y = x.reshape(*lead, K, heads, d // heads)
    n = len(lead)
    return y.transpose(*range(n), n + 1, n, n + 2)


def _merge_heads(x: Tensor) -> Tensor:
    *lead, H, K, dh = x.shape
    n = len(lead)
    return x.transpose(*range(n), n + 1, n, n + 2).reshape(*lead, K, H * dh)


@dataclass
class GraphOutput:
    logits: dict[str, Tensor]
    affinity: Tensor  # (B, K, K) head average
    affinity_heads: Tensor  # (B, H, K, K)
    updated: Tensor  # (B, K, d) message-passing output before the heads
    nodes: Tensor  # (B, K, d) injected node features
    bias: Tensor | None

    def probabilities(self) -> dict[str, np.ndarray]:
        return {k: F.softmax(v, axis=-1).data for k, v in self.logits.items()}


class TaskGraphHead(Module):
    def __init__(self, cfg: GraphConfig, tokens: Mapping[str, np.ndarray], seed: int = 0):
        rng = np.random.default_rng(seed)
        self.cfg = cfg
        self.tasks = list(cfg.tasks)
        d, r, e = cfg.hidden_dim, cfg.repr_dim, cfg.token_dim
        self.tokens = {t: Parameter(np.asarray(tokens[t], dtype=np.float64).copy()) for t in self.tasks}
        for t, p in self.tokens.items():
            if p.shape != (e,):
                raise ValueError(f"token for {t!r} has shape {p.shape}, expected ({e},)")
        # prompt injection
        self.z_proj = Linear(r, d, rng)
        self.token_mlp = MLP([e, cfg.token_hidden, d], rng)
        # semantic edge generator
        self.query_from_token = Linear(e, d, rng)
        self.key_from_token = Linear(e, d, rng)
        self.modulator = Linear(r, d, rng)
        self.bias_q = Linear(d, d, rng, bias=False)
        self.bias_k = Linear(d, d, rng, bias=False)
        self.tau_raw = Parameter(np.full(cfg.heads, np.log(np.e - 1.0)))  # softplus -> 1
        # node attention and message passing
        self.att_q = Linear(d, d, rng, bias=False)
        self.att_k = Linear(d, d, rng, bias=False)
        self.value = Linear(d, d, rng)
        self.out = Linear(d, d, rng)
        self.classifiers = {t: Linear(d + r, cfg.num_classes[t], rng) for t in self.tasks}

    # -- pieces, exposed for analysis and tests ---------------------------------------------

    def token_matrix(self) -> Tensor:
        return F.stack([self.tokens[t] for t in self.tasks], axis=0)

    def inject(self, z: Tensor) -> Tensor:
        """Initial node features ``(B, K, d)``: projected ``Z`` plus the projected task token."""
        zp = self.z_proj(z).reshape(z.shape[0], 1, -1)
        if not self.cfg.prompt_injection:
            return zp + F.Tensor(np.zeros((1, len(self.tasks), 1)))
        return zp + self.token_mlp(self.token_matrix())

    def modulated_queries(self, z: Tensor) -> Tensor:
        """``Q * (1 + tanh(M(Z)))`` with per-task token queries ``Q``: ``(B, K, d)``."""
        q = self.query_from_token(self.token_matrix())  # (K, d)
        gate = 1.0 + F.tanh(self.modulator(z))  # (B, d)
        return q * gate.reshape(z.shape[0], 1, -1)

    def tau(self) -> Tensor:
        t = F.softplus(self.tau_raw) + TAU_FLOOR
        if np.any(t.data <= 0):
            raise ContractError("edge-bias temperature must be positive")
        return t

    def edge_bias(self, q_mod: Tensor, keys: Tensor) -> Tensor:
        """``B[h, i, j] = <P_q q_i, P_k k_j>_h / (tau_h sqrt(d_h))``, shape ``(B, H, K, K)``."""
        H = self.cfg.heads
        dh = self.cfg.hidden_dim // H
        qh = _split_heads(self.bias_q(q_mod), H)  # (B, H, K, dh)
        kh = _split_heads(self.bias_k(keys), H)  # (H, K, dh)
        scores = qh @ kh.swapaxes(-1, -2)
        return scores / (self.tau().reshape(H, 1, 1) * np.sqrt(dh))

    def attention_scores(self, nodes: Tensor) -> Tensor:
        H = self.cfg.heads
        qh = _split_heads(self.att_q(nodes), H)
        kh = _split_heads(self.att_k(nodes), H)
        return F.scaled_dot_product(qh, kh)  # (B, H, K, K)

    def mask(self) -> np.ndarray:
        return future_edge_mask(self.tasks, self.cfg.mask_future_edges)

    def affinity(self, scores: Tensor, bias: Tensor | None) -> Tensor:
        logits = scores if bias is None else scores + bias
        m = self.mask()
        if self.cfg.attention == "softmax":
            return F.softmax(logits, axis=-1, mask=np.broadcast_to(m, logits.shape))
        return F.where(m, 0.0, F.sigmoid(logits))

    def message_pass(self, nodes: Tensor, A: Tensor) -> Tensor:
        """One propagation step: ``OutProj(concat_h sum_j A[h, i, j] V_h(node_j))``."""
        vh = _split_heads(self.value(nodes), self.cfg.heads)  # (B, H, K, dh)
        return self.out(_merge_heads(A @ vh))

    # -- full forward ------------------------------------------------------------------------

    def forward(self, z: Tensor, nodes: Tensor | None = None) -> GraphOutput:
        """Run the head on ``Z`` of shape ``(B, repr_dim)``.

        ``nodes`` overrides the injected node features (used by perturbation tests).
        """
        if z.ndim == 1:
            z = z.reshape(1, -1)
        if nodes is None:
            nodes = self.inject(z)
        bias = None
        if self.cfg.edge_bias:
            keys = self.key_from_token(self.token_matrix())
            bias = self.edge_bias(self.modulated_queries(z), keys)
        A = self.affinity(self.attention_scores(nodes), bias)
        updated = self.message_pass(nodes, A)
        K = len(self.tasks)
        feats = F.concat([updated, F.Tensor(np.ones((1, K, 1))) * z.reshape(z.shape[0], 1, -1)], axis=-1)
        logits = {t: self.classifiers[t](feats[:, k]) for k, t in enumerate(self.tasks)}
        return GraphOutput(logits, A.mean(axis=1), A, updated, nodes, bias)

    def add_task(self, name: str, num_classes: int, token: np.ndarray, seed: int = 0) -> None:
        """Grow the graph by one task node with its own token and classifier."""
        if name in self.tasks:
            raise ValueError(f"task {name!r} already present")
        rng = np.random.default_rng(seed)
        self.tasks.append(name)
        self.cfg.num_classes[name] = num_classes
        self.cfg.tasks = tuple(self.tasks)
        self.tokens[name] = Parameter(np.asarray(token, dtype=np.float64).copy())
        self.classifiers[name] = Linear(self.cfg.hidden_dim + self.cfg.repr_dim, num_classes, rng)


class ParallelHeads(Module):
    """Independent linear classifiers on ``Z``; no exchange between tasks."""

    def __init__(self, tasks: Sequence[str], num_classes: Mapping[str, int], repr_dim: int = 32, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.tasks = list(tasks)
        self.repr_dim = repr_dim
        self.num_classes = dict(num_classes)
        self.classifiers = {t: Linear(repr_dim, num_classes[t], rng) for t in self.tasks}

    def forward(self, z: Tensor) -> GraphOutput:
        if z.ndim == 1:
            z = z.reshape(1, -1)
        logits = {t: self.classifiers[t](z) for t in self.tasks}
        return GraphOutput(logits, None, None, None, None, None)

    def add_task(self, name: str, num_classes: int, token=None, seed: int = 0) -> None:
        rng = np.random.default_rng(seed)
        self.tasks.append(name)
        self.num_classes[name] = num_classes
        self.classifiers[name] = Linear(self.repr_dim, num_classes, rng)


class SocialModel(Module):
    """Encoder (or its cached pooled tokens) followed by a multi-task head.

    ``from_pooled`` accepts time-averaged frame tokens, letting a frozen
    encoder be evaluated once per sample while the ``Z`` projection and the
    head keep training.
    """

    def __init__(self, encoder: STEncoder, head: Module):
        self.encoder = encoder
        self.head = head

    @property
    def tasks(self) -> list[str]:
        return self.head.tasks

    def forward(self, frames) -> GraphOutput:
        return self.head(self.encoder(frames))

    def from_pooled(self, pooled) -> GraphOutput:
        p = pooled if isinstance(pooled, Tensor) else Tensor(np.asarray(pooled, dtype=np.float64))
        return self.head(self.encoder.to_z(p))


# -- loss -------------------------------------------------------------------------------------


def task_weights(num_classes: Mapping[str, int], tasks: Sequence[str] | None = None) -> dict[str, float]:
    """``ln(1 + C_k)`` normalized to mean one over the given tasks."""
    tasks = list(tasks or num_classes)
    raw = np.array([np.log1p(num_classes[t]) for t in tasks])
    raw = raw / raw.mean()
    return {t: float(w) for t, w in zip(tasks, raw)}


def inverse_log_frequency(labels: np.ndarray, num_classes: int, c: float = 1.02) -> np.ndarray:
    """Per-class weights ``1 / ln(c + p_class)`` from label frequencies."""
    freq = np.bincount(np.asarray(labels, dtype=np.int64), minlength=num_classes) / max(len(labels), 1)
    return 1.0 / np.log(c + freq)


def cross_entropy(logits: Tensor, labels: np.ndarray, class_weights: np.ndarray | None = None) -> Tensor:
    """Per-sample cross entropy ``(B,)``; optional per-class weights scale each sample's term."""
    y = np.asarray(labels, dtype=np.int64)
    C = logits.shape[-1]
    if y.ndim != 1 or y.shape[0] != logits.shape[0]:
        raise ContractError(f"expected {logits.shape[0]} labels, got shape {y.shape}")
    if y.size and (y.min() < 0 or y.max() >= C):
        raise ContractError(f"label index out of range for {C} classes")
    onehot = np.zeros((len(y), C))
    onehot[np.arange(len(y)), y] = 1.0
    if class_weights is not None:
        onehot *= np.asarray(class_weights)[y][:, None]
    return -(F.log_softmax(logits, axis=-1) * onehot).sum(axis=-1)


def multitask_loss(
    logits: Mapping[str, Tensor],
    labels: Mapping[str, np.ndarray],
    num_classes: Mapping[str, int],
    tasks: Sequence[str] | None = None,
    weighting: str = "class_count",
    scale: Mapping[str, float] | None = None,
    class_weights: Mapping[str, np.ndarray] | None = None,
) -> Tensor:
    """``mean_b sum_k lambda_k CE_k``.

    ``weighting`` selects ``lambda``: ``class_count`` uses ``ln(1 + C_k)``
    normalized to mean one; ``uniform`` uses ones; ``inverse_log_frequency``
    keeps uniform task weights and instead weights classes within each task by
    ``class_weights``.  ``scale`` multiplies individual task terms.
    """
    tasks = list(tasks or logits)
    if weighting == "class_count":
        lam = task_weights(num_classes, tasks)
    elif weighting in ("uniform", "inverse_log_frequency"):
        lam = {t: 1.0 for t in tasks}
    else:
        raise ValueError(f"unknown loss weighting {weighting!r}")
    total = None
    for t in tasks:
        if t not in labels:
            raise ContractError(f"missing labels for task {t!r}")
        cw = class_weights.get(t) if (class_weights and weighting == "inverse_log_frequency") else None
        term = cross_entropy(logits[t], labels[t], cw) * (lam[t] * (scale or {}).get(t, 1.0))
        total = term if total is None else total + term
    return total.mean()
