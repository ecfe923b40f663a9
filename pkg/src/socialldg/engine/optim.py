"""AdamW with decoupled weight decay, and the warmup / plateau-decay / early-stop schedule."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .tensor import ContractError, NonFiniteError, Tensor


class AdamW:
    """AdamW over a name -> parameter mapping.

    The decay term multiplies the parameter by ``1 - lr * weight_decay`` before
    the adaptive step and never passes through the moment estimates.
    ``lr_scale`` lets callers run some parameters at a fraction of the rate
    (used when only new task heads should move quickly).
    """

    def __init__(
        self,
        params: Mapping[str, Tensor],
        lr: float = 1e-3,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 0.01,
        lr_scale: Mapping[str, float] | None = None,
    ):
        self.params = dict(params)
        self.lr = float(lr)
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.lr_scale = dict(lr_scale or {})
        self.step_count = 0
        self.m = {name: np.zeros_like(p.data) for name, p in self.params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in self.params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self, lr: float | None = None) -> None:
        if lr is not None:
            self.lr = float(lr)
        for name, p in self.params.items():
            if p.grad is None:
                raise ContractError(f"AdamW: parameter {name!r} has no gradient")
            if p.grad.shape != p.shape:
                raise ContractError(f"AdamW: gradient shape {p.grad.shape} != parameter shape {p.shape} for {name!r}")
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1**t
        bc2 = 1.0 - self.beta2**t
        for name, p in self.params.items():
            lr = self.lr * self.lr_scale.get(name, 1.0)
            g = p.grad
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            data = p.data * (1.0 - lr * self.weight_decay)
            data -= lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            if not np.all(np.isfinite(data)):
                raise NonFiniteError(f"AdamW step {t}: non-finite values in {name!r} (lr={lr:g})")
            p.data = data

    def state_dict(self) -> dict:
        return {
            "step": self.step_count,
            "lr": self.lr,
            "betas": [self.beta1, self.beta2],
            "eps": self.eps,
            "weight_decay": self.weight_decay,
            "m": {k: v.copy() for k, v in self.m.items()},
            "v": {k: v.copy() for k, v in self.v.items()},
        }

    def load_state_dict(self, state: dict) -> None:
        self.step_count = int(state["step"])
        self.lr = float(state["lr"])
        self.beta1, self.beta2 = state["betas"]
        self.eps = float(state["eps"])
        self.weight_decay = float(state["weight_decay"])
        for k in self.params:
            self.m[k] = np.array(state["m"][k], dtype=np.float64)
            self.v[k] = np.array(state["v"][k], dtype=np.float64)


@dataclass
class LrSchedule:
    """Linear warmup, then multiplicative decay on validation plateaus, plus early stopping.

    Call ``step(epoch, metric)`` at the start of every epoch with the
    validation metric observed after the previous epoch (None before the
    first).  During warmup the rate for epoch ``e`` is ``base * e / warmup``.
    Afterwards the rate is multiplied by ``decay`` each time ``decay_patience``
    consecutive observations fail to improve; ``should_stop`` turns true after
    ``stop_patience`` consecutive non-improving observations.
    """

    base: float
    warmup: int = 5
    decay: float = 0.5
    decay_patience: int = 3
    stop_patience: int = 10
    mode: str = "max"
    best: float | None = None
    best_epoch: int = 0
    bad_epochs: int = 0
    history: list[float] = field(default_factory=list)
    _since_decay: int = 0
    _scale: float = 1.0

    def __post_init__(self):
        if self.mode not in ("max", "min"):
            raise ValueError(f"mode must be 'max' or 'min', got {self.mode!r}")
        if self.base < 0:
            raise ValueError("base rate must be non-negative")

    def _improved(self, metric: float) -> bool:
        if self.best is None:
            return True
        return metric > self.best if self.mode == "max" else metric < self.best

    def observe(self, metric: float) -> None:
        self.history.append(float(metric))
        if self._improved(metric):
            self.best = float(metric)
            self.best_epoch = len(self.history)
            self.bad_epochs = 0
            self._since_decay = 0
        else:
            self.bad_epochs += 1
            self._since_decay += 1

    def step(self, epoch: int, val_metric: float | None = None) -> float:
        if epoch < 1:
            raise ValueError("epochs are 1-indexed")
        if val_metric is not None:
            self.observe(val_metric)
            if epoch > self.warmup and self._since_decay >= self.decay_patience:
                self._scale *= self.decay
                self._since_decay = 0
        if epoch <= self.warmup:
            return self.base * epoch / self.warmup
        return self.base * self._scale

    @property
    def should_stop(self) -> bool:
        return self.bad_epochs >= self.stop_patience
