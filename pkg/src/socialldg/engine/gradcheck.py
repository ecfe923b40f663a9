"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import ContractError, Tensor, no_grad


def numerical_grad(fn: Callable[[], Tensor], param: Tensor, h: float = 1e-5) -> np.ndarray:
    """Central differences of the scalar ``fn()`` w.r.t. every coordinate of ``param``."""
    grad = np.zeros_like(param.data)
    flat = param.data.reshape(-1)  # view: edits below perturb the parameter in place
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = fn().item()
            flat[i] = orig - h
            fm = fn().item()
            flat[i] = orig
            grad.reshape(-1)[i] = (fp - fm) / (2.0 * h)
    return grad


def grad_check(
    fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    h: float = 1e-5,
    eps: float = 1e-6,
    return_details: bool = False,
):
    """Max over coordinates of ``|analytic - fd| / max(|analytic|, |fd|, eps)``.

    ``fn`` must be deterministic: seed any randomness before calling.
    """
    for p in params:
        if not p.data.flags.c_contiguous:
            p.data = np.ascontiguousarray(p.data)
        p.grad = None
    loss = fn()
    if loss.size != 1:
        raise ContractError("grad_check needs a scalar function")
    loss.backward(leaves=params)
    worst = 0.0
    details = []
    for k, p in enumerate(params):
        analytic = p.grad.copy()
        numeric = numerical_grad(fn, p, h)
        denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), eps)
        rel = np.abs(analytic - numeric) / denom
        err = float(rel.max()) if rel.size else 0.0
        details.append((k, err))
        worst = max(worst, err)
    return (worst, details) if return_details else worst
