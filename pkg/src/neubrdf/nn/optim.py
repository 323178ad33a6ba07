"""Adam and a finite-difference gradient checker."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .autodiff import Tensor
from .mlp import ShapeError


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("betas must lie in (0, 1)")


@dataclass
class AdamState:
    """First/second moment buffers and the step counter."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, params: Sequence[Tensor]) -> "AdamState":
        return cls([np.zeros_like(p.data) for p in params],
                   [np.zeros_like(p.data) for p in params])


def adam_step(params: Sequence[Tensor], grads: Sequence[np.ndarray], state: AdamState,
              cfg: AdamConfig) -> AdamState:
    """Apply one bias-corrected Adam update in place."""
    if len(grads) != len(params) or len(state.m) != len(params):
        raise ShapeError("gradient list does not match the parameter list")
    state.step += 1
    t = state.step
    c1 = 1.0 - cfg.beta1 ** t
    c2 = 1.0 - cfg.beta2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g.shape != p.data.shape:
            raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.data.shape}")
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * (g * g)
        update = cfg.lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps)
        p.data = (p.data - update).astype(p.data.dtype, copy=False)
    return state


class Adam:
    """Adam bound to a parameter list; bumps the owners' ``version``."""

    def __init__(self, params: Sequence[Tensor], cfg: AdamConfig = AdamConfig(), owners=()):
        self.params = list(params)
        self.cfg = cfg
        self.state = AdamState.zeros_like(self.params)
        self.owners = list(owners)

    def step(self, grads: Sequence[np.ndarray] | None = None) -> None:
        if grads is None:
            grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        adam_step(self.params, grads, self.state, self.cfg)
        for owner in self.owners:
            owner.version += 1

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


@dataclass
class GradientReport:
    """Largest relative error per parameter block."""

    max_rel_error: list[float]
    tol: float
    blocks: list[str] = field(default_factory=list)

    @property
    def worst(self) -> float:
        return max(self.max_rel_error) if self.max_rel_error else 0.0

    @property
    def passed(self) -> bool:
        return self.worst <= self.tol


def relative_error(analytic: np.ndarray, numeric: np.ndarray, abs_floor: float = 1e-6) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), abs_floor)
    return np.abs(analytic - numeric) / denom


def gradient_check(params: Sequence[Tensor], loss_fn: Callable[[], Tensor], tol: float = 1e-4,
                   h: float = 1e-4, max_entries: int | None = 24,
                   rng: np.random.Generator | int | None = 0,
                   analytic: Sequence[np.ndarray] | None = None,
                   abs_floor: float = 1e-6) -> GradientReport:
    """Compare backward gradients of ``loss_fn()`` to central differences.

    ``loss_fn`` must rebuild the graph from the current parameter values on
    every call. At most ``max_entries`` random entries per block are probed.
    ``analytic`` overrides the backward gradients (used for negative controls).
    """
    rng = np.random.default_rng(rng)
    if analytic is None:
        for p in params:
            p.grad = None
        loss_fn().backward()
        analytic = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]
    errors = []
    for p, g in zip(params, analytic):
        flat = p.data.reshape(-1)
        n = flat.size
        idx = np.arange(n) if max_entries is None or n <= max_entries else rng.choice(n, max_entries, replace=False)
        worst = 0.0
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            fp = float(loss_fn().data)
            flat[i] = orig - h
            fm = float(loss_fn().data)
            flat[i] = orig
            num = (fp - fm) / (2 * h)
            worst = max(worst, float(relative_error(np.asarray(g).reshape(-1)[i], num, abs_floor)))
        errors.append(worst)
    return GradientReport(errors, tol, [f"block{i}" for i in range(len(errors))])
