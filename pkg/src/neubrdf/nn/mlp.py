"""Fixed-topology ReLU MLPs with input skips and a late (direction) input."""

from __future__ import annotations

from dataclasses import dataclass, asdict
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

#: output nonlinearities understood by :func:`apply_head`
HEAD_ACTIVATIONS = ("linear", "sigmoid", "softplus", "softplus_half", "sigmoid_half_input")


class ShapeError(ValueError):
    pass


class StaleTapeError(RuntimeError):
    pass


@dataclass(frozen=True)
class MLPConfig:
    """Topology of one MLP.

    ``depth`` counts hidden ReLU layers; a linear output layer follows them
    unless ``heads`` is empty, in which case the last hidden activations are
    returned as features.
    ``skip_layer`` re-concatenates the network input in front of that hidden
    layer (0-based). ``late_input_dim`` features are concatenated in front of
    hidden layer ``late_input_layer``; when that layer is at or before the
    skip layer they ride through the skip concat as well.
    """

    input_dim: int
    heads: tuple[tuple[str, int], ...] = (("linear", 3),)
    width: int = 128
    depth: int = 6
    skip_layer: int | None = None
    late_input_dim: int = 0
    late_input_layer: int = 0

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.skip_layer is not None and not 0 <= self.skip_layer < self.depth:
            raise ValueError(f"skip_layer {self.skip_layer} outside [0, {self.depth})")
        if not 0 <= self.late_input_layer < self.depth:
            raise ValueError(f"late_input_layer {self.late_input_layer} outside [0, {self.depth})")
        for act, size in self.heads:
            if act not in HEAD_ACTIVATIONS:
                raise ValueError(f"unknown head activation {act!r}")
            if size < 1:
                raise ValueError("head size must be positive")

    @property
    def output_dim(self) -> int:
        if not self.heads:
            return self.width
        return sum(size for _, size in self.heads)

    def _skip_active(self) -> bool:
        # a skip at layer 0 is the plain input and adds nothing
        return self.skip_layer is not None and self.skip_layer > 0

    def layer_input_dims(self) -> list[int]:
        dims = []
        late = self.late_input_dim
        for i in range(self.depth):
            if i == 0:
                d = self.input_dim + (late if self.late_input_layer == 0 else 0)
            else:
                d = self.width
                if self._skip_active() and i == self.skip_layer:
                    d += self.input_dim
                    if self.late_input_layer <= self.skip_layer:
                        d += late
                elif i == self.late_input_layer:
                    d += late
            dims.append(d)
        return dims

    def parameter_count(self) -> int:
        dims = self.layer_input_dims()
        n = sum(d * self.width + self.width for d in dims)
        if not self.heads:
            return n
        return n + self.width * self.output_dim + self.output_dim

    def to_dict(self) -> dict:
        d = asdict(self)
        d["heads"] = [list(h) for h in self.heads]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MLPConfig":
        d = dict(d)
        d["heads"] = tuple((str(a), int(s)) for a, s in d["heads"])
        return cls(**d)


def apply_head(raw, activation: str):
    if activation == "linear":
        return raw
    if activation == "sigmoid":
        return ad.sigmoid(raw)
    if activation == "softplus":
        return ad.softplus(raw)
    if activation == "softplus_half":
        return ad.softplus(raw) * 0.5
    if activation == "sigmoid_half_input":
        return ad.sigmoid(raw * 0.5)
    raise ValueError(f"unknown head activation {activation!r}")


class MLP:
    """Weights and biases of one MLP, stored as gradient-tracking leaves.

    Parameters are ordered ``W0, b0, W1, b1, ..., W_out, b_out``. ``version``
    increases whenever the parameters are modified in place; tapes recorded
    against an older version are rejected by :func:`mlp_backward`.
    """

    def __init__(self, config: MLPConfig, rng: np.random.Generator | int | None = 0,
                 dtype=np.float32):
        self.config = config
        self.dtype = np.dtype(dtype)
        self.version = 0
        rng = np.random.default_rng(rng)
        self.params: list[Tensor] = []
        fan_ins = config.layer_input_dims()
        fan_outs = [config.width] * config.depth
        if config.heads:
            fan_ins = fan_ins + [config.width]
            fan_outs = fan_outs + [config.output_dim]
        for fan_in, fan_out in zip(fan_ins, fan_outs):
            bound = np.sqrt(6.0 / fan_in)
            w = rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(self.dtype)
            self.params.append(Tensor(w, requires_grad=True))
            self.params.append(Tensor(np.zeros(fan_out, dtype=self.dtype), requires_grad=True))

    @property
    def num_parameters(self) -> int:
        return int(sum(p.data.size for p in self.params))

    def zero_(self) -> "MLP":
        for p in self.params:
            p.data[...] = 0
        self.version += 1
        return self

    def astype(self, dtype) -> "MLP":
        self.dtype = np.dtype(dtype)
        for p in self.params:
            p.data = p.data.astype(self.dtype)
        self.version += 1
        return self

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.data.ravel() for p in self.params])

    def set_flat(self, flat: np.ndarray) -> None:
        offset = 0
        for p in self.params:
            n = p.data.size
            p.data = np.asarray(flat[offset:offset + n], dtype=self.dtype).reshape(p.data.shape)
            offset += n
        self.version += 1

    def forward(self, x, late=None) -> Tensor:
        cfg = self.config
        x = _cast(x, self.dtype)
        if x.shape[-1] != cfg.input_dim:
            raise ShapeError(f"input width {x.shape[-1]} != input_dim {cfg.input_dim}")
        if cfg.late_input_dim:
            if late is None:
                raise ShapeError("this MLP expects a late input")
            late = _cast(late, self.dtype)
            if late.shape[-1] != cfg.late_input_dim:
                raise ShapeError(f"late input width {late.shape[-1]} != {cfg.late_input_dim}")
            if late.shape[0] != x.shape[0]:
                raise ShapeError("batch size mismatch between input and late input")
        h = None
        for i in range(cfg.depth):
            if i == 0:
                inp = ad.concat([x, late]) if (cfg.late_input_dim and cfg.late_input_layer == 0) else x
            else:
                parts = [h]
                if cfg._skip_active() and i == cfg.skip_layer:
                    parts.append(x)
                    if cfg.late_input_dim and cfg.late_input_layer <= cfg.skip_layer:
                        parts.append(late)
                elif cfg.late_input_dim and i == cfg.late_input_layer:
                    parts.append(late)
                inp = ad.concat(parts) if len(parts) > 1 else h
            w, b = self.params[2 * i], self.params[2 * i + 1]
            h = ad.relu(inp @ w + b)
        if not cfg.heads:
            return h
        raw = h @ self.params[-2] + self.params[-1]
        outs = []
        start = 0
        for act, size in cfg.heads:
            outs.append(apply_head(raw[:, start:start + size], act))
            start += size
        return outs[0] if len(outs) == 1 else ad.concat(outs)

    __call__ = forward


def _cast(x, dtype):
    if isinstance(x, Tensor):
        return x if x.dtype == dtype else ad.custom(x, lambda a: a.astype(dtype), lambda a: 1.0)
    return np.asarray(x, dtype=dtype)


@dataclass
class Tape:
    """Record of one forward pass, sufficient for exact gradients."""

    mlp: MLP
    output: Tensor
    inputs: tuple[Tensor, ...]
    version: int


def mlp_forward(mlp: MLP, x, late=None) -> tuple[Tensor, Tape]:
    """Run ``mlp`` and keep a tape for :func:`mlp_backward`."""
    xt = Tensor(np.asarray(ad.value(x), dtype=mlp.dtype), requires_grad=True)
    inputs = [xt]
    lt = None
    if late is not None:
        lt = Tensor(np.asarray(ad.value(late), dtype=mlp.dtype), requires_grad=True)
        inputs.append(lt)
    out = mlp.forward(xt, lt)
    return out, Tape(mlp, out, tuple(inputs), mlp.version)


def mlp_backward(tape: Tape, output_grad) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Gradients of ``sum(output * output_grad)``.

    Returns ``(parameter_grads, input_grads)`` with parameter gradients in
    declaration order and one input gradient per forward input.
    """
    if tape.version != tape.mlp.version:
        raise StaleTapeError("tape does not match the current MLP parameters")
    params = tape.mlp.params
    saved = [p.grad for p in params]
    for p in params:
        p.grad = None
    for t in tape.inputs:
        t.grad = None
    tape.output.backward(np.asarray(output_grad, dtype=tape.output.dtype))
    grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]
    input_grads = [t.grad if t.grad is not None else np.zeros_like(t.data) for t in tape.inputs]
    for p, g in zip(params, saved):
        p.grad = g
    return grads, input_grads


def parameter_groups(mlps: Sequence[MLP]) -> list[Tensor]:
    return [p for m in mlps for p in m.params]
