"""Tone-mapped image loss, enhanced-split regularizers and the Adam loop."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .angles import ShadingGeometry
from .neural import NeuralBRDF, apply_reciprocity_strategy
from .nn import autodiff as ad
from .nn.optim import Adam, AdamConfig
from .tonemap import gamma_clamped

REG_WEIGHT = 5e-4


class DivergenceError(RuntimeError):
    """Raised when the loss or a gradient stops being finite."""


@dataclass
class TrainConfig:
    iterations: int = 2000
    batch_size: int = 1 << 15
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    reg_diffuse: float = REG_WEIGHT
    reg_specular: float = REG_WEIGHT
    seed: int = 0
    checkpoint_every: int = 0
    checkpoint_dir: str | None = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.reg_diffuse < 0 or self.reg_specular < 0:
            raise ValueError("regularizer weights must be >= 0")

    @property
    def adam(self) -> AdamConfig:
        return AdamConfig(self.lr, self.beta1, self.beta2, self.eps)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)


# -- losses -----------------------------------------------------------------
def image_loss(pred, gt):
    """``mean((gamma(pred) - gamma(gt))^2)`` with both sides clamped to [0, 1]."""
    diff = gamma_clamped(pred) - gamma_clamped(np.asarray(gt))
    return ad.mean(diff * diff)


def regularizers(f_d_radiance, f_s, gt):
    """``(mean |gamma(f_d L_i I_s cos) - gamma(gt)|, mean |f_s|)``.

    The diffuse term compares the radiance the diffuse part alone would
    produce with the observation.
    """
    reg_d = ad.mean(ad.abs_(gamma_clamped(f_d_radiance) - gamma_clamped(np.asarray(gt))))
    reg_s = ad.mean(ad.abs_(f_s))
    return reg_d, reg_s


# -- training pool ----------------------------------------------------------
@dataclass
class TrainingPool:
    """Flattened training samples: encodings, geometry, shading factors and targets."""

    x_enc: np.ndarray  # (N, x_dim) float32
    geom: ShadingGeometry
    shade: np.ndarray  # L_i * I_s * cos(theta_l), (N, 3)
    target: np.ndarray  # observed radiance (N, 3)

    @classmethod
    def from_records(cls, records: np.ndarray, x_enc: np.ndarray) -> "TrainingPool":
        n = records["normal"]
        geom = ShadingGeometry.from_vectors(n, records["view_dir"], records["light_dir"])
        cos_l = np.maximum(geom.cos_nl, 0.0)
        shade = records["irradiance"] * (records["visibility"] * cos_l)[:, None]
        return cls(np.asarray(x_enc, dtype=np.float32), geom, shade, records["radiance"].astype(np.float64))

    def __len__(self) -> int:
        return len(self.target)


def batch_loss(model: NeuralBRDF, x_enc, geom: ShadingGeometry, shade, target, cfg: TrainConfig):
    """Total loss tensor and its float parts for one batch."""
    out = model.evaluate(x_enc, geom)
    pred = out.f * shade
    loss = image_loss(pred, target)
    parts = {"image": float(ad.value(loss)), "reg_diffuse": 0.0, "reg_specular": 0.0}
    if model.spec.enhanced:
        reg_d, reg_s = regularizers(out.f_d * shade, out.f_s, target)
        parts["reg_diffuse"] = float(ad.value(reg_d))
        parts["reg_specular"] = float(ad.value(reg_s))
        loss = loss + cfg.reg_diffuse * reg_d + cfg.reg_specular * reg_s
    return loss, parts


@dataclass
class TrainResult:
    model: NeuralBRDF
    losses: list[dict] = field(default_factory=list)
    optimizer: Adam | None = None

    @property
    def loss_curve(self) -> np.ndarray:
        return np.array([r["loss"] for r in self.losses])


def train_model(model: NeuralBRDF, pool: TrainingPool, cfg: TrainConfig,
                log_every: int = 0, log=print) -> TrainResult:
    """Adam on random batches of colour values (RGB triples), reshuffled per epoch.

    Deterministic for a fixed seed in single-thread mode.
    """
    if len(pool) == 0:
        raise ValueError("training pool is empty")
    opt = Adam(model.params, cfg.adam, owners=list(model.mlps.values()))
    result = TrainResult(model, [], opt)
    if cfg.iterations == 0:
        return result
    shuffle_seq, swap_seq = np.random.SeedSequence(cfg.seed).spawn(2)
    shuffle_rng = np.random.default_rng(shuffle_seq)
    swap_rng = np.random.default_rng(swap_seq)
    batch = min(cfg.batch_size, len(pool))
    perm = shuffle_rng.permutation(len(pool))
    cursor = 0
    ckpt_dir = Path(cfg.checkpoint_dir) if cfg.checkpoint_dir else None
    for it in range(1, cfg.iterations + 1):
        if cursor + batch > len(pool):
            perm = shuffle_rng.permutation(len(pool))
            cursor = 0
        idx = np.sort(perm[cursor:cursor + batch])
        cursor += batch
        geom = apply_reciprocity_strategy(model.spec.reciprocity, pool.geom.subset(idx), swap_rng)
        loss, parts = batch_loss(model, pool.x_enc[idx], geom, pool.shade[idx], pool.target[idx], cfg)
        value = float(ad.value(loss))
        if not np.isfinite(value):
            raise DivergenceError(f"loss became {value} at iteration {it}")
        opt.zero_grad()
        loss.backward()
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in model.params]
        if not all(np.all(np.isfinite(g)) for g in grads):
            raise DivergenceError(f"non-finite gradient at iteration {it}")
        opt.step(grads)
        result.losses.append({"iteration": it, "loss": value, **parts})
        if log_every and it % log_every == 0:
            log(f"iter {it:6d}  loss {value:.6e}")
        if ckpt_dir and cfg.checkpoint_every and it % cfg.checkpoint_every == 0:
            ckpt_dir.mkdir(parents=True, exist_ok=True)
            model.save(ckpt_dir / f"ckpt_{it:06d}.bin", opt.state, {"iteration": it})
    return result


def write_loss_csv(path: str | Path, losses: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "loss", "image", "reg_diffuse", "reg_specular"])
        for r in losses:
            w.writerow([r["iteration"], repr(r["loss"]), repr(r["image"]), repr(r["reg_diffuse"]),
                        repr(r["reg_specular"])])
