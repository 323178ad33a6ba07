"""Neural BRDF architectures.

Seven models share one interface: a parameter head for each of the three
analytic models, a single MLP, and two additive diffuse/specular splits
(separate networks or a shared trunk). The purely neural models accept the
reciprocity input mapping and, for the additive ones, the enhanced split
``f = (1 - xi) f_d + f_s``.

All models evaluate ``f(x, l, v)`` from a surface encoding ``x_enc`` of shape
``(N, x_dim)`` and a :class:`~neubrdf.angles.ShadingGeometry` of length N.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import parametric
from .angles import ShadingGeometry, encoding_width, positional_encode
from .nn import autodiff as ad
from .nn.checkpoint import read_checkpoint, write_checkpoint
from .nn.mlp import MLP, MLPConfig

PARAM_KINDS = ("rp", "ts", "disney")
NEURAL_KINDS = ("single_mlp", "additive_separate", "additive_shared")
KINDS = PARAM_KINDS + NEURAL_KINDS
RECIPROCITY_MODES = ("none", "random_swap", "mapping")

#: linear-space albedo range obtained from the sRGB range [0.03, 0.8]
SRGB_ALBEDO_CLAMP = (0.0023, 0.6038)
MODEL_SCHEMA = 1


@dataclass(frozen=True)
class ModelSpec:
    """Architecture descriptor; stored verbatim in checkpoint headers.

    ``dir_feed_layer`` is the ablation knob for how many layers the angle
    features pass through. ``None`` selects each architecture's default:
    layer 0 of the single MLP (6 direction layers), layer 0 of the specular
    MLP for the separate split (4), and the end of the 5-layer trunk for the
    shared split (2 head layers).
    """

    kind: str
    x_dim: int
    reciprocity: str = "none"
    enhanced: bool = False
    spec_channels: str = "rgb"
    albedo_clamp: tuple[float, float] | None = None
    dir_feed_layer: int | None = None
    width: int = 128
    num_frequencies: int = 3
    include_raw: bool = True
    spec_scale_half: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}; choose from {KINDS}")
        if self.reciprocity not in RECIPROCITY_MODES:
            raise ValueError(f"unknown reciprocity mode {self.reciprocity!r}")
        if self.enhanced and self.kind not in ("additive_separate", "additive_shared"):
            raise ValueError("the enhanced split needs an additive architecture")
        if self.spec_channels not in ("rgb", "scalar"):
            raise ValueError("spec_channels must be 'rgb' or 'scalar'")
        if self.albedo_clamp is not None:
            lo, hi = self.albedo_clamp
            if not 0 <= lo < hi <= 1:
                raise ValueError("albedo_clamp must satisfy 0 <= lo < hi <= 1")
        if self.x_dim < 1:
            raise ValueError("x_dim must be positive")

    @property
    def num_angles(self) -> int:
        return 4 if self.reciprocity == "mapping" else 3

    @property
    def angle_dim(self) -> int:
        return encoding_width(self.num_angles, self.num_frequencies, self.include_raw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["albedo_clamp"] = list(self.albedo_clamp) if self.albedo_clamp else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        d = dict(d)
        if d.get("albedo_clamp") is not None:
            d["albedo_clamp"] = tuple(d["albedo_clamp"])
        return cls(**d)


@dataclass
class BRDFOutput:
    """``f`` plus the additive parts when the architecture has them."""

    f: object
    f_d: object = None
    f_s: object = None
    xi: object = None


def _spec_head(spec: ModelSpec) -> tuple[tuple[str, int], ...]:
    act = "softplus_half" if spec.spec_scale_half else "softplus"
    heads = [(act, 1 if spec.spec_channels == "scalar" else 3)]
    if spec.enhanced:
        heads.append(("sigmoid", 3))
    return tuple(heads)


def build_configs(spec: ModelSpec) -> dict[str, MLPConfig]:
    """MLP topologies of an architecture, keyed by role."""
    w, x, a = spec.width, spec.x_dim, spec.angle_dim
    d = spec.dir_feed_layer
    if spec.kind in PARAM_KINDS:
        return {"params": MLPConfig(x, (("linear", parametric.ARITY[spec.kind]),), w, 6, 2)}
    if spec.kind == "single_mlp":
        d = 0 if d is None else d
        if not 0 <= d < 6:
            raise ValueError("single_mlp dir_feed_layer must lie in [0, 6)")
        return {"mlp": MLPConfig(x, (("softplus", 3),), w, 6, 2, late_input_dim=a, late_input_layer=d)}
    if spec.kind == "additive_separate":
        d = 0 if d is None else d
        if not 0 <= d < 4:
            raise ValueError("additive_separate dir_feed_layer must lie in [0, 4)")
        # fewer direction layers: a shallower specular MLP without the skip
        spec_depth = 4 - d
        spec_skip = 1 if d == 0 else None
        return {
            "diffuse": MLPConfig(x, (("sigmoid", 3),), w, 4, 1),
            "specular": MLPConfig(x, _spec_head(spec), w, spec_depth, spec_skip, late_input_dim=a),
        }
    d = 5 if d is None else d
    if not 1 <= d <= 5:
        raise ValueError("additive_shared dir_feed_layer must lie in [1, 5]")
    extra = 5 - d
    return {
        "trunk": MLPConfig(x, (), w, d, 2 if d > 2 else None),
        "diffuse": MLPConfig(w, (("sigmoid", 3),), w, 1 + extra),
        "specular": MLPConfig(w, _spec_head(spec), w, 2 + extra, late_input_dim=a),
    }


def enhanced_combine(f_d, f_s, xi):
    """``(1 - xi) * f_d + f_s``."""
    return (1.0 - xi) * f_d + f_s


def apply_reciprocity_strategy(mode: str, geom: ShadingGeometry,
                               rng: np.random.Generator | None = None) -> ShadingGeometry:
    """Per-sample training transform.

    ``random_swap`` exchanges ``v`` and ``l`` with probability 1/2 using
    ``rng``; ``mapping`` and ``none`` return the geometry unchanged (the
    mapping is applied inside the model on every evaluation).
    """
    if mode not in RECIPROCITY_MODES:
        raise ValueError(f"unknown reciprocity mode {mode!r}")
    if mode != "random_swap":
        return geom
    if rng is None:
        raise ValueError("random_swap needs the training RNG")
    swap = rng.random(len(geom)) < 0.5
    if not swap.any():
        return geom
    v = np.where(swap[:, None], geom.l, geom.v)
    l = np.where(swap[:, None], geom.v, geom.l)
    return ShadingGeometry.from_vectors(geom.frame.n, v, l, geom.frame)


class NeuralBRDF:
    """A BRDF architecture together with its MLP weights."""

    def __init__(self, spec: ModelSpec, seed: int = 0, dtype=np.float32):
        self.spec = spec
        self.configs = build_configs(spec)
        ss = np.random.SeedSequence(seed)
        rngs = ss.spawn(len(self.configs))
        self.mlps: dict[str, MLP] = {
            name: MLP(cfg, np.random.default_rng(r), dtype)
            for (name, cfg), r in zip(self.configs.items(), rngs)
        }

    # -- bookkeeping ------------------------------------------------------
    @property
    def kind(self) -> str:
        return self.spec.kind

    @property
    def is_additive(self) -> bool:
        return self.spec.kind in ("additive_separate", "additive_shared")

    @property
    def params(self):
        return [p for m in self.mlps.values() for p in m.params]

    def parameter_count(self) -> int:
        return sum(m.num_parameters for m in self.mlps.values())

    def expected_parameter_count(self) -> int:
        return sum(cfg.parameter_count() for cfg in self.configs.values())

    def zero_(self) -> "NeuralBRDF":
        for m in self.mlps.values():
            m.zero_()
        return self

    def astype(self, dtype) -> "NeuralBRDF":
        for m in self.mlps.values():
            m.astype(dtype)
        return self

    # -- evaluation -------------------------------------------------------
    def angle_features(self, geom: ShadingGeometry) -> np.ndarray:
        if self.spec.reciprocity == "mapping":
            ang = geom.reciprocal.as_array()
        else:
            ang = geom.angles.as_array()
        return positional_encode(ang, self.spec.num_frequencies, self.spec.include_raw)

    def evaluate(self, x_enc, geom: ShadingGeometry) -> BRDFOutput:
        """Differentiable evaluation; returns tensors when weights track gradients."""
        x_enc = np.asarray(x_enc)
        if x_enc.shape != (len(geom), self.spec.x_dim):
            raise ValueError(f"x_enc shape {x_enc.shape} != ({len(geom)}, {self.spec.x_dim})")
        kind = self.spec.kind
        if kind in PARAM_KINDS:
            raw = self.mlps["params"](x_enc)
            raw = ad.custom(raw, lambda a: a.astype(np.float64), lambda a: 1.0)
            p = parametric.activate_params(raw, kind)
            return BRDFOutput(parametric.evaluate(kind, p, geom))
        ang = self.angle_features(geom)
        if kind == "single_mlp":
            return BRDFOutput(self.mlps["mlp"](x_enc, ang))
        if kind == "additive_separate":
            d_out = self.mlps["diffuse"](x_enc)
            s_out = self.mlps["specular"](x_enc, ang)
        else:
            feats = self.mlps["trunk"](x_enc)
            d_out = self.mlps["diffuse"](feats)
            s_out = self.mlps["specular"](feats, ang)
        f_d = self._diffuse(d_out)
        nspec = 1 if self.spec.spec_channels == "scalar" else 3
        f_s = s_out[:, :nspec]
        if nspec == 1:
            f_s = ad.broadcast_to(f_s, (f_s.shape[0], 3))
        if self.spec.enhanced:
            xi = s_out[:, nspec:nspec + 3]
            return BRDFOutput(enhanced_combine(f_d, f_s, xi), f_d, f_s, xi)
        return BRDFOutput(f_d + f_s, f_d, f_s)

    def _diffuse(self, sig):
        if self.spec.albedo_clamp is None:
            return sig * (1.0 / np.pi)
        lo, hi = self.spec.albedo_clamp
        return (lo + (hi - lo) * sig) * (1.0 / np.pi)

    def __call__(self, x_enc, geom: ShadingGeometry) -> np.ndarray:
        return self.predict(x_enc, geom)

    def predict(self, x_enc, geom: ShadingGeometry, chunk: int = 1 << 15,
                parts: bool = False):
        """Numpy evaluation in chunks without recording a graph."""
        n = len(geom)
        outs: dict[str, list] = {"f": [], "f_d": [], "f_s": [], "xi": []}
        with ad.no_grad():
            for s in range(0, n, chunk):
                idx = slice(s, min(n, s + chunk))
                o = self.evaluate(np.asarray(x_enc)[idx], geom.subset(idx))
                for k in outs:
                    val = getattr(o, k)
                    if val is not None:
                        outs[k].append(np.asarray(ad.value(val), dtype=np.float64))
        res = {k: (np.concatenate(v) if v else None) for k, v in outs.items()}
        if n == 0:
            res["f"] = np.zeros((0, 3))
        return res if parts else res["f"]

    # -- persistence ------------------------------------------------------
    def header(self) -> dict:
        return {
            "schema": MODEL_SCHEMA,
            "model": self.spec.to_dict(),
            "mlps": {k: c.to_dict() for k, c in self.configs.items()},
            "dtype": str(next(iter(self.mlps.values())).dtype),
        }

    def save(self, path: str | Path, adam_state=None, extra: dict | None = None) -> None:
        header = self.header()
        if extra:
            header["extra"] = extra
        moments = (adam_state.m, adam_state.v) if adam_state is not None else None
        step = adam_state.step if adam_state is not None else 0
        write_checkpoint(path, header, self.params, moments, step)

    @classmethod
    def load(cls, path: str | Path) -> tuple["NeuralBRDF", dict]:
        header, blocks, moments = read_checkpoint(path)
        spec = ModelSpec.from_dict(header["model"])
        model = cls(spec, dtype=np.dtype(header.get("dtype", "float32")))
        params = model.params
        if len(blocks) != len(params):
            raise ValueError(f"{path}: checkpoint holds {len(blocks)} blocks, model needs {len(params)}")
        for p, b in zip(params, blocks):
            if p.data.shape != b.shape:
                raise ValueError(f"{path}: block shape {b.shape} != {p.data.shape}")
            p.data = b
        for m in model.mlps.values():
            m.version += 1
        header["adam_moments"] = moments
        return model, header
