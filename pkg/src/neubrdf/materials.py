"""Analytic ground-truth materials for semi-synthetic data.

A material is one of the parametric models, a Lambertian surface, or a
two-lobe GGX mixture with tinted Schlick Fresnel on top of a Lambertian base.
Any numeric parameter may vary over the surface by blending two values with a
smooth stripe pattern along one world axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from . import parametric
from .angles import ShadingGeometry

MATERIAL_KINDS = ("lambertian", "rp", "ts", "disney", "two_lobe_ggx")


@dataclass
class Variation:
    """Blend ``param`` between its base value and ``alt`` along ``axis``:
    ``w = 0.5 + 0.5 sin(frequency * p[axis])``."""

    param: str
    alt: object
    axis: int = 2
    frequency: float = 3.0

    def weight(self, position: np.ndarray) -> np.ndarray:
        return 0.5 + 0.5 * np.sin(self.frequency * position[:, self.axis])

    def to_dict(self) -> dict:
        return {"param": self.param, "alt": np.asarray(self.alt).tolist(), "axis": self.axis,
                "frequency": self.frequency}


@dataclass
class Material:
    kind: str
    params: dict
    variations: list[Variation] = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in MATERIAL_KINDS:
            raise ValueError(f"unknown material kind {self.kind!r}; choose from {MATERIAL_KINDS}")

    # -- parameters -------------------------------------------------------
    def _field(self, name: str, position: np.ndarray, width: int) -> np.ndarray:
        n = len(position)
        base = np.broadcast_to(np.asarray(self.params[name], dtype=np.float64).reshape(1, -1), (n, width))
        out = base.copy()
        for var in self.variations:
            if var.param == name:
                alt = np.broadcast_to(np.asarray(var.alt, dtype=np.float64).reshape(1, -1), (n, width))
                w = var.weight(position)[:, None]
                out = (1 - w) * out + w * alt
        return out

    def parametric_params(self, position: np.ndarray):
        cls = parametric.PARAM_TYPES[self.kind]
        vals = {f.name: self._field(f.name, position, 3 if f.name in parametric._COLOR_FIELDS else 1)
                for f in fields(cls)}
        return cls(**vals)

    def diffuse_albedo(self, position: np.ndarray) -> np.ndarray:
        """Angle-independent albedo ``rho`` of the Lambertian part (``f_d = rho / pi``)."""
        if self.kind in ("lambertian", "two_lobe_ggx"):
            return self._field("albedo", position, 3)
        if self.kind == "ts":
            return self._field("rho_d", position, 3)
        if self.kind == "rp":
            p = self.parametric_params(position)
            return p.k_d
        p = self.parametric_params(position)
        return p.base_color * (1 - p.metallic)

    # -- evaluation -------------------------------------------------------
    def eval(self, geom: ShadingGeometry, position: np.ndarray) -> np.ndarray:
        """BRDF values (N, 3) at ``position`` for the pairs in ``geom``."""
        position = np.atleast_2d(position)
        if self.kind == "lambertian":
            return self._field("albedo", position, 3) / np.pi
        if self.kind in parametric.PARAM_TYPES:
            return np.asarray(parametric.evaluate(self.kind, self.parametric_params(position), geom))
        return self._eval_two_lobe(geom, position)

    def _eval_two_lobe(self, geom: ShadingGeometry, position: np.ndarray) -> np.ndarray:
        nl = np.maximum(geom.cos_nl, parametric.GRAZING_EPS)[:, None]
        nv = np.maximum(geom.cos_nv, parametric.GRAZING_EPS)[:, None]
        nh = geom.cos_nh[:, None]
        f = self._field("albedo", position, 3) / np.pi
        for k, _ in enumerate(self.params["lobes"]):
            alpha = self._lobe_field(k, "alpha", position, 1)
            f0 = self._lobe_field(k, "f0", position, 3)
            weight = self._lobe_field(k, "weight", position, 1)
            fres = parametric.schlick_fresnel(geom.cos_d[:, None], f0)
            d = parametric.ggx_ndf(nh, alpha)
            g = parametric.smith_g(nl, nv, alpha)
            f = f + weight * d * g * fres / (4 * nl * nv)
        return f

    def _lobe_field(self, k, name, position, width):
        val = self.params["lobes"][k][name]
        return np.broadcast_to(np.asarray(val, dtype=np.float64).reshape(1, -1), (len(position), width))

    # -- serialization ----------------------------------------------------
    def to_dict(self) -> dict:
        def plain(x):
            if isinstance(x, dict):
                return {k: plain(v) for k, v in x.items()}
            if isinstance(x, (list, tuple)):
                return [plain(v) for v in x]
            return np.asarray(x).tolist()

        return {"kind": self.kind, "params": plain(self.params),
                "variations": [v.to_dict() for v in self.variations]}

    @classmethod
    def from_dict(cls, d: dict) -> "Material":
        if "kind" not in d or "params" not in d:
            raise ValueError("material needs 'kind' and 'params'")
        mat = cls(d["kind"], dict(d["params"]), [Variation(**v) for v in d.get("variations", [])])
        mat.validate()
        return mat

    def validate(self) -> None:
        if self.kind == "two_lobe_ggx":
            required = ("albedo", "lobes")
        elif self.kind == "lambertian":
            required = ("albedo",)
        else:
            required = tuple(f.name for f in fields(parametric.PARAM_TYPES[self.kind]))
        missing = [r for r in required if r not in self.params]
        if missing:
            raise ValueError(f"{self.kind} material is missing {missing}")
        for var in self.variations:
            if var.param not in self.params:
                raise ValueError(f"variation refers to unknown parameter {var.param!r}")


def lambertian(albedo) -> Material:
    return Material("lambertian", {"albedo": list(np.broadcast_to(albedo, 3).astype(float))})


def default_two_lobe() -> Material:
    """Layered-looking material: warm diffuse base, tinted sharp lobe, broad haze lobe."""
    return Material("two_lobe_ggx", {
        "albedo": [0.35, 0.18, 0.10],
        "lobes": [
            {"alpha": 0.12, "f0": [0.95, 0.75, 0.35], "weight": 0.5},
            {"alpha": 0.45, "f0": [0.20, 0.25, 0.35], "weight": 0.25},
        ],
    })
