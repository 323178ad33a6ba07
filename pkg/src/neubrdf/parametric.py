"""Closed-form BRDF models and the activations that map raw network outputs
to their parameters.

The model functions take a :class:`~neubrdf.angles.ShadingGeometry` and a
parameter bundle whose fields are arrays or autodiff tensors (scalars shaped
``(N, 1)``, colours ``(N, 3)``). They return RGB values of shape ``(N, 3)``
and are differentiable with respect to the parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .angles import ShadingGeometry
from .nn import autodiff as ad

INV_PI = 1.0 / np.pi
#: lower bound for cosines in specular denominators
GRAZING_EPS = 1e-6

#: number of raw network outputs consumed by each model
ARITY = {"rp": 7, "ts": 7, "disney": 12}


class ArityError(ValueError):
    pass


def _col(x):
    return np.asarray(x, dtype=np.float64)[..., None]


# -- microfacet building blocks -------------------------------------------
def ggx_ndf(cos_nh, alpha):
    """Trowbridge-Reitz / GGX normal distribution."""
    a2 = alpha * alpha
    k = cos_nh * cos_nh * (a2 - 1.0) + 1.0
    return a2 / (np.pi * k * k)


def smith_g1(cos_nw, alpha):
    """GGX Smith masking for one direction: 2c / (c + sqrt(a^2 + (1 - a^2) c^2))."""
    a2 = alpha * alpha
    return 2.0 * cos_nw / (cos_nw + ad.sqrt(a2 + (1.0 - a2) * (cos_nw * cos_nw)))


def smith_g(cos_nl, cos_nv, alpha):
    """Separable Smith shadowing-masking ``G1(l) G1(v)``."""
    return smith_g1(cos_nl, alpha) * smith_g1(cos_nv, alpha)


def schlick_weight(cos):
    c = np.clip(1.0 - np.asarray(cos, dtype=np.float64), 0.0, 1.0)
    return c ** 5


def schlick_fresnel(cos_vh, f0):
    """``F0 + (1 - F0)(1 - cos)^5``."""
    return f0 + (1.0 - f0) * schlick_weight(cos_vh)


# -- parameter bundles ----------------------------------------------------
@dataclass
class RPParams:
    """Energy-conserving Phong: total reflectivity, diffuse split, exponent."""

    k_full: object
    zeta: object
    exponent: object

    @property
    def k_d(self):
        return self.zeta * self.k_full

    @property
    def k_s(self):
        return (1.0 - self.zeta) * self.k_full


@dataclass
class TSParams:
    """Torrance-Sparrow with GGX/Smith/Schlick; ``alpha = roughness**2``."""

    roughness: object
    rho_d: object
    f0: object


@dataclass
class DisneyParams:
    """Isotropic principled BRDF; ``anisotropic`` is fixed at 0."""

    base_color: object
    metallic: object
    subsurface: object
    specular: object
    specular_tint: object
    roughness: object
    sheen: object
    sheen_tint: object
    clearcoat: object
    clearcoat_gloss: object

    anisotropic = 0.0


def constant_params(kind: str, n: int = 1, **values):
    """Broadcast plain numbers to an ``n``-sample parameter bundle."""
    cls = PARAM_TYPES[kind]
    out = {}
    for f in fields(cls):
        val = np.asarray(values[f.name], dtype=np.float64)
        width = 3 if f.name in _COLOR_FIELDS else 1
        out[f.name] = np.broadcast_to(val.reshape(1, -1), (n, width)).copy()
    return cls(**out)


_COLOR_FIELDS = {"k_full", "zeta", "rho_d", "f0", "base_color"}


# -- models ---------------------------------------------------------------
def eval_torrance_sparrow(p: TSParams, geom: ShadingGeometry, check: bool = False):
    """``(1 - F) rho_d / pi + D F G / (4 <n,l><n,v>)``."""
    if check:
        geom.check_hemisphere()
    nl = _col(np.maximum(geom.cos_nl, GRAZING_EPS))
    nv = _col(np.maximum(geom.cos_nv, GRAZING_EPS))
    nh = _col(geom.cos_nh)
    alpha = ad.maximum(p.roughness * p.roughness, 1e-7)
    fresnel = schlick_fresnel(_col(geom.cos_d), p.f0)
    spec = ggx_ndf(nh, alpha) * smith_g(nl, nv, alpha) * fresnel / (4.0 * nl * nv)
    return (1.0 - fresnel) * p.rho_d * INV_PI + spec


def eval_realistic_phong(p: RPParams, geom: ShadingGeometry, check: bool = False):
    """``k_d / pi + k_s (n + 2) / (2 pi) max(0, <r, v>)^n`` with ``r`` the
    mirror direction of ``l``."""
    if check:
        geom.check_hemisphere()
    # <reflect(l, n), v> written symmetrically in (l, v)
    cos_rv = 2.0 * geom.cos_nl * geom.cos_nv - geom.cos_lv
    cos_rv = _col(np.clip(cos_rv, 0.0, 1.0))
    log_c = np.log(np.maximum(cos_rv, 1e-300))
    lobe = ad.exp(p.exponent * log_c) * (cos_rv > 0)
    norm = (p.exponent + 2.0) * (0.5 * INV_PI)
    return p.k_d * INV_PI + p.k_s * norm * lobe


def _gtr1(cos_nh, a):
    a2 = a * a
    t = 1.0 + (a2 - 1.0) * cos_nh * cos_nh
    return (a2 - 1.0) / (np.pi * ad.log(a2) * t)


def _smith_g_ggx(cos_nw, alpha_g):
    # G1 / (2 cos): the 1/(4 cos cos) factor is folded in
    a = alpha_g * alpha_g
    b = cos_nw * cos_nw
    return 1.0 / (cos_nw + ad.sqrt(a + b - a * b))


def eval_disney_iso(p: DisneyParams, geom: ShadingGeometry, check: bool = False,
                    return_terms: bool = False):
    """Burley's principled BRDF (diffuse with subsurface blend, GTR2 specular,
    sheen, GTR1 clearcoat), isotropic."""
    if check:
        geom.check_hemisphere()
    nl = _col(np.maximum(geom.cos_nl, GRAZING_EPS))
    nv = _col(np.maximum(geom.cos_nv, GRAZING_EPS))
    nh = _col(geom.cos_nh)
    lh = _col(geom.cos_d)

    base = p.base_color
    lum = 0.3 * base[:, 0:1] + 0.6 * base[:, 1:2] + 0.1 * base[:, 2:3]
    tint = base / ad.maximum(lum, 1e-12)
    spec0 = ad.lerp(p.specular * 0.08 * ad.lerp(1.0, tint, p.specular_tint), base, p.metallic)
    sheen_col = ad.lerp(1.0, tint, p.sheen_tint)

    fl, fv = schlick_weight(nl), schlick_weight(nv)
    fd90 = 0.5 + 2.0 * lh * lh * p.roughness
    fd = ad.lerp(1.0, fd90, fl) * ad.lerp(1.0, fd90, fv)
    fss90 = lh * lh * p.roughness
    fss = ad.lerp(1.0, fss90, fl) * ad.lerp(1.0, fss90, fv)
    ss = 1.25 * (fss * (1.0 / (nl + nv) - 0.5) + 0.5)

    alpha = ad.maximum(p.roughness * p.roughness, 0.001)
    ds = ggx_ndf(nh, alpha)
    fh = schlick_weight(lh)
    fs = ad.lerp(spec0, 1.0, fh)
    gs = _smith_g_ggx(nl, alpha) * _smith_g_ggx(nv, alpha)
    specular = gs * fs * ds

    sheen = fh * p.sheen * sheen_col
    dr = _gtr1(nh, ad.lerp(0.1, 0.001, p.clearcoat_gloss))
    fr = ad.lerp(0.04, 1.0, fh)
    gr = _smith_g_ggx(nl, 0.25) * _smith_g_ggx(nv, 0.25)
    clearcoat = 0.25 * p.clearcoat * gr * fr * dr

    diffuse = (INV_PI * ad.lerp(fd, ss, p.subsurface) * base + sheen) * (1.0 - p.metallic)
    total = diffuse + specular + clearcoat
    if return_terms:
        return total, {"diffuse": diffuse, "specular": specular, "clearcoat": clearcoat}
    return total


def eval_lambertian(albedo, geom: ShadingGeometry):
    albedo = np.asarray(albedo, dtype=np.float64)
    return np.broadcast_to(albedo * INV_PI, (len(geom), 3)).copy()


PARAM_TYPES = {"rp": RPParams, "ts": TSParams, "disney": DisneyParams}
EVALUATORS = {"rp": eval_realistic_phong, "ts": eval_torrance_sparrow, "disney": eval_disney_iso}


def evaluate(kind: str, params, geom: ShadingGeometry, check: bool = False):
    return EVALUATORS[kind](params, geom, check=check)


def activate_params(raw, kind: str):
    """Map raw network outputs ``(N, ARITY[kind])`` into parameter ranges.

    Sigmoid for bounded parameters, ``softplus + 1`` for the Phong exponent,
    and a sigmoid with halved input for roughness.
    """
    if kind not in ARITY:
        raise ValueError(f"unknown parametric model {kind!r}")
    width = raw.shape[-1]
    if width != ARITY[kind]:
        raise ArityError(f"{kind} expects {ARITY[kind]} raw values, got {width}")
    if raw.ndim == 1:
        raw = ad.reshape(raw, (1, -1))
    s = ad.sigmoid
    if kind == "rp":
        return RPParams(s(raw[:, 0:3]), s(raw[:, 3:6]), ad.softplus(raw[:, 6:7]) + 1.0)
    if kind == "ts":
        return TSParams(s(raw[:, 0:1] * 0.5), s(raw[:, 1:4]), s(raw[:, 4:7]))
    return DisneyParams(
        base_color=s(raw[:, 0:3]), metallic=s(raw[:, 3:4]), subsurface=s(raw[:, 4:5]),
        specular=s(raw[:, 5:6]), specular_tint=s(raw[:, 6:7]), roughness=s(raw[:, 7:8] * 0.5),
        sheen=s(raw[:, 8:9]), sheen_tint=s(raw[:, 9:10]), clearcoat=s(raw[:, 10:11]),
        clearcoat_gloss=s(raw[:, 11:12]),
    )


def params_to_dict(params) -> dict:
    return {f.name: np.asarray(ad.value(getattr(params, f.name))).tolist() for f in fields(params)}
