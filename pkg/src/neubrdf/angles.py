"""Direction algebra: local frames, Rusinkiewicz angles, the reciprocity
mapping and positional encoding.

All functions are vectorised over a leading batch axis; single vectors of
shape ``(3,)`` are accepted too.

The half/difference construction is written so that exchanging ``v`` and
``l`` changes the intermediate quantities only by exact IEEE operations
(commuted sums and products, exact negation). Consequently everything that
depends on ``phi_d`` only modulo pi is bitwise invariant under the exchange.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi
#: below this, theta_h or theta_d count as zero and phi_d is set to 0
DEGENERATE_EPS = 1e-12


class DegenerateDirectionsError(ValueError):
    """Raised when v = -l and the half vector is undefined."""


class HemisphereError(ValueError):
    """Raised when a direction lies on or below the tangent plane."""


def normalize(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def dot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1] + a[..., 2] * b[..., 2]


def half_vector(v: np.ndarray, l: np.ndarray) -> np.ndarray:
    """Normalised ``v + l``."""
    s = np.asarray(v, dtype=np.float64) + np.asarray(l, dtype=np.float64)
    norm = np.linalg.norm(s, axis=-1, keepdims=True)
    if np.any(norm <= 1e-12):
        raise DegenerateDirectionsError("half vector undefined for v = -l")
    return s / norm


@dataclass(frozen=True)
class LocalFrame:
    """Orthonormal shading frame: normal ``n``, tangent ``t``, binormal ``b = n x t``."""

    n: np.ndarray
    t: np.ndarray
    b: np.ndarray

    def to_local(self, w: np.ndarray) -> np.ndarray:
        w = np.asarray(w, dtype=np.float64)
        return np.stack([dot(w, self.t), dot(w, self.b), dot(w, self.n)], axis=-1)

    def to_world(self, w: np.ndarray) -> np.ndarray:
        w = np.asarray(w, dtype=np.float64)
        return (w[..., 0:1] * self.t + w[..., 1:2] * self.b + w[..., 2:3] * self.n)


def frame_from_normal(n: np.ndarray) -> LocalFrame:
    """Deterministic tangent frame: the coordinate axis least aligned with
    ``n`` is Gram-Schmidt projected onto the tangent plane."""
    n = normalize(n)
    axis = np.argmin(np.abs(n), axis=-1)
    e = np.zeros_like(n)
    np.put_along_axis(e, np.asarray(axis)[..., None], 1.0, axis=-1)
    t = normalize(e - dot(e, n)[..., None] * n)
    b = np.cross(n, t)
    return LocalFrame(n, t, b)


@dataclass(frozen=True)
class RusinkiewiczAngles:
    """Isotropic Rusinkiewicz angles (radians)."""

    theta_h: np.ndarray
    theta_d: np.ndarray
    phi_d: np.ndarray

    def as_array(self) -> np.ndarray:
        return np.stack(np.broadcast_arrays(self.theta_h, self.theta_d, self.phi_d), axis=-1)


@dataclass(frozen=True)
class ReciprocalAngles:
    """``(theta_h, theta_d, phi_d mod pi, phi_d mod pi + pi)``."""

    theta_h: np.ndarray
    theta_d: np.ndarray
    phi_d_mod_pi: np.ndarray
    phi_d_mod_pi_plus_pi: np.ndarray

    def as_array(self) -> np.ndarray:
        return np.stack(np.broadcast_arrays(self.theta_h, self.theta_d, self.phi_d_mod_pi,
                                            self.phi_d_mod_pi_plus_pi), axis=-1)


def _snap(phi: np.ndarray) -> np.ndarray:
    # float32 resolution: absorbs the last-bit rounding of (phi + pi) - pi
    return np.asarray(phi, dtype=np.float32).astype(np.float64)


def _half_diff(vl: np.ndarray, ll: np.ndarray):
    """Core construction on local-frame directions.

    Returns ``theta_h, theta_d, (dx, dy)`` where ``(dx, dy)`` are the
    tangential components of the difference vector up to the positive factor
    ``sin(theta_d)``; they flip sign exactly when ``v`` and ``l`` are swapped.
    """
    s = vl + ll
    w = (ll - vl) * 0.5
    s_norm = np.sqrt(dot(s, s))
    if np.any(s_norm <= 1e-12):
        raise DegenerateDirectionsError("half vector undefined for v = -l")
    h = s / s_norm[..., None]
    rho = np.hypot(h[..., 0], h[..., 1])
    theta_h = np.arctan2(rho, h[..., 2])
    theta_d = np.arctan2(np.sqrt(dot(w, w)), 0.5 * s_norm)
    safe = rho > 0
    c = np.where(safe, h[..., 0] / np.where(safe, rho, 1.0), 1.0)
    sn = np.where(safe, h[..., 1] / np.where(safe, rho, 1.0), 0.0)
    # rotate w by -phi_h about n, then by -theta_h about b
    x1 = c * w[..., 0] + sn * w[..., 1]
    y1 = -sn * w[..., 0] + c * w[..., 1]
    dx = h[..., 2] * x1 - rho * w[..., 2]
    dy = y1
    degenerate = (rho <= DEGENERATE_EPS) | (np.sqrt(dot(w, w)) <= DEGENERATE_EPS)
    return theta_h, theta_d, dx, dy, degenerate


def _phi_from_xy(dx, dy, degenerate):
    phi = np.mod(np.arctan2(dy, dx), TWO_PI)
    phi = np.where(phi >= TWO_PI, 0.0, phi)
    return np.where(degenerate, 0.0, phi)


def _phi_mod_pi_from_xy(dx, dy, degenerate):
    flip = (dy < 0) | ((dy == 0) & (dx < 0))
    dx = np.where(flip, -dx, dx)
    dy = np.where(flip, -dy, dy)
    phi = np.arctan2(dy, dx)
    phi = np.where(phi >= np.pi, 0.0, phi)
    return _snap(np.where(degenerate, 0.0, phi))


def check_hemisphere(cos_nv, cos_nl) -> None:
    if np.any(np.asarray(cos_nv) <= 0) or np.any(np.asarray(cos_nl) <= 0):
        raise HemisphereError("view and light must lie in the upper hemisphere")


def rusinkiewicz_from_dirs(frame: LocalFrame, v: np.ndarray, l: np.ndarray,
                           check: bool = True) -> RusinkiewiczAngles:
    """``(theta_h, theta_d, phi_d)`` of the direction pair in ``frame``.

    ``phi_d`` is 0 whenever ``theta_h`` or ``theta_d`` vanishes.
    """
    vl, ll = frame.to_local(v), frame.to_local(l)
    if check:
        check_hemisphere(vl[..., 2], ll[..., 2])
    th, td, dx, dy, deg = _half_diff(vl, ll)
    return RusinkiewiczAngles(th, td, _phi_from_xy(dx, dy, deg))


def rusinkiewicz_to_dirs(frame: LocalFrame, angles: RusinkiewiczAngles,
                         phi_h=0.0) -> tuple[np.ndarray, np.ndarray]:
    """Inverse construction: world-space ``(v, l)`` for the given angles.

    Directions may fall below the horizon; callers filter those.
    """
    th = np.asarray(angles.theta_h, dtype=np.float64)
    td = np.asarray(angles.theta_d, dtype=np.float64)
    pd = np.asarray(angles.phi_d, dtype=np.float64)
    ph = np.asarray(phi_h, dtype=np.float64)
    d = np.stack(np.broadcast_arrays(np.sin(td) * np.cos(pd), np.sin(td) * np.sin(pd), np.cos(td)), axis=-1)
    d_mirror = d * np.array([-1.0, -1.0, 1.0])

    def rotate(x):
        # rot_{n, phi_h} rot_{b, theta_h} x
        ct, st = np.cos(th), np.sin(th)
        x1 = ct * x[..., 0] + st * x[..., 2]
        z1 = -st * x[..., 0] + ct * x[..., 2]
        y1 = x[..., 1]
        cp, sp = np.cos(ph), np.sin(ph)
        return np.stack(np.broadcast_arrays(cp * x1 - sp * y1, sp * x1 + cp * y1, z1), axis=-1)

    return frame.to_world(rotate(d_mirror)), frame.to_world(rotate(d))


def reciprocity_map(angles: RusinkiewiczAngles) -> ReciprocalAngles:
    """Map to ``(theta_h, theta_d, phi_d mod pi, phi_d mod pi + pi)``.

    The image of ``phi_d`` and of ``(phi_d + pi) mod 2 pi`` coincide, so any
    function of the result is reciprocal by construction.
    """
    phi = np.asarray(angles.phi_d, dtype=np.float64)
    # phi - pi is exact for phi in [pi, 2pi) (Sterbenz)
    mod = np.where(phi >= np.pi, phi - np.pi, phi)
    mod = _snap(mod)
    mod = np.where(mod >= np.pi, 0.0, mod)
    return ReciprocalAngles(np.asarray(angles.theta_h), np.asarray(angles.theta_d), mod, mod + np.pi)


def positional_encode(angles: np.ndarray, num_frequencies: int = 3, include_raw: bool = True) -> np.ndarray:
    """NeRF-style features ``[a, sin(2^k a), cos(2^k a)]`` for k < F.

    ``angles`` has shape ``(N, A)``; the result has
    ``A * (include_raw + 2 F)`` columns laid out as
    ``[raw | sin k=0 | cos k=0 | sin k=1 | ...]``.
    """
    a = np.asarray(angles, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    feats = [a] if include_raw else []
    for k in range(num_frequencies):
        scaled = a * (2.0 ** k)
        feats.append(np.sin(scaled))
        feats.append(np.cos(scaled))
    return np.concatenate(feats, axis=-1)


def encoding_width(num_angles: int, num_frequencies: int = 3, include_raw: bool = True) -> int:
    return num_angles * (int(include_raw) + 2 * num_frequencies)


def reflect(w: np.ndarray, n: np.ndarray) -> np.ndarray:
    return 2.0 * dot(w, n)[..., None] * n - w


@dataclass(frozen=True)
class ShadingGeometry:
    """Everything the BRDF models need about one batch of (n, v, l).

    Symmetric quantities are computed symmetrically so that analytic models
    are reciprocal to the last bit and the reciprocity mapping is exact.
    """

    frame: LocalFrame
    v: np.ndarray
    l: np.ndarray
    cos_nv: np.ndarray
    cos_nl: np.ndarray
    cos_nh: np.ndarray
    cos_d: np.ndarray
    cos_lv: np.ndarray
    angles: RusinkiewiczAngles
    reciprocal: ReciprocalAngles

    @classmethod
    def from_vectors(cls, n: np.ndarray, v: np.ndarray, l: np.ndarray,
                     frame: LocalFrame | None = None) -> "ShadingGeometry":
        n = np.atleast_2d(np.asarray(n, dtype=np.float64))
        v = np.atleast_2d(np.asarray(v, dtype=np.float64))
        l = np.atleast_2d(np.asarray(l, dtype=np.float64))
        n, v, l = np.broadcast_arrays(n, v, l)
        frame = frame if frame is not None else frame_from_normal(n)
        vl, ll = frame.to_local(v), frame.to_local(l)
        th, td, dx, dy, deg = _half_diff(vl, ll)
        s = vl + ll
        s_norm = np.sqrt(dot(s, s))
        cos_nh = s[..., 2] / s_norm
        cos_d = 0.5 * s_norm
        cos_lv = dot(vl, ll)
        angles = RusinkiewiczAngles(th, td, _phi_from_xy(dx, dy, deg))
        mod = _phi_mod_pi_from_xy(dx, dy, deg)
        recip = ReciprocalAngles(th, td, mod, mod + np.pi)
        return cls(frame, v, l, vl[..., 2], ll[..., 2], cos_nh, np.minimum(cos_d, 1.0),
                   cos_lv, angles, recip)

    def swapped(self) -> "ShadingGeometry":
        n = self.frame.n
        return ShadingGeometry.from_vectors(n, self.l, self.v, self.frame)

    def __len__(self) -> int:
        return self.cos_nv.shape[0]

    def subset(self, idx) -> "ShadingGeometry":
        f = self.frame
        a, r = self.angles, self.reciprocal
        return ShadingGeometry(
            LocalFrame(f.n[idx], f.t[idx], f.b[idx]), self.v[idx], self.l[idx],
            self.cos_nv[idx], self.cos_nl[idx], self.cos_nh[idx], self.cos_d[idx], self.cos_lv[idx],
            RusinkiewiczAngles(a.theta_h[idx], a.theta_d[idx], a.phi_d[idx]),
            ReciprocalAngles(r.theta_h[idx], r.theta_d[idx], r.phi_d_mod_pi[idx], r.phi_d_mod_pi_plus_pi[idx]),
        )

    def check_hemisphere(self) -> None:
        check_hemisphere(self.cos_nv, self.cos_nl)
