"""Physical audits of fitted BRDFs: Helmholtz reciprocity and energy
conservation, both estimated by seeded sampling over the surface.

An *evaluator* is any callable ``evaluator(points, geom) -> (N, 3)`` where
``points`` is a :class:`SurfacePoints` batch aligned with ``geom``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Callable

import numpy as np

from . import parametric
from .angles import ShadingGeometry, frame_from_normal
from .mesh import TriangleMesh


@dataclass
class SurfacePoints:
    face: np.ndarray
    bary: np.ndarray
    position: np.ndarray
    normal: np.ndarray

    def take(self, idx) -> "SurfacePoints":
        return SurfacePoints(self.face[idx], self.bary[idx], self.position[idx], self.normal[idx])


Evaluator = Callable[[SurfacePoints, ShadingGeometry], np.ndarray]


def sample_points(mesh: TriangleMesh, n: int, rng: np.random.Generator) -> SurfacePoints:
    """Area-uniform surface points with interpolated shading normals."""
    face, bary = mesh.sample_surface(n, rng)
    return SurfacePoints(face, bary, mesh.interpolate(mesh.vertices, face, bary), mesh.shading_normal(face, bary))


def cosine_hemisphere(u1: np.ndarray, u2: np.ndarray) -> np.ndarray:
    """Malley's method: uniform disk point lifted to the hemisphere (local z up)."""
    r = np.sqrt(u1)
    phi = 2.0 * np.pi * u2
    return np.stack([r * np.cos(phi), r * np.sin(phi), np.sqrt(np.maximum(0.0, 1.0 - u1))], axis=-1)


# -- evaluator adapters -----------------------------------------------------
def model_evaluator(model, encoder) -> Evaluator:
    def fn(points, geom):
        return model.predict(encoder.encode(points.face, points.bary), geom)
    return fn


def material_evaluator(material) -> Evaluator:
    def fn(points, geom):
        return material.eval(geom, points.position)
    return fn


def parametric_evaluator(kind: str, params) -> Evaluator:
    """Spatially constant analytic model; ``params`` holds ``(1, k)`` fields."""
    def fn(points, geom):
        n = len(geom)
        p = type(params)(**{f.name: _rows(getattr(params, f.name), n) for f in fields(params)})
        return np.asarray(parametric.evaluate(kind, p, geom))
    return fn


def _rows(x, n):
    x = np.asarray(x, dtype=np.float64)
    return np.broadcast_to(x.reshape(1, -1), (n, x.size))


def constant_evaluator(value) -> Evaluator:
    value = np.broadcast_to(np.asarray(value, dtype=np.float64), (3,))

    def fn(points, geom):
        return np.broadcast_to(value, (len(geom), 3)).copy()
    return fn


# -- reciprocity ------------------------------------------------------------
def reciprocity_rmse(evaluator: Evaluator, mesh: TriangleMesh, n_pairs: int = 10_000,
                     seed: int = 0) -> float:
    """``sqrt(mean ||f(x, l, v) - f(x, v, l)||^2)`` over seeded samples.

    ``x`` is area-uniform on the mesh; ``v`` and ``l`` are independent
    cosine-weighted directions around the shading normal.
    """
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x3EC1]))
    pts = sample_points(mesh, n_pairs, rng)
    frame = frame_from_normal(pts.normal)
    u = rng.random((4, n_pairs))
    v = frame.to_world(cosine_hemisphere(u[0], u[1]))
    l = frame.to_world(cosine_hemisphere(u[2], u[3]))
    g = ShadingGeometry.from_vectors(pts.normal, v, l, frame)
    f_lv = np.asarray(evaluator(pts, g), dtype=np.float64)
    f_vl = np.asarray(evaluator(pts, g.swapped()), dtype=np.float64)
    return float(np.sqrt(np.mean(np.sum((f_lv - f_vl) ** 2, axis=1))))


# -- energy -----------------------------------------------------------------
@dataclass
class EnergyAudit:
    estimates: np.ndarray  # per pair, channel with the largest estimate
    sigma: np.ndarray  # MC standard error of that estimate
    channel: np.ndarray
    light: np.ndarray  # world light direction per pair
    points: SurfacePoints
    n_mc: int
    seed: int

    @property
    def n_pairs(self) -> int:
        return len(self.estimates)

    @property
    def fraction_above_one(self) -> float:
        return float(np.mean(self.estimates > 1.0))

    @property
    def median_above_one(self) -> float:
        above = self.estimates[self.estimates > 1.0]
        return float(np.median(above)) if above.size else float("nan")

    @property
    def violations_3sigma(self) -> int:
        return int(np.sum(self.estimates > 1.0 + 3.0 * self.sigma))

    def summary(self) -> dict:
        return {"pairs": self.n_pairs, "mc_samples": self.n_mc, "seed": self.seed,
                "fraction_above_one": self.fraction_above_one,
                "median_above_one": self.median_above_one,
                "violations_3sigma": self.violations_3sigma,
                "max_estimate": float(self.estimates.max()),
                "mean_estimate": float(self.estimates.mean())}

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["pair", "face", "x", "y", "z", "lx", "ly", "lz", "channel", "estimate", "sigma"])
            for i in range(self.n_pairs):
                p = self.points.position[i]
                l = self.light[i]
                w.writerow([i, int(self.points.face[i]), repr(p[0]), repr(p[1]), repr(p[2]), repr(l[0]),
                            repr(l[1]), repr(l[2]), int(self.channel[i]), repr(float(self.estimates[i])),
                            repr(float(self.sigma[i]))])


def energy_audit(evaluator: Evaluator, mesh: TriangleMesh, n_pairs: int = 1000, n_mc: int = 4000,
                 seed: int = 0, chunk_pairs: int = 16) -> EnergyAudit:
    """MC estimate of ``integral f(x, l, v) cos(theta_v) dv`` per (x, l) pair.

    Views are cosine-weighted, so each estimate is ``pi / N sum f``. Pair
    ``i`` draws from its own stream seeded by ``(seed, i)``; results do not
    depend on ``chunk_pairs``.
    """
    if n_pairs < 1 or n_mc < 1:
        raise ValueError("counts must be >= 1")
    areas = mesh.face_areas()
    prob = areas / areas.sum()
    est = np.empty(n_pairs)
    sig = np.empty(n_pairs)
    chan = np.empty(n_pairs, dtype=np.int64)
    light_world = np.empty((n_pairs, 3))
    all_face = np.empty(n_pairs, dtype=np.int64)
    all_bary = np.empty((n_pairs, 3))
    for s in range(0, n_pairs, chunk_pairs):
        ids = range(s, min(n_pairs, s + chunk_pairs))
        faces, barys, ls, vs = [], [], [], []
        for i in ids:
            rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
            f = rng.choice(len(areas), p=prob)
            a, b = rng.random(2)
            if a + b > 1:
                a, b = 1 - a, 1 - b
            faces.append(f)
            barys.append([1 - a - b, a, b])
            ls.append(cosine_hemisphere(*rng.random(2)))
            u = rng.random((2, n_mc))
            vs.append(cosine_hemisphere(u[0], u[1]))
        k = len(faces)
        face = np.repeat(np.asarray(faces), n_mc)
        bary = np.repeat(np.asarray(barys), n_mc, axis=0)
        normal = mesh.shading_normal(face, bary)
        frame = frame_from_normal(normal)
        l = frame.to_world(np.repeat(np.asarray(ls), n_mc, axis=0))
        v = frame.to_world(np.concatenate(vs))
        pts = SurfacePoints(face, bary, mesh.interpolate(mesh.vertices, face, bary), normal)
        g = ShadingGeometry.from_vectors(normal, v, l, frame)
        f = np.asarray(evaluator(pts, g), dtype=np.float64).reshape(k, n_mc, 3)
        e = np.pi * f.mean(axis=1)
        sd = np.pi * f.std(axis=1, ddof=1) / np.sqrt(n_mc) if n_mc > 1 else np.zeros_like(e)
        c = np.argmax(e, axis=1)
        rows = np.arange(k)
        sl = slice(s, s + k)
        est[sl], sig[sl], chan[sl] = e[rows, c], sd[rows, c], c
        light_world[sl] = l.reshape(k, n_mc, 3)[:, 0]
        all_face[sl] = faces
        all_bary[sl] = barys
    pos = mesh.interpolate(mesh.vertices, all_face, all_bary)
    pts = SurfacePoints(all_face, all_bary, pos, mesh.shading_normal(all_face, all_bary))
    return EnergyAudit(est, sig, chan, light_world, pts, n_mc, seed)
