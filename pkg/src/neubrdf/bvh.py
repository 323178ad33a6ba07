"""Bounding volume hierarchy over triangles with compiled traversal.

The tree is built with median splits along the widest centroid axis. Ray
queries use Moller-Trumbore on two-sided triangles and return the nearest hit
with ``t > tmin``; ties in ``t`` resolve to the smaller face index, exactly as
in the brute-force reference :func:`intersect_brute_force`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .mesh import TriangleMesh

LEAF_SIZE = 4
DET_EPS = 1e-14


@dataclass
class BVH:
    bmin: np.ndarray  # (M, 3)
    bmax: np.ndarray  # (M, 3)
    left: np.ndarray  # child index, -1 for leaves
    right: np.ndarray
    start: np.ndarray  # leaf range into ``order``
    count: np.ndarray
    order: np.ndarray  # triangle permutation
    tri: np.ndarray  # (F, 3, 3) corner positions in original face order

    @property
    def num_nodes(self) -> int:
        return len(self.left)


@dataclass
class Hits:
    t: np.ndarray  # inf on miss
    face: np.ndarray  # -1 on miss
    bary: np.ndarray  # (N, 3) weights of the three corners

    @property
    def mask(self) -> np.ndarray:
        return self.face >= 0


def build_bvh(mesh: TriangleMesh, leaf_size: int = LEAF_SIZE) -> BVH:
    tri = np.ascontiguousarray(mesh.triangles())
    lo, hi = tri.min(axis=1), tri.max(axis=1)
    cent = tri.mean(axis=1)
    order = np.arange(len(tri), dtype=np.int64)
    nodes_min, nodes_max, left, right, start, count = [], [], [], [], [], []

    def new_node(s, e):
        idx = order[s:e]
        nodes_min.append(lo[idx].min(axis=0))
        nodes_max.append(hi[idx].max(axis=0))
        left.append(-1)
        right.append(-1)
        start.append(s)
        count.append(e - s)
        return len(left) - 1

    root = new_node(0, len(tri))
    stack = [(root, 0, len(tri))]
    while stack:
        node, s, e = stack.pop()
        if e - s <= leaf_size:
            continue
        c = cent[order[s:e]]
        axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
        # stable sort keeps the build deterministic under equal centroids
        perm = np.argsort(c[:, axis], kind="stable")
        order[s:e] = order[s:e][perm]
        mid = (s + e) // 2
        l_node = new_node(s, mid)
        r_node = new_node(mid, e)
        left[node], right[node] = l_node, r_node
        start[node], count[node] = 0, 0
        stack.append((r_node, mid, e))
        stack.append((l_node, s, mid))

    return BVH(np.asarray(nodes_min), np.asarray(nodes_max), np.asarray(left, dtype=np.int64),
               np.asarray(right, dtype=np.int64), np.asarray(start, dtype=np.int64),
               np.asarray(count, dtype=np.int64), order, tri)


@numba.njit(cache=True, inline="always")
def _mt(o0, o1, o2, d0, d1, d2, tri, f):
    """Moller-Trumbore; returns (t, u, v) with t = inf on miss."""
    ax, ay, az = tri[f, 0, 0], tri[f, 0, 1], tri[f, 0, 2]
    e1x, e1y, e1z = tri[f, 1, 0] - ax, tri[f, 1, 1] - ay, tri[f, 1, 2] - az
    e2x, e2y, e2z = tri[f, 2, 0] - ax, tri[f, 2, 1] - ay, tri[f, 2, 2] - az
    px = d1 * e2z - d2 * e2y
    py = d2 * e2x - d0 * e2z
    pz = d0 * e2y - d1 * e2x
    det = e1x * px + e1y * py + e1z * pz
    if abs(det) < DET_EPS:
        return np.inf, 0.0, 0.0
    inv = 1.0 / det
    tx, ty, tz = o0 - ax, o1 - ay, o2 - az
    u = (tx * px + ty * py + tz * pz) * inv
    if u < 0.0 or u > 1.0:
        return np.inf, 0.0, 0.0
    qx = ty * e1z - tz * e1y
    qy = tz * e1x - tx * e1z
    qz = tx * e1y - ty * e1x
    v = (d0 * qx + d1 * qy + d2 * qz) * inv
    if v < 0.0 or u + v > 1.0:
        return np.inf, 0.0, 0.0
    t = (e2x * qx + e2y * qy + e2z * qz) * inv
    return t, u, v


@numba.njit(cache=True, inline="always")
def _box_hit(o0, o1, o2, i0, i1, i2, bmin, bmax, n, tmin, tmax):
    t0 = tmin
    t1 = tmax
    for k in range(3):
        o = (o0, o1, o2)[k]
        inv = (i0, i1, i2)[k]
        a = (bmin[n, k] - o) * inv
        b = (bmax[n, k] - o) * inv
        if a > b:
            a, b = b, a
        # NaN from 0 * inf means the ray lies in the slab plane: keep it
        if a == a and a > t0:
            t0 = a
        if b == b and b < t1:
            t1 = b
        if t0 > t1:
            return False
    return True


@numba.njit(cache=True)
def _traverse(orig, dirs, tmin, any_hit, bmin, bmax, left, right, start, count, order, tri,
              out_t, out_f, out_u, out_v):
    stack = np.empty(128, dtype=np.int64)
    for r in range(orig.shape[0]):
        o0, o1, o2 = orig[r, 0], orig[r, 1], orig[r, 2]
        d0, d1, d2 = dirs[r, 0], dirs[r, 1], dirs[r, 2]
        i0 = 1.0 / d0 if d0 != 0.0 else np.inf
        i1 = 1.0 / d1 if d1 != 0.0 else np.inf
        i2 = 1.0 / d2 if d2 != 0.0 else np.inf
        best_t = np.inf
        best_f = -1
        best_u = 0.0
        best_v = 0.0
        sp = 0
        stack[sp] = 0
        sp += 1
        while sp > 0:
            sp -= 1
            n = stack[sp]
            # slack on the box test; the triangle test decides
            if not _box_hit(o0, o1, o2, i0, i1, i2, bmin, bmax, n, tmin - 1e-9, best_t * (1 + 1e-9) + 1e-9):
                continue
            if left[n] < 0:
                for k in range(start[n], start[n] + count[n]):
                    f = order[k]
                    t, u, v = _mt(o0, o1, o2, d0, d1, d2, tri, f)
                    if t > tmin and (t < best_t or (t == best_t and f < best_f)):
                        best_t, best_f, best_u, best_v = t, f, u, v
                if any_hit and best_f >= 0:
                    break
            else:
                stack[sp] = right[n]
                sp += 1
                stack[sp] = left[n]
                sp += 1
        out_t[r] = best_t
        out_f[r] = best_f
        out_u[r] = best_u
        out_v[r] = best_v


def _run(bvh: BVH, origins, directions, tmin, any_hit):
    o = np.ascontiguousarray(np.atleast_2d(origins), dtype=np.float64)
    d = np.ascontiguousarray(np.atleast_2d(directions), dtype=np.float64)
    o, d = np.broadcast_arrays(o, d)
    o, d = np.ascontiguousarray(o), np.ascontiguousarray(d)
    n = len(o)
    t = np.empty(n)
    f = np.empty(n, dtype=np.int64)
    u = np.empty(n)
    v = np.empty(n)
    _traverse(o, d, float(tmin), any_hit, bvh.bmin, bvh.bmax, bvh.left, bvh.right,
              bvh.start, bvh.count, bvh.order, bvh.tri, t, f, u, v)
    return Hits(t, f, np.stack([1.0 - u - v, u, v], axis=1))


def intersect(bvh: BVH, origins: np.ndarray, directions: np.ndarray, tmin: float = 0.0) -> Hits:
    """Nearest hit with ``t > tmin`` for each ray."""
    return _run(bvh, origins, directions, tmin, False)


def occluded(bvh: BVH, origins: np.ndarray, directions: np.ndarray, tmin: float = 0.0) -> np.ndarray:
    """True where the ray hits anything with ``t > tmin``."""
    return _run(bvh, origins, directions, tmin, True).face >= 0


def intersect_brute_force(mesh: TriangleMesh, origins: np.ndarray, directions: np.ndarray,
                          tmin: float = 0.0) -> Hits:
    """Reference: every ray against every triangle, vectorised."""
    tri = mesh.triangles()
    o = np.atleast_2d(np.asarray(origins, dtype=np.float64))[:, None, :]
    d = np.atleast_2d(np.asarray(directions, dtype=np.float64))[:, None, :]
    a = tri[None, :, 0]
    e1 = tri[None, :, 1] - a
    e2 = tri[None, :, 2] - a
    p = np.cross(d, e2)
    det = np.sum(e1 * p, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / det
        tv = o - a
        u = np.sum(tv * p, axis=-1) * inv
        q = np.cross(tv, e1)
        v = np.sum(d * q, axis=-1) * inv
        t = np.sum(e2 * q, axis=-1) * inv
    ok = (np.abs(det) >= DET_EPS) & (u >= 0) & (u <= 1) & (v >= 0) & (u + v <= 1) & (t > tmin)
    t = np.where(ok, t, np.inf)
    face = np.argmin(t, axis=1)  # first index among equal minima
    rows = np.arange(len(t))
    best = t[rows, face]
    hit = np.isfinite(best)
    uu, vv = u[rows, face], v[rows, face]
    bary = np.where(hit[:, None], np.stack([1 - uu - vv, uu, vv], axis=1), np.array([1.0, 0.0, 0.0]))
    return Hits(best, np.where(hit, face, -1), bary)
