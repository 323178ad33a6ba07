"""Triangle meshes: OBJ input, vertex normals and a built-in icosphere."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class MeshError(ValueError):
    pass


class DegenerateFaceWarning(UserWarning):
    pass


@dataclass
class TriangleMesh:
    vertices: np.ndarray  # (V, 3) float64
    faces: np.ndarray  # (F, 3) int64
    normals: np.ndarray  # (V, 3) unit vertex normals

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64)
        self.faces = np.ascontiguousarray(self.faces, dtype=np.int64)
        if self.faces.size and (self.faces.min() < 0 or self.faces.max() >= len(self.vertices)):
            raise MeshError("face index out of range")
        self.normals = np.ascontiguousarray(self.normals, dtype=np.float64)

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_faces(self) -> int:
        return len(self.faces)

    def triangles(self) -> np.ndarray:
        """Corner positions, shape (F, 3, 3)."""
        return self.vertices[self.faces]

    def face_areas(self) -> np.ndarray:
        tri = self.triangles()
        return 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)

    def bbox_diagonal(self) -> float:
        return float(np.linalg.norm(self.vertices.max(0) - self.vertices.min(0)))

    def interpolate(self, values: np.ndarray, face: np.ndarray, bary: np.ndarray) -> np.ndarray:
        """Barycentric interpolation of per-vertex ``values`` (bary = weights of corners 0,1,2)."""
        corners = values[self.faces[face]]
        return np.einsum("nk,nk...->n...", bary, corners)

    def shading_normal(self, face: np.ndarray, bary: np.ndarray) -> np.ndarray:
        n = self.interpolate(self.normals, face, bary)
        return n / np.linalg.norm(n, axis=-1, keepdims=True)

    def is_closed(self) -> bool:
        """Every undirected edge shared by exactly two faces."""
        e = np.sort(np.concatenate([self.faces[:, [0, 1]], self.faces[:, [1, 2]], self.faces[:, [2, 0]]]), axis=1)
        _, counts = np.unique(e, axis=0, return_counts=True)
        return bool(np.all(counts == 2))

    def sample_surface(self, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """Area-uniform points: ``(face, barycentrics)``."""
        areas = self.face_areas()
        face = rng.choice(len(areas), size=n, p=areas / areas.sum())
        u, v = rng.random(n), rng.random(n)
        flip = u + v > 1
        u = np.where(flip, 1 - u, u)
        v = np.where(flip, 1 - v, v)
        return face, np.stack([1 - u - v, u, v], axis=1)


def vertex_normals(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Area-weighted average of incident face normals, normalised."""
    tri = vertices[faces]
    # the unnormalised cross product already carries twice the face area
    fn = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    vn = np.zeros_like(vertices)
    for k in range(3):
        np.add.at(vn, faces[:, k], fn)
    norm = np.linalg.norm(vn, axis=1, keepdims=True)
    return vn / np.where(norm > 0, norm, 1.0)


def _parse_index(tok: str, count: int, lineno: int, path) -> int:
    try:
        idx = int(tok.split("/")[0])
    except ValueError as exc:
        raise MeshError(f"{path}:{lineno}: bad face index {tok!r}") from exc
    if idx < 0:
        idx = count + idx
    else:
        idx -= 1
    return idx


def load_mesh(path: str | Path) -> TriangleMesh:
    """Read ``v``/``vn``/``f`` records of an OBJ file.

    Polygons are fan-triangulated. Normals given through ``f v//vn`` references
    are used when every vertex gets one; otherwise normals are recomputed.
    """
    path = Path(path)
    verts: list[list[float]] = []
    vnormals: list[list[float]] = []
    faces: list[tuple[int, int, int]] = []
    face_normal_refs: list[tuple[int, int, int]] = []
    face_lines: list[int] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split("#", 1)[0].split()
            if not parts:
                continue
            tag = parts[0]
            if tag in ("v", "vn"):
                try:
                    xyz = [float(t) for t in parts[1:4]]
                except ValueError as exc:
                    raise MeshError(f"{path}:{lineno}: bad coordinate") from exc
                if len(xyz) != 3:
                    raise MeshError(f"{path}:{lineno}: expected 3 coordinates")
                (verts if tag == "v" else vnormals).append(xyz)
            elif tag == "f":
                toks = parts[1:]
                if len(toks) < 3:
                    raise MeshError(f"{path}:{lineno}: face needs at least 3 vertices")
                idx = [_parse_index(t, len(verts), lineno, path) for t in toks]
                nrefs = []
                for t in toks:
                    sub = t.split("/")
                    nrefs.append(_parse_index(sub[2], len(vnormals), lineno, path)
                                 if len(sub) == 3 and sub[2] else -1)
                for k in range(1, len(idx) - 1):
                    faces.append((idx[0], idx[k], idx[k + 1]))
                    face_normal_refs.append((nrefs[0], nrefs[k], nrefs[k + 1]))
                    face_lines.append(lineno)
    vertices = np.asarray(verts, dtype=np.float64).reshape(-1, 3)
    f = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    for i, face in enumerate(f):
        if face.min() < 0 or face.max() >= len(vertices):
            raise MeshError(f"{path}:{face_lines[i]}: face {i} references vertex outside 1..{len(vertices)}")
    if len(f) == 0:
        raise MeshError(f"{path}: no faces")
    areas = 0.5 * np.linalg.norm(np.cross(vertices[f[:, 1]] - vertices[f[:, 0]],
                                          vertices[f[:, 2]] - vertices[f[:, 0]]), axis=1)
    bad = np.flatnonzero(areas <= 1e-15)
    if bad.size:
        warnings.warn(f"{path}: {bad.size} degenerate face(s), first on line {face_lines[bad[0]]}",
                      DegenerateFaceWarning, stacklevel=2)
    normals = _explicit_normals(vertices, f, np.asarray(face_normal_refs).reshape(-1, 3), vnormals)
    if normals is None:
        normals = vertex_normals(vertices, f)
    return TriangleMesh(vertices, f, normals)


def _explicit_normals(vertices, faces, refs, vnormals):
    if not vnormals or (refs < 0).any() or refs.max() >= len(vnormals):
        return None
    vn = np.asarray(vnormals, dtype=np.float64)
    out = np.full_like(vertices, np.nan)
    out[faces.ravel()] = vn[refs.ravel()]
    if np.isnan(out).any():
        return None
    return out / np.linalg.norm(out, axis=1, keepdims=True)


def save_obj(mesh: TriangleMesh, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for v in mesh.vertices:
            fh.write(f"v {v[0]!r} {v[1]!r} {v[2]!r}\n")
        for f in mesh.faces + 1:
            fh.write(f"f {f[0]} {f[1]} {f[2]}\n")


def icosphere(subdivisions: int = 3, radius: float = 1.0) -> TriangleMesh:
    """Subdivided icosahedron; 10 * 4**s + 2 vertices (s=4 gives 2562)."""
    t = (1.0 + 5 ** 0.5) / 2.0
    verts = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0), (0, -1, t), (0, 1, t),
             (0, -1, -t), (0, 1, -t), (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
             (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
             (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    v = [np.asarray(p, dtype=np.float64) / np.linalg.norm(p) for p in verts]
    f = faces
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = v[a] + v[b]
                v.append(m / np.linalg.norm(m))
                cache[key] = len(v) - 1
            return cache[key]

        nf = []
        for a, b, c in f:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            nf += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        f = nf
    vertices = np.asarray(v) * radius
    faces_arr = np.asarray(f, dtype=np.int64)
    return TriangleMesh(vertices, faces_arr, vertex_normals(vertices, faces_arr))
