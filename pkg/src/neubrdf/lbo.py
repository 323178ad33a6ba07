"""Intrinsic surface encoding from Laplace-Beltrami eigenfunctions.

The operator is discretised with cotangent weights and a lumped (barycentric)
mass matrix; the generalized eigenproblem ``L phi = lambda M phi`` is solved
densely, which limits meshes to a few thousand vertices. Larger meshes fall
back to a positional encoding of the vertex coordinates.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .angles import encoding_width, positional_encode
from .mesh import TriangleMesh

DENSE_BUDGET = 3000
DEFAULT_K = 128


class NonManifoldError(ValueError):
    pass


class BudgetError(ValueError):
    pass


@dataclass
class LBOBasis:
    eigenvalues: np.ndarray  # (k,) ascending
    eigenfunctions: np.ndarray  # (V, k), mass-orthonormal
    blocks: list[tuple[int, int]]

    @property
    def k(self) -> int:
        return len(self.eigenvalues)


def cotangent_laplacian(mesh: TriangleMesh) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Positive semi-definite stiffness ``L`` and diagonal lumped mass ``M``."""
    v, f = mesh.vertices, mesh.faces
    nv = len(v)
    rows, cols, vals = [], [], []
    for k in range(3):
        i, j, o = f[:, (k + 1) % 3], f[:, (k + 2) % 3], f[:, k]
        a, b = v[i] - v[o], v[j] - v[o]
        cot = np.einsum("ij,ij->i", a, b) / np.linalg.norm(np.cross(a, b), axis=1)
        w = 0.5 * cot
        rows += [i, j, i, j]
        cols += [j, i, i, j]
        vals += [-w, -w, w, w]
    L = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(nv, nv))
    area = mesh.face_areas()
    mass = np.zeros(nv)
    for k in range(3):
        np.add.at(mass, f[:, k], area / 3.0)
    return L, sp.diags(mass).tocsr()


def check_manifold(mesh: TriangleMesh) -> bool:
    """Raise for edges with more than two faces; return whether the mesh is closed."""
    f = mesh.faces
    e = np.sort(np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]]), axis=1)
    _, counts = np.unique(e, axis=0, return_counts=True)
    if np.any(counts > 2):
        raise NonManifoldError(f"{int(np.sum(counts > 2))} edge(s) shared by more than two faces")
    return bool(np.all(counts == 2))


def default_blocks(k: int) -> list[tuple[int, int]]:
    """First 64 eigenfunctions, then four blocks of 16 spread evenly over the rest."""
    if k <= 64:
        return [(0, k)]
    blocks = [(0, 64)]
    if k - 64 < 16:
        return blocks + [(64, k)]
    starts = np.round(np.linspace(64, k - 16, 4)).astype(int)
    for s in dict.fromkeys(starts.tolist()):
        blocks.append((s, s + 16))
    return blocks


def lbo_basis(mesh: TriangleMesh, k: int = DEFAULT_K, budget: int = DENSE_BUDGET,
              blocks: list[tuple[int, int]] | None = None) -> LBOBasis:
    """Lowest ``k`` eigenpairs; each eigenfunction's largest-magnitude vertex
    value is made positive."""
    if mesh.num_vertices > budget:
        raise BudgetError(f"{mesh.num_vertices} vertices exceed the dense eigensolver budget {budget}")
    if not check_manifold(mesh):
        warnings.warn("mesh is not closed; the lowest eigenfunction need not be constant", stacklevel=2)
    k = min(k, mesh.num_vertices)
    L, M = cotangent_laplacian(mesh)
    lam, phi = scipy.linalg.eigh(L.toarray(), M.toarray(), subset_by_index=[0, k - 1])
    lam = np.maximum(lam, 0.0)
    big = np.argmax(np.abs(phi), axis=0)
    phi = phi * np.sign(phi[big, np.arange(k)])
    blocks = default_blocks(k) if blocks is None else blocks
    _check_blocks(blocks, k)
    return LBOBasis(lam, phi, list(blocks))


def _check_blocks(blocks, k):
    for s, e in blocks:
        if not 0 <= s < e <= k:
            raise ValueError(f"block ({s}, {e}) outside the basis of size {k}")


def lbo_encode(basis: LBOBasis, mesh: TriangleMesh, face: np.ndarray, bary: np.ndarray,
               blocks: list[tuple[int, int]] | None = None) -> np.ndarray:
    """Barycentrically interpolated eigenfunction values of the selected blocks."""
    blocks = basis.blocks if blocks is None else blocks
    _check_blocks(blocks, basis.k)
    cols = np.concatenate([np.arange(s, e) for s, e in blocks])
    corner = basis.eigenfunctions[mesh.faces[face]][:, :, cols]  # (N, 3, C)
    return np.einsum("nk,nkc->nc", bary, corner)


@dataclass
class PositionEncoder:
    """Surface-point features for a mesh: LBO eigenfunctions or, as the
    fallback, positional encoding of normalised coordinates."""

    kind: str
    mesh: TriangleMesh
    basis: LBOBasis | None = None
    num_frequencies: int = 6

    @property
    def dim(self) -> int:
        if self.kind == "lbo":
            return int(sum(e - s for s, e in self.basis.blocks))
        return encoding_width(3, self.num_frequencies, True)

    def _normalise(self, p):
        lo, hi = self.mesh.vertices.min(0), self.mesh.vertices.max(0)
        return (p - 0.5 * (lo + hi)) / (0.5 * np.max(hi - lo))

    def encode(self, face: np.ndarray, bary: np.ndarray) -> np.ndarray:
        if self.kind == "lbo":
            return lbo_encode(self.basis, self.mesh, face, bary)
        p = self.mesh.interpolate(self.mesh.vertices, face, bary)
        return positional_encode(self._normalise(p), self.num_frequencies, True)


def make_encoder(mesh: TriangleMesh, kind: str = "auto", k: int = DEFAULT_K,
                 budget: int = DENSE_BUDGET, num_frequencies: int = 6) -> PositionEncoder:
    if kind not in ("auto", "lbo", "xyz"):
        raise ValueError("encoding must be 'auto', 'lbo' or 'xyz'")
    if kind == "auto":
        kind = "lbo" if mesh.num_vertices <= budget else "xyz"
    if kind == "lbo":
        return PositionEncoder("lbo", mesh, lbo_basis(mesh, k, budget), num_frequencies)
    return PositionEncoder("xyz", mesh, None, num_frequencies)
