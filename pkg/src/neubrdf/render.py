"""Pinhole cameras, directional lights and single-bounce rendering.

Each object pixel receives ``f(x, l, v) * L_i * I_s(x, l) * max(<n, l>, 0)``
at the primary hit ``x`` with the barycentrically interpolated normal ``n``.
Primary rays pass through pixel centres; the background is 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .angles import ShadingGeometry, normalize
from .bvh import BVH, intersect, occluded
from .mesh import TriangleMesh

#: shadow bias relative to the bounding-box diagonal
SHADOW_BIAS_REL = 1e-4
#: pixels whose view or light direction grazes the shading horizon within
#: this cosine are rendered black and excluded from the sample records
HORIZON_EPS = 1e-4


@dataclass(frozen=True)
class Camera:
    """OpenCV-style pinhole: x right, y down, looking along +z.

    ``rotation`` maps camera to world coordinates; ``position`` is the centre.
    """

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    rotation: np.ndarray
    position: np.ndarray

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")

    @classmethod
    def look_at(cls, eye, target, up=(0.0, 0.0, 1.0), width: int = 64, height: int = 64,
                fov_deg: float = 30.0) -> "Camera":
        eye = np.asarray(eye, dtype=np.float64)
        z = normalize(np.asarray(target, dtype=np.float64) - eye)
        x = np.cross(z, np.asarray(up, dtype=np.float64))
        if np.linalg.norm(x) < 1e-12:
            x = np.cross(z, np.array([0.0, 1.0, 0.0]))
        x = normalize(x)
        y = np.cross(z, x)
        f = 0.5 * width / np.tan(np.radians(fov_deg) / 2)
        return cls(f, f, width / 2, height / 2, width, height, np.stack([x, y, z], axis=1), eye)

    def pixel_rays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """World-space ``(origins, directions, pixel_ij)`` for every pixel, row-major."""
        j, i = np.meshgrid(np.arange(self.height), np.arange(self.width), indexing="ij")
        d = np.stack([(i + 0.5 - self.cx) / self.fx, (j + 0.5 - self.cy) / self.fy,
                      np.ones_like(i, dtype=np.float64)], axis=-1).reshape(-1, 3)
        d = normalize(d @ self.rotation.T)
        o = np.broadcast_to(self.position, d.shape)
        return o, d, np.stack([j.ravel(), i.ravel()], axis=1)

    def to_dict(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy, "width": self.width,
                "height": self.height, "rotation": self.rotation.tolist(),
                "position": self.position.tolist()}


def ring_cameras(count: int, radius: float, elevation_deg: float, width: int = 64,
                 height: int = 64, fov_deg: float = 30.0, target=(0.0, 0.0, 0.0),
                 phase_deg: float = 0.0) -> list[Camera]:
    """Cameras evenly spaced on a horizontal ring, all looking at ``target``."""
    if count < 1:
        raise ValueError("camera count must be >= 1")
    el = np.radians(elevation_deg)
    cams = []
    for k in range(count):
        az = np.radians(phase_deg) + 2 * np.pi * k / count
        eye = np.asarray(target) + radius * np.array([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)])
        cams.append(Camera.look_at(eye, target, width=width, height=height, fov_deg=fov_deg))
    return cams


@dataclass(frozen=True)
class DirectionalLight:
    direction: np.ndarray  # unit, from the surface towards the light
    irradiance: np.ndarray  # RGB

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=np.float64)
        if abs(np.linalg.norm(d) - 1.0) > 1e-9:
            raise ValueError("light direction must be unit length")


def camera_lights(count: int, cone_deg: float, rng: np.random.Generator) -> np.ndarray:
    """Light directions in camera coordinates within a cone around the
    direction towards the camera (a light rig that moves with the camera)."""
    cos_max = np.cos(np.radians(cone_deg))
    c = 1.0 - rng.random(count) * (1.0 - cos_max)  # uniform on the spherical cap
    s = np.sqrt(np.maximum(0.0, 1.0 - c * c))
    phi = 2 * np.pi * rng.random(count)
    return np.stack([s * np.cos(phi), s * np.sin(phi), -c], axis=1)


def light_for_camera(camera: Camera, l_cam: np.ndarray, irradiance=(1.0, 1.0, 1.0)) -> DirectionalLight:
    return DirectionalLight(normalize(camera.rotation @ np.asarray(l_cam)), np.asarray(irradiance, dtype=np.float64))


def default_shadow_bias(mesh: TriangleMesh) -> float:
    return SHADOW_BIAS_REL * mesh.bbox_diagonal()


def shadow_visibility(bvh: BVH, x: np.ndarray, n: np.ndarray, l: np.ndarray, bias: float) -> np.ndarray:
    """1 where the ray from ``x + bias * n`` towards ``l`` escapes, else 0."""
    x = np.atleast_2d(x)
    origins = x + bias * np.atleast_2d(n)
    dirs = np.broadcast_to(np.asarray(l, dtype=np.float64), origins.shape)
    return (~occluded(bvh, origins, dirs)).astype(np.float64)


@dataclass
class SurfaceHits:
    """Primary-ray hits of one camera, restricted to object pixels."""

    pixel: np.ndarray  # (N, 2) row, column
    face: np.ndarray
    bary: np.ndarray
    position: np.ndarray
    normal: np.ndarray
    view_dir: np.ndarray  # towards the camera


def primary_hits(mesh: TriangleMesh, bvh: BVH, camera: Camera) -> SurfaceHits:
    o, d, pix = camera.pixel_rays()
    hits = intersect(bvh, o, d)
    m = hits.mask
    face, bary = hits.face[m], hits.bary[m]
    pos = o[m] + hits.t[m, None] * d[m]
    return SurfaceHits(pix[m], face, bary, pos, mesh.shading_normal(face, bary), -d[m])


@dataclass
class RenderResult:
    image: np.ndarray  # (H, W, 3) HDR
    mask: np.ndarray  # (H, W) object pixels
    hits: SurfaceHits
    visibility: np.ndarray  # per hit
    cos_l: np.ndarray  # clamped at 0
    valid: np.ndarray  # both directions above the shading horizon
    brdf: np.ndarray  # per hit, 0 where invalid
    radiance: np.ndarray  # per hit


BRDFFunction = Callable[[ShadingGeometry, SurfaceHits, np.ndarray], np.ndarray]


def render_view(mesh: TriangleMesh, bvh: BVH, camera: Camera, light: DirectionalLight,
                brdf: BRDFFunction, bias: float | None = None,
                hits: SurfaceHits | None = None) -> RenderResult:
    """Render one image. ``brdf(geom, hits, valid_index)`` returns values for
    the valid hits only."""
    if hits is None:
        hits = primary_hits(mesh, bvh, camera)
    bias = default_shadow_bias(mesh) if bias is None else bias
    n = hits.normal
    l = np.broadcast_to(light.direction, n.shape)
    cos_l = np.einsum("ij,ij->i", n, l)
    cos_v = np.einsum("ij,ij->i", n, hits.view_dir)
    valid = (cos_l > HORIZON_EPS) & (cos_v > HORIZON_EPS)
    vis = np.zeros(len(n))
    if valid.any():
        vis[valid] = shadow_visibility(bvh, hits.position[valid], n[valid], light.direction, bias)
    f = np.zeros((len(n), 3))
    idx = np.flatnonzero(valid)
    if idx.size:
        geom = ShadingGeometry.from_vectors(n[idx], hits.view_dir[idx], l[idx])
        f[idx] = brdf(geom, hits, idx)
    cos_c = np.maximum(cos_l, 0.0)
    radiance = f * light.irradiance[None, :] * (vis * cos_c)[:, None]
    image = np.zeros((camera.height, camera.width, 3))
    image[hits.pixel[:, 0], hits.pixel[:, 1]] = radiance
    mask = np.zeros((camera.height, camera.width), dtype=bool)
    mask[hits.pixel[:, 0], hits.pixel[:, 1]] = True
    return RenderResult(image, mask, hits, vis, cos_c, valid, f, radiance)


def material_brdf(material) -> BRDFFunction:
    """Adapter so a :class:`~neubrdf.materials.Material` can be rendered."""
    def fn(geom, hits, idx):
        return material.eval(geom, hits.position[idx])
    return fn
