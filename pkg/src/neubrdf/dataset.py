"""Semi-synthetic datasets: scene specs, rendering with noise, splits and
binary sample records.

Directory layout written by :func:`generate`::

    scene.json              resolved scene spec
    lbo.npz                 cached eigenbasis (when the LBO encoding is used)
    masks.npz               object-pixel mask per view
    split.json              train/test (view, light) pairs
    images/v003_l017.pfm    noisy HDR image per (view, light)
    records/v003_l017.rec   sample records per (view, light)
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bvh import BVH, build_bvh
from .hdrio import save_npz, write_pfm
from .lbo import LBOBasis, PositionEncoder, make_encoder, DEFAULT_K, DENSE_BUDGET
from .materials import Material
from .mesh import TriangleMesh, icosphere, load_mesh
from .render import (Camera, camera_lights, light_for_camera, material_brdf, primary_hits,
                     render_view, ring_cameras)

RECORD_MAGIC = b"NBRDFREC"
RECORD_VERSION = 1
SCENE_SCHEMA = 1

RECORD_DTYPE = np.dtype([
    ("face", "<i8"), ("bary", "<f8", (3,)), ("position", "<f8", (3,)), ("normal", "<f8", (3,)),
    ("view_dir", "<f8", (3,)), ("light_dir", "<f8", (3,)), ("visibility", "<f8"),
    ("irradiance", "<f8", (3,)), ("radiance", "<f8", (3,)), ("clean", "<f8", (3,)),
    ("brdf", "<f8", (3,)), ("pixel", "<i4", (2,)), ("view_id", "<i4"), ("light_id", "<i4"),
    ("saturated", "u1"),
])


class RecordFormatError(ValueError):
    pass


class SplitError(ValueError):
    pass


# -- scene spec -------------------------------------------------------------
@dataclass
class SplitSpec:
    train_views: int = 10
    train_lights: int = 30
    test_views: int = 10
    test_lights: int = 12

    def __post_init__(self):
        for name in ("train_views", "train_lights", "test_views", "test_lights"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass
class SceneSpec:
    """JSON-serializable description of a semi-synthetic scene.

    ``mesh`` is an OBJ path (relative paths resolve against ``base_dir``) or
    ``"builtin:icosphere"``. Light directions are given in camera
    coordinates, so the light rig moves with each camera.
    """

    mesh: str = "builtin:icosphere"
    mesh_subdivisions: int = 3
    material: Material = field(default_factory=lambda: Material("lambertian", {"albedo": [0.5, 0.5, 0.5]}))
    camera_count: int = 20
    camera_radius: float = 4.0
    camera_elevation_deg: float = 20.0
    image_size: int = 48
    fov_deg: float = 30.0
    light_count: int = 96
    light_cone_deg: float = 45.0
    light_directions: list | None = None
    irradiance: tuple[float, float, float] = (1.0, 1.0, 1.0)
    noise_sigma: float = 1e-3
    white_level: float = 1.0
    seed: int = 0
    split: SplitSpec = field(default_factory=SplitSpec)
    encoding: str = "auto"
    lbo_k: int = DEFAULT_K
    lbo_budget: int = DENSE_BUDGET
    base_dir: str = "."

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.camera_count < 1 or self.light_count < 1:
            raise ValueError("camera and light counts must be >= 1")
        if self.light_directions is not None:
            self.light_count = len(self.light_directions)

    def to_dict(self) -> dict:
        return {
            "schema": SCENE_SCHEMA, "mesh": self.mesh, "mesh_subdivisions": self.mesh_subdivisions,
            "material": self.material.to_dict(),
            "cameras": {"count": self.camera_count, "radius": self.camera_radius,
                        "elevation_deg": self.camera_elevation_deg, "image_size": self.image_size,
                        "fov_deg": self.fov_deg},
            "lights": {"count": self.light_count, "cone_deg": self.light_cone_deg,
                       "directions": self.light_directions, "irradiance": list(self.irradiance)},
            "noise_sigma": self.noise_sigma, "white_level": self.white_level, "seed": self.seed,
            "split": vars(self.split).copy(),
            "encoding": {"kind": self.encoding, "k": self.lbo_k, "budget": self.lbo_budget},
        }

    @classmethod
    def from_dict(cls, d: dict, base_dir: str | Path = ".") -> "SceneSpec":
        cams = d.get("cameras", {})
        lights = d.get("lights", {})
        enc = d.get("encoding", {})
        kwargs = dict(
            mesh=d.get("mesh", "builtin:icosphere"),
            mesh_subdivisions=int(d.get("mesh_subdivisions", 3)),
            camera_count=int(cams.get("count", 20)), camera_radius=float(cams.get("radius", 4.0)),
            camera_elevation_deg=float(cams.get("elevation_deg", 20.0)),
            image_size=int(cams.get("image_size", 48)), fov_deg=float(cams.get("fov_deg", 30.0)),
            light_count=int(lights.get("count", 96)), light_cone_deg=float(lights.get("cone_deg", 45.0)),
            light_directions=lights.get("directions"),
            irradiance=tuple(float(x) for x in lights.get("irradiance", (1.0, 1.0, 1.0))),
            noise_sigma=float(d.get("noise_sigma", 1e-3)), white_level=float(d.get("white_level", 1.0)),
            seed=int(d.get("seed", 0)), split=SplitSpec(**d.get("split", {})),
            encoding=enc.get("kind", "auto"), lbo_k=int(enc.get("k", DEFAULT_K)),
            lbo_budget=int(enc.get("budget", DENSE_BUDGET)), base_dir=str(base_dir),
        )
        if "material" in d:
            kwargs["material"] = Material.from_dict(d["material"])
        return cls(**kwargs)

    @classmethod
    def from_json(cls, path: str | Path) -> "SceneSpec":
        path = Path(path)
        return cls.from_dict(json.loads(path.read_text()), path.parent)

    # -- derived objects --------------------------------------------------
    def load_mesh(self) -> TriangleMesh:
        if self.mesh.startswith("builtin:"):
            name = self.mesh.split(":", 1)[1]
            if name != "icosphere":
                raise ValueError(f"unknown builtin mesh {name!r}")
            return icosphere(self.mesh_subdivisions)
        p = Path(self.mesh)
        if not p.is_absolute():
            p = Path(self.base_dir) / p
        return load_mesh(p)

    def cameras(self) -> list[Camera]:
        return ring_cameras(self.camera_count, self.camera_radius, self.camera_elevation_deg,
                            self.image_size, self.image_size, self.fov_deg)

    def camera_light_dirs(self) -> np.ndarray:
        if self.light_directions is not None:
            d = np.asarray(self.light_directions, dtype=np.float64)
            return d / np.linalg.norm(d, axis=1, keepdims=True)
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, 0x11647]))
        return camera_lights(self.light_count, self.light_cone_deg, rng)


# -- records ----------------------------------------------------------------
def write_records(path: str | Path, records: np.ndarray) -> None:
    records = np.asarray(records, dtype=RECORD_DTYPE)
    with open(path, "wb") as fh:
        fh.write(RECORD_MAGIC)
        fh.write(struct.pack("<III", RECORD_VERSION, RECORD_DTYPE.itemsize, len(records)))
        fh.write(records.tobytes())


def read_records(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:8] != RECORD_MAGIC:
        raise RecordFormatError(f"{path}: bad magic, not a record file")
    if len(data) < 20:
        raise RecordFormatError(f"{path}: truncated header")
    version, size, count = struct.unpack("<III", data[8:20])
    if version != RECORD_VERSION:
        raise RecordFormatError(f"{path}: unsupported record version {version}")
    if size != RECORD_DTYPE.itemsize:
        raise RecordFormatError(f"{path}: record size {size} != {RECORD_DTYPE.itemsize}")
    if len(data) != 20 + size * count:
        raise RecordFormatError(f"{path}: expected {count} records, file is truncated or padded")
    return np.frombuffer(data, dtype=RECORD_DTYPE, count=count, offset=20).copy()


def pair_name(view: int, light: int) -> str:
    return f"v{view:03d}_l{light:03d}"


# -- scene ------------------------------------------------------------------
@dataclass
class Scene:
    spec: SceneSpec
    mesh: TriangleMesh
    bvh: BVH
    cameras: list[Camera]
    light_dirs_cam: np.ndarray
    encoder: PositionEncoder

    @classmethod
    def build(cls, spec: SceneSpec, basis: LBOBasis | None = None) -> "Scene":
        mesh = spec.load_mesh()
        if basis is not None:
            encoder = PositionEncoder("lbo", mesh, basis)
        else:
            encoder = make_encoder(mesh, spec.encoding, spec.lbo_k, spec.lbo_budget)
        return cls(spec, mesh, build_bvh(mesh), spec.cameras(), spec.camera_light_dirs(), encoder)

    def light(self, view: int, light: int):
        return light_for_camera(self.cameras[view], self.light_dirs_cam[light], self.spec.irradiance)


def render_records(scene: Scene, view: int, light: int, brdf, hits=None,
                   noise_rng: np.random.Generator | None = None, sigma: float = 0.0,
                   white_level: float = 1.0):
    """Render one (view, light) image and its per-pixel records."""
    cam = scene.cameras[view]
    lt = scene.light(view, light)
    res = render_view(scene.mesh, scene.bvh, cam, lt, brdf, hits=hits)
    clean = res.image
    noisy = clean.copy()
    if sigma > 0:
        noise = noise_rng.normal(0.0, sigma, size=clean.shape)
        noisy = np.where(res.mask[..., None], np.maximum(clean + noise, 0.0), 0.0)
    h = res.hits
    idx = np.flatnonzero(res.valid)
    rec = np.zeros(len(idx), dtype=RECORD_DTYPE)
    rec["face"] = h.face[idx]
    rec["bary"] = h.bary[idx]
    rec["position"] = h.position[idx]
    rec["normal"] = h.normal[idx]
    rec["view_dir"] = h.view_dir[idx]
    rec["light_dir"] = lt.direction
    rec["visibility"] = res.visibility[idx]
    rec["irradiance"] = lt.irradiance
    px = h.pixel[idx]
    rec["radiance"] = noisy[px[:, 0], px[:, 1]]
    rec["clean"] = res.radiance[idx]
    rec["brdf"] = res.brdf[idx]
    rec["pixel"] = px
    rec["view_id"] = view
    rec["light_id"] = light
    rec["saturated"] = np.any(rec["radiance"] >= white_level, axis=1)
    return noisy, res, rec


def noise_rng(seed: int, view: int, light: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, view, light]))


def generate(spec: SceneSpec, out_dir: str | Path, pairs: list[tuple[int, int]] | None = None,
             write_images: bool = True) -> "Dataset":
    """Render every (view, light) pair (or just ``pairs``) with seeded noise."""
    out = Path(out_dir)
    (out / "records").mkdir(parents=True, exist_ok=True)
    if write_images:
        (out / "images").mkdir(exist_ok=True)
    scene = Scene.build(spec)
    (out / "scene.json").write_text(json.dumps(spec.to_dict(), indent=2, sort_keys=True))
    if scene.encoder.kind == "lbo":
        b = scene.encoder.basis
        save_npz(out / "lbo.npz", eigenvalues=b.eigenvalues, eigenfunctions=b.eigenfunctions,
                 blocks=np.asarray(b.blocks))
    splits = split(spec.camera_count, spec.light_count, spec.split, spec.seed)
    (out / "split.json").write_text(json.dumps(splits.to_dict(), indent=2))
    if pairs is None:
        pairs = [(v, l) for v in range(spec.camera_count) for l in range(spec.light_count)]
    brdf = material_brdf(spec.material)
    masks = {}
    hits_cache = {}
    for v, l in pairs:
        if v not in hits_cache:
            hits_cache = {v: primary_hits(scene.mesh, scene.bvh, scene.cameras[v])}
        noisy, res, rec = render_records(scene, v, l, brdf, hits_cache[v], noise_rng(spec.seed, v, l),
                                         spec.noise_sigma, spec.white_level)
        masks[f"view{v:03d}"] = res.mask
        write_records(out / "records" / f"{pair_name(v, l)}.rec", rec)
        if write_images:
            write_pfm(out / "images" / f"{pair_name(v, l)}.pfm", noisy)
    save_npz(out / "masks.npz", **masks)
    return Dataset(out, spec, scene)


# -- splits -----------------------------------------------------------------
@dataclass
class Split:
    train: list[tuple[int, int]]
    test: list[tuple[int, int]]
    train_views: list[int]
    test_views: list[int]
    test_lights: list[int]

    def to_dict(self) -> dict:
        return {"train": [list(p) for p in self.train], "test": [list(p) for p in self.test],
                "train_views": self.train_views, "test_views": self.test_views,
                "test_lights": self.test_lights}

    @classmethod
    def from_dict(cls, d: dict) -> "Split":
        return cls([tuple(p) for p in d["train"]], [tuple(p) for p in d["test"]],
                   list(d["train_views"]), list(d["test_views"]), list(d["test_lights"]))


def split(n_views: int, n_lights: int, spec: SplitSpec, seed: int) -> Split:
    """Disjoint view sets; test pairs use held-out lights that no training
    pair sees."""
    if spec.train_views + spec.test_views > n_views:
        raise SplitError(f"need {spec.train_views + spec.test_views} views, have {n_views}")
    if spec.train_lights + spec.test_lights > n_lights:
        raise SplitError(f"need {spec.train_lights + spec.test_lights} lights, have {n_lights}")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5B1]))
    views = rng.permutation(n_views)
    train_views = sorted(int(v) for v in views[:spec.train_views])
    test_views = sorted(int(v) for v in views[spec.train_views:spec.train_views + spec.test_views])
    lights = rng.permutation(n_lights)
    test_lights = sorted(int(l) for l in lights[n_lights - spec.test_lights:])
    pool = lights[:n_lights - spec.test_lights]
    train = []
    for v in train_views:
        chosen = sorted(int(l) for l in rng.choice(pool, spec.train_lights, replace=False))
        train += [(v, l) for l in chosen]
    test = [(v, l) for v in test_views for l in test_lights]
    return Split(train, test, train_views, test_views, test_lights)


# -- loading ----------------------------------------------------------------
class Dataset:
    def __init__(self, root: str | Path, spec: SceneSpec | None = None, scene: Scene | None = None):
        self.root = Path(root)
        if not (self.root / "scene.json").exists():
            raise FileNotFoundError(f"{self.root}: no scene.json; run gen-data first")
        self.spec = spec or SceneSpec.from_dict(json.loads((self.root / "scene.json").read_text()), self.root)
        if scene is None:
            basis = None
            if (self.root / "lbo.npz").exists():
                z = np.load(self.root / "lbo.npz")
                basis = LBOBasis(z["eigenvalues"], z["eigenfunctions"], [tuple(map(int, b)) for b in z["blocks"]])
            scene = Scene.build(self.spec, basis)
        self.scene = scene
        self.split = Split.from_dict(json.loads((self.root / "split.json").read_text()))

    def records(self, pairs) -> np.ndarray:
        parts = [read_records(self.root / "records" / f"{pair_name(v, l)}.rec") for v, l in pairs]
        return np.concatenate(parts) if parts else np.zeros(0, dtype=RECORD_DTYPE)

    def mask(self, view: int) -> np.ndarray:
        with np.load(self.root / "masks.npz") as z:
            return z[f"view{view:03d}"]

    def encode(self, records: np.ndarray) -> np.ndarray:
        return self.scene.encoder.encode(records["face"], records["bary"])
