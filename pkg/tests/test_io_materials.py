import zipfile

import numpy as np
import pytest

from neubrdf.angles import ShadingGeometry, frame_from_normal
from neubrdf.audit import cosine_hemisphere, energy_audit, material_evaluator
from neubrdf.hdrio import PFMError, read_pfm, save_npz, to_srgb8, write_pfm, write_png_preview
from neubrdf.materials import Material, Variation, default_two_lobe, lambertian
from neubrdf.mesh import icosphere


# -- PFM / npz ------------------------------------------------------------------
@pytest.mark.parametrize("little", [True, False])
@pytest.mark.parametrize("shape", [(5, 7, 3), (4, 6)])
def test_pfm_round_trip_bit_exact(tmp_path, little, shape):
    img = np.random.default_rng(0).normal(size=shape).astype(np.float32)
    img.flat[0] = np.float32(1e-38)
    write_pfm(tmp_path / "a.pfm", img, little_endian=little)
    back = read_pfm(tmp_path / "a.pfm")
    assert back.dtype == np.float32 and back.tobytes() == img.tobytes()


def test_pfm_rows_bottom_up(tmp_path):
    img = np.zeros((2, 1, 3), dtype=np.float32)
    img[0] = 1.0
    write_pfm(tmp_path / "a.pfm", img)
    body = (tmp_path / "a.pfm").read_bytes().split(b"\n", 3)[3]
    assert np.frombuffer(body, "<f4")[:3].tolist() == [0.0, 0.0, 0.0]


def test_pfm_errors(tmp_path):
    (tmp_path / "x.pfm").write_bytes(b"P6\n1 1\n255\n...")
    with pytest.raises(PFMError):
        read_pfm(tmp_path / "x.pfm")
    write_pfm(tmp_path / "t.pfm", np.ones((3, 3, 3)))
    (tmp_path / "t.pfm").write_bytes((tmp_path / "t.pfm").read_bytes()[:-4])
    with pytest.raises(PFMError, match="truncated"):
        read_pfm(tmp_path / "t.pfm")
    with pytest.raises(PFMError):
        write_pfm(tmp_path / "bad.pfm", np.ones((2, 2, 2)))


def test_save_npz_deterministic_and_loadable(tmp_path):
    arrays = {"b": np.arange(5.0), "a": np.eye(3)}
    save_npz(tmp_path / "1.npz", **arrays)
    save_npz(tmp_path / "2.npz", **arrays)
    assert (tmp_path / "1.npz").read_bytes() == (tmp_path / "2.npz").read_bytes()
    with np.load(tmp_path / "1.npz") as z:
        np.testing.assert_array_equal(z["a"], np.eye(3))
    assert zipfile.ZipFile(tmp_path / "1.npz").namelist() == ["a.npy", "b.npy"]


def test_srgb8_preview(tmp_path):
    v = to_srgb8(np.array([0.0, 0.5, 1.0, 4.0]))
    assert v.tolist() == [0, 188, 255, 255]
    write_png_preview(tmp_path / "p.png", np.full((4, 4, 3), 0.2))
    assert (tmp_path / "p.png").read_bytes()[:4] == b"\x89PNG"


# -- materials ------------------------------------------------------------------
def geometry(n, seed=0):
    rng = np.random.default_rng(seed)
    normal = rng.normal(size=(n, 3))
    f = frame_from_normal(normal)
    u = rng.random((4, n))
    return ShadingGeometry.from_vectors(normal, f.to_world(cosine_hemisphere(u[0], u[1])),
                                        f.to_world(cosine_hemisphere(u[2], u[3])), f)


def test_two_lobe_reciprocal_positive_and_above_diffuse():
    g = geometry(5000)
    pos = np.random.default_rng(1).normal(size=(5000, 3))
    m = default_two_lobe()
    f = m.eval(g, pos)
    assert np.max(np.abs(f - m.eval(g.swapped(), pos))) <= 1e-12
    assert np.all(f >= m.diffuse_albedo(pos) / np.pi)


def test_two_lobe_energy_bounded():
    a = energy_audit(material_evaluator(default_two_lobe()), icosphere(1), n_pairs=40, n_mc=2000, seed=0)
    assert a.violations_3sigma == 0


def test_variation_blends_along_axis():
    m = Material("lambertian", {"albedo": [0.2, 0.2, 0.2]}, [Variation("albedo", [0.6, 0.6, 0.6], 2, 1.0)])
    pos = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, np.pi / 2], [0.0, 0.0, -np.pi / 2]])
    np.testing.assert_allclose(m.diffuse_albedo(pos)[:, 0], [0.4, 0.6, 0.2], atol=1e-12)


def test_material_dict_round_trip_and_validation():
    for m in (default_two_lobe(), lambertian(0.3),
              Material("ts", {"roughness": 0.3, "rho_d": [0.5, 0.4, 0.3], "f0": 0.04},
                       [Variation("roughness", 0.6)])):
        back = Material.from_dict(m.to_dict())
        assert back.to_dict() == m.to_dict()
    with pytest.raises(ValueError):
        Material.from_dict({"kind": "ts", "params": {"roughness": 0.3}})
    with pytest.raises(ValueError):
        Material("glass", {})
    with pytest.raises(ValueError):
        Material.from_dict({"kind": "lambertian", "params": {"albedo": 0.5},
                            "variations": [{"param": "roughness", "alt": 0.1}]})


def test_parametric_material_matches_albedo_definitions():
    pos = np.zeros((1, 3))
    ts = Material("ts", {"roughness": 0.3, "rho_d": [0.5, 0.4, 0.3], "f0": 0.04})
    np.testing.assert_allclose(ts.diffuse_albedo(pos), [[0.5, 0.4, 0.3]])
    d = Material("disney", dict(base_color=[0.6, 0.3, 0.2], metallic=0.5, subsurface=0.0, specular=0.5,
                                specular_tint=0.0, roughness=0.5, sheen=0.0, sheen_tint=0.0, clearcoat=0.0,
                                clearcoat_gloss=0.0))
    np.testing.assert_allclose(d.diffuse_albedo(pos), [[0.3, 0.15, 0.1]])
