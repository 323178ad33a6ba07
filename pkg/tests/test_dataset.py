import json

import numpy as np
import pytest

from neubrdf.dataset import (RECORD_DTYPE, Dataset, RecordFormatError, Scene, SceneSpec, SplitError, SplitSpec,
                             generate, noise_rng, read_records, render_records, split, write_records)
from neubrdf.materials import default_two_lobe, lambertian
from neubrdf.render import material_brdf


def small_spec(**kw):
    base = dict(mesh_subdivisions=2, material=default_two_lobe(), camera_count=3, image_size=20, light_count=4,
                split=SplitSpec(1, 2, 1, 2), seed=5, lbo_k=16)
    base.update(kw)
    return SceneSpec(**base)


def test_zero_sigma_is_clean(tmp_path):
    ds = generate(small_spec(noise_sigma=0.0), tmp_path)
    rec = ds.records([(v, l) for v in range(3) for l in range(4)])
    assert len(rec) > 100
    assert np.array_equal(rec["radiance"], rec["clean"])


def test_reproducible_bytes(tmp_path):
    generate(small_spec(), tmp_path / "a")
    generate(small_spec(), tmp_path / "b")
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert len(files) > 20
    for rel in files:
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes(), rel


def test_noise_is_zero_mean():
    sigma = 1e-3
    spec = SceneSpec(mesh_subdivisions=3, material=lambertian([0.9, 0.9, 0.9]), camera_count=1, image_size=256,
                     light_directions=[[0.0, 0.0, -1.0]], noise_sigma=sigma, split=SplitSpec(1, 1, 1, 1),
                     encoding="xyz")
    scene = Scene.build(spec)
    brdf = material_brdf(spec.material)
    diffs = []
    for k in range(8):
        noisy, res, _ = render_records(scene, 0, 0, brdf, noise_rng=noise_rng(k, 0, 0), sigma=sigma)
        bright = res.image > 10 * sigma  # far from the clamp at zero
        diffs.append((noisy - res.image)[bright])
    d = np.concatenate(diffs)
    assert d.size >= 1_000_000
    assert abs(d.mean()) <= 3 * sigma / np.sqrt(d.size)
    assert d.std() == pytest.approx(sigma, rel=0.01)


def test_render_equation_consistency(tmp_path):
    ds = generate(small_spec(noise_sigma=0.0), tmp_path)
    rec = ds.records(ds.split.train + ds.split.test)
    cos_l = np.einsum("ij,ij->i", rec["normal"], rec["light_dir"])
    expect = rec["brdf"] * rec["irradiance"] * (rec["visibility"] * cos_l)[:, None]
    assert np.max(np.abs(expect - rec["clean"])) <= 1e-6
    np.testing.assert_allclose(np.linalg.norm(rec["view_dir"], axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(np.linalg.norm(rec["light_dir"], axis=1), 1.0, atol=1e-12)
    assert np.all(rec["radiance"] >= 0)


def test_dataset_reload(tmp_path):
    spec = small_spec()
    ds = generate(spec, tmp_path)
    again = Dataset(tmp_path)
    assert again.spec.to_dict() == spec.to_dict()
    assert again.split == ds.split
    rec = again.records(again.split.train)
    np.testing.assert_array_equal(again.encode(rec), ds.encode(rec))
    assert again.mask(0).shape == (20, 20)
    with pytest.raises(FileNotFoundError):
        Dataset(tmp_path / "missing")


def test_scene_json_round_trip(tmp_path):
    spec = small_spec(light_directions=[[0.1, 0.0, -1.0], [0.0, 0.2, -1.0]])
    p = tmp_path / "scene.json"
    p.write_text(json.dumps(spec.to_dict()))
    back = SceneSpec.from_json(p)
    assert back.to_dict() == spec.to_dict()
    assert back.light_count == 2
    with pytest.raises(ValueError):
        SceneSpec(noise_sigma=-1.0)


# -- splits -----------------------------------------------------------------
def test_default_split_counts():
    s = split(20, 96, SplitSpec(), seed=0)
    assert len(s.train) == 300 and len(s.test) == 120
    assert not set(s.train_views) & set(s.test_views)
    assert not set(s.train) & set(s.test)
    assert not {l for _, l in s.train} & set(s.test_lights)
    assert s == split(20, 96, SplitSpec(), seed=0)
    assert s != split(20, 96, SplitSpec(), seed=1)


def test_tiny_split_and_errors():
    s = split(2, 2, SplitSpec(1, 1, 1, 1), seed=3)
    assert len(s.train) == 1 and len(s.test) == 1
    assert s.train[0][0] != s.test[0][0] and s.train[0][1] != s.test[0][1]
    with pytest.raises(SplitError):
        split(1, 2, SplitSpec(1, 1, 1, 1), seed=0)
    with pytest.raises(SplitError):
        split(4, 3, SplitSpec(1, 2, 1, 2), seed=0)
    with pytest.raises(ValueError):
        SplitSpec(0, 1, 1, 1)


# -- records ----------------------------------------------------------------
def test_record_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    rec = np.zeros(50, dtype=RECORD_DTYPE)
    for name in ("bary", "position", "radiance", "clean", "brdf"):
        rec[name] = rng.normal(size=rec[name].shape)
    rec["face"] = rng.integers(0, 1000, 50)
    write_records(tmp_path / "a.rec", rec)
    back = read_records(tmp_path / "a.rec")
    assert back.tobytes() == rec.tobytes()
    write_records(tmp_path / "empty.rec", rec[:0])
    assert len(read_records(tmp_path / "empty.rec")) == 0


def test_record_format_errors(tmp_path):
    rec = np.zeros(3, dtype=RECORD_DTYPE)
    write_records(tmp_path / "a.rec", rec)
    data = (tmp_path / "a.rec").read_bytes()
    (tmp_path / "magic.rec").write_bytes(b"XXXXXXXX" + data[8:])
    with pytest.raises(RecordFormatError, match="magic"):
        read_records(tmp_path / "magic.rec")
    (tmp_path / "short.rec").write_bytes(data[:-5])
    with pytest.raises(RecordFormatError, match="truncated"):
        read_records(tmp_path / "short.rec")
    (tmp_path / "header.rec").write_bytes(data[:12])
    with pytest.raises(RecordFormatError):
        read_records(tmp_path / "header.rec")
