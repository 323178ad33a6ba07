import numpy as np
import pytest

from neubrdf.dataset import SceneSpec, SplitSpec, generate
from neubrdf.evaluate import evaluate_model
from neubrdf.materials import lambertian
from neubrdf.neural import ModelSpec, NeuralBRDF
from neubrdf.nn import Tensor
from neubrdf.nn import autodiff as ad
from neubrdf.nn import gradient_check
from neubrdf.tonemap import BREAK, _gamma_grad, gamma, srgb
from neubrdf.train import (DivergenceError, TrainConfig, TrainingPool, image_loss, regularizers, train_model,
                           write_loss_csv)


def test_gamma_examples():
    assert srgb(0.0) == 0.0
    assert srgb(1.0) == pytest.approx(1.0, abs=1e-15)
    assert srgb(0.5) == pytest.approx(1.055 * 0.5 ** (5 / 12) - 0.055, abs=1e-15)
    assert srgb(0.5) == pytest.approx(0.73536, abs=1e-5)
    lo, hi = srgb(BREAK), srgb(np.nextafter(BREAK, 1.0))
    assert abs(hi - lo) < 1e-6
    c = np.linspace(0, 1, 10_001)
    assert np.all(np.diff(srgb(c)) > 0)


def test_gamma_slope_dark_vs_bright():
    assert _gamma_grad(0.01) > 5 * _gamma_grad(0.9)
    gt = np.array([[0.01, 0.01, 0.01], [0.9, 0.9, 0.9]])
    dark = float(ad.value(image_loss(gt + [[0.005] * 3, [0.0] * 3], gt)))
    bright = float(ad.value(image_loss(gt + [[0.0] * 3, [0.005] * 3], gt)))
    assert dark > bright


def test_loss_zero_and_clamp():
    gt = np.random.default_rng(0).random((10, 3))
    assert float(ad.value(image_loss(gt, gt))) == 0.0
    # values beyond 1 clamp to the same tone-mapped value
    assert float(ad.value(image_loss(np.full((2, 3), 1.5), np.full((2, 3), 3.0)))) == 0.0
    p = Tensor(np.array([[1.5, -0.2, 0.4]]), requires_grad=True)
    image_loss(p, np.array([[0.2, 0.2, 0.2]])).backward()
    assert p.grad[0, 0] == 0.0 and p.grad[0, 1] == 0.0 and p.grad[0, 2] != 0.0


def test_loss_gradient_matches_finite_differences():
    rng = np.random.default_rng(1)
    p = Tensor(rng.uniform(0.01, 0.95, (20, 3)), requires_grad=True)
    gt = rng.uniform(0.0, 1.0, (20, 3))
    rep = gradient_check([p], lambda: image_loss(p, gt), tol=1e-4, h=1e-7, max_entries=None)
    assert rep.passed, rep.max_rel_error
    q = Tensor(rng.uniform(0.05, 0.95, (20, 3)), requires_grad=True)
    s = Tensor(rng.uniform(0.0, 0.5, (20, 3)), requires_grad=True)

    def reg():
        a, b = regularizers(q, s, gt)
        return a + b
    rep = gradient_check([q, s], reg, tol=1e-4, h=1e-7, max_entries=None)
    assert rep.passed, rep.max_rel_error


def test_gamma_tensor_matches_numpy():
    c = np.linspace(0, 1, 101)
    np.testing.assert_array_equal(ad.value(gamma(Tensor(c))), srgb(c))


def test_regularizer_examples():
    gt = np.random.default_rng(2).random((6, 3))
    reg_d, reg_s = regularizers(gt, np.zeros((6, 3)), gt)
    assert float(ad.value(reg_d)) == 0.0 and float(ad.value(reg_s)) == 0.0
    reg_d, reg_s = regularizers(gt * 0.5, np.full((6, 3), 0.1), gt)
    assert float(ad.value(reg_d)) > 0 and float(ad.value(reg_s)) == pytest.approx(0.1)


def test_config_validation():
    assert TrainConfig().batch_size == 1 << 15 and TrainConfig().reg_diffuse == 5e-4
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(reg_specular=-1.0)
    assert TrainConfig.from_dict({**TrainConfig(lr=1e-3).to_dict(), "extra": 1}).lr == 1e-3


@pytest.fixture(scope="module")
def tiny(tmp_path_factory):
    spec = SceneSpec(mesh_subdivisions=2, material=lambertian([0.6, 0.4, 0.2]), camera_count=3, image_size=24,
                     light_count=8, split=SplitSpec(2, 4, 1, 4), seed=1, encoding="xyz")
    ds = generate(spec, tmp_path_factory.mktemp("tiny"))
    rec = ds.records(ds.split.train)
    return ds, TrainingPool.from_records(rec, ds.encode(rec))


def test_zero_iterations_and_empty_pool(tiny):
    ds, pool = tiny
    m = NeuralBRDF(ModelSpec("single_mlp", ds.scene.encoder.dim, width=16), seed=0)
    before = [p.data.copy() for p in m.params]
    res = train_model(m, pool, TrainConfig(iterations=0))
    assert res.losses == []
    assert all(np.array_equal(a, p.data) for a, p in zip(before, m.params))
    with pytest.raises(ValueError):
        train_model(m, pool.__class__(pool.x_enc[:0], pool.geom.subset(np.arange(0)), pool.shade[:0],
                                      pool.target[:0]), TrainConfig(iterations=1))


@pytest.mark.parametrize("recip", ["none", "random_swap"])
def test_same_seed_same_curve(tiny, recip):
    ds, pool = tiny
    curves = []
    for _ in range(2):
        m = NeuralBRDF(ModelSpec("single_mlp", ds.scene.encoder.dim, recip, width=16), seed=2)
        curves.append(train_model(m, pool, TrainConfig(iterations=12, batch_size=256, seed=4)).loss_curve)
    assert np.array_equal(curves[0], curves[1])
    m = NeuralBRDF(ModelSpec("single_mlp", ds.scene.encoder.dim, recip, width=16), seed=2)
    other = train_model(m, pool, TrainConfig(iterations=12, batch_size=256, seed=5)).loss_curve
    assert not np.array_equal(curves[0], other)


def test_loss_decreases_and_checkpoints(tiny, tmp_path):
    ds, pool = tiny
    m = NeuralBRDF(ModelSpec("additive_shared", ds.scene.encoder.dim, enhanced=True, width=32), seed=3)
    cfg = TrainConfig(iterations=60, batch_size=512, lr=2e-3, checkpoint_every=30, checkpoint_dir=str(tmp_path))
    res = train_model(m, pool, cfg)
    curve = res.loss_curve
    assert curve[-10:].mean() < 0.5 * curve[:5].mean()
    assert all(r["reg_diffuse"] > 0 for r in res.losses)
    assert sorted(p.name for p in tmp_path.iterdir()) == ["ckpt_000030.bin", "ckpt_000060.bin"]
    m2, header = NeuralBRDF.load(tmp_path / "ckpt_000060.bin")
    assert header["extra"]["iteration"] == 60
    write_loss_csv(tmp_path / "loss.csv", res.losses)
    assert len((tmp_path / "loss.csv").read_text().splitlines()) == 61


def test_divergence_detected(tiny):
    ds, pool = tiny
    bad = TrainingPool(pool.x_enc, pool.geom, pool.shade, np.full_like(pool.target, np.nan))
    m = NeuralBRDF(ModelSpec("single_mlp", ds.scene.encoder.dim, width=16), seed=0)
    with pytest.raises(DivergenceError):
        train_model(m, bad, TrainConfig(iterations=3, batch_size=64))


@pytest.mark.slow
def test_lambertian_ts_recovery(tmp_path):
    spec = SceneSpec(mesh_subdivisions=3, material=lambertian([0.55, 0.35, 0.2]), camera_count=8, image_size=40,
                     light_count=24, split=SplitSpec(4, 12, 4, 6), seed=3)
    ds = generate(spec, tmp_path)
    rec = ds.records(ds.split.train)
    pool = TrainingPool.from_records(rec, ds.encode(rec))
    m = NeuralBRDF(ModelSpec("ts", ds.scene.encoder.dim), seed=0)
    train_model(m, pool, TrainConfig(iterations=2000, batch_size=4096))
    assert evaluate_model(m, ds).psnr > 40.0
