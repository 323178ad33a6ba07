import numpy as np
import pytest
from skimage.metrics import structural_similarity

from neubrdf.metrics import MetricError, dssim, image_metrics, psnr, rmse_cbrt, ssim
from neubrdf.tonemap import srgb


def test_psnr_examples():
    a = np.random.default_rng(0).random((16, 16, 3))
    assert psnr(a, a) == float("inf")
    assert psnr(np.full((8, 8, 3), 0.5), np.full((8, 8, 3), 0.51)) == pytest.approx(40.0, abs=1e-9)


def test_psnr_matches_loop_oracle():
    rng = np.random.default_rng(1)
    a, b = rng.random((10, 12, 3)), rng.random((10, 12, 3))
    mask = rng.random((10, 12)) > 0.3
    total, count = 0.0, 0
    for i in range(10):
        for j in range(12):
            if mask[i, j]:
                for c in range(3):
                    total += (a[i, j, c] - b[i, j, c]) ** 2
                    count += 1
    assert psnr(a, b, mask) == pytest.approx(10 * np.log10(count / total), rel=1e-12)
    with pytest.raises(MetricError):
        psnr(a, b, np.zeros((10, 12), dtype=bool))
    with pytest.raises(MetricError):
        psnr(a, b[:5])


def test_dssim_examples():
    rng = np.random.default_rng(2)
    a = rng.random((32, 32, 3))
    assert dssim(a, a) == pytest.approx(0.0, abs=1e-12)
    board = (np.indices((32, 32)).sum(0) % 2).astype(float)[..., None].repeat(3, 2)
    assert dssim(board, 1.0 - board) > 0.4
    assert 0.0 < dssim(a, np.clip(a + rng.normal(0, 0.05, a.shape), 0, 1)) < 0.2
    with pytest.raises(MetricError):
        ssim(a[:8, :8], a[:8, :8])


@pytest.mark.parametrize("shape", [(40, 40, 3), (33, 57, 3), (24, 24)])
def test_ssim_matches_skimage(shape):
    rng = np.random.default_rng(3)
    a = rng.random(shape)
    b = np.clip(a + rng.normal(0, 0.1, shape), 0, 1)
    ref = structural_similarity(a, b, gaussian_weights=True, sigma=1.5, use_sample_covariance=False,
                                data_range=1.0, channel_axis=2 if len(shape) == 3 else None)
    assert ssim(a, b) == pytest.approx(ref, abs=1e-6)


def test_image_metrics_use_srgb():
    rng = np.random.default_rng(4)
    gt = rng.random((20, 20, 3)) * 1.5
    pred = gt * 1.02
    mask = np.ones((20, 20), dtype=bool)
    m = image_metrics(pred, gt, mask)
    assert m["psnr"] == pytest.approx(psnr(srgb(pred), srgb(gt), mask))
    assert m["dssim"] == pytest.approx(dssim(srgb(pred), srgb(gt), mask))


def test_metrics_permutation_invariant():
    rng = np.random.default_rng(5)
    p, g = rng.random((200, 3)), rng.random((200, 3))
    cv, cl = rng.uniform(0.1, 1, 200), rng.uniform(0.1, 1, 200)
    perm = rng.permutation(200)
    assert rmse_cbrt(p, g, cv, cl).value == pytest.approx(rmse_cbrt(p[perm], g[perm], cv[perm], cl[perm]).value,
                                                          rel=1e-12)


def test_rmse_cbrt_exclusions():
    pred = np.array([[8.0, 8.0, 8.0], [1.0, 1.0, 1.0], [0.0, 0.0, 0.0], [27.0, 27.0, 27.0]])
    gt = np.array([[1.0, 1.0, 1.0], [1.0, 1.0, 1.0], [1.0, 1.0, 1.0], [8.0, 8.0, 8.0]])
    c85 = np.cos(np.radians(85.0))
    cos_v = np.array([1.0, 1.0, c85, 0.9])
    cos_l = np.array([1.0, 1.0, 1.0, 0.9])
    sat = np.array([False, False, False, True])
    r = rmse_cbrt(pred, gt, cos_v, cos_l, sat)
    # records 0 and 1 remain: errors (2 - 1) and 0
    assert r.value == pytest.approx(np.sqrt(0.5), rel=1e-12)
    assert (r.n_used, r.n_grazing, r.n_saturated) == (2, 1, 1)
    with pytest.raises(MetricError):
        rmse_cbrt(pred[2:3], gt[2:3], cos_v[2:3], cos_l[2:3])
