"""Image metrics on sRGB renderings and the cube-root BRDF error."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from .tonemap import srgb

SSIM_SIGMA = 1.5
SSIM_WIN = 11
SSIM_K1 = 0.01
SSIM_K2 = 0.03
GRAZING_DEG = 80.0


class MetricError(ValueError):
    pass


def psnr(img_a: np.ndarray, img_b: np.ndarray, mask: np.ndarray | None = None) -> float:
    """``10 log10(1 / MSE)`` over masked pixels of two images already in [0, 1]
    display space; ``inf`` when they agree exactly."""
    a, b = np.asarray(img_a, dtype=np.float64), np.asarray(img_b, dtype=np.float64)
    if a.shape != b.shape:
        raise MetricError(f"shape mismatch {a.shape} vs {b.shape}")
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if not mask.any():
            raise MetricError("empty mask")
        a, b = a[mask], b[mask]
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return float("inf")
    return 10.0 * np.log10(1.0 / mse)


def _ssim_map(a: np.ndarray, b: np.ndarray, data_range: float = 1.0) -> np.ndarray:
    """Per-pixel SSIM with an 11x11 Gaussian window (sigma 1.5) and population
    statistics, averaged over channels."""
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    maps = []
    for ch in range(a.shape[2]):
        x, y = a[..., ch], b[..., ch]

        def filt(z):
            return gaussian_filter(z, SSIM_SIGMA, truncate=3.5, mode="reflect")

        ux, uy = filt(x), filt(y)
        vx = filt(x * x) - ux * ux
        vy = filt(y * y) - uy * uy
        vxy = filt(x * y) - ux * uy
        num = (2 * ux * uy + c1) * (2 * vxy + c2)
        den = (ux * ux + uy * uy + c1) * (vx + vy + c2)
        maps.append(num / den)
    return np.mean(maps, axis=0)


def ssim(img_a: np.ndarray, img_b: np.ndarray, mask: np.ndarray | None = None) -> float:
    a, b = np.asarray(img_a, dtype=np.float64), np.asarray(img_b, dtype=np.float64)
    if a.shape != b.shape:
        raise MetricError(f"shape mismatch {a.shape} vs {b.shape}")
    if a.shape[0] < SSIM_WIN or a.shape[1] < SSIM_WIN:
        raise MetricError(f"image {a.shape[:2]} smaller than the {SSIM_WIN}x{SSIM_WIN} window")
    smap = _ssim_map(a, b)
    pad = (SSIM_WIN - 1) // 2
    keep = np.zeros(smap.shape, dtype=bool)
    keep[pad:-pad, pad:-pad] = True
    if mask is not None:
        keep &= np.asarray(mask, dtype=bool)
        if not keep.any():
            raise MetricError("empty mask after cropping the window border")
    return float(np.mean(smap[keep]))


def dssim(img_a: np.ndarray, img_b: np.ndarray, mask: np.ndarray | None = None) -> float:
    """``(1 - SSIM) / 2``; border pixels within half a window are ignored."""
    return (1.0 - ssim(img_a, img_b, mask)) / 2.0


def image_metrics(pred_hdr: np.ndarray, gt_hdr: np.ndarray, mask: np.ndarray) -> dict:
    """PSNR and DSSIM after clamping and gamma mapping to sRGB."""
    a, b = srgb(pred_hdr), srgb(gt_hdr)
    return {"psnr": psnr(a, b, mask), "dssim": dssim(a, b, mask)}


@dataclass
class CbrtResult:
    value: float
    n_used: int
    n_grazing: int
    n_saturated: int

    def to_dict(self) -> dict:
        return vars(self).copy()


def rmse_cbrt(pred: np.ndarray, gt: np.ndarray, cos_v: np.ndarray, cos_l: np.ndarray,
              saturated: np.ndarray | None = None, grazing_deg: float = GRAZING_DEG) -> CbrtResult:
    """RMSE of cube-rooted BRDF values, skipping records whose view or light
    polar angle exceeds ``grazing_deg`` and records from saturated pixels."""
    pred, gt = np.asarray(pred, dtype=np.float64), np.asarray(gt, dtype=np.float64)
    cos_max = np.cos(np.radians(grazing_deg))
    grazing = (np.asarray(cos_v) < cos_max) | (np.asarray(cos_l) < cos_max)
    sat = np.zeros(len(gt), dtype=bool) if saturated is None else np.asarray(saturated, dtype=bool)
    use = ~grazing & ~sat
    if not use.any():
        raise MetricError("every record is excluded")
    err = np.cbrt(pred[use]) - np.cbrt(gt[use])
    return CbrtResult(float(np.sqrt(np.mean(err ** 2))), int(use.sum()), int(grazing.sum()),
                      int((sat & ~grazing).sum()))
