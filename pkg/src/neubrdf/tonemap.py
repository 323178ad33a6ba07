"""sRGB gamma mapping of linear radiance."""

from __future__ import annotations

import numpy as np

from .nn import autodiff as ad

BREAK = 0.0031308
LINEAR_SLOPE = 323.0 / 25.0
POWER_SCALE = 211.0 / 200.0
POWER_OFFSET = 11.0 / 200.0
EXPONENT = 5.0 / 12.0


def _gamma_np(c):
    c = np.asarray(c)
    # the power branch is evaluated on a safe argument to avoid 0 ** negative
    safe = np.maximum(c, BREAK)
    return np.where(c <= BREAK, LINEAR_SLOPE * c, POWER_SCALE * safe ** EXPONENT - POWER_OFFSET)


def _gamma_grad(c):
    safe = np.maximum(c, BREAK)
    return np.where(c <= BREAK, LINEAR_SLOPE, POWER_SCALE * EXPONENT * safe ** (EXPONENT - 1.0))


def gamma(c):
    """Linear -> sRGB for ``c`` in [0, 1]; callers clamp first."""
    return ad.custom(c, _gamma_np, _gamma_grad)


def gamma_clamped(c):
    """Clamp to [0, 1] (zero gradient outside), then apply :func:`gamma`."""
    return gamma(ad.clip(c, 0.0, 1.0))


def srgb(image: np.ndarray) -> np.ndarray:
    return _gamma_np(np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0))
