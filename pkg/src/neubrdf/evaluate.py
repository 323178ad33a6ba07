"""Held-out evaluation of a fitted model on a generated dataset."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .angles import ShadingGeometry
from .dataset import Dataset
from .metrics import image_metrics, rmse_cbrt


@dataclass
class PairPrediction:
    view: int
    light: int
    pred: np.ndarray  # HDR image
    gt: np.ndarray  # clean HDR image
    mask: np.ndarray


@dataclass
class EvalResult:
    psnr: float
    dssim: float
    rmse_cbrt: float
    n_images: int
    n_records: int
    cbrt_counts: dict
    per_image: list[dict] = field(default_factory=list)
    images: list[PairPrediction] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"psnr": self.psnr, "dssim": self.dssim, "rmse_cbrt": self.rmse_cbrt,
                "n_images": self.n_images, "n_records": self.n_records,
                "cbrt_counts": self.cbrt_counts, "per_image": self.per_image}


def records_geometry(records: np.ndarray) -> ShadingGeometry:
    return ShadingGeometry.from_vectors(records["normal"], records["view_dir"], records["light_dir"])


def predict_records(model, dataset: Dataset, records: np.ndarray) -> tuple[np.ndarray, ShadingGeometry]:
    geom = records_geometry(records)
    return model.predict(dataset.encode(records), geom), geom


def evaluate_model(model, dataset: Dataset, pairs=None, keep_images: int = 0) -> EvalResult:
    """Image metrics against the clean renderings of ``pairs`` (default: the
    test split) and cube-root BRDF error on their records."""
    pairs = dataset.split.test if pairs is None else pairs
    if not pairs:
        raise ValueError("no pairs to evaluate")
    per_image, images = [], []
    preds, gts, cos_v, cos_l, sat = [], [], [], [], []
    for v, l in pairs:
        rec = dataset.records([(v, l)])
        mask = dataset.mask(v)
        f, geom = predict_records(model, dataset, rec)
        shade = rec["irradiance"] * (rec["visibility"] * np.maximum(geom.cos_nl, 0.0))[:, None]
        pred = np.zeros(mask.shape + (3,))
        gt = np.zeros(mask.shape + (3,))
        px = rec["pixel"]
        pred[px[:, 0], px[:, 1]] = f * shade
        gt[px[:, 0], px[:, 1]] = rec["clean"]
        m = image_metrics(pred, gt, mask)
        per_image.append({"view": v, "light": l, **{k: float(x) for k, x in m.items()}})
        if len(images) < keep_images:
            images.append(PairPrediction(v, l, pred, gt, mask))
        preds.append(f)
        gts.append(rec["brdf"])
        cos_v.append(geom.cos_nv)
        cos_l.append(geom.cos_nl)
        sat.append(rec["saturated"].astype(bool))
    cb = rmse_cbrt(np.concatenate(preds), np.concatenate(gts), np.concatenate(cos_v),
                   np.concatenate(cos_l), np.concatenate(sat))
    psnrs = np.array([r["psnr"] for r in per_image])
    return EvalResult(float(np.mean(psnrs)), float(np.mean([r["dssim"] for r in per_image])), cb.value,
                      len(pairs), int(sum(len(p) for p in preds)),
                      {"used": cb.n_used, "grazing": cb.n_grazing, "saturated": cb.n_saturated},
                      per_image, images)


def heldout_loss(model, dataset: Dataset, pairs=None) -> float:
    """Tone-mapped MSE against the noisy observations of ``pairs``."""
    from .tonemap import srgb

    pairs = dataset.split.test if pairs is None else pairs
    rec = dataset.records(pairs)
    f, geom = predict_records(model, dataset, rec)
    shade = rec["irradiance"] * (rec["visibility"] * np.maximum(geom.cos_nl, 0.0))[:, None]
    return float(np.mean((srgb(f * shade) - srgb(rec["radiance"])) ** 2))
