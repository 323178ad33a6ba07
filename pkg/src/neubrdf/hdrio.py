"""PFM images and tone-mapped previews."""

from __future__ import annotations

import io
import re
import zipfile
from pathlib import Path

import numpy as np

from .tonemap import gamma


class PFMError(ValueError):
    pass


def save_npz(path: str | Path, **arrays: np.ndarray) -> None:
    """``np.savez`` with fixed member timestamps so equal inputs give equal bytes."""
    with zipfile.ZipFile(path, "w", zipfile.ZIP_STORED) as zf:
        for name in sorted(arrays):
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.asanyarray(arrays[name]), allow_pickle=False)
            zf.writestr(zipfile.ZipInfo(name + ".npy", date_time=(1980, 1, 1, 0, 0, 0)), buf.getvalue())


def write_pfm(path: str | Path, image: np.ndarray, little_endian: bool = True) -> None:
    """Colour (H, W, 3) or grey (H, W) float32 PFM, rows stored bottom-up."""
    img = np.asarray(image, dtype=np.float32)
    if img.ndim == 3 and img.shape[2] == 3:
        tag = b"PF"
    elif img.ndim == 2:
        tag = b"Pf"
    else:
        raise PFMError("PFM stores (H, W) or (H, W, 3) arrays")
    h, w = img.shape[:2]
    scale = -1.0 if little_endian else 1.0
    dt = np.dtype("<f4" if little_endian else ">f4")
    with open(path, "wb") as fh:
        fh.write(tag + b"\n")
        fh.write(f"{w} {h}\n".encode())
        fh.write(f"{scale}\n".encode())
        fh.write(np.ascontiguousarray(img[::-1], dtype=dt).tobytes())


def read_pfm(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    m = re.match(rb"(P[Ff])\s+(\d+)\s+(\d+)\s+([-+0-9.eE]+)\s", data)
    if not m:
        raise PFMError(f"{path}: not a PFM file")
    chans = 3 if m.group(1) == b"PF" else 1
    w, h, scale = int(m.group(2)), int(m.group(3)), float(m.group(4))
    dt = np.dtype("<f4" if scale < 0 else ">f4")
    count = w * h * chans
    body = data[m.end():]
    if len(body) < count * 4:
        raise PFMError(f"{path}: truncated pixel data")
    img = np.frombuffer(body, dtype=dt, count=count).astype(np.float32)
    img = img.reshape(h, w, chans) if chans == 3 else img.reshape(h, w)
    return img[::-1].copy()


def to_srgb8(image: np.ndarray) -> np.ndarray:
    return np.round(gamma(np.clip(image, 0.0, 1.0)) * 255).astype(np.uint8)


def write_png_preview(path: str | Path, image: np.ndarray) -> None:
    import matplotlib.image

    matplotlib.image.imsave(str(path), to_srgb8(image))
