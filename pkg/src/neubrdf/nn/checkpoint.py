"""Binary checkpoint files.

Layout (all little-endian)::

    8 bytes   magic  b"NBRDFCKP"
    u32       format version
    u32       header length in bytes
    ...       UTF-8 JSON header (model descriptor, MLP configs, dtypes, shapes)
    ...       raw parameter blocks in declaration order, then the optional
              Adam first/second moment blocks in the same order
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Sequence

import numpy as np

from .autodiff import Tensor

MAGIC = b"NBRDFCKP"
VERSION = 1


class CheckpointError(ValueError):
    pass


def write_checkpoint(path: str | Path, header: dict, params: Sequence[Tensor],
                     adam_moments: tuple[Sequence[np.ndarray], Sequence[np.ndarray]] | None = None,
                     adam_step: int = 0) -> None:
    header = dict(header)
    header["blocks"] = [{"shape": list(p.data.shape), "dtype": np.dtype(p.data.dtype).str.lstrip("<>|=")}
                        for p in params]
    header["adam"] = {"present": adam_moments is not None, "step": int(adam_step)}
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(blob)))
        fh.write(blob)
        for p in params:
            fh.write(_le(p.data).tobytes())
        if adam_moments is not None:
            for group in adam_moments:
                for arr in group:
                    fh.write(_le(arr).tobytes())


def _le(arr: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(arr, dtype=np.dtype(arr.dtype).newbyteorder("<"))


def read_checkpoint(path: str | Path) -> tuple[dict, list[np.ndarray], tuple[list, list] | None]:
    """Return ``(header, parameter_arrays, adam_moments_or_None)``."""
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    if len(data) < 16:
        raise CheckpointError(f"{path}: truncated header")
    version, hlen = struct.unpack("<II", data[8:16])
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    try:
        header = json.loads(data[16:16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header") from exc
    offset = 16 + hlen

    def read_block(shape, dtype):
        nonlocal offset
        dt = np.dtype(dtype).newbyteorder("<")
        nbytes = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
        if offset + nbytes > len(data):
            raise CheckpointError(f"{path}: truncated parameter data")
        arr = np.frombuffer(data, dtype=dt, count=int(np.prod(shape, dtype=np.int64)), offset=offset)
        offset += nbytes
        return arr.reshape(shape).astype(np.dtype(dtype), copy=True)

    blocks = [read_block(b["shape"], b["dtype"]) for b in header["blocks"]]
    moments = None
    if header.get("adam", {}).get("present"):
        m = [read_block(b["shape"], b["dtype"]) for b in header["blocks"]]
        v = [read_block(b["shape"], b["dtype"]) for b in header["blocks"]]
        moments = (m, v)
    if offset != len(data):
        raise CheckpointError(f"{path}: {len(data) - offset} trailing bytes")
    return header, blocks, moments
