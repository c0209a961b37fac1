"""Reader for the "TPL1" path-loss dataset container.

Implemented against the documented byte layout (magic, u32 version, u32
metadata length, JSON metadata, then fixed-stride records of n_points
float32 heights, n_points float32 path loss, u64 seed, u8 tag), so the
trainer depends only on the exchange format, not on the solver package.
"""

from __future__ import annotations

import json
import struct
from typing import Tuple

import numpy as np

MAGIC = b"TPL1"
VERSION = 1


class DatasetError(RuntimeError):
    pass


def load_dataset(path) -> Tuple[dict, np.ndarray, np.ndarray]:
    """Returns (metadata, heights (n, P) float32, path_loss (n, P) float32)."""
    with open(path, "rb") as f:
        head = f.read(12)
        if len(head) < 12 or head[:4] != MAGIC:
            raise DatasetError(f"{path}: not a TPL1 dataset")
        version, metalen = struct.unpack("<II", head[4:])
        if version != VERSION:
            raise DatasetError(f"{path}: unsupported version {version}")
        meta = json.loads(f.read(metalen).decode("utf-8"))
        n = int(meta["n_records"])
        points = int(meta["radio"]["n_points"])
        rec_dtype = np.dtype([("heights", "<f4", points),
                              ("path_loss", "<f4", points),
                              ("seed", "<u8"), ("tag", "u1")])
        blob = f.read(n * rec_dtype.itemsize)
        if len(blob) < n * rec_dtype.itemsize:
            raise DatasetError(f"{path}: truncated records")
        records = np.frombuffer(blob, dtype=rec_dtype, count=n)
    return meta, records["heights"].copy(), records["path_loss"].copy()


def split_indices(n: int, n_train: int, n_val: int,
                  seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """Disjoint random train/validation index sets, deterministic in seed."""
    if n_train + n_val > n:
        raise ValueError(f"cannot take {n_train}+{n_val} from {n} records")
    perm = np.random.default_rng(seed).permutation(n)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:n_train + n_val])
