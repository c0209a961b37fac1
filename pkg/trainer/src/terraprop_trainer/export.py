"""Exporter for the "UNET1D01" weight exchange format.

Writes the layer manifest (JSON with a u64 length prefix after the 8-byte
magic and u32 version) followed by raw little-endian float32 tensors in
manifest order: conv and output-head layers contribute weight then bias,
batchnorm layers gamma, beta, running mean, running variance.
"""

from __future__ import annotations

import json
import struct
from typing import List

import numpy as np

from .model import INPUT_LENGTH, SurrogateUNet

MAGIC = b"UNET1D01"
VERSION = 1


def manifest_layers(model: SurrogateUNet) -> List[dict]:
    return [dict(spec) for spec in model.plan]


def _tensor_arrays(model: SurrogateUNet, spec: dict) -> List[np.ndarray]:
    kind = spec["kind"]
    if kind in ("conv1d", "output_head"):
        conv = model.blocks[spec["name"]]
        return [conv.weight.detach().numpy(), conv.bias.detach().numpy()]
    if kind == "batchnorm1d":
        bn = model.blocks[spec["name"]]
        return [bn.weight.detach().numpy(), bn.bias.detach().numpy(),
                bn.running_mean.numpy(), bn.running_var.numpy()]
    return []


def export_weights(model: SurrogateUNet, path, extra_metadata: dict = None) -> None:
    """Serialize a trained (or freshly initialized) model, including the
    input standardization constants it was trained with."""
    manifest = {
        "heads": model.heads,
        "input_length": INPUT_LENGTH,
        "normalization": {
            "height_mean_m": float(model.height_mean),
            "height_std_m": float(model.height_std),
        },
        "layers": manifest_layers(model),
    }
    if extra_metadata:
        manifest["metadata"] = extra_metadata
    blob = json.dumps(manifest, sort_keys=True,
                      separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<IQ", VERSION, len(blob)))
        f.write(blob)
        for spec in manifest["layers"]:
            for arr in _tensor_arrays(model, spec):
                f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def save_history(history, path) -> None:
    """Training history as JSON lines: {epoch, train_loss, val_loss, lr}."""
    with open(path, "w") as f:
        for row in history:
            f.write(json.dumps(row) + "\n")
