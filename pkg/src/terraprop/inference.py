"""1D U-Net surrogate inference engine and the "UNET1D01" weight format.

The engine executes a trained encoder/decoder network that maps a terrain
profile (256 heights) to a path-loss profile in a single pass, in pure
NumPy with no deep-learning runtime.  Networks with two output channels
additionally predict a per-point log variance, exposed as a positive
sigma band.

Weight file layout (little endian):

    magic    8 bytes  b"UNET1D01"
    version  u32
    manlen   u64
    manifest JSON (utf-8): {"heads", "input_length", "normalization":
             {"height_mean_m", "height_std_m"}, "layers": [...]}
    tensors  raw float32, row-major, concatenated in manifest order:
             conv1d / output_head -> weight (out, in, kernel), bias (out,)
             batchnorm1d          -> gamma, beta, running_mean, running_var

Execution model: layers run in manifest order; the input of every maxpool
is pushed onto a skip stack, and each concat_skip pops the most recent
entry and concatenates it after the current channels.  Convolutions are
cross-correlations with zero "same" padding, upsampling is linear
interpolation (scale 2, half-pixel centres), dropout is the identity at
inference time.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from .terrain import TerrainProfile

WEIGHTS_MAGIC = b"UNET1D01"
WEIGHTS_VERSION = 1

LAYER_KINDS = ("conv1d", "batchnorm1d", "maxpool", "upsample_linear",
               "concat_skip", "dropout", "relu", "output_head")

STAGE_WIDTHS = (16, 32, 64, 128, 256)  # half the classical U-Net widths
WIDE_KERNEL = 11                        # first two convolutions
DEFAULT_OUTPUT_BIAS_DB = -134.0


class WeightFormatError(RuntimeError):
    """Raised when a weight file fails structural validation."""


@dataclass(frozen=True)
class UNetWeights:
    heads: int
    input_length: int
    height_mean_m: float
    height_std_m: float
    layers: Tuple[dict, ...]
    tensors: Dict[str, Dict[str, np.ndarray]]


@dataclass(frozen=True)
class SurrogatePrediction:
    mean_db: np.ndarray
    sigma_db: Optional[np.ndarray]


def standard_layer_plan(heads: int = 1) -> List[dict]:
    """The reference architecture: 4 down/up stages at half-width channels,
    11-wide kernels on the first two convolutions, dropout bracketing the
    bottleneck (after the 3rd and 4th pooling stages and the first
    upsampling), linear upsampling, and a bias-only-activated output head.
    """
    if heads not in (1, 2):
        raise ValueError("heads must be 1 or 2")
    plan: List[dict] = []

    def conv(name, cin, cout, kernel):
        plan.append({"name": name, "kind": "conv1d", "in_channels": cin,
                     "out_channels": cout, "kernel_size": kernel})
        plan.append({"name": f"{name}_bn", "kind": "batchnorm1d",
                     "channels": cout, "eps": 1e-5})
        plan.append({"name": f"{name}_relu", "kind": "relu"})

    def block(name, cin, cout, kernel=3):
        conv(f"{name}_conv1", cin, cout, kernel)
        conv(f"{name}_conv2", cout, cout, kernel)

    widths = STAGE_WIDTHS
    block("enc1", 1, widths[0], WIDE_KERNEL)
    plan.append({"name": "pool1", "kind": "maxpool", "width": 2, "stride": 2})
    block("enc2", widths[0], widths[1])
    plan.append({"name": "pool2", "kind": "maxpool", "width": 2, "stride": 2})
    block("enc3", widths[1], widths[2])
    plan.append({"name": "pool3", "kind": "maxpool", "width": 2, "stride": 2})
    plan.append({"name": "drop1", "kind": "dropout", "p": 0.5})
    block("enc4", widths[2], widths[3])
    plan.append({"name": "pool4", "kind": "maxpool", "width": 2, "stride": 2})
    plan.append({"name": "drop2", "kind": "dropout", "p": 0.5})
    block("bottleneck", widths[3], widths[4])
    for stage, (chi, clo) in enumerate(
            zip(widths[:0:-1], widths[-2::-1]), start=1):
        plan.append({"name": f"up{stage}", "kind": "upsample_linear", "scale": 2})
        if stage == 1:
            plan.append({"name": "drop3", "kind": "dropout", "p": 0.5})
        plan.append({"name": f"cat{stage}", "kind": "concat_skip"})
        block(f"dec{stage}", chi + clo, clo)
    plan.append({"name": "head", "kind": "output_head", "in_channels": widths[0],
                 "out_channels": heads, "kernel_size": 1})
    return plan


def _tensor_specs(layer: dict) -> List[Tuple[str, Tuple[int, ...]]]:
    kind = layer["kind"]
    if kind in ("conv1d", "output_head"):
        shape = (layer["out_channels"], layer["in_channels"], layer["kernel_size"])
        return [("weight", shape), ("bias", (layer["out_channels"],))]
    if kind == "batchnorm1d":
        c = (layer["channels"],)
        return [("gamma", c), ("beta", c), ("running_mean", c), ("running_var", c)]
    return []


def _validate_graph(manifest: dict) -> None:
    """Shape-chain the layer list (with skip-stack simulation) and reject
    inconsistent channel counts or lengths with a named-layer diagnostic."""
    heads = manifest.get("heads")
    if heads not in (1, 2):
        raise WeightFormatError(f"heads must be 1 or 2, got {heads}")
    length = manifest.get("input_length")
    if not isinstance(length, int) or length < 2:
        raise WeightFormatError(f"bad input_length {length}")
    layers = manifest.get("layers")
    if not layers:
        raise WeightFormatError("manifest has no layers")
    names = [la.get("name") for la in layers]
    if len(set(names)) != len(names):
        raise WeightFormatError("layer names must be unique")
    channels = 1
    skips: List[int] = []
    for la in layers:
        name, kind = la.get("name"), la.get("kind")
        if kind not in LAYER_KINDS:
            raise WeightFormatError(f"layer {name!r}: unknown kind {kind!r}")
        if kind in ("conv1d", "output_head"):
            if la["in_channels"] != channels:
                raise WeightFormatError(
                    f"layer {name!r}: expects {la['in_channels']} input channels, "
                    f"graph carries {channels}")
            if la["kernel_size"] % 2 != 1:
                raise WeightFormatError(f"layer {name!r}: kernel size must be odd "
                                        "for same-length output")
            channels = la["out_channels"]
        elif kind == "batchnorm1d":
            if la["channels"] != channels:
                raise WeightFormatError(
                    f"layer {name!r}: batchnorm over {la['channels']} channels, "
                    f"graph carries {channels}")
        elif kind == "maxpool":
            if length % 2 != 0:
                raise WeightFormatError(f"layer {name!r}: length {length} not divisible by 2")
            skips.append(channels)
            length //= 2
        elif kind == "upsample_linear":
            length *= 2
        elif kind == "concat_skip":
            if not skips:
                raise WeightFormatError(f"layer {name!r}: no skip activation to concatenate")
            channels += skips.pop()
    if skips:
        raise WeightFormatError(f"{len(skips)} skip activation(s) never concatenated")
    if channels != heads:
        raise WeightFormatError(f"network ends with {channels} channels, "
                                f"manifest declares {heads} heads")
    if length != manifest["input_length"]:
        raise WeightFormatError("network does not map the input length onto itself")
    if layers[-1]["kind"] != "output_head":
        raise WeightFormatError("last layer must be the output head")


def _validate_strict(manifest: dict) -> None:
    """Enforce the reference architecture beyond plain shape consistency."""
    layers = manifest["layers"]
    ref = standard_layer_plan(manifest["heads"])
    if len(layers) != len(ref):
        raise WeightFormatError(f"expected {len(ref)} layers in the reference "
                                f"architecture, found {len(layers)}")
    for la, rf in zip(layers, ref):
        if la["kind"] != rf["kind"]:
            raise WeightFormatError(f"layer {la.get('name')!r}: kind {la['kind']!r} "
                                    f"where the reference has {rf['kind']!r}")
        for key in ("in_channels", "out_channels", "kernel_size", "channels"):
            if key in rf and la.get(key) != rf[key]:
                raise WeightFormatError(
                    f"layer {la.get('name')!r}: {key}={la.get(key)} deviates from "
                    f"the reference value {rf[key]}")


def write_weights(path, manifest: dict,
                  tensors: Dict[str, Dict[str, np.ndarray]]) -> None:
    """Serialize a manifest plus its tensors to the exchange format."""
    _validate_graph(manifest)
    blob = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(WEIGHTS_MAGIC)
        f.write(struct.pack("<IQ", WEIGHTS_VERSION, len(blob)))
        f.write(blob)
        for layer in manifest["layers"]:
            for tname, shape in _tensor_specs(layer):
                arr = np.ascontiguousarray(tensors[layer["name"]][tname],
                                           dtype="<f4")
                if arr.shape != shape:
                    raise WeightFormatError(
                        f"layer {layer['name']!r} tensor {tname}: shape "
                        f"{arr.shape} != {shape}")
                f.write(arr.tobytes())


def load_weights(path, strict: bool = True) -> UNetWeights:
    """Read and validate a weight file.

    Always checks magic/version, manifest syntax, shape chaining, tensor
    completeness, finiteness and positive batchnorm variances; with
    `strict` the layer list must also match the reference architecture.
    """
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != WEIGHTS_MAGIC:
            raise WeightFormatError(f"bad magic {magic!r}")
        head = f.read(12)
        if len(head) < 12:
            raise WeightFormatError("truncated header")
        version, manlen = struct.unpack("<IQ", head)
        if version != WEIGHTS_VERSION:
            raise WeightFormatError(f"unsupported version {version}")
        blob = f.read(manlen)
        if len(blob) < manlen:
            raise WeightFormatError("truncated manifest")
        try:
            manifest = json.loads(blob.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise WeightFormatError(f"manifest is not valid JSON: {exc}") from exc
        _validate_graph(manifest)
        if strict:
            _validate_strict(manifest)
        norm = manifest.get("normalization", {})
        mean = float(norm.get("height_mean_m", 0.0))
        std = float(norm.get("height_std_m", 1.0))
        if not np.isfinite(mean) or not np.isfinite(std) or std <= 0:
            raise WeightFormatError("bad normalization constants")
        tensors: Dict[str, Dict[str, np.ndarray]] = {}
        for layer in manifest["layers"]:
            bundle = {}
            for tname, shape in _tensor_specs(layer):
                count = int(np.prod(shape))
                raw = f.read(4 * count)
                if len(raw) < 4 * count:
                    raise WeightFormatError(
                        f"layer {layer['name']!r} tensor {tname}: file truncated")
                arr = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
                if not np.all(np.isfinite(arr)):
                    raise WeightFormatError(
                        f"layer {layer['name']!r} tensor {tname}: non-finite values")
                bundle[tname] = arr
            if layer["kind"] == "batchnorm1d" and np.any(bundle["running_var"] <= 0):
                raise WeightFormatError(
                    f"layer {layer['name']!r}: running variance must be positive")
            tensors[layer["name"]] = bundle
        if f.read(1):
            raise WeightFormatError("trailing bytes after the last tensor")
    return UNetWeights(heads=manifest["heads"],
                       input_length=manifest["input_length"],
                       height_mean_m=mean, height_std_m=std,
                       layers=tuple(manifest["layers"]), tensors=tensors)


# ---------------------------------------------------------------------------
# execution

_upsample_cache: Dict[int, Tuple[np.ndarray, np.ndarray, np.ndarray]] = {}


def _conv1d(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    # Activations run as (channels, length, batch): with the batch axis
    # innermost, zero padding and per-tap column assembly are contiguous
    # block copies, and the cross-correlation collapses to one GEMM,
    # (out, in*kernel) @ (in*kernel, length*batch).  The per-element
    # reduction order does not depend on the batch size, so batched and
    # single-profile execution agree bitwise.
    cin, length, batch = x.shape
    cout, _, kernel = weight.shape
    pad = (kernel - 1) // 2
    if pad:
        xp = np.empty((cin, length + 2 * pad, batch), dtype=np.float32)
        xp[:, :pad, :] = 0.0
        xp[:, pad + length:, :] = 0.0
        xp[:, pad:pad + length, :] = x
    else:
        xp = x
    if kernel == 1:
        cols = xp.reshape(cin, length * batch)
    else:
        cols = np.empty((cin, kernel, length, batch), dtype=np.float32)
        for t in range(kernel):
            cols[:, t] = xp[:, t:t + length, :]
        cols = cols.reshape(cin * kernel, length * batch)
    out = weight.reshape(cout, cin * kernel) @ cols
    out += bias[:, None]
    return out.reshape(cout, length, batch)


def _batchnorm(x, gamma, beta, mean, var, eps) -> np.ndarray:
    scale = gamma / np.sqrt(var + np.float32(eps))
    shift = beta - mean * scale
    return x * scale[:, None, None] + shift[:, None, None]


def _upsample_linear2(x: np.ndarray) -> np.ndarray:
    length = x.shape[1]
    cached = _upsample_cache.get(length)
    if cached is None:
        pos = np.maximum((np.arange(2 * length) + 0.5) / 2.0 - 0.5, 0.0)
        i0 = pos.astype(np.int64)
        i1 = np.minimum(i0 + 1, length - 1)
        lam = (pos - i0).astype(np.float32)
        cached = (i0, i1, lam)
        _upsample_cache[length] = cached
    i0, i1, lam = cached
    return x[:, i0, :] * (np.float32(1.0) - lam)[:, None] \
        + x[:, i1, :] * lam[:, None]


def run_layers(weights: UNetWeights, x: np.ndarray,
               trace: bool = False):
    """Execute the layer graph on a standardized (1, L, batch) float32 input
    (channels, length, batch); returns (heads, L, batch).  With `trace`,
    also return the activation after every layer."""
    activations = {}
    skips: List[np.ndarray] = []
    for layer in weights.layers:
        kind = layer["kind"]
        if kind in ("conv1d", "output_head"):
            t = weights.tensors[layer["name"]]
            x = _conv1d(x, t["weight"], t["bias"])
        elif kind == "batchnorm1d":
            t = weights.tensors[layer["name"]]
            x = _batchnorm(x, t["gamma"], t["beta"], t["running_mean"],
                           t["running_var"], layer.get("eps", 1e-5))
        elif kind == "relu":
            x = np.maximum(x, np.float32(0.0))
        elif kind == "maxpool":
            skips.append(x)
            x = np.maximum(x[:, 0::2, :], x[:, 1::2, :])
        elif kind == "upsample_linear":
            x = _upsample_linear2(x)
        elif kind == "concat_skip":
            x = np.concatenate([x, skips.pop()], axis=0)
        elif kind == "dropout":
            pass  # identity at inference time
        if trace:
            activations[layer["name"]] = x
    return (x, activations) if trace else x


def _standardize(weights: UNetWeights, heights: np.ndarray) -> np.ndarray:
    z = (heights - weights.height_mean_m) / weights.height_std_m
    return z.astype(np.float32)


def _as_heights(profile) -> np.ndarray:
    if isinstance(profile, TerrainProfile):
        return profile.heights_m
    return np.asarray(profile, dtype=np.float64)


def _predictions(weights: UNetWeights, out: np.ndarray) -> List[SurrogatePrediction]:
    preds = []
    for b in range(out.shape[2]):
        if weights.heads == 2:
            sigma = np.exp(0.5 * out[1, :, b]).astype(np.float32)
            preds.append(SurrogatePrediction(np.ascontiguousarray(out[0, :, b]), sigma))
        else:
            preds.append(SurrogatePrediction(np.ascontiguousarray(out[0, :, b]), None))
    return preds


def forward(weights: UNetWeights, profile) -> SurrogatePrediction:
    """Predict the path-loss profile (and sigma for two-head networks) for
    one terrain profile."""
    heights = _as_heights(profile)
    if heights.size != weights.input_length:
        raise ValueError(f"profile length {heights.size} != network input "
                         f"length {weights.input_length}")
    x = _standardize(weights, heights)[None, :, None]
    out = run_layers(weights, x)
    return _predictions(weights, out)[0]


def forward_batch(weights: UNetWeights, profiles) -> List[SurrogatePrediction]:
    """Predict a batch of profiles in one pass; results are identical to
    per-profile `forward` (inference-mode layers are sample independent)."""
    if isinstance(profiles, np.ndarray) and profiles.ndim == 2:
        heights = profiles.astype(np.float64)
    else:
        rows = [_as_heights(p) for p in profiles]
        if not rows:
            raise ValueError("empty batch")
        heights = np.stack(rows)
    if heights.shape[1] != weights.input_length:
        raise ValueError(f"profile length {heights.shape[1]} != network input "
                         f"length {weights.input_length}")
    x = np.ascontiguousarray(_standardize(weights, heights).T)[None, :, :]
    out = run_layers(weights, x)
    return _predictions(weights, out)


def dump_activations(weights: UNetWeights, profile, path) -> None:
    """Write a layer-activation parity fixture: an .npz keyed by layer name
    holding (channels, length) float32 activations for one profile."""
    heights = _as_heights(profile)
    x = _standardize(weights, heights)[None, :, None]
    out, acts = run_layers(weights, x, trace=True)
    np.savez(path, __input__=x[:, :, 0],
             **{name: a[:, :, 0] for name, a in acts.items()})
