"""1D U-Net for terrain-to-path-loss regression.

Encoder/decoder with 4 pooling stages at half the classical U-Net channel
widths (16-32-64-128, bottleneck 256), 11-wide kernels on the first two
convolutions for extra spatial context, linear upsampling (no transposed
convolutions), dropout around the bottleneck, and a 1x1 output head with
no activation.  One output channel predicts path loss in dB; a second
optional channel predicts its log variance.
"""

from __future__ import annotations

from typing import List

import torch
import torch.nn.functional as F
from torch import nn

ENCODER_WIDTHS = (16, 32, 64, 128)
BOTTLENECK_WIDTH = 256
WIDE_KERNEL = 11
INPUT_LENGTH = 256
DEFAULT_OUTPUT_BIAS_DB = -134.0


def layer_plan(heads: int = 1, widths=None, dropout_p: float = 0.5) -> List[dict]:
    """Ordered layer description shared by the torch module and the weight
    exporter; mirrors the inference engine's execution model (the input of
    every maxpool is stashed, concat_skip pops the latest stash and appends
    it after the current channels)."""
    if heads not in (1, 2):
        raise ValueError("heads must be 1 or 2")
    widths = tuple(widths) if widths else ENCODER_WIDTHS + (BOTTLENECK_WIDTH,)
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

    block("enc1", 1, widths[0], WIDE_KERNEL)
    plan.append({"name": "pool1", "kind": "maxpool", "width": 2, "stride": 2})
    block("enc2", widths[0], widths[1])
    plan.append({"name": "pool2", "kind": "maxpool", "width": 2, "stride": 2})
    block("enc3", widths[1], widths[2])
    plan.append({"name": "pool3", "kind": "maxpool", "width": 2, "stride": 2})
    plan.append({"name": "drop1", "kind": "dropout", "p": dropout_p})
    block("enc4", widths[2], widths[3])
    plan.append({"name": "pool4", "kind": "maxpool", "width": 2, "stride": 2})
    plan.append({"name": "drop2", "kind": "dropout", "p": dropout_p})
    block("bottleneck", widths[3], widths[4])
    for stage, (chi, clo) in enumerate(zip(widths[:0:-1], widths[-2::-1]),
                                       start=1):
        plan.append({"name": f"up{stage}", "kind": "upsample_linear", "scale": 2})
        if stage == 1:
            plan.append({"name": "drop3", "kind": "dropout", "p": dropout_p})
        plan.append({"name": f"cat{stage}", "kind": "concat_skip"})
        block(f"dec{stage}", chi + clo, clo)
    plan.append({"name": "head", "kind": "output_head", "in_channels": widths[0],
                 "out_channels": heads, "kernel_size": 1})
    return plan


class SurrogateUNet(nn.Module):
    """Executes the layer plan; carries the input standardization constants
    as buffers so they travel with checkpoints and exports."""

    def __init__(self, heads: int = 1, dropout_p: float = 0.5,
                 output_bias_db: float = DEFAULT_OUTPUT_BIAS_DB, widths=None):
        super().__init__()
        self.heads = heads
        self.plan = layer_plan(heads, widths=widths, dropout_p=dropout_p)
        blocks = {}
        for spec in self.plan:
            kind = spec["kind"]
            if kind in ("conv1d", "output_head"):
                blocks[spec["name"]] = nn.Conv1d(
                    spec["in_channels"], spec["out_channels"],
                    spec["kernel_size"], padding=(spec["kernel_size"] - 1) // 2)
            elif kind == "batchnorm1d":
                blocks[spec["name"]] = nn.BatchNorm1d(spec["channels"],
                                                      eps=spec["eps"])
            elif kind == "dropout":
                blocks[spec["name"]] = nn.Dropout(spec["p"])
        self.blocks = nn.ModuleDict(blocks)
        self.register_buffer("height_mean", torch.tensor(0.0))
        self.register_buffer("height_std", torch.tensor(1.0))
        with torch.no_grad():
            head = self.blocks["head"]
            head.bias.zero_()
            head.bias[0] = output_bias_db  # log-variance head starts at sigma=1

    def standardize(self, heights: torch.Tensor) -> torch.Tensor:
        return (heights - self.height_mean) / self.height_std

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """x: standardized heights, (batch, 1, length) -> (batch, heads, length)."""
        skips: List[torch.Tensor] = []
        for spec in self.plan:
            kind = spec["kind"]
            if kind in ("conv1d", "output_head", "batchnorm1d", "dropout"):
                x = self.blocks[spec["name"]](x)
            elif kind == "relu":
                x = F.relu(x)
            elif kind == "maxpool":
                skips.append(x)
                x = F.max_pool1d(x, 2)
            elif kind == "upsample_linear":
                x = F.interpolate(x, scale_factor=2.0, mode="linear",
                                  align_corners=False)
            elif kind == "concat_skip":
                x = torch.cat([x, skips.pop()], dim=1)
        return x

    def predict(self, heights: torch.Tensor) -> torch.Tensor:
        """Raw heights (batch, length) -> (batch, heads, length), eval mode."""
        was_training = self.training
        self.eval()
        with torch.no_grad():
            out = self.forward(self.standardize(heights)[:, None, :])
        if was_training:
            self.train()
        return out


def build_unet(heads: int = 1, dropout_p: float = 0.5,
               output_bias_db: float = DEFAULT_OUTPUT_BIAS_DB) -> SurrogateUNet:
    return SurrogateUNet(heads=heads, dropout_p=dropout_p,
                         output_bias_db=output_bias_db)


def count_conv_parameters(model: nn.Module) -> int:
    return sum(m.weight.numel() + m.bias.numel()
               for m in model.modules() if isinstance(m, nn.Conv1d))
