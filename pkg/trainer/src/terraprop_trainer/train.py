"""Training loops for the path-loss surrogate.

Point models minimize elementwise MSE in raw dB; uncertainty models add a
log-variance head trained with the Gaussian negative log likelihood
0.5*[(y-mu)^2/sigma^2 + log sigma^2] (elementwise mean) for three times as
many epochs.  Every batch gets a random per-sample height shift so the
network learns shift invariance; the validation pass after each epoch
drives best-checkpoint retention and a step-down learning-rate schedule.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from typing import List, Optional, Tuple

import torch

from .model import SurrogateUNet

LOGVAR_CLAMP = 10.0


@dataclass
class TrainConfig:
    lr: float = 1e-2
    weight_decay: float = 1e-5
    batch_size: int = 128
    epochs: int = 25
    lr_patience: int = 10
    lr_factor: float = 0.1
    aug_sigma_m: float = 30.0
    output_bias_db: float = -134.0
    dropout_p: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError("bad training configuration")
        if not 0.0 < self.dropout_p < 1.0:
            raise ValueError("dropout_p must lie in (0, 1)")
        if self.aug_sigma_m < 0:
            raise ValueError("aug_sigma_m must be non-negative")


def augment_height(x: torch.Tensor, sigma_m: float,
                   generator: Optional[torch.Generator] = None,
                   eps: Optional[torch.Tensor] = None) -> torch.Tensor:
    """Add one N(0, sigma_m^2) draw per sample to all of its heights.
    Targets are untouched: source and receivers ride with the terrain, so
    path loss is invariant to the shift."""
    if eps is None:
        eps = sigma_m * torch.randn(x.shape[0], generator=generator,
                                    dtype=x.dtype)
    return x + eps[:, None]


def gaussian_nll(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Elementwise-mean Gaussian negative log likelihood for a (batch, 2, L)
    prediction carrying mean and log variance."""
    mu = pred[:, 0]
    logvar = torch.clamp(pred[:, 1], -LOGVAR_CLAMP, LOGVAR_CLAMP)
    return 0.5 * torch.mean((target - mu) ** 2 * torch.exp(-logvar) + logvar)


def _mse(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    return torch.mean((pred[:, 0] - target) ** 2)


def _validate(model: SurrogateUNet, x_val, y_val, loss_fn,
              batch_size: int) -> float:
    model.eval()
    total = 0.0
    count = 0
    with torch.no_grad():
        for b0 in range(0, x_val.shape[0], batch_size):
            xb = x_val[b0:b0 + batch_size]
            yb = y_val[b0:b0 + batch_size]
            out = model(model.standardize(xb)[:, None, :])
            total += float(loss_fn(out, yb)) * xb.shape[0]
            count += xb.shape[0]
    model.train()
    return total / count


def _train(model: SurrogateUNet, train_data, val_data, cfg: TrainConfig,
           loss_fn, epochs: int) -> Tuple[SurrogateUNet, List[dict]]:
    x_train, y_train = (torch.as_tensor(a, dtype=torch.float32)
                        for a in train_data)
    x_val, y_val = (torch.as_tensor(a, dtype=torch.float32) for a in val_data)
    if x_train.shape[0] == 0 or x_val.shape[0] == 0:
        raise ValueError("training and validation sets must be non-empty")

    history: List[dict] = []
    if epochs == 0:
        return model, history

    model.height_mean.fill_(float(x_train.mean()))
    model.height_std.fill_(float(x_train.std()) or 1.0)

    torch.manual_seed(cfg.seed)
    gen = torch.Generator().manual_seed(cfg.seed)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.lr,
                                 weight_decay=cfg.weight_decay)
    scheduler = torch.optim.lr_scheduler.ReduceLROnPlateau(
        optimizer, factor=cfg.lr_factor, patience=cfg.lr_patience,
        threshold=0.0)

    val0 = _validate(model, x_val, y_val, loss_fn, cfg.batch_size)
    history.append({"epoch": 0, "train_loss": None, "val_loss": val0,
                    "lr": cfg.lr})
    best_val = val0
    best_state = copy.deepcopy(model.state_dict())

    model.train()
    n = x_train.shape[0]
    for epoch in range(1, epochs + 1):
        perm = torch.randperm(n, generator=gen)
        running = 0.0
        seen = 0
        for b0 in range(0, n, cfg.batch_size):
            idx = perm[b0:b0 + cfg.batch_size]
            xb = augment_height(x_train[idx], cfg.aug_sigma_m, generator=gen)
            yb = y_train[idx]
            optimizer.zero_grad()
            out = model(model.standardize(xb)[:, None, :])
            loss = loss_fn(out, yb)
            if not torch.isfinite(loss):
                raise RuntimeError(
                    f"non-finite loss at epoch {epoch} step {b0 // cfg.batch_size}: "
                    f"{float(loss)} (lr={optimizer.param_groups[0]['lr']:g})")
            loss.backward()
            optimizer.step()
            running += float(loss.detach()) * idx.shape[0]
            seen += idx.shape[0]
        val = _validate(model, x_val, y_val, loss_fn, cfg.batch_size)
        if val < best_val:
            best_val = val
            best_state = copy.deepcopy(model.state_dict())
        scheduler.step(val)
        history.append({"epoch": epoch, "train_loss": running / seen,
                        "val_loss": val,
                        "lr": optimizer.param_groups[0]["lr"]})
    model.load_state_dict(best_state)
    model.eval()
    return model, history


def train_point(model: SurrogateUNet, train_data, val_data,
                cfg: TrainConfig) -> Tuple[SurrogateUNet, List[dict]]:
    """MSE training for cfg.epochs epochs with per-epoch validation,
    best-checkpoint retention and plateau LR step-down."""
    return _train(model, train_data, val_data, cfg, _mse, cfg.epochs)


def train_uncertainty(model: SurrogateUNet, train_data, val_data,
                      cfg: TrainConfig) -> Tuple[SurrogateUNet, List[dict]]:
    """Gaussian-NLL training of a two-head model for 3x the point-model
    epoch count, with the same retention and LR policy."""
    if model.heads != 2:
        raise ValueError("uncertainty training needs a two-head model")
    return _train(model, train_data, val_data, cfg, gaussian_nll,
                  3 * cfg.epochs)
