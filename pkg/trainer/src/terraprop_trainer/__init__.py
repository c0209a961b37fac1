"""Surrogate trainer: builds and trains the 1D U-Net on path-loss datasets
and exports weights to the UNET1D01 exchange format."""

from .dataio import load_dataset, split_indices
from .export import export_weights, save_history
from .model import SurrogateUNet, build_unet, layer_plan
from .train import (TrainConfig, augment_height, gaussian_nll, train_point,
                    train_uncertainty)

__version__ = "0.1.0"
