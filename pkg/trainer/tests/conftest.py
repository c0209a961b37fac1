import numpy as np
import pytest
import torch


@pytest.fixture(autouse=True)
def _deterministic_torch():
    torch.manual_seed(0)


@pytest.fixture
def toy_data():
    """Learnable synthetic mapping: path loss = smooth functional of heights."""
    rng = np.random.default_rng(3)
    x = rng.normal(0, 20, (192, 256)).astype(np.float32)
    base = np.linspace(-100, -160, 256, dtype=np.float32)
    y = base[None, :] + 0.5 * (x - x.mean(axis=1, keepdims=True))
    y = y.astype(np.float32)
    return (x[:160], y[:160]), (x[160:], y[160:])
