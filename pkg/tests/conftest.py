import numpy as np
import pytest

from terraprop import inference


def build_tensors(plan, rng=None, bias_db=-134.0):
    """Tensor bundles for a layer plan: zero weights (rng=None) or random.
    The first output-head bias channel is set to `bias_db`."""
    tensors = {}
    for layer in plan:
        kind = layer["kind"]
        if kind in ("conv1d", "output_head"):
            shape = (layer["out_channels"], layer["in_channels"],
                     layer["kernel_size"])
            if rng is None:
                w = np.zeros(shape, np.float32)
                b = np.zeros(layer["out_channels"], np.float32)
            else:
                w = rng.normal(0.0, 0.1, shape).astype(np.float32)
                b = rng.normal(0.0, 0.05, layer["out_channels"]).astype(np.float32)
            if kind == "output_head":
                b = b.copy()
                b[0] = bias_db
            tensors[layer["name"]] = {"weight": w, "bias": b}
        elif kind == "batchnorm1d":
            c = layer["channels"]
            if rng is None:
                gamma = np.ones(c, np.float32)
                mean = np.zeros(c, np.float32)
                var = np.ones(c, np.float32)
                beta = np.zeros(c, np.float32)
            else:
                gamma = rng.uniform(0.5, 1.5, c).astype(np.float32)
                beta = rng.normal(0.0, 0.2, c).astype(np.float32)
                mean = rng.normal(0.0, 0.5, c).astype(np.float32)
                var = rng.uniform(0.5, 2.0, c).astype(np.float32)
            tensors[layer["name"]] = {"gamma": gamma, "beta": beta,
                                      "running_mean": mean, "running_var": var}
    return tensors


def write_fixture_weights(path, heads=1, seed=None, bias_db=-134.0,
                          height_mean=0.0, height_std=1.0):
    """Write a reference-architecture weight file: zero-initialized when
    seed is None, randomly initialized otherwise."""
    plan = inference.standard_layer_plan(heads)
    manifest = {"heads": heads, "input_length": 256,
                "normalization": {"height_mean_m": height_mean,
                                  "height_std_m": height_std},
                "layers": plan}
    rng = None if seed is None else np.random.default_rng(seed)
    inference.write_weights(path, manifest, build_tensors(plan, rng, bias_db))
    return path


@pytest.fixture
def zero_weights(tmp_path):
    return inference.load_weights(
        write_fixture_weights(tmp_path / "zero.unet", heads=1))


@pytest.fixture
def random_weights(tmp_path):
    return inference.load_weights(
        write_fixture_weights(tmp_path / "rand.unet", heads=1, seed=7))


@pytest.fixture
def random_weights2(tmp_path):
    return inference.load_weights(
        write_fixture_weights(tmp_path / "rand2.unet", heads=2, seed=9))
