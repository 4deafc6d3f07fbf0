import numpy as np
import pytest

from jfpd.data import DomainDataset
from jfpd.model import Dims, forward_features, forward_predict, init
from jfpd.rng import Rng


def random_simplex(rng, n):
    """A random probability vector via normalized exponentials."""
    u = rng.uniforms(n)
    e = -np.log(np.maximum(1.0 - u, 1e-300))
    return e / e.sum()


def make_toy_source(rng, n_classes=3, per_class=3, dim=3):
    x = rng.gaussians(n_classes * per_class * dim).reshape(-1, dim)
    y = np.repeat(np.arange(n_classes), per_class)
    return DomainDataset(x, y, "source", {"n_classes": n_classes})


def smooth_instance(seed, dims=None, batch=2):
    """A (params, x, source) triple that is smooth within the FD ball.

    Central differences need margins from ReLU kinks, pseudo-label argmax
    ties and degenerate feature norms; resample deterministically until all
    three hold at the base point.
    """
    dims = dims or Dims(3, (5,), 4, 3)
    for attempt in range(64):
        trial = seed * 1000 + attempt
        rng = Rng(trial)
        params = init(trial, dims)
        x = rng.gaussians(batch * dims.input_dim).reshape(batch, dims.input_dim)
        source = make_toy_source(rng, dims.n_classes, 3, dims.input_dim)

        h = x @ params.weights[0].data + params.biases[0].data
        probs = forward_predict(params, x)
        part = np.partition(probs, probs.shape[1] - 2, axis=1)
        gap = part[:, -1] - part[:, -2]
        feats = forward_features(params, x)
        norms = np.linalg.norm(feats, axis=1)
        if np.abs(h).min() > 1e-3 and gap.min() > 1e-3 and norms.min() > 1e-3:
            return params, x, source
    raise RuntimeError(f"no smooth instance found for seed {seed}")


@pytest.fixture(scope="session")
def session_rng():
    return Rng(20240817)
