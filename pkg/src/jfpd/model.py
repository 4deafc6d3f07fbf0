"""The hypothesis h(x) = g(f(x)): MLP feature extractor + linear-softmax head.

The backbone applies ReLU after every hidden layer; the feature layer itself
is linear so embeddings span all of R^d (a ReLU feature layer can emit exact
zero vectors, which have no direction for the cosine geometry downstream).
All training is plain mini-batch SGD; determinism comes from the seeded
stream that drives both initialization and shuffling.
"""

import struct
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .rng import Rng, derive_seed

CHECKPOINT_MAGIC = b"JFPD"
CHECKPOINT_VERSION = 1

_SALT_INIT = 101
_SALT_PRETRAIN = 102


class TrainingDiverged(RuntimeError):
    """Raised when a training loss turns non-finite."""


@dataclass
class Dims:
    input_dim: int
    hidden: tuple
    feature_dim: int
    n_classes: int

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        sizes = (self.input_dim, *self.hidden, self.feature_dim, self.n_classes)
        if any(s <= 0 for s in sizes):
            raise ValueError(f"all layer sizes must be positive, got {sizes}")
        if self.n_classes < 2:
            raise ValueError(f"need at least 2 classes, got {self.n_classes}")

    def layer_sizes(self):
        """(in, out) pairs: backbone layers then the head."""
        chain = (self.input_dim, *self.hidden, self.feature_dim)
        pairs = [(chain[i], chain[i + 1]) for i in range(len(chain) - 1)]
        pairs.append((self.feature_dim, self.n_classes))
        return pairs


class ModelParams:
    """Backbone (W, b) layers plus the classifier head, stored as Tensors."""

    def __init__(self, dims, weights, biases):
        self.dims = dims
        self.weights = weights
        self.biases = biases

    def parameters(self):
        for w, b in zip(self.weights, self.biases):
            yield w
            yield b

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def copy(self):
        return ModelParams(
            self.dims,
            [ad.parameter(w.data.copy()) for w in self.weights],
            [ad.parameter(b.data.copy()) for b in self.biases],
        )

    def equal_bits(self, other):
        return all(
            np.array_equal(a.data, b.data)
            for a, b in zip(self.parameters(), other.parameters())
        )


def init(seed, dims):
    """Glorot-uniform weights, zero biases, deterministic per seed.

    Draw order: layer by layer (backbone then head), weight matrices row-major.
    """
    rng = Rng(derive_seed(seed, _SALT_INIT))
    weights, biases = [], []
    for fan_in, fan_out in dims.layer_sizes():
        s = np.sqrt(6.0 / (fan_in + fan_out))
        u = rng.uniforms(fan_in * fan_out).reshape(fan_in, fan_out)
        weights.append(ad.parameter((2.0 * u - 1.0) * s))
        biases.append(ad.parameter(np.zeros((1, fan_out))))
    return ModelParams(dims, weights, biases)


# ---------------------------------------------------------------------------
# forward passes
# ---------------------------------------------------------------------------

def forward_graph(params, x):
    """Tracked forward pass: returns (features, logits) tensors."""
    h = ad.constant(np.atleast_2d(np.asarray(x, dtype=np.float64)))
    n_backbone = len(params.weights) - 1
    for i in range(n_backbone):
        h = ad.add(ad.matmul(h, params.weights[i]), params.biases[i])
        if i < n_backbone - 1:
            h = ad.relu(h)
    features = h
    logits = ad.add(ad.matmul(features, params.weights[-1]), params.biases[-1])
    return features, logits


def forward_features(params, x):
    """Backbone output for a batch, no gradient tracking."""
    h = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if h.shape[1] != params.dims.input_dim:
        raise ValueError(
            f"input dim {h.shape[1]} != model input dim {params.dims.input_dim}"
        )
    n_backbone = len(params.weights) - 1
    for i in range(n_backbone):
        h = h @ params.weights[i].data + params.biases[i].data
        if i < n_backbone - 1:
            h = np.maximum(h, 0.0)
    return h


def forward_logits(params, x):
    f = forward_features(params, x)
    return f @ params.weights[-1].data + params.biases[-1].data


def _softmax_rows(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def forward_predict(params, x):
    """Softmax predictions for a batch, rows on the simplex, no tracking."""
    return _softmax_rows(forward_logits(params, x))


def forward_all(params, x):
    """(features, predictions) for a batch in one no-gradient pass."""
    f = forward_features(params, x)
    z = f @ params.weights[-1].data + params.biases[-1].data
    return f, _softmax_rows(z)


def evaluate_accuracy(params, dataset):
    """Fraction of argmax-correct predictions (ties break to lowest index)."""
    if dataset.y is None:
        raise ValueError("accuracy needs a labeled dataset")
    if len(dataset.x) == 0:
        raise ValueError("accuracy on an empty dataset is undefined")
    pred = forward_predict(params, dataset.x).argmax(axis=1)
    return float(np.mean(pred == dataset.y))


# ---------------------------------------------------------------------------
# source pretraining
# ---------------------------------------------------------------------------

@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 64
    lr: float = 0.1
    schedule: str = "constant"  # constant | cosine
    restart_period: int | None = None
    seed: int = 0


@dataclass
class EpochLog:
    epoch: int
    lr: float
    loss: float
    accuracy: float


def epoch_lr(cfg, epoch, total_epochs):
    if cfg.schedule == "constant":
        return cfg.lr
    if cfg.schedule == "cosine":
        from .adapt import cosine_lr

        return cosine_lr(epoch, total_epochs, cfg.lr, cfg.restart_period)
    raise ValueError(f"unknown schedule {cfg.schedule!r}")


def sgd_step(params, lr):
    """In-place p -= lr * grad; parameters without a gradient are left alone."""
    for p in params.parameters():
        if p.grad is not None:
            p.data -= lr * p.grad


def pretrain_source(params, source, cfg):
    """Mini-batch SGD on cross-entropy over the labeled source dataset.

    Returns (trained params, per-epoch log); the input params are untouched.
    """
    if source.y is None:
        raise ValueError("pretraining needs a labeled source dataset")
    params = params.copy()
    rng = Rng(derive_seed(cfg.seed, _SALT_PRETRAIN))
    n = len(source.x)
    log = []
    for epoch in range(cfg.epochs):
        lr = epoch_lr(cfg, epoch, cfg.epochs)
        order = rng.shuffled_indices(n)
        losses = []
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            params.zero_grad()
            _, logits = forward_graph(params, source.x[idx])
            loss = ad.cross_entropy(logits, source.y[idx])
            value = loss.item()
            if not np.isfinite(value):
                raise TrainingDiverged(
                    f"non-finite pretraining loss at epoch {epoch}, batch {start // cfg.batch_size}"
                )
            ad.backward(loss)
            sgd_step(params, lr)
            losses.append(value)
        log.append(
            EpochLog(epoch, lr, float(np.mean(losses)), evaluate_accuracy(params, source))
        )
    return params, log


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(params, path):
    """Write magic, version, dims, then row-major little-endian f8 arrays."""
    dims = params.dims
    parts = [CHECKPOINT_MAGIC, struct.pack("<I", CHECKPOINT_VERSION)]
    parts.append(struct.pack("<II", dims.input_dim, len(dims.hidden)))
    for h in dims.hidden:
        parts.append(struct.pack("<I", h))
    parts.append(struct.pack("<II", dims.feature_dim, dims.n_classes))
    for p in params.parameters():
        parts.append(np.ascontiguousarray(p.data, dtype="<f8").tobytes())
    blob = b"".join(parts)
    from .report import write_bytes_atomic

    write_bytes_atomic(path, blob)
    return path


class CheckpointError(ValueError):
    """Malformed, truncated, or incompatible checkpoint file."""


def load_checkpoint(path):
    with open(path, "rb") as fh:
        blob = fh.read()

    def take(n, what):
        nonlocal offset
        if offset + n > len(blob):
            raise CheckpointError(f"truncated checkpoint: {what} at offset {offset}")
        chunk = blob[offset : offset + n]
        offset += n
        return chunk

    offset = 0
    magic = take(4, "magic")
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError(f"bad magic {magic!r}, expected {CHECKPOINT_MAGIC!r}")
    (version,) = struct.unpack("<I", take(4, "version"))
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    input_dim, n_hidden = struct.unpack("<II", take(8, "dims"))
    hidden = tuple(
        struct.unpack("<I", take(4, f"hidden[{i}]"))[0] for i in range(n_hidden)
    )
    feature_dim, n_classes = struct.unpack("<II", take(8, "dims"))
    try:
        dims = Dims(input_dim, hidden, feature_dim, n_classes)
    except ValueError as exc:
        raise CheckpointError(f"invalid dims in checkpoint: {exc}") from exc

    weights, biases = [], []
    for fan_in, fan_out in dims.layer_sizes():
        w = np.frombuffer(take(8 * fan_in * fan_out, "weights"), dtype="<f8")
        weights.append(ad.parameter(w.reshape(fan_in, fan_out).copy()))
        b = np.frombuffer(take(8 * fan_out, "bias"), dtype="<f8")
        biases.append(ad.parameter(b.reshape(1, fan_out).copy()))
    if offset != len(blob):
        raise CheckpointError(
            f"{len(blob) - offset} trailing bytes after parameters (offset {offset})"
        )
    return ModelParams(dims, weights, biases)
