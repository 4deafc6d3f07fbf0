"""Desk-scale benchmark data: synthetic domain pairs and an IDX loader.

Generators are pure functions of (parameters, seed) on the documented
xoshiro256** stream, so datasets are bit-identical across runs, platforms
and kernel backends. Target labels are attached for evaluation only; the
adaptation loss never sees them.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from .rng import Rng, derive_seed

_SALT_SOURCE = 1
_SALT_TARGET = 2

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    """Malformed IDX file; message names the failing byte offset."""


@dataclass
class DomainDataset:
    """N x D samples with optional labels and a source/target tag."""

    x: np.ndarray
    y: np.ndarray | None
    domain_tag: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        if self.x.ndim != 2 or self.x.shape[0] < 1 or self.x.shape[1] < 1:
            raise ValueError(f"x must be a non-empty N x D matrix, got {self.x.shape}")
        if self.domain_tag not in ("source", "target"):
            raise ValueError(f"domain_tag must be source|target, got {self.domain_tag!r}")
        if self.y is not None:
            self.y = np.asarray(self.y, dtype=np.int64)
            if self.y.shape != (self.x.shape[0],):
                raise ValueError(f"labels shape {self.y.shape} != ({self.x.shape[0]},)")
            if self.y.min() < 0:
                raise ValueError("labels must be non-negative")
            n_classes = self.meta.get("n_classes")
            if n_classes is not None and self.y.max() >= n_classes:
                raise ValueError(f"label {self.y.max()} out of range [0, {n_classes})")

    def __len__(self):
        return self.x.shape[0]

    @property
    def dim(self):
        return self.x.shape[1]

    def without_labels(self):
        """Evaluation-only labels are stripped before entering any loss path."""
        return DomainDataset(self.x, None, self.domain_tag, dict(self.meta))


@dataclass
class ShiftSpec:
    """Target transform: rotate (first two dims), scale, translate, add noise."""

    rotation_deg: float = 0.0
    translation: float = 0.0
    scale: float = 1.0
    noise_sigma: float = 0.0

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        if self.noise_sigma < 0:
            raise ValueError(f"noise_sigma must be non-negative, got {self.noise_sigma}")


def _rotate2d(x, degrees):
    """Rotate the first two coordinates about the origin."""
    theta = np.deg2rad(degrees)
    c, s = np.cos(theta), np.sin(theta)
    out = x.copy()
    out[:, 0] = c * x[:, 0] - s * x[:, 1]
    out[:, 1] = s * x[:, 0] + c * x[:, 1]
    return out


def _class_means(n_classes, dim, radius, ring2_amp):
    """Class means: a ring in dims 0-1 plus a second-harmonic ring in dims 2-3.

    The first ring carries most of the class structure and is what the
    rotation shift corrupts. The second ring (angle doubled, amplitude
    ``ring2_amp``, present when dim >= 3) keeps partial class evidence the
    shift cannot touch, so rotated samples see conflicting signals instead
    of a clean class swap. At C=4 it reduces to an alternating parity offset.
    """
    means = np.zeros((n_classes, dim))
    angles = 2.0 * np.pi * np.arange(n_classes) / n_classes
    means[:, 0] = radius * np.cos(angles)
    means[:, 1] = radius * np.sin(angles)
    if ring2_amp:
        if dim >= 3:
            means[:, 2] = ring2_amp * np.cos(2.0 * angles)
        if dim >= 4:
            means[:, 3] = ring2_amp * np.sin(2.0 * angles)
    return means


def gen_gaussian_domains(
    n_classes,
    dim,
    n_per_class,
    shift,
    seed,
    cluster_sigma=0.75,
    mean_radius=2.0,
    ring2_amp=1.0,
):
    """Gaussian class clusters; target redrawn then pushed through the shift.

    Both domains are exactly class-balanced. Draw order per domain: class by
    class, one row of `dim` gaussians per sample; target noise is drawn last.
    """
    if n_classes < 2:
        raise ValueError(f"need at least 2 classes, got {n_classes}")
    if dim < 2:
        raise ValueError(f"need dim >= 2 for the rotation plane, got {dim}")
    if n_per_class < 1:
        raise ValueError(f"n_per_class must be positive, got {n_per_class}")
    if isinstance(shift, dict):
        shift = ShiftSpec(**shift)

    means = _class_means(n_classes, dim, mean_radius, ring2_amp)
    labels = np.repeat(np.arange(n_classes), n_per_class)

    def draw(rng):
        noise = rng.gaussians(n_classes * n_per_class * dim)
        x = cluster_sigma * noise.reshape(-1, dim) + means[labels]
        return x

    meta = {
        "generator": "gaussian",
        "n_classes": n_classes,
        "dim": dim,
        "n_per_class": n_per_class,
        "cluster_sigma": cluster_sigma,
        "mean_radius": mean_radius,
        "ring2_amp": ring2_amp,
        "seed": int(seed),
        "shift": vars(shift).copy(),
    }

    x_s = draw(Rng(derive_seed(seed, _SALT_SOURCE)))
    rng_t = Rng(derive_seed(seed, _SALT_TARGET))
    x_t = draw(rng_t)
    x_t = _rotate2d(x_t, shift.rotation_deg) * shift.scale
    x_t[:, 0] += shift.translation
    if shift.noise_sigma > 0:
        x_t = x_t + shift.noise_sigma * rng_t.gaussians(x_t.size).reshape(x_t.shape)

    source = DomainDataset(x_s, labels.copy(), "source", dict(meta))
    target = DomainDataset(x_t, labels.copy(), "target", dict(meta))
    return source, target


def gen_two_moons_rotated(n, rotation_deg, noise_sigma, seed):
    """Two interleaving crescents; target rotated about the source centroid."""
    if n < 2:
        raise ValueError(f"need at least 2 samples, got {n}")
    if noise_sigma < 0:
        raise ValueError(f"noise_sigma must be non-negative, got {noise_sigma}")

    n_outer = n // 2
    n_inner = n - n_outer
    labels = np.concatenate([np.zeros(n_outer, np.int64), np.ones(n_inner, np.int64)])

    def draw(rng):
        t = rng.uniforms(n) * np.pi
        x = np.empty((n, 2))
        x[:n_outer, 0] = np.cos(t[:n_outer])
        x[:n_outer, 1] = np.sin(t[:n_outer])
        x[n_outer:, 0] = 1.0 - np.cos(t[n_outer:])
        x[n_outer:, 1] = 0.5 - np.sin(t[n_outer:])
        if noise_sigma > 0:
            x += noise_sigma * rng.gaussians(2 * n).reshape(n, 2)
        return x

    meta = {
        "generator": "moons",
        "n_classes": 2,
        "dim": 2,
        "n": n,
        "rotation_deg": rotation_deg,
        "noise_sigma": noise_sigma,
        "seed": int(seed),
    }

    x_s = draw(Rng(derive_seed(seed, _SALT_SOURCE)))
    x_t = draw(Rng(derive_seed(seed, _SALT_TARGET)))
    centroid = x_s.mean(axis=0)
    x_t = _rotate2d(x_t - centroid, rotation_deg) + centroid

    source = DomainDataset(x_s, labels.copy(), "source", dict(meta))
    target = DomainDataset(x_t, labels.copy(), "target", dict(meta))
    return source, target


@dataclass
class DomainStats:
    mean: np.ndarray
    std: np.ndarray


def standardize(source, target):
    """Per-dimension standardization using source statistics for both domains."""
    if source.dim != target.dim:
        raise ValueError(f"dimension mismatch: {source.dim} vs {target.dim}")
    mean = source.x.mean(axis=0)
    std = np.maximum(source.x.std(axis=0), 1e-8)
    stats = DomainStats(mean, std)

    def apply(ds):
        meta = dict(ds.meta)
        meta["standardized"] = True
        return DomainDataset((ds.x - mean) / std, ds.y, ds.domain_tag, meta)

    return apply(source), apply(target), stats


# ---------------------------------------------------------------------------
# IDX files
# ---------------------------------------------------------------------------

def _read_u32(blob, offset, path, what):
    if offset + 4 > len(blob):
        raise IdxFormatError(f"{path}: truncated {what} at offset {offset}")
    return struct.unpack(">I", blob[offset : offset + 4])[0], offset + 4


def load_idx(images_path, labels_path, domain_tag="source"):
    """Parse an IDX image/label pair into a flattened, [0, 1]-scaled dataset."""
    with open(images_path, "rb") as fh:
        blob = fh.read()
    magic, offset = _read_u32(blob, 0, images_path, "magic")
    if magic != IDX_IMAGE_MAGIC:
        raise IdxFormatError(
            f"{images_path}: bad image magic 0x{magic:08x} at offset 0, "
            f"expected 0x{IDX_IMAGE_MAGIC:08x}"
        )
    count, offset = _read_u32(blob, offset, images_path, "count")
    dims = []
    for i in range(2):
        d, offset = _read_u32(blob, offset, images_path, f"dim[{i}]")
        dims.append(d)
    n_pixels = count * dims[0] * dims[1]
    if len(blob) - offset != n_pixels:
        raise IdxFormatError(
            f"{images_path}: expected {n_pixels} pixel bytes after offset {offset}, "
            f"found {len(blob) - offset}"
        )
    pixels = np.frombuffer(blob, dtype=np.uint8, offset=offset)

    with open(labels_path, "rb") as fh:
        lblob = fh.read()
    magic, loffset = _read_u32(lblob, 0, labels_path, "magic")
    if magic != IDX_LABEL_MAGIC:
        raise IdxFormatError(
            f"{labels_path}: bad label magic 0x{magic:08x} at offset 0, "
            f"expected 0x{IDX_LABEL_MAGIC:08x}"
        )
    lcount, loffset = _read_u32(lblob, loffset, labels_path, "count")
    if len(lblob) - loffset != lcount:
        raise IdxFormatError(
            f"{labels_path}: expected {lcount} label bytes after offset {loffset}, "
            f"found {len(lblob) - loffset}"
        )
    if lcount != count:
        raise IdxFormatError(
            f"image count {count} != label count {lcount} "
            f"({images_path} vs {labels_path})"
        )
    labels = np.frombuffer(lblob, dtype=np.uint8, offset=loffset).astype(np.int64)

    x = pixels.reshape(count, dims[0] * dims[1]).astype(np.float64) / 255.0
    meta = {
        "generator": "idx",
        "images_path": str(images_path),
        "labels_path": str(labels_path),
        "image_shape": (dims[0], dims[1]),
        "n_classes": int(labels.max()) + 1 if count else 0,
        "raw_pixels": pixels.reshape(count, -1),
    }
    return DomainDataset(x, labels, domain_tag, meta)


def save_dataset_csv(dataset, path):
    """Export as CSV with header d0..dD-1,label (label empty when absent)."""
    from .report import emit_csv

    header = [f"d{i}" for i in range(dataset.dim)] + ["label"]
    rows = []
    for i in range(len(dataset)):
        row = [float(v) for v in dataset.x[i]]
        row.append(int(dataset.y[i]) if dataset.y is not None else "")
        rows.append(row)
    emit_csv(header, rows, path)
    return path
