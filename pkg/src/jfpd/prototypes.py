"""Per-class source prototypes in feature and prediction space.

Prototypes are plain arrays computed with the current model in no-gradient
mode; during adaptation they are constants of the step that produced them.
Class members are summed in ascending sample order so results are
bit-reproducible for a fixed dataset order.
"""

from dataclasses import dataclass

import numpy as np

from .model import forward_all


class AbsentClassError(KeyError):
    """Requested a prototype for a class with no source samples."""


@dataclass(frozen=True)
class PrototypeSet:
    features: np.ndarray  # (C, feature_dim)
    predictions: np.ndarray  # (C, C), rows on the simplex where present
    counts: np.ndarray  # (C,) samples used per class; 0 marks an absent class

    @property
    def n_classes(self):
        return self.counts.shape[0]

    def present(self, c):
        return 0 <= c < self.n_classes and self.counts[c] > 0

    def lookup(self, c):
        """Stored (feature prototype, prediction prototype) pair for class c."""
        if not self.present(c):
            raise AbsentClassError(
                f"class {c} has no prototype (counts: {self.counts.tolist()})"
            )
        return self.features[c], self.predictions[c]


def _build(params, dataset, indices_per_class, n_classes):
    features = np.zeros((n_classes, params.dims.feature_dim))
    predictions = np.zeros((n_classes, params.dims.n_classes))
    counts = np.zeros(n_classes, dtype=np.int64)
    for c, idx in enumerate(indices_per_class):
        if len(idx) == 0:
            continue
        f, p = forward_all(params, dataset.x[idx])
        features[c] = f.mean(axis=0)
        predictions[c] = p.mean(axis=0)
        counts[c] = len(idx)
    return PrototypeSet(features, predictions, counts)


def _class_indices(dataset, n_classes):
    if dataset.y is None:
        raise ValueError("prototype construction needs a labeled dataset")
    if len(dataset) == 0:
        raise ValueError("cannot build prototypes from an empty dataset")
    if dataset.y.max() >= n_classes:
        raise ValueError(f"label {dataset.y.max()} out of range [0, {n_classes})")
    return [np.flatnonzero(dataset.y == c) for c in range(n_classes)]


def compute_prototypes(params, dataset):
    """Full-dataset per-class means of f(x) and g(f(x))."""
    n_classes = dataset.meta.get("n_classes") or int(dataset.y.max()) + 1
    return _build(params, dataset, _class_indices(dataset, n_classes), n_classes)


def sample_minibatch_prototypes(params, dataset, k, rng):
    """Per-class means over k randomly drawn samples.

    Classes with at least k members are subsampled without replacement
    (k == class size degenerates to the whole class); smaller classes are
    drawn with replacement so the estimator stays defined. Deterministic
    given the rng state.
    """
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    n_classes = dataset.meta.get("n_classes") or int(dataset.y.max()) + 1
    picked = []
    for idx in _class_indices(dataset, n_classes):
        if len(idx) == 0:
            picked.append(idx)
        elif len(idx) < k:
            picked.append(idx[rng.choice(len(idx), k, replace=True)])
        else:
            picked.append(idx[rng.choice(len(idx), k, replace=False)])
    return _build(params, dataset, picked, n_classes)
