"""Feature- and prediction-space divergences.

All functions are pure, operate on plain float64 arrays, and use the natural
logarithm. Probabilities are clamped to 1e-12 inside logs so one-hot vectors
stay finite; the perturbation is far below every test tolerance.
"""

import numpy as np

LOG_CLAMP = 1e-12
NORM_EPS = 1e-12

#: Upper bound of feature_divergence: bound(2), cosine distance maxes at 2.
FEAT_DIV_MAX = 2.0 / 3.0
#: Upper bound of prediction_divergence: bound(ln 2).
PRED_DIV_MAX = np.log(2.0) / (1.0 + np.log(2.0))


def _as_vector(v, name):
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a 1-D vector, got shape {arr.shape}")
    return arr


def check_simplex(p, name="p"):
    """Validate a probability vector: entries in [0, 1], sum within 1e-9 of 1."""
    arr = _as_vector(p, name)
    if arr.size < 1:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    if np.any(arr < -1e-12) or np.any(arr > 1.0 + 1e-12):
        raise ValueError(f"{name} entries must lie in [0, 1]: {arr}")
    s = float(np.sum(arr))
    if abs(s - 1.0) > 1e-9:
        raise ValueError(f"{name} must sum to 1 within 1e-9, got {s!r}")
    return arr


def cosine_distance(a, b):
    """1 - cos(a, b), clamped to [0, 2]; returns 1 if either norm < 1e-12."""
    a = _as_vector(a, "a")
    b = _as_vector(b, "b")
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = float(np.sqrt(np.dot(a, a)))
    nb = float(np.sqrt(np.dot(b, b)))
    if na < NORM_EPS or nb < NORM_EPS:
        return 1.0
    sim = float(np.dot(a, b)) / (na * nb)
    sim = min(1.0, max(-1.0, sim))
    return 1.0 - sim


def bound(x):
    """Map a non-negative value into [0, 1) via x / (1 + x)."""
    x = float(x)
    if x < 0.0:
        raise ValueError(f"bound is defined for x >= 0, got {x}")
    return x / (1.0 + x)


def feature_divergence(f_s, f_t):
    """Bounded cosine distance between two feature vectors, in [0, 2/3]."""
    return bound(cosine_distance(f_s, f_t))


def entropy(p):
    """Shannon entropy in nats; 0*ln(0) taken as 0."""
    arr = check_simplex(p)
    return float(-np.sum(arr * np.log(np.maximum(arr, LOG_CLAMP))))


def kl_divergence(p, q):
    """KL(p || q) in nats with the 1e-12 log clamp (no simplex check)."""
    return float(
        np.sum(p * (np.log(np.maximum(p, LOG_CLAMP)) - np.log(np.maximum(q, LOG_CLAMP))))
    )


def js_divergence(p, q):
    """Jensen-Shannon divergence in nats, symmetric, bounded by ln 2."""
    p = check_simplex(p, "p")
    q = check_simplex(q, "q")
    if p.shape != q.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {q.shape}")
    m = 0.5 * (p + q)
    return 0.5 * kl_divergence(p, m) + 0.5 * kl_divergence(q, m)


def prediction_divergence(p_s, p_t):
    """Bounded JS divergence between two predictions, in [0, ln2/(1+ln2)]."""
    return bound(js_divergence(p_s, p_t))
