"""Reverse-mode automatic differentiation over dense float64 matrices.

Every op records its inputs and a backward closure on the output tensor, so
the tape is rebuilt from scratch each forward pass. ``backward`` walks the
recorded graph once in reverse topological order and accumulates gradients
onto tracked tensors; untracked tensors are constants and never receive one.

Scope is deliberately small: the ops below are exactly what the model and
the adaptation objective need. No retained graphs, no higher-order grads.
"""

import numpy as np

LOG_CLAMP = 1e-12
NORM_EPS = 1e-12


class Tensor:
    """Dense (rows, cols) float64 matrix with an optional gradient slot."""

    __slots__ = ("data", "grad", "track", "_parents", "_backward", "_consumed")

    def __init__(self, data, track=False):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ValueError(f"Tensor must be 2-D, got shape {arr.shape}")
        self.data = arr
        self.grad = None
        self.track = bool(track)
        self._parents = ()
        self._backward = None
        self._consumed = False

    @property
    def shape(self):
        return self.data.shape

    def item(self):
        if self.data.size != 1:
            raise ValueError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.data[0, 0])

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad += g

    def backward(self):
        backward(self)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, track={self.track})"


def _result(data, parents, backward_fn):
    """Wrap an op result; constant-folds when no parent is tracked."""
    out = Tensor(data)
    if any(p.track for p in parents):
        out.track = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def constant(data):
    return Tensor(data, track=False)


def parameter(data):
    return Tensor(data, track=True)


# ---------------------------------------------------------------------------
# elementwise and structural ops
# ---------------------------------------------------------------------------

def add(a, b):
    """a + b; b may be same-shape, a 1 x n row broadcast over rows, or a scalar."""
    if not isinstance(b, Tensor):
        b_val = float(b)
        out_data = a.data + b_val

        def _bw(g):
            if a.track:
                a._accumulate(g)

        return _result(out_data, (a,), _bw)

    if a.shape == b.shape:
        def _bw(g):
            if a.track:
                a._accumulate(g)
            if b.track:
                b._accumulate(g)

        return _result(a.data + b.data, (a, b), _bw)

    if b.shape == (1, a.shape[1]):
        def _bw(g):
            if a.track:
                a._accumulate(g)
            if b.track:
                b._accumulate(g.sum(axis=0, keepdims=True))

        return _result(a.data + b.data, (a, b), _bw)

    raise ValueError(f"add shapes incompatible: {a.shape} vs {b.shape}")


def mul(a, b):
    """Elementwise a * b (same shape) or scalar scaling."""
    if not isinstance(b, Tensor):
        b_val = float(b)

        def _bw(g):
            if a.track:
                a._accumulate(g * b_val)

        return _result(a.data * b_val, (a,), _bw)

    if a.shape != b.shape:
        raise ValueError(f"mul shapes incompatible: {a.shape} vs {b.shape}")

    def _bw(g):
        if a.track:
            a._accumulate(g * b.data)
        if b.track:
            b._accumulate(g * a.data)

    return _result(a.data * b.data, (a, b), _bw)


def sub(a, b):
    if not isinstance(b, Tensor):
        return add(a, -float(b))
    return add(a, mul(b, -1.0))


def reciprocal(x):
    """1 / x elementwise."""
    inv = 1.0 / x.data

    def _bw(g):
        if x.track:
            x._accumulate(-g * inv * inv)

    return _result(inv, (x,), _bw)


def matmul(a, b):
    """Matrix product; backward is g @ b^T and a^T @ g."""
    if a.shape[1] != b.shape[0]:
        raise ValueError(
            f"matmul dimension mismatch: {a.shape} @ {b.shape} "
            f"(inner {a.shape[1]} != {b.shape[0]})"
        )

    def _bw(g):
        if a.track:
            a._accumulate(g @ b.data.T)
        if b.track:
            b._accumulate(a.data.T @ g)

    return _result(a.data @ b.data, (a, b), _bw)


def relu(x):
    """Elementwise max(0, x); subgradient at exactly 0 is 0."""
    mask = x.data > 0.0

    def _bw(g):
        if x.track:
            x._accumulate(g * mask)

    return _result(np.where(mask, x.data, 0.0), (x,), _bw)


def sum_all(x):
    """Sum of all entries as a 1 x 1 tensor."""
    def _bw(g):
        if x.track:
            x._accumulate(np.full_like(x.data, g[0, 0]))

    return _result(np.array([[x.data.sum()]]), (x,), _bw)


def mean_all(x):
    """Mean of all entries as a 1 x 1 tensor."""
    n = x.data.size

    def _bw(g):
        if x.track:
            x._accumulate(np.full_like(x.data, g[0, 0] / n))

    return _result(np.array([[x.data.sum() / n]]), (x,), _bw)


def take_rows(x, indices):
    """Select rows by index; backward scatter-adds into the source rows."""
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1:
        raise ValueError("take_rows needs a 1-D index array")
    if idx.size and (idx.min() < 0 or idx.max() >= x.shape[0]):
        raise IndexError(f"row index out of range for {x.shape[0]} rows")

    def _bw(g):
        if x.track:
            acc = np.zeros_like(x.data)
            np.add.at(acc, idx, g)
            x._accumulate(acc)

    return _result(x.data[idx], (x,), _bw)


# ---------------------------------------------------------------------------
# softmax / cross-entropy
# ---------------------------------------------------------------------------

def softmax(logits):
    """Row-wise max-subtracted softmax; rows sum to 1 within 1e-12."""
    if logits.shape[1] < 2:
        raise ValueError(f"softmax needs at least 2 classes, got {logits.shape[1]}")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)

    def _bw(g):
        if logits.track:
            inner = (g * p).sum(axis=1, keepdims=True)
            logits._accumulate(p * (g - inner))

    return _result(p, (logits,), _bw)


def cross_entropy(logits, labels):
    """Mean negative log-likelihood over the batch, via log-sum-exp."""
    labels = np.asarray(labels, dtype=np.int64)
    b, c = logits.shape
    if labels.shape != (b,):
        raise ValueError(f"labels must have shape ({b},), got {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise IndexError(f"label out of range [0, {c}): {labels}")
    zmax = logits.data.max(axis=1, keepdims=True)
    z = logits.data - zmax
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True)) + zmax
    picked = logits.data[np.arange(b), labels][:, None]
    loss = float(np.mean(lse - picked))

    def _bw(g):
        if logits.track:
            p = np.exp(logits.data - lse)
            p[np.arange(b), labels] -= 1.0
            logits._accumulate(g[0, 0] * p / b)

    return _result(np.array([[loss]]), (logits,), _bw)


# ---------------------------------------------------------------------------
# divergence ops (constants on the right-hand side)
# ---------------------------------------------------------------------------

def bound_map(x):
    """Elementwise x / (1 + x) for non-negative x."""
    if np.any(x.data < 0.0):
        raise ValueError("bound_map is defined for non-negative inputs")
    denom = 1.0 + x.data

    def _bw(g):
        if x.track:
            x._accumulate(g / (denom * denom))

    return _result(x.data / denom, (x,), _bw)


def rowwise_cosine_to(f, anchors):
    """Cosine distance of each row of f to the matching constant anchor row.

    Output is (B, 1). Rows where either norm falls below 1e-12 evaluate to 1
    with a zero gradient (the distance is constant there by convention).
    """
    z = np.asarray(anchors, dtype=np.float64)
    if z.shape != f.shape:
        raise ValueError(f"anchor shape {z.shape} != feature shape {f.shape}")
    dots = (f.data * z).sum(axis=1, keepdims=True)
    na = np.sqrt((f.data * f.data).sum(axis=1, keepdims=True))
    nb = np.sqrt((z * z).sum(axis=1, keepdims=True))
    ok = (na >= NORM_EPS) & (nb >= NORM_EPS)
    denom = np.where(ok, na * nb, 1.0)
    sim = np.clip(dots / denom, -1.0, 1.0)
    out = np.where(ok, 1.0 - sim, 1.0)

    def _bw(g):
        if f.track:
            # d(1-sim)/df = sim * f / |f|^2 - z / (|f||z|), rows gated by ok
            na2 = np.where(ok, na * na, 1.0)
            grad = sim * f.data / na2 - z / denom
            f._accumulate(np.where(ok, g * grad, 0.0))

    return _result(out, (f,), _bw)


def rowwise_js_to(p, anchors):
    """JS divergence of each row of p to the matching constant anchor row."""
    q = np.asarray(anchors, dtype=np.float64)
    if q.shape != p.shape:
        raise ValueError(f"anchor shape {q.shape} != prediction shape {p.shape}")
    m = 0.5 * (p.data + q)
    log_p = np.log(np.maximum(p.data, LOG_CLAMP))
    log_q = np.log(np.maximum(q, LOG_CLAMP))
    log_m = np.log(np.maximum(m, LOG_CLAMP))
    kl_pm = (p.data * (log_p - log_m)).sum(axis=1, keepdims=True)
    kl_qm = (q * (log_q - log_m)).sum(axis=1, keepdims=True)
    out = 0.5 * kl_pm + 0.5 * kl_qm

    def _bw(g):
        if p.track:
            # consistent with the clamped forward: d/dp = (log(p~/m~) + [p>eps] - [m>eps]) / 2
            ind = (p.data > LOG_CLAMP).astype(np.float64) - (m > LOG_CLAMP).astype(np.float64)
            p._accumulate(g * 0.5 * (log_p - log_m + ind))

    return _result(out, (p,), _bw)


def rowwise_entropy(p):
    """Entropy of each row of p as a (B, 1) tensor, natural log, clamped."""
    log_p = np.log(np.maximum(p.data, LOG_CLAMP))
    out = -(p.data * log_p).sum(axis=1, keepdims=True)

    def _bw(g):
        if p.track:
            ind = (p.data > LOG_CLAMP).astype(np.float64)
            p._accumulate(g * -(log_p + ind))

    return _result(out, (p,), _bw)


# ---------------------------------------------------------------------------
# backward pass
# ---------------------------------------------------------------------------

def backward(loss):
    """Reverse accumulation from a scalar root into all tracked ancestors."""
    if not isinstance(loss, Tensor):
        raise ValueError("backward expects a Tensor root")
    if loss.data.shape != (1, 1):
        raise ValueError(f"backward needs a scalar (1x1) root, got {loss.shape}")
    if loss._consumed:
        raise RuntimeError("backward already ran on this graph; rebuild the forward pass")
    if not loss.track:
        raise ValueError("loss is not reachable from any tracked tensor")
    loss._consumed = True

    order = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))

    loss._accumulate(np.ones((1, 1)))
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


def grad_check(fn, x, eps=1e-5):
    """Max relative error between analytic and central-difference gradients.

    Error is |analytic - numeric| / max(1, |analytic|), maximized over the
    entries of x. ``fn`` must map a single tensor to a scalar tensor.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    probe = Tensor(x.data.copy(), track=True)
    backward(fn(probe))
    analytic = probe.grad if probe.grad is not None else np.zeros_like(probe.data)

    worst = 0.0
    flat = probe.data.copy()
    for idx in np.ndindex(*flat.shape):
        base = flat[idx]
        flat[idx] = base + eps
        f_hi = fn(Tensor(flat.copy())).item()
        flat[idx] = base - eps
        f_lo = fn(Tensor(flat.copy())).item()
        flat[idx] = base
        numeric = (f_hi - f_lo) / (2.0 * eps)
        a = analytic[idx]
        worst = max(worst, abs(a - numeric) / max(1.0, abs(a)))
    return worst
