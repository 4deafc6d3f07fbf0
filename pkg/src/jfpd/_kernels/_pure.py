"""Pure-Python kernel fallback.

Mirrors ``_core.pyx`` operation for operation: same accumulation order, same
libm calls (``math.log`` etc. bind to the C library the extension uses), so
both backends produce bit-identical streams and kernel outputs on a given
platform. Scalar loops make this backend slow on large batches; that is the
price of exactness, and the compiled core is the intended hot path.
"""

import math

import numpy as np

BACKEND = "python"

_MASK64 = 0xFFFFFFFFFFFFFFFF
SPLITMIX_GAMMA = 0x9E3779B97F4A7C15
_U53 = 1.0 / 9007199254740992.0  # 2**-53
_TWO_PI = 2.0 * math.pi
_LOG_CLAMP = 1e-12
_NORM_EPS = 1e-12


def splitmix64_next(x):
    """One splitmix64 step: returns (new_state, output)."""
    x = (x + SPLITMIX_GAMMA) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x, z ^ (z >> 31)


def _rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & _MASK64


def _step(s0, s1, s2, s3):
    result = (_rotl((s1 * 5) & _MASK64, 7) * 9) & _MASK64
    t = (s1 << 17) & _MASK64
    s2 ^= s0
    s3 ^= s1
    s1 ^= s2
    s0 ^= s3
    s2 ^= t
    s3 = _rotl(s3, 45)
    return s0, s1, s2, s3, result


def xoshiro_fill_u64(state, n):
    """Draw n raw xoshiro256** outputs; mutates the 4-word uint64 state."""
    s0, s1, s2, s3 = (int(w) for w in state)
    out = np.empty(n, dtype=np.uint64)
    for i in range(n):
        s0, s1, s2, s3, r = _step(s0, s1, s2, s3)
        out[i] = r
    state[0], state[1], state[2], state[3] = s0, s1, s2, s3
    return out


def xoshiro_fill_uniform(state, n):
    """Draw n doubles in [0, 1), one u64 each; mutates state."""
    s0, s1, s2, s3 = (int(w) for w in state)
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        s0, s1, s2, s3, r = _step(s0, s1, s2, s3)
        out[i] = (r >> 11) * _U53
    state[0], state[1], state[2], state[3] = s0, s1, s2, s3
    return out


def xoshiro_fill_gaussian(state, n):
    """Draw n standard normals via Box-Muller; consumes 2*ceil(n/2) u64s."""
    s0, s1, s2, s3 = (int(w) for w in state)
    out = np.empty(n, dtype=np.float64)
    pairs = (n + 1) // 2
    for i in range(pairs):
        s0, s1, s2, s3, a = _step(s0, s1, s2, s3)
        s0, s1, s2, s3, b = _step(s0, s1, s2, s3)
        u1 = ((a >> 11) + 1) * _U53  # (0, 1]: keeps log finite
        u2 = (b >> 11) * _U53
        r = math.sqrt(-2.0 * math.log(u1))
        out[2 * i] = r * math.cos(_TWO_PI * u2)
        if 2 * i + 1 < n:
            out[2 * i + 1] = r * math.sin(_TWO_PI * u2)
    state[0], state[1], state[2], state[3] = s0, s1, s2, s3
    return out


def row_entropy(p):
    """Entropy of each row of a (B, C) array, natural log, 1e-12 log clamp."""
    b, c = p.shape
    out = np.empty(b, dtype=np.float64)
    for i in range(b):
        acc = 0.0
        for j in range(c):
            v = p[i, j]
            acc -= v * math.log(v if v > _LOG_CLAMP else _LOG_CLAMP)
        out[i] = acc
    return out


def row_js(p, q):
    """Jensen-Shannon divergence of paired rows of two (B, C) arrays."""
    b, c = p.shape
    out = np.empty(b, dtype=np.float64)
    for i in range(b):
        kp = 0.0
        kq = 0.0
        for j in range(c):
            pv = p[i, j]
            qv = q[i, j]
            m = 0.5 * (pv + qv)
            lm = math.log(m if m > _LOG_CLAMP else _LOG_CLAMP)
            kp += pv * (math.log(pv if pv > _LOG_CLAMP else _LOG_CLAMP) - lm)
            kq += qv * (math.log(qv if qv > _LOG_CLAMP else _LOG_CLAMP) - lm)
        out[i] = 0.5 * kp + 0.5 * kq
    return out


def row_cosine(f, z):
    """Cosine distance of paired rows, clamped to [0, 2]; 1.0 near zero norm."""
    b, d = f.shape
    out = np.empty(b, dtype=np.float64)
    for i in range(b):
        dot = 0.0
        na = 0.0
        nb = 0.0
        for j in range(d):
            fv = f[i, j]
            zv = z[i, j]
            dot += fv * zv
            na += fv * fv
            nb += zv * zv
        na = math.sqrt(na)
        nb = math.sqrt(nb)
        if na < _NORM_EPS or nb < _NORM_EPS:
            out[i] = 1.0
        else:
            sim = dot / (na * nb)
            if sim > 1.0:
                sim = 1.0
            elif sim < -1.0:
                sim = -1.0
            out[i] = 1.0 - sim
    return out
