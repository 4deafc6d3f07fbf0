# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: xoshiro256** PRNG fills and row-wise divergence loops.

Keep this file in lockstep with ``_pure.py``; the two backends promise
bit-identical outputs (same operation order, same libm).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport M_PI, cos, log, sin, sqrt
from libc.stdint cimport uint64_t

cnp.import_array()

BACKEND = "compiled"

cdef double U53 = 1.0 / 9007199254740992.0
cdef double TWO_PI = 2.0 * M_PI
cdef double LOG_CLAMP = 1e-12
cdef double NORM_EPS = 1e-12

SPLITMIX_GAMMA = 0x9E3779B97F4A7C15


def splitmix64_next(x):
    """One splitmix64 step: returns (new_state, output)."""
    cdef uint64_t xs = <uint64_t> x
    xs += <uint64_t> 0x9E3779B97F4A7C15
    cdef uint64_t z = xs
    z = (z ^ (z >> 30)) * <uint64_t> 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * <uint64_t> 0x94D049BB133111EB
    return xs, z ^ (z >> 31)


cdef inline uint64_t rotl(uint64_t x, int k) nogil:
    return (x << k) | (x >> (64 - k))


cdef inline uint64_t step(uint64_t* s) nogil:
    cdef uint64_t result = rotl(s[1] * 5, 7) * 9
    cdef uint64_t t = s[1] << 17
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = rotl(s[3], 45)
    return result


def xoshiro_fill_u64(cnp.uint64_t[::1] state, Py_ssize_t n):
    """Draw n raw xoshiro256** outputs; mutates the 4-word uint64 state."""
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] out = np.empty(n, dtype=np.uint64)
    cdef uint64_t s[4]
    cdef Py_ssize_t i
    for i in range(4):
        s[i] = state[i]
    for i in range(n):
        out[i] = step(s)
    for i in range(4):
        state[i] = s[i]
    return out


def xoshiro_fill_uniform(cnp.uint64_t[::1] state, Py_ssize_t n):
    """Draw n doubles in [0, 1), one u64 each; mutates state."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n, dtype=np.float64)
    cdef uint64_t s[4]
    cdef Py_ssize_t i
    for i in range(4):
        s[i] = state[i]
    for i in range(n):
        out[i] = <double> (step(s) >> 11) * U53
    for i in range(4):
        state[i] = s[i]
    return out


def xoshiro_fill_gaussian(cnp.uint64_t[::1] state, Py_ssize_t n):
    """Draw n standard normals via Box-Muller; consumes 2*ceil(n/2) u64s."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n, dtype=np.float64)
    cdef uint64_t s[4]
    cdef uint64_t a, b
    cdef double u1, u2, r
    cdef Py_ssize_t i, pairs = (n + 1) // 2
    for i in range(4):
        s[i] = state[i]
    for i in range(pairs):
        a = step(s)
        b = step(s)
        u1 = <double> ((a >> 11) + 1) * U53  # (0, 1]: keeps log finite
        u2 = <double> (b >> 11) * U53
        r = sqrt(-2.0 * log(u1))
        out[2 * i] = r * cos(TWO_PI * u2)
        if 2 * i + 1 < n:
            out[2 * i + 1] = r * sin(TWO_PI * u2)
    for i in range(4):
        state[i] = s[i]
    return out


def row_entropy(double[:, ::1] p):
    """Entropy of each row of a (B, C) array, natural log, 1e-12 log clamp."""
    cdef Py_ssize_t b = p.shape[0], c = p.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(b, dtype=np.float64)
    cdef Py_ssize_t i, j
    cdef double acc, v
    for i in range(b):
        acc = 0.0
        for j in range(c):
            v = p[i, j]
            acc -= v * log(v if v > LOG_CLAMP else LOG_CLAMP)
        out[i] = acc
    return out


def row_js(double[:, ::1] p, double[:, ::1] q):
    """Jensen-Shannon divergence of paired rows of two (B, C) arrays."""
    cdef Py_ssize_t b = p.shape[0], c = p.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(b, dtype=np.float64)
    cdef Py_ssize_t i, j
    cdef double kp, kq, pv, qv, m, lm
    for i in range(b):
        kp = 0.0
        kq = 0.0
        for j in range(c):
            pv = p[i, j]
            qv = q[i, j]
            m = 0.5 * (pv + qv)
            lm = log(m if m > LOG_CLAMP else LOG_CLAMP)
            kp += pv * (log(pv if pv > LOG_CLAMP else LOG_CLAMP) - lm)
            kq += qv * (log(qv if qv > LOG_CLAMP else LOG_CLAMP) - lm)
        out[i] = 0.5 * kp + 0.5 * kq
    return out


def row_cosine(double[:, ::1] f, double[:, ::1] z):
    """Cosine distance of paired rows, clamped to [0, 2]; 1.0 near zero norm."""
    cdef Py_ssize_t b = f.shape[0], d = f.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(b, dtype=np.float64)
    cdef Py_ssize_t i, j
    cdef double dot, na, nb, fv, zv, sim
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
        na = sqrt(na)
        nb = sqrt(nb)
        if na < NORM_EPS or nb < NORM_EPS:
            out[i] = 1.0
        else:
            sim = dot / (na * nb)
            if sim > 1.0:
                sim = 1.0
            elif sim < -1.0:
                sim = -1.0
            out[i] = 1.0 - sim
    return out
