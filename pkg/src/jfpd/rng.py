"""Deterministic random streams for datasets and training.

The generator is xoshiro256** seeded through splitmix64, chosen so the raw
u64 stream is reproducible bit-for-bit across platforms and backends. The
stream contract (what each draw consumes) is part of the public behaviour:

* ``uniforms(n)``   consumes n u64s, maps each via ``(x >> 11) * 2**-53``.
* ``gaussians(n)``  consumes ``2 * ceil(n / 2)`` u64s (Box-Muller pairs; the
  spare half of an odd request is discarded, never cached).
* ``randint(b)``    consumes one u64 (``floor(u * b)``, clamped to b-1).
* ``shuffle`` / ``choice`` consume one u64 per swap as documented below.

The first eight outputs for seed 42 are frozen in ``tests/test_rng.py``
against an independently compiled C reference.
"""

import numpy as np

from . import _kernels

_MASK64 = 0xFFFFFFFFFFFFFFFF


def derive_seed(seed, salt):
    """Mix (seed, salt) into a new 64-bit seed via one splitmix64 step."""
    x = (int(seed) ^ ((salt + 1) * _kernels.SPLITMIX_GAMMA)) & _MASK64
    _, out = _kernels.splitmix64_next(x)
    return out


class Rng:
    """xoshiro256** stream with splitmix64 state initialization."""

    def __init__(self, seed):
        seed = int(seed) & _MASK64
        self._state = np.empty(4, dtype=np.uint64)
        x = seed
        for i in range(4):
            x, word = _kernels.splitmix64_next(x)
            self._state[i] = word

    @property
    def state(self):
        return tuple(int(w) for w in self._state)

    def u64(self, n):
        """n raw generator outputs as a uint64 array."""
        return _kernels.xoshiro_fill_u64(self._state, int(n))

    def next_u64(self):
        return int(self.u64(1)[0])

    def uniforms(self, n):
        """n doubles in [0, 1)."""
        return _kernels.xoshiro_fill_uniform(self._state, int(n))

    def gaussians(self, n):
        """n standard normal doubles."""
        return _kernels.xoshiro_fill_gaussian(self._state, int(n))

    def randint(self, bound):
        """One integer uniform on [0, bound)."""
        if bound <= 0:
            raise ValueError(f"randint bound must be positive, got {bound}")
        v = int(self.uniforms(1)[0] * bound)
        return min(v, bound - 1)

    def shuffled_indices(self, n):
        """Fisher-Yates permutation of range(n); consumes n-1 draws."""
        idx = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.randint(i + 1)
            idx[i], idx[j] = idx[j], idx[i]
        return np.asarray(idx, dtype=np.int64)

    def choice(self, n, k, replace=False):
        """k indices from range(n), sorted ascending.

        Without replacement uses a partial Fisher-Yates pass (k draws); with
        replacement draws k independent ``randint(n)``.
        """
        if replace:
            picks = [self.randint(n) for _ in range(k)]
        else:
            if k > n:
                raise ValueError(f"cannot draw {k} from {n} without replacement")
            idx = list(range(n))
            for i in range(k):
                j = i + self.randint(n - i)
                idx[i], idx[j] = idx[j], idx[i]
            picks = idx[:k]
        return np.asarray(sorted(picks), dtype=np.int64)
