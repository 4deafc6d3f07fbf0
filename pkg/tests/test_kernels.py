"""Kernel backends agree with the scalar reference functions and each other."""

import numpy as np
import pytest

from jfpd import _kernels, divergence
from jfpd.rng import Rng

from conftest import random_simplex

backends = _kernels.get_backends()
needs_compiled = pytest.mark.skipif(
    "compiled" not in backends, reason="compiled kernel extension not built"
)


def _random_rows(seed, b, c):
    rng = Rng(seed)
    return np.vstack([random_simplex(rng, c) for _ in range(b)])


def test_row_entropy_matches_reference():
    p = _random_rows(1, 200, 6)
    out = _kernels.row_entropy(p)
    expected = [divergence.entropy(row) for row in p]
    np.testing.assert_allclose(out, expected, rtol=1e-12)


def test_row_js_matches_reference():
    p = _random_rows(2, 200, 5)
    q = _random_rows(3, 200, 5)
    out = _kernels.row_js(p, q)
    expected = [divergence.js_divergence(a, b) for a, b in zip(p, q)]
    np.testing.assert_allclose(out, expected, rtol=1e-12)


def test_row_cosine_matches_reference():
    rng = Rng(4)
    f = rng.gaussians(200 * 8).reshape(200, 8)
    z = rng.gaussians(200 * 8).reshape(200, 8)
    out = _kernels.row_cosine(f, z)
    expected = [divergence.cosine_distance(a, b) for a, b in zip(f, z)]
    np.testing.assert_allclose(out, expected, rtol=1e-12)


def test_row_cosine_zero_norm_rows():
    f = np.array([[0.0, 0.0], [1.0, 0.0]])
    z = np.array([[1.0, 0.0], [1.0, 0.0]])
    out = _kernels.row_cosine(f, z)
    assert out[0] == 1.0
    assert out[1] == 0.0


@needs_compiled
def test_backends_bit_identical_prng():
    for name, mod in backends.items():
        state = np.array(Rng(42).state, dtype=np.uint64)
        assert mod.xoshiro_fill_u64(state.copy(), 64).tolist() == (
            backends["python"].xoshiro_fill_u64(state.copy(), 64).tolist()
        ), name
    s1 = np.array(Rng(7).state, dtype=np.uint64)
    s2 = s1.copy()
    # large enough to catch one-ulp libm divergence (e.g. sincos fusion)
    g1 = backends["compiled"].xoshiro_fill_gaussian(s1, 10001)
    g2 = backends["python"].xoshiro_fill_gaussian(s2, 10001)
    assert np.array_equal(g1, g2)
    assert np.array_equal(s1, s2)
    u1 = backends["compiled"].xoshiro_fill_uniform(s1, 33)
    u2 = backends["python"].xoshiro_fill_uniform(s2, 33)
    assert np.array_equal(u1, u2)


@needs_compiled
def test_backends_bit_identical_rows():
    p = _random_rows(5, 64, 7)
    q = _random_rows(6, 64, 7)
    rng = Rng(8)
    f = rng.gaussians(64 * 5).reshape(64, 5)
    z = rng.gaussians(64 * 5).reshape(64, 5)
    c, py = backends["compiled"], backends["python"]
    assert np.array_equal(c.row_entropy(p), py.row_entropy(p))
    assert np.array_equal(c.row_js(p, q), py.row_js(p, q))
    assert np.array_equal(c.row_cosine(f, z), py.row_cosine(f, z))


@needs_compiled
def test_splitmix_step_identical():
    c, py = backends["compiled"], backends["python"]
    x = 0
    for _ in range(100):
        xc, vc = c.splitmix64_next(x)
        xp, vp = py.splitmix64_next(x)
        assert (xc, vc) == (xp, vp)
        x = xc
