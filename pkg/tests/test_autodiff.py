import numpy as np
import pytest

from jfpd import autodiff as ad
from jfpd.rng import Rng

from conftest import random_simplex


def test_matmul_identity():
    a = ad.constant(np.eye(2))
    b = ad.constant([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(ad.matmul(a, b).data, b.data)


def test_matmul_orthogonal_rows():
    out = ad.matmul(ad.constant([[1.0, 0.0]]), ad.constant([[0.0], [1.0]]))
    assert out.data == np.array([[0.0]])


def test_matmul_shape_error_names_shapes():
    with pytest.raises(ValueError, match=r"\(2, 3\).*\(2, 2\)"):
        ad.matmul(ad.constant(np.zeros((2, 3))), ad.constant(np.zeros((2, 2))))


def test_matmul_gradcheck():
    rng = Rng(1)
    a = ad.Tensor(rng.gaussians(12).reshape(3, 4), track=True)
    b_const = rng.gaussians(8).reshape(4, 2)

    def left(t):
        return ad.sum_all(ad.matmul(t, ad.constant(b_const)))

    assert ad.grad_check(left, a, 1e-5) < 1e-6

    a_const = a.data.copy()

    def right(t):
        return ad.sum_all(ad.matmul(ad.constant(a_const), t))

    assert ad.grad_check(right, ad.Tensor(b_const), 1e-5) < 1e-6


def test_relu_values_and_mask():
    x = ad.Tensor([[-1.0, 0.0, 2.0]], track=True)
    y = ad.relu(x)
    assert y.data.tolist() == [[0.0, 0.0, 2.0]]
    ad.backward(ad.sum_all(y))
    assert x.grad.tolist() == [[0.0, 0.0, 1.0]]  # subgradient at 0 is 0


def test_relu_all_negative():
    assert np.all(ad.relu(ad.constant([[-3.0, -0.5]])).data == 0.0)


def test_relu_gradcheck_away_from_kink():
    rng = Rng(2)
    x = rng.gaussians(12).reshape(3, 4)
    x[np.abs(x) < 1e-2] = 0.5  # keep clear of the kink

    def fn(t):
        return ad.sum_all(ad.relu(t))

    assert ad.grad_check(fn, ad.Tensor(x), 1e-5) < 1e-7


def test_softmax_symmetry_and_stability():
    out = ad.softmax(ad.constant([[0.0, 0.0]]))
    assert out.data.tolist() == [[0.5, 0.5]]
    big = ad.softmax(ad.constant([[1000.0, 0.0]]))
    assert np.all(np.isfinite(big.data))
    assert big.data[0, 0] == pytest.approx(1.0, abs=1e-12)
    assert big.data[0, 1] == pytest.approx(0.0, abs=1e-12)


def test_softmax_matches_direct_exp_normalize():
    z = np.array([[1.0, 2.0, 3.0]])
    out = ad.softmax(ad.constant(z)).data[0]
    direct = np.exp(z[0]) / np.exp(z[0]).sum()
    np.testing.assert_allclose(out, direct, atol=1e-12)


def test_softmax_rejects_single_class():
    with pytest.raises(ValueError):
        ad.softmax(ad.constant([[1.0]]))


def test_softmax_rows_on_simplex_for_large_logits():
    rng = Rng(3)
    z = (rng.uniforms(300).reshape(30, 10) - 0.5) * 2000.0
    p = ad.softmax(ad.constant(z)).data
    assert np.all(p >= 0.0)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)


def test_cross_entropy_uniform_case():
    loss = ad.cross_entropy(ad.constant([[0.0, 0.0]]), np.array([0]))
    assert loss.item() == pytest.approx(np.log(2.0), abs=1e-12)


def test_cross_entropy_confident_case():
    loss = ad.cross_entropy(ad.constant([[30.0, -30.0]]), np.array([0]))
    assert loss.item() == pytest.approx(0.0, abs=1e-12)


def test_cross_entropy_label_out_of_range():
    with pytest.raises(IndexError):
        ad.cross_entropy(ad.constant(np.zeros((2, 3))), np.array([0, 3]))


def test_cross_entropy_gradcheck():
    rng = Rng(4)
    logits = rng.gaussians(12).reshape(4, 3)
    labels = np.array([0, 1, 2, 0])

    def fn(t):
        return ad.cross_entropy(t, labels)

    assert ad.grad_check(fn, ad.Tensor(logits), 1e-5) < 1e-6


def test_backward_sum_gives_ones():
    x = ad.Tensor(np.arange(6.0).reshape(2, 3), track=True)
    ad.backward(ad.sum_all(x))
    assert np.array_equal(x.grad, np.ones((2, 3)))


def test_backward_zero_scaling_gives_zeros():
    x = ad.Tensor(np.ones((2, 2)), track=True)
    ad.backward(ad.sum_all(ad.mul(x, 0.0)))
    assert np.array_equal(x.grad, np.zeros((2, 2)))


def test_backward_diamond_accumulates_once():
    x = ad.Tensor([[3.0]], track=True)
    y = ad.add(x, x)  # two paths to the root
    ad.backward(ad.sum_all(y))
    assert x.grad[0, 0] == 2.0


def test_backward_requires_scalar_root():
    x = ad.Tensor(np.ones((2, 2)), track=True)
    with pytest.raises(ValueError):
        ad.backward(ad.mul(x, 2.0))


def test_double_backward_without_rebuild_errors():
    x = ad.Tensor(np.ones((1, 3)), track=True)
    loss = ad.sum_all(x)
    ad.backward(loss)
    with pytest.raises(RuntimeError):
        ad.backward(loss)


def test_untracked_tensors_get_no_gradient():
    x = ad.Tensor(np.ones((1, 3)), track=True)
    c = ad.constant(np.ones((1, 3)))
    ad.backward(ad.sum_all(ad.mul(x, c)))
    assert c.grad is None
    assert x.grad is not None


def test_backward_is_deterministic():
    def grads(seed):
        rng = Rng(seed)
        x = ad.Tensor(rng.gaussians(8).reshape(2, 4), track=True)
        w = ad.Tensor(rng.gaussians(8).reshape(4, 2), track=True)
        loss = ad.mean_all(ad.relu(ad.matmul(x, w)))
        ad.backward(loss)
        return x.grad.copy(), w.grad.copy()

    g1 = grads(5)
    g2 = grads(5)
    assert np.array_equal(g1[0], g2[0]) and np.array_equal(g1[1], g2[1])


def test_take_rows_gradient_scatters():
    x = ad.Tensor(np.arange(12.0).reshape(4, 3), track=True)
    picked = ad.take_rows(x, np.array([0, 2, 2]))
    ad.backward(ad.sum_all(picked))
    assert x.grad.tolist() == [
        [1.0, 1.0, 1.0],
        [0.0, 0.0, 0.0],
        [2.0, 2.0, 2.0],
        [0.0, 0.0, 0.0],
    ]


def test_bound_map_gradcheck_and_domain():
    rng = Rng(6)
    x = rng.uniforms(8).reshape(2, 4) * 2.0

    def fn(t):
        return ad.sum_all(ad.bound_map(t))

    assert ad.grad_check(fn, ad.Tensor(x), 1e-5) < 1e-7
    with pytest.raises(ValueError):
        ad.bound_map(ad.constant([[-0.5]]))


def test_rowwise_cosine_gradcheck():
    rng = Rng(7)
    f = rng.gaussians(10).reshape(2, 5)
    z = rng.gaussians(10).reshape(2, 5)

    def fn(t):
        return ad.sum_all(ad.rowwise_cosine_to(t, z))

    assert ad.grad_check(fn, ad.Tensor(f), 1e-5) < 1e-6


def test_rowwise_cosine_zero_norm_row_has_zero_grad():
    f = ad.Tensor(np.array([[0.0, 0.0], [1.0, 1.0]]), track=True)
    z = np.array([[1.0, 0.0], [1.0, 0.0]])
    out = ad.rowwise_cosine_to(f, z)
    assert out.data[0, 0] == 1.0
    ad.backward(ad.sum_all(out))
    assert np.array_equal(f.grad[0], [0.0, 0.0])
    assert not np.array_equal(f.grad[1], [0.0, 0.0])


def test_rowwise_js_gradcheck_through_softmax():
    rng = Rng(8)
    logits = rng.gaussians(8).reshape(2, 4)
    q = np.vstack([random_simplex(Rng(9), 4) for _ in range(2)])

    def fn(t):
        return ad.sum_all(ad.rowwise_js_to(ad.softmax(t), q))

    assert ad.grad_check(fn, ad.Tensor(logits), 1e-5) < 1e-6


def test_rowwise_entropy_gradcheck():
    rng = Rng(10)
    logits = rng.gaussians(6).reshape(2, 3)

    def fn(t):
        return ad.sum_all(ad.rowwise_entropy(ad.softmax(t)))

    assert ad.grad_check(fn, ad.Tensor(logits), 1e-5) < 1e-6


def test_grad_check_linear_is_exact():
    x = ad.Tensor(np.ones((2, 2)), track=True)

    def fn(t):
        return ad.sum_all(ad.mul(t, 3.0))

    assert ad.grad_check(fn, x, 1e-5) < 1e-9


def test_grad_check_quadratic():
    rng = Rng(11)
    x = rng.gaussians(4).reshape(2, 2)

    def fn(t):
        return ad.sum_all(ad.mul(t, t))

    assert ad.grad_check(fn, ad.Tensor(x), 1e-5) < 1e-7


def test_grad_check_rejects_bad_eps():
    with pytest.raises(ValueError):
        ad.grad_check(lambda t: ad.sum_all(t), ad.Tensor(np.ones((1, 1))), 0.0)


def test_primitive_gradients_many_seeds():
    """Analytic vs central differences across 100 random seeds."""
    worst = 0.0
    for seed in range(100):
        rng = Rng(seed)
        a = rng.gaussians(6).reshape(2, 3)
        w = rng.gaussians(6).reshape(3, 2)
        b = rng.gaussians(2).reshape(1, 2)

        def fn(t):
            h = ad.add(ad.matmul(t, ad.constant(w)), ad.constant(b))
            return ad.mean_all(ad.mul(h, h))

        worst = max(worst, ad.grad_check(fn, ad.Tensor(a), 1e-5))
    assert worst < 1e-5


def test_forward_backward_outputs_finite():
    rng = Rng(12)
    x = ad.Tensor(rng.gaussians(20).reshape(4, 5) * 100.0, track=True)
    w = ad.Tensor(rng.gaussians(15).reshape(5, 3), track=True)
    p = ad.softmax(ad.matmul(x, w))
    loss = ad.cross_entropy(ad.matmul(x, w), np.array([0, 1, 2, 0]))
    ad.backward(loss)
    for t in (x, w, p, loss):
        assert np.all(np.isfinite(t.data))
    assert np.all(np.isfinite(x.grad)) and np.all(np.isfinite(w.grad))
