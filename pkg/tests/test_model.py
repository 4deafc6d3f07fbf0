import numpy as np
import pytest

from jfpd import autodiff as ad
from jfpd.data import DomainDataset, gen_gaussian_domains, ShiftSpec, standardize
from jfpd.model import (
    CheckpointError,
    Dims,
    TrainConfig,
    evaluate_accuracy,
    forward_all,
    forward_features,
    forward_graph,
    forward_predict,
    init,
    load_checkpoint,
    pretrain_source,
    save_checkpoint,
)
from jfpd.rng import Rng

from conftest import make_toy_source


def test_init_deterministic_per_seed():
    a = init(7, Dims(3, (4,), 2, 2))
    b = init(7, Dims(3, (4,), 2, 2))
    c = init(8, Dims(3, (4,), 2, 2))
    assert a.equal_bits(b)
    assert not a.equal_bits(c)


def test_init_rejects_zero_sized_layer():
    with pytest.raises(ValueError):
        Dims(3, (0,), 2, 2)
    with pytest.raises(ValueError):
        Dims(3, (4,), 2, 1)


def test_init_variance_matches_uniform_law():
    # Var(U(-s, s)) = s^2 / 3; one 100x100 layer gives 10^4 draws
    dims = Dims(100, (), 100, 2)
    params = init(3, dims)
    w = params.weights[0].data
    s = np.sqrt(6.0 / 200.0)
    assert w.var() == pytest.approx(s * s / 3.0, rel=0.05)
    assert np.all(params.biases[0].data == 0.0)


def test_forward_features_zero_input_zero_bias():
    params = init(0, Dims(3, (4,), 2, 2))
    for b in params.biases:
        b.data[:] = 0.0
    feats = forward_features(params, np.zeros((2, 3)))
    assert np.array_equal(feats, np.zeros((2, 2)))


def test_forward_batch_row_consistency():
    params = init(1, Dims(3, (5,), 4, 3))
    rng = Rng(2)
    x = rng.gaussians(9).reshape(3, 3)
    whole = forward_features(params, x)
    rows = np.vstack([forward_features(params, x[i : i + 1]) for i in range(3)])
    np.testing.assert_allclose(whole, rows, atol=1e-12)


def test_forward_matches_manual_evaluation():
    params = init(4, Dims(2, (3,), 2, 2))
    x = np.array([[0.5, -1.0]])
    w0, w1, w2 = (w.data for w in params.weights)
    b0, b1, b2 = (b.data for b in params.biases)
    hidden = np.maximum(x @ w0 + b0, 0.0)
    feats = hidden @ w1 + b1  # feature layer is linear
    logits = feats @ w2 + b2
    np.testing.assert_allclose(forward_features(params, x), feats, atol=1e-15)
    z = logits - logits.max()
    direct = np.exp(z) / np.exp(z).sum()
    np.testing.assert_allclose(forward_predict(params, x), direct, atol=1e-14)


def test_forward_predict_is_simplex_and_uniform_for_zero_head():
    params = init(5, Dims(3, (4,), 3, 4))
    params.weights[-1].data[:] = 0.0
    params.biases[-1].data[:] = 0.0
    rng = Rng(6)
    p = forward_predict(params, rng.gaussians(30).reshape(10, 3))
    np.testing.assert_allclose(p, 0.25, atol=1e-15)
    p2 = forward_predict(init(5, Dims(3, (4,), 3, 4)), rng.gaussians(30).reshape(10, 3))
    np.testing.assert_allclose(p2.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(p2 >= 0.0)


def test_forward_graph_matches_plain_forward():
    params = init(7, Dims(4, (6, 5), 3, 3))
    rng = Rng(8)
    x = rng.gaussians(12).reshape(3, 4)
    f_t, logits_t = forward_graph(params, x)
    f, p = forward_all(params, x)
    np.testing.assert_allclose(f_t.data, f, atol=1e-15)
    np.testing.assert_allclose(
        ad.softmax(logits_t).data, p, atol=1e-15
    )


def test_forward_features_dim_check():
    params = init(0, Dims(3, (4,), 2, 2))
    with pytest.raises(ValueError):
        forward_features(params, np.zeros((1, 5)))


def test_evaluate_accuracy_hand_count():
    params = init(9, Dims(2, (4,), 3, 2))
    rng = Rng(10)
    x = rng.gaussians(20).reshape(10, 2)
    pred = forward_predict(params, x).argmax(axis=1)
    y = pred.copy()
    y[:3] = 1 - y[:3]  # flip three labels
    ds = DomainDataset(x, y, "source", {"n_classes": 2})
    assert evaluate_accuracy(params, ds) == pytest.approx(0.7)


def test_evaluate_accuracy_complement_under_label_flip():
    params = init(11, Dims(2, (4,), 3, 2))
    rng = Rng(12)
    x = rng.gaussians(40).reshape(20, 2)
    y = np.array([0, 1] * 10)
    ds = DomainDataset(x, y, "source", {"n_classes": 2})
    flipped = DomainDataset(x, 1 - y, "source", {"n_classes": 2})
    assert evaluate_accuracy(params, ds) + evaluate_accuracy(params, flipped) == pytest.approx(1.0)


def test_evaluate_accuracy_requires_labels():
    params = init(0, Dims(2, (4,), 3, 2))
    ds = DomainDataset(np.zeros((2, 2)), None, "target")
    with pytest.raises(ValueError):
        evaluate_accuracy(params, ds)


def test_pretrain_lr_zero_is_identity():
    src = make_toy_source(Rng(13), 2, 10, 3)
    params = init(1, Dims(3, (4,), 3, 2))
    trained, log = pretrain_source(params, src, TrainConfig(epochs=3, lr=0.0, seed=1))
    assert trained.equal_bits(params)
    assert len(log) == 3


def test_pretrain_deterministic():
    src = make_toy_source(Rng(14), 2, 12, 3)
    cfg = TrainConfig(epochs=5, batch_size=8, lr=0.1, seed=2)
    p1, log1 = pretrain_source(init(2, Dims(3, (4,), 3, 2)), src, cfg)
    p2, log2 = pretrain_source(init(2, Dims(3, (4,), 3, 2)), src, cfg)
    assert p1.equal_bits(p2)
    assert [e.loss for e in log1] == [e.loss for e in log2]


def test_pretrain_separable_reaches_high_accuracy():
    src, _ = gen_gaussian_domains(2, 2, 100, ShiftSpec(), seed=3, cluster_sigma=0.4)
    src_std = standardize(src, src)[0]
    params, log = pretrain_source(
        init(3, Dims(2, (16,), 8, 2)), src_std, TrainConfig(epochs=50, lr=0.1, seed=3)
    )
    assert log[-1].accuracy >= 0.99
    assert log[-1].loss < log[0].loss


def test_pretrain_gradients_match_finite_differences():
    """2-layer toy net: CE loss gradient against central differences."""
    src = make_toy_source(Rng(15), 3, 4, 3)
    params = init(4, Dims(3, (5,), 4, 3))
    x, y = src.x, src.y

    for i in range(len(params.weights)):
        def fn(t, i=i):
            saved = params.weights[i]
            params.weights[i] = t
            try:
                _, logits = forward_graph(params, x)
                return ad.cross_entropy(logits, y)
            finally:
                params.weights[i] = saved

        err = ad.grad_check(fn, ad.Tensor(params.weights[i].data.copy()), 1e-5)
        assert err < 1e-5, (i, err)


def test_checkpoint_roundtrip_bit_exact(tmp_path):
    params = init(5, Dims(4, (6, 5), 3, 4))
    path = tmp_path / "model.ckpt"
    save_checkpoint(params, path)
    loaded = load_checkpoint(path)
    assert loaded.dims == params.dims
    assert loaded.equal_bits(params)


def test_checkpoint_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(path)


def test_checkpoint_rejects_bad_version(tmp_path):
    params = init(6, Dims(2, (3,), 2, 2))
    path = tmp_path / "v.ckpt"
    save_checkpoint(params, path)
    blob = bytearray(path.read_bytes())
    blob[4] = 99
    path.write_bytes(bytes(blob))
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(path)


def test_checkpoint_rejects_truncation(tmp_path):
    params = init(7, Dims(2, (3,), 2, 2))
    path = tmp_path / "t.ckpt"
    save_checkpoint(params, path)
    blob = path.read_bytes()
    path.write_bytes(blob[: len(blob) - 9])
    with pytest.raises(CheckpointError, match="truncated"):
        load_checkpoint(path)


def test_checkpoint_rejects_trailing_bytes(tmp_path):
    params = init(8, Dims(2, (3,), 2, 2))
    path = tmp_path / "x.ckpt"
    save_checkpoint(params, path)
    path.write_bytes(path.read_bytes() + b"\x00")
    with pytest.raises(CheckpointError, match="trailing"):
        load_checkpoint(path)
