import numpy as np
import pytest

from jfpd.data import DomainDataset
from jfpd.model import Dims, forward_all, init
from jfpd.prototypes import (
    AbsentClassError,
    compute_prototypes,
    sample_minibatch_prototypes,
)
from jfpd.rng import Rng

from conftest import make_toy_source


@pytest.fixture
def toy():
    params = init(3, Dims(3, (5,), 4, 3))
    src = make_toy_source(Rng(4), n_classes=3, per_class=5, dim=3)
    return params, src


def test_single_sample_classes_reproduce_outputs():
    params = init(1, Dims(2, (4,), 3, 2))
    x = np.array([[1.0, 2.0], [-1.0, 0.5]])
    ds = DomainDataset(x, np.array([0, 1]), "source", {"n_classes": 2})
    protos = compute_prototypes(params, ds)
    for c in range(2):
        f, p = forward_all(params, x[c : c + 1])
        assert np.array_equal(protos.features[c], f[0])
        assert np.array_equal(protos.predictions[c], p[0])


def test_duplicate_samples_mean_idempotent():
    params = init(2, Dims(2, (4,), 3, 2))
    row = np.array([[0.3, -0.8]])
    x = np.vstack([row, row])
    ds = DomainDataset(x, np.array([0, 0]), "source", {"n_classes": 2})
    protos = compute_prototypes(params, ds)
    f, p = forward_all(params, x)
    assert np.array_equal(f[0], f[1])  # identical inputs, identical outputs
    assert np.array_equal(protos.features[0], f[0])  # (a + a) / 2 == a exactly
    assert np.array_equal(protos.predictions[0], p[0])
    assert protos.counts.tolist() == [2, 0]


def test_prototypes_match_external_per_class_means(toy):
    params, src = toy
    protos = compute_prototypes(params, src)
    f, p = forward_all(params, src.x)
    for c in range(3):
        mask = src.y == c
        np.testing.assert_allclose(protos.features[c], f[mask].mean(axis=0), atol=1e-12)
        np.testing.assert_allclose(protos.predictions[c], p[mask].mean(axis=0), atol=1e-12)
        assert protos.counts[c] == mask.sum()


def test_prediction_prototypes_stay_on_simplex(toy):
    params, src = toy
    protos = compute_prototypes(params, src)
    np.testing.assert_allclose(protos.predictions.sum(axis=1), 1.0, atol=1e-9)
    assert np.all(protos.predictions >= 0.0)


def test_permutation_invariance(toy):
    params, src = toy
    perm = Rng(5).shuffled_indices(len(src))
    shuffled = DomainDataset(src.x[perm], src.y[perm], "source", dict(src.meta))
    a = compute_prototypes(params, src)
    b = compute_prototypes(params, shuffled)
    np.testing.assert_allclose(a.features, b.features, atol=1e-12)
    np.testing.assert_allclose(a.predictions, b.predictions, atol=1e-12)


def test_empty_and_unlabeled_rejected(toy):
    params, src = toy
    with pytest.raises(ValueError):
        compute_prototypes(params, src.without_labels())


def test_absent_class_flagged_not_zero_filled(toy):
    params, src = toy
    keep = src.y != 1
    ds = DomainDataset(src.x[keep], src.y[keep], "source", {"n_classes": 3})
    protos = compute_prototypes(params, ds)
    assert protos.counts.tolist() == [5, 0, 5]
    assert not protos.present(1)
    with pytest.raises(AbsentClassError):
        protos.lookup(1)
    z, p = protos.lookup(0)
    assert np.array_equal(z, protos.features[0])
    assert np.array_equal(p, protos.predictions[0])
    with pytest.raises(AbsentClassError):
        protos.lookup(7)


def test_lookup_reflects_model_updates(toy):
    params, src = toy
    before = compute_prototypes(params, src).lookup(0)[0].copy()
    params.weights[0].data *= 1.5
    after = compute_prototypes(params, src).lookup(0)[0]
    assert not np.array_equal(before, after)


def test_minibatch_full_class_draw_equals_full_prototypes(toy):
    params, src = toy
    full = compute_prototypes(params, src)
    sampled = sample_minibatch_prototypes(params, src, 5, Rng(6))
    assert np.array_equal(full.features, sampled.features)
    assert np.array_equal(full.predictions, sampled.predictions)


def test_minibatch_with_replacement_when_class_small(toy):
    params, src = toy
    protos = sample_minibatch_prototypes(params, src, 12, Rng(7))
    assert protos.counts.tolist() == [12, 12, 12]
    np.testing.assert_allclose(protos.predictions.sum(axis=1), 1.0, atol=1e-9)


def test_minibatch_deterministic_per_rng_state(toy):
    params, src = toy
    a = sample_minibatch_prototypes(params, src, 3, Rng(8))
    b = sample_minibatch_prototypes(params, src, 3, Rng(8))
    c = sample_minibatch_prototypes(params, src, 3, Rng(9))
    assert np.array_equal(a.features, b.features)
    assert not np.array_equal(a.features, c.features)


def test_minibatch_rejects_bad_k(toy):
    params, src = toy
    with pytest.raises(ValueError):
        sample_minibatch_prototypes(params, src, 0, Rng(1))


def test_minibatch_expectation_approaches_full_mean(toy):
    """Monte-Carlo oracle: the subsample mean is unbiased for the class mean."""
    params, src = toy
    full = compute_prototypes(params, src)
    rng = Rng(10)
    draws = 10_000
    acc = np.zeros_like(full.features)
    sq = np.zeros_like(full.features)
    for _ in range(draws):
        s = sample_minibatch_prototypes(params, src, 2, rng)
        acc += s.features
        sq += s.features**2
    mean = acc / draws
    se = np.sqrt((sq / draws - mean**2) / draws)
    assert np.all(np.abs(mean - full.features) <= 3.0 * se + 1e-12)
