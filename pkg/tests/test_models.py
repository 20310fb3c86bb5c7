"""Classifier forward/backward checks and noisy-training semantics."""

import math

import numpy as np
import pytest

from anisopriv.errors import BatchLargerThanDataset, IndexOutOfRange
from anisopriv.models import (
    NO_NOISE,
    AnisotropicPerParam,
    Dataset,
    IsotropicPerLayer,
    MlpModel,
    forward,
    gradient_drift,
    init_model,
    layer_slices,
    load_model,
    loss_and_grad,
    loss_on_example,
    make_adjacent,
    noise_std,
    per_example_grads,
    read_dataset_csv,
    save_model,
    synth_blobs,
    train,
    write_dataset_csv,
)


@pytest.fixture
def blobs():
    return synth_blobs(3, 40, 3, 3.0, seed=5)


def fd_gradient(model, x, y, h=1e-6):
    """Central finite differences in the flat parameter vector."""
    base = model.params
    g = np.empty_like(base)
    for i in range(base.shape[0]):
        bump = np.zeros_like(base)
        bump[i] = h
        up, _ = loss_and_grad(MlpModel(model.layer_sizes, base + bump, model.activation), x, y)
        dn, _ = loss_and_grad(MlpModel(model.layer_sizes, base - bump, model.activation), x, y)
        g[i] = (up - dn) / (2.0 * h)
    return g


def test_zero_weights_uniform_loss():
    k = 4
    model = MlpModel((2, 3, k), np.zeros((2 + 1) * 3 + (3 + 1) * k))
    x = np.array([[0.5, -1.0], [2.0, 0.0]])
    probs = forward(model, x)
    np.testing.assert_allclose(probs, 0.25, rtol=1e-15)
    loss, _ = loss_and_grad(model, x, np.array([0, 3]))
    assert loss == pytest.approx(math.log(k), rel=1e-15)


def test_forward_rows_are_distributions(blobs):
    model = init_model(3, 6, 3, 2)
    probs = forward(model, blobs.features)
    assert probs.shape == (blobs.size, 3)
    assert np.all(probs >= 0.0)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, rtol=1e-12)


@pytest.mark.parametrize("activation", ["relu", "tanh"])
def test_gradient_against_finite_differences(blobs, activation):
    model = init_model(3, 5, 3, 7, activation)
    x, y = blobs.features[:12], blobs.labels[:12]
    _, grad = loss_and_grad(model, x, y)
    np.testing.assert_allclose(grad, fd_gradient(model, x, y), atol=1e-7)


def test_per_example_rows_sum_to_batch_gradient(blobs):
    model = init_model(3, 5, 3, 3, "tanh")
    x, y = blobs.features[:9], blobs.labels[:9]
    rows = per_example_grads(model, x, y)
    _, grad = loss_and_grad(model, x, y)
    assert rows.shape == (9, model.n_params)
    np.testing.assert_allclose(rows.sum(axis=0), 9.0 * grad, rtol=1e-12, atol=1e-14)
    # each row is the gradient of its own record
    _, g0 = loss_and_grad(model, x[:1], y[:1])
    np.testing.assert_allclose(rows[0], g0, rtol=1e-12, atol=1e-14)


def test_loss_on_example_matches_batch_of_one(blobs):
    model = init_model(3, 5, 3, 3)
    want, _ = loss_and_grad(model, blobs.features[:1], blobs.labels[:1])
    assert loss_on_example(model, blobs.features[0], int(blobs.labels[0])) == want


def test_init_model_layout():
    model = init_model(4, 6, 3, 9)
    sl1, sl2 = layer_slices(model.layer_sizes)
    assert sl1 == slice(0, 30) and sl2 == slice(30, 30 + 21)
    assert model.n_params == 51
    w1 = model.params[: 4 * 6]
    assert np.abs(w1).max() <= 1.0 / 2.0  # +-1/sqrt(4)
    assert np.array_equal(model.params[24:30], np.zeros(6))  # b1
    assert np.array_equal(model.params[48:], np.zeros(3))  # b2
    again = init_model(4, 6, 3, 9)
    assert np.array_equal(model.params, again.params)
    other = init_model(4, 6, 3, 10)
    assert not np.array_equal(model.params, other.params)


def test_noise_std_per_scheme():
    grad = np.array([3.0, -1.0, 0.0, 2.0])
    slices = [slice(0, 2), slice(2, 4)]
    assert np.array_equal(noise_std(NO_NOISE, grad, slices), np.zeros(4))
    iso = noise_std(IsotropicPerLayer(2.0), grad, slices)
    np.testing.assert_allclose(iso, [math.sqrt(6.0)] * 2 + [2.0] * 2, rtol=1e-15)
    aniso = noise_std(AnisotropicPerParam(2.0), grad, slices)
    np.testing.assert_allclose(aniso, [math.sqrt(6.0), math.sqrt(2.0), 0.0, 2.0], rtol=1e-15)
    with pytest.raises(TypeError):
        noise_std(object(), grad, slices)
    with pytest.raises(ValueError):
        IsotropicPerLayer(-1.0)
    with pytest.raises(ValueError):
        AnisotropicPerParam(-0.5)


def test_train_is_deterministic(blobs):
    model = init_model(3, 6, 3, 0)
    kwargs = dict(lr=0.3, iters=40, batch=16, seed=21)
    m1, log1 = train(model, blobs, AnisotropicPerParam(0.05), **kwargs)
    m2, log2 = train(model, blobs, AnisotropicPerParam(0.05), **kwargs)
    assert np.array_equal(m1.params, m2.params)
    assert np.array_equal(log1.losses, log2.losses)
    assert np.array_equal(log1.layer_max_grad, log2.layer_max_grad)


def test_zero_variance_scheme_matches_plain_descent(blobs):
    model = init_model(3, 6, 3, 0)
    kwargs = dict(lr=0.3, iters=40, batch=16, seed=21)
    plain, _ = train(model, blobs, NO_NOISE, **kwargs)
    zero_aniso, _ = train(model, blobs, AnisotropicPerParam(0.0), **kwargs)
    zero_iso, _ = train(model, blobs, IsotropicPerLayer(0.0), **kwargs)
    assert np.array_equal(plain.params, zero_aniso.params)
    assert np.array_equal(plain.params, zero_iso.params)


def test_train_reinitializes_from_seed(blobs):
    arch = init_model(3, 6, 3, 0)
    scrambled = MlpModel(arch.layer_sizes, arch.params + 5.0, arch.activation)
    a, _ = train(arch, blobs, NO_NOISE, lr=0.3, iters=10, batch=16, seed=4)
    b, _ = train(scrambled, blobs, NO_NOISE, lr=0.3, iters=10, batch=16, seed=4)
    assert np.array_equal(a.params, b.params)


def test_divergence_truncates_log(blobs):
    model = init_model(3, 8, 3, 0, "relu")
    with np.errstate(over="ignore", invalid="ignore"):
        _, log = train(model, blobs, NO_NOISE, lr=1e8, iters=60, batch=20, seed=1)
    assert log.diverged
    assert len(log.losses) < 60
    assert log.layer_max_grad.shape[0] == len(log.losses)


def test_training_learns_separable_blobs(blobs):
    model = init_model(3, 8, 3, 0, "relu")
    _, log = train(model, blobs, NO_NOISE, lr=0.2, iters=300, batch=60, seed=2)
    assert not log.diverged
    assert log.losses[0] > 1.0  # starts near ln 3
    assert log.losses[-10:].mean() < 0.3


def test_train_validation(blobs):
    model = init_model(3, 6, 3, 0)
    with pytest.raises(BatchLargerThanDataset) as exc:
        train(model, blobs, NO_NOISE, lr=0.1, iters=5, batch=blobs.size + 1, seed=0)
    assert exc.value.operation == "train"
    with pytest.raises(ValueError):
        train(model, blobs, NO_NOISE, lr=0.0, iters=5, batch=4, seed=0)
    with pytest.raises(ValueError):
        train(model, blobs, NO_NOISE, lr=0.1, iters=0, batch=4, seed=0)
    with pytest.raises(ValueError):
        train(model, blobs, NO_NOISE, lr=0.1, iters=5, batch=0, seed=0)
    with pytest.raises(ValueError):
        train(model, blobs, NO_NOISE, lr=0.1, iters=5, batch=4, seed=0, noise_on="both")


def test_make_adjacent_remove(blobs):
    out = make_adjacent(blobs, 7, "remove")
    assert out.size == blobs.size - 1
    keep = np.arange(blobs.size) != 7
    assert np.array_equal(out.features, blobs.features[keep])
    assert np.array_equal(out.labels, blobs.labels[keep])


def test_make_adjacent_replace(blobs):
    out = make_adjacent(blobs, 3, "replace", new_features=[9.0, 9.0, 9.0], new_label=2)
    assert out.size == blobs.size
    assert np.array_equal(out.features[3], [9.0, 9.0, 9.0])
    assert out.labels[3] == 2
    # everything else untouched
    mask = np.arange(blobs.size) != 3
    assert np.array_equal(out.features[mask], blobs.features[mask])


def test_make_adjacent_validation(blobs):
    with pytest.raises(IndexOutOfRange) as exc:
        make_adjacent(blobs, blobs.size, "remove")
    assert exc.value.operation == "make_adjacent"
    with pytest.raises(IndexOutOfRange):
        make_adjacent(blobs, -1, "remove")
    with pytest.raises(ValueError):
        make_adjacent(blobs, 0, "replace")
    with pytest.raises(ValueError):
        make_adjacent(blobs, 0, "swap")


def test_synth_blobs_geometry():
    ds = synth_blobs(3, 4000, 4, 3.0, seed=11)
    assert ds.features.shape == (12000, 4)
    assert ds.n_classes == 3
    means = np.stack([ds.features[ds.labels == k].mean(axis=0) for k in range(3)])
    # class k sits at (3/sqrt(2)) e_k up to sampling error
    np.testing.assert_allclose(np.diag(means[:, :3]), 3.0 / math.sqrt(2.0), atol=0.1)
    for a in range(3):
        for b in range(a + 1, 3):
            assert np.linalg.norm(means[a] - means[b]) == pytest.approx(3.0, abs=0.15)
    assert np.array_equal(ds.features, synth_blobs(3, 4000, 4, 3.0, seed=11).features)
    assert not np.array_equal(
        ds.features, synth_blobs(3, 4000, 4, 3.0, seed=12).features
    )


def test_synth_blobs_validation():
    with pytest.raises(ValueError):
        synth_blobs(1, 10, 3, 1.0, seed=0)
    with pytest.raises(ValueError):
        synth_blobs(4, 10, 3, 1.0, seed=0)  # dim < classes
    with pytest.raises(ValueError):
        synth_blobs(2, 0, 3, 1.0, seed=0)
    with pytest.raises(ValueError):
        synth_blobs(2, 10, 3, -1.0, seed=0)


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(np.ones((2, 2)), np.array([0.0, 1.0]))  # float labels
    with pytest.raises(ValueError):
        Dataset(np.ones((2, 2)), np.array([0, 1, 2]))
    with pytest.raises(ValueError):
        Dataset(np.array([[np.inf, 0.0]]), np.array([0]))
    with pytest.raises(ValueError):
        Dataset(np.ones((2, 2)), np.array([0, -1]))


def test_gradient_drift_is_negative_gradient(blobs):
    model = init_model(3, 5, 3, 6, "tanh")
    drift = gradient_drift(model, blobs)
    _, grad = loss_and_grad(model, blobs.features, blobs.labels)
    np.testing.assert_allclose(drift.evaluate(model.params), -grad, rtol=1e-14)
    # row-stacked evaluation
    two = np.stack([model.params, model.params * 0.5])
    out = drift.evaluate(two)
    assert out.shape == two.shape
    np.testing.assert_allclose(out[0], -grad, rtol=1e-14)


def test_dataset_csv_roundtrip(tmp_path, blobs):
    path = tmp_path / "ds.csv"
    write_dataset_csv(blobs, path)
    back = read_dataset_csv(path)
    assert np.array_equal(back.features, blobs.features)
    assert np.array_equal(back.labels, blobs.labels)


def test_dataset_csv_rejects_foreign_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b,label\n1,2,0\n")
    with pytest.raises(ValueError):
        read_dataset_csv(path)


def test_model_json_roundtrip(tmp_path):
    model = init_model(3, 5, 2, 13, "tanh")
    path = tmp_path / "model.json"
    save_model(model, path)
    back = load_model(path)
    assert back.layer_sizes == model.layer_sizes
    assert back.activation == model.activation
    assert back.seed == model.seed
    assert np.array_equal(back.params, model.params)
