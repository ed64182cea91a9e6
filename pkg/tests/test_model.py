import numpy as np
import pytest

from tltarnet import (DataError, IpmConfig, NumericalError, SingleGroupError,
                      TrainConfig, factual_loss, gen_source, init_model,
                      predict_ite, sample_weights, total_loss, train_source)
from tltarnet import model as model_mod
from tltarnet.data import Dataset, DgpParams
from tltarnet.model import stratified_batches
from tltarnet.network import NetworkSpec

from conftest import assert_grads_match_fd


def _randomize_biases(store, rng):
    # keep pre-activations off the exact ReLU kink for finite differences
    for layer in store.layers:
        layer.b[:] = 0.1 * rng.standard_normal(layer.b.shape)


def test_sample_weights_balanced():
    t = np.array([0, 1, 0, 1], dtype=float)
    assert np.allclose(sample_weights(t), 1.0)


def test_sample_weights_unbalanced_hand_value():
    # v = 1/4: treated weight 1/(2v) = 2, control 1/(2(1-v)) = 2/3
    t = np.array([1, 0, 0, 0], dtype=float)
    w = sample_weights(t)
    assert np.allclose(w, [2.0, 2 / 3, 2 / 3, 2 / 3])
    assert np.isclose(w.mean(), 1.0)


def test_sample_weights_single_group_raises():
    with pytest.raises(SingleGroupError):
        sample_weights(np.ones(4))


def test_factual_loss_zero_model_hand_value():
    # all-zero parameters predict 0, so the loss is mean(w * y^2)
    spec = NetworkSpec(2, (3,), ())
    model = init_model(spec, 0)
    for layer in model.store.layers:
        layer.W[:] = 0.0
        layer.b[:] = 0.0
    t = np.array([0.0, 1.0, 0.0, 1.0])
    y = np.array([1.0, 2.0, 3.0, 4.0])
    X = np.ones((4, 2))
    expected = np.mean(sample_weights(t) * y ** 2)
    assert np.isclose(factual_loss(model, X, t, y), expected)


@pytest.mark.parametrize("seed", range(3))
def test_factual_loss_grads_match_fd(seed):
    rng = np.random.default_rng(seed)
    spec = NetworkSpec(2, (2, 2), (2,))
    model = init_model(spec, seed)
    _randomize_biases(model.store, rng)
    X = rng.standard_normal((8, 2))
    t = np.array([0.0, 1.0] * 4)
    y = rng.standard_normal(8)

    loss, grads = factual_loss(model, X, t, y, with_grads=True)
    assert_grads_match_fd(lambda: factual_loss(model, X, t, y),
                          model.store, grads)


def test_total_loss_alpha_zero_never_calls_ipm(monkeypatch):
    def boom(*a, **k):
        raise AssertionError("ipm called with alpha=0")
    monkeypatch.setattr(model_mod, "ipm", boom)
    model = init_model(NetworkSpec(2, (2,), ()), 0)
    t = np.array([0.0, 1.0, 0.0, 1.0])
    cfg = TrainConfig(alpha=0.0, epochs=1)
    total, floss, iv, _, skipped = total_loss(model, np.ones((4, 2)), t, t, cfg)
    assert total == floss and iv == 0.0 and not skipped


@pytest.mark.parametrize("seed", range(3))
def test_total_loss_with_penalty_grads_match_fd(seed):
    rng = np.random.default_rng(100 + seed)
    spec = NetworkSpec(2, (2, 2), (2,))
    model = init_model(spec, seed)
    _randomize_biases(model.store, rng)
    X = rng.standard_normal((10, 2))
    t = np.array([0.0, 1.0] * 5)
    y = rng.standard_normal(10)
    cfg = TrainConfig(alpha=0.7, ipm=IpmConfig(kind="mmd_rbf", bandwidth=1.0), epochs=1)

    total, _, iv, grads, _ = total_loss(model, X, t, y, cfg, with_grads=True)
    assert iv > 0.0
    assert_grads_match_fd(lambda: total_loss(model, X, t, y, cfg)[0],
                          model.store, grads)


def test_total_loss_single_group_penalty():
    model = init_model(NetworkSpec(2, (2,), ()), 0)
    t = np.array([0.0, 1.0, 1.0, 1.0])
    cfg = TrainConfig(alpha=1.0, epochs=1)
    # factual term itself refuses a single group
    with pytest.raises(SingleGroupError):
        total_loss(model, np.ones((3, 2)), np.ones(3), np.ones(3), cfg)
    # mixed batch works and allow_skip only matters when a group is empty
    total, _, _, _, skipped = total_loss(model, np.ones((4, 2)), t, t, cfg,
                                         allow_skip=True)
    assert not skipped and np.isfinite(total)


def test_stratified_batches_partition_and_mixing():
    rng = np.random.default_rng(0)
    t = np.array([1.0] * 40 + [0.0] * 60)
    batches = stratified_batches(rng, t, 25)
    flat = np.sort(np.concatenate(batches))
    assert np.array_equal(flat, np.arange(100))
    for idx in batches:
        assert (t[idx] == 1).any() and (t[idx] == 0).any()


def test_train_source_deterministic():
    data = gen_source(200, DgpParams(), 5)
    cfg = TrainConfig(learning_rate=0.01, epochs=10, batch_size=32, seed=3)
    m1, h1 = train_source(data, NetworkSpec(5, (4,), ()), cfg)
    m2, h2 = train_source(data, NetworkSpec(5, (4,), ()), cfg)
    for a, b in zip(m1.store.layers, m2.store.layers):
        assert np.array_equal(a.W, b.W) and np.array_equal(a.b, b.b)
    assert h1.factual == h2.factual


def test_train_source_loss_decreases():
    data = gen_source(300, DgpParams(), 1)
    cfg = TrainConfig(learning_rate=0.01, epochs=60, batch_size=32, seed=0)
    _, hist = train_source(data, NetworkSpec(5, (8,), ()), cfg)
    assert len(hist.factual) == 60
    assert hist.factual[-1] < 0.5 * hist.factual[0]


def test_train_source_zero_epochs_returns_init():
    data = gen_source(100, DgpParams(), 2)
    spec = NetworkSpec(5, (4,), ())
    cfg = TrainConfig(epochs=0, seed=9, batch_size=16)
    model, hist = train_source(data, spec, cfg)
    init_seed = np.random.SeedSequence([9, 0]).generate_state(1)[0]
    ref = init_model(spec, init_seed)
    for a, b in zip(model.store.layers, ref.store.layers):
        assert np.array_equal(a.W, b.W)
    assert hist.factual == []


def test_train_source_holdout_recorded():
    data = gen_source(200, DgpParams(), 4)
    cfg = TrainConfig(epochs=5, batch_size=16, seed=0, train_fraction=0.8)
    _, hist = train_source(data, NetworkSpec(5, (4,), ()), cfg)
    assert hist.holdout_factual is not None and hist.holdout_factual > 0


def test_train_source_rejects_single_group():
    data = gen_source(100, DgpParams(), 3)
    single = Dataset(data.X, np.ones(100), data.y)
    with pytest.raises(DataError):
        train_source(single, NetworkSpec(5, (4,), ()), TrainConfig(epochs=1))


def test_train_source_batch_larger_than_data():
    data = gen_source(20, DgpParams(), 3)
    with pytest.raises(DataError):
        train_source(data, NetworkSpec(5, (4,), ()),
                     TrainConfig(epochs=1, batch_size=64))


def test_train_source_divergence_carries_history(monkeypatch):
    data = gen_source(60, DgpParams(), 7)
    calls = {"n": 0}
    orig = model_mod.total_loss

    def exploding(*a, **k):
        calls["n"] += 1
        tot, fl, iv, grads, skip = orig(*a, **k)
        if calls["n"] > 2:
            return float("nan"), fl, iv, grads, skip
        return tot, fl, iv, grads, skip

    monkeypatch.setattr(model_mod, "total_loss", exploding)
    with pytest.raises(NumericalError) as ei:
        train_source(data, NetworkSpec(5, (4,), ()),
                     TrainConfig(epochs=5, batch_size=30, seed=0))
    assert hasattr(ei.value, "history")


def test_predict_ite_hand_built_constant_effect():
    # encoder passes x through, head0 outputs 0, head1 outputs constant 2
    spec = NetworkSpec(1, (1,), ())
    model = init_model(spec, 0)
    enc, h0, h1 = model.store.layers
    enc.W[:] = 1.0
    enc.b[:] = 5.0  # keep the ReLU active for the test inputs
    h0.W[:] = 0.0
    h0.b[:] = 0.0
    h1.W[:] = 0.0
    h1.b[:] = 2.0
    ite = predict_ite(model, np.array([[0.0], [1.0], [-1.0]]))
    assert np.allclose(ite, 2.0)
