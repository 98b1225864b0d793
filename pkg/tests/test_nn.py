import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from negdl.data import AttributeCodec, encode_instance
from negdl.nn import (
    Layer,
    Network,
    TrainConfig,
    TrainingDivergedError,
    accuracy,
    activation,
    load_checkpoint,
    predict,
    save_checkpoint,
    sigmoid,
    softmax,
    train,
)
from negdl.ndbgen import QKParams
from negdl.sketch import DiffProfile, Sketch, decode_instance


def test_activation_values():
    assert sigmoid(0.0) == 0.5
    assert sigmoid(np.log(3.0)) == pytest.approx(0.75)
    assert sigmoid(-800.0) == 0.0 and sigmoid(800.0) == 1.0
    assert np.array_equal(activation("relu", np.array([-1.0, 0.0, 2.0])), [0.0, 0.0, 2.0])
    assert activation("tanh", 0.5) == pytest.approx(np.tanh(0.5))
    with pytest.raises(ValueError):
        activation("gelu", 0.0)


@given(st.lists(st.floats(-700, 700), min_size=1, max_size=10))
def test_softmax_is_a_distribution(z):
    p = softmax(np.array(z))
    assert p.sum() == pytest.approx(1.0)
    assert np.all(p >= 0)
    # near-equal logits can round to a tie, so only require a maximal logit
    assert z[int(np.argmax(p))] >= max(z) - 1e-9


def test_identity_network_gives_half_half():
    net = Network([Layer(np.eye(2), np.zeros(2), "softmax")])
    assert np.allclose(net.forward([1.0, 1.0]), [0.5, 0.5])
    # tie goes to the lowest class index
    assert predict(net, [[1.0, 1.0]])[0].tolist() == [0]


def _numeric_grads(net, x, y, eps=1e-5):
    out = []
    for p in net.parameters():
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + eps
            up = net.loss_and_grads(x, y)[0]
            p[idx] = old - eps
            down = net.loss_and_grads(x, y)[0]
            p[idx] = old
            g[idx] = (up - down) / (2 * eps)
        out.append(g)
    return out


@pytest.mark.parametrize("hidden", ["sigmoid", "relu", "tanh"])
def test_gradients_match_finite_differences(hidden):
    rng = np.random.default_rng(5)
    net = Network.build([2, 3, 2], hidden=hidden, seed=3)
    x = rng.normal(size=(4, 2))
    y = np.array([0, 1, 1, 0])
    _, grads = net.loss_and_grads(x, y)
    for g, n in zip(grads, _numeric_grads(net, x, y)):
        denom = np.maximum(np.abs(g) + np.abs(n), 1e-8)
        assert np.all(np.abs(g - n) / denom < 1e-4)


def test_dropout_gradient_matches_fixed_mask():
    # With a fixed mask, the dropout forward pass is a plain function of the weights.
    net = Network.build([3, 5, 2], hidden="tanh", seed=1, dropout_layers=(0,))
    x = np.random.default_rng(2).normal(size=(4, 3))
    y = np.array([1, 0, 1, 1])

    def loss_at():
        return net.loss_and_grads(x, y, 0.4, np.random.default_rng(9))[0]

    _, grads = net.loss_and_grads(x, y, 0.4, np.random.default_rng(9))
    W = net.layers[0].W
    for idx in [(0, 0), (1, 3), (2, 4)]:
        old = W[idx]
        W[idx] = old + 1e-6
        up = loss_at()
        W[idx] = old - 1e-6
        down = loss_at()
        W[idx] = old
        assert grads[0][idx] == pytest.approx((up - down) / 2e-6, rel=1e-4, abs=1e-9)


def test_dropout_only_in_train_mode():
    net = Network.build([4, 6, 3], seed=0, dropout_layers=(0,))
    x = np.random.default_rng(0).normal(size=(5, 4))
    ev = net.forward(x)
    assert np.array_equal(ev, net.forward(x, mode="train", dropout_rate=0.0))
    assert not np.allclose(ev, net.forward(x, mode="train", dropout_rate=0.5, rng=np.random.default_rng(1)))
    assert np.array_equal(ev, net.forward(x, mode="eval", dropout_rate=0.5))


def test_build_shapes_and_validation():
    net = Network.build([9, 100, 60, 2])
    assert net.sizes == [9, 100, 60, 2]
    assert [l.activation for l in net.layers] == ["relu", "relu", "softmax"]
    limit = np.sqrt(6 / 109)
    assert np.all(np.abs(net.layers[0].W) <= limit)
    with pytest.raises(ValueError):
        net.forward(np.zeros(8))
    with pytest.raises(ValueError):
        Network([Layer(np.eye(2), np.zeros(2), "relu")])
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0)
    with pytest.raises(ValueError):
        TrainConfig(dropout_rate=1.0)


def _toy():
    rng = np.random.default_rng(0)
    a = rng.normal(loc=-2.0, size=(40, 2))
    b = rng.normal(loc=2.0, size=(40, 2))
    return np.vstack([a, b]), np.array([0] * 40 + [1] * 40)


def test_separable_toy_set_is_learned():
    x, y = _toy()
    net = Network.build([2, 8, 2], hidden="tanh", seed=0)
    net, hist = train(net, x, y, TrainConfig(learning_rate=0.05, batch_size=80, max_epochs=200, tolerance=None))
    assert accuracy(net, x, y) == 1.0
    assert all(b <= a + 1e-12 for a, b in zip(hist.loss, hist.loss[1:]))
    assert hist.epochs == 200 and not hist.stopped_early


def test_training_is_deterministic():
    x, y = _toy()
    cfg = TrainConfig(learning_rate=0.05, batch_size=8, max_epochs=5, dropout_rate=0.2, seed=4)
    a, ha = train(Network.build([2, 8, 2], seed=1, dropout_layers=(0,)), x, y, cfg)
    b, hb = train(Network.build([2, 8, 2], seed=1, dropout_layers=(0,)), x, y, cfg)
    assert ha.loss == hb.loss
    assert all(np.array_equal(p, q) for p, q in zip(a.parameters(), b.parameters()))


def test_early_stop_on_flat_loss():
    x, y = _toy()
    net = Network.build([2, 4, 2], seed=0)
    _, hist = train(net, x, y, TrainConfig(learning_rate=1e-12, max_epochs=50))
    assert hist.stopped_early and hist.epochs == 2


def test_divergence_is_reported():
    x, y = _toy()
    net = Network.build([2, 4, 2], seed=0)
    x = x.copy()
    x[3, 0] = np.nan
    with pytest.raises(TrainingDivergedError):
        train(net, x, y, TrainConfig(learning_rate=0.1, batch_size=4))


def test_checkpoint_round_trip(tmp_path):
    net = Network.build([5, 7, 3], hidden="sigmoid", seed=2, dropout_layers=(0,))
    path = tmp_path / "m.ckpt"
    save_checkpoint(net, path, normalizer=10.0)
    back, header = load_checkpoint(path)
    assert header["normalizer"] == 10.0
    assert all(np.array_equal(p, q) for p, q in zip(net.parameters(), back.parameters()))
    assert [l.dropout for l in back.layers] == [True, False]
    x = np.random.default_rng(0).normal(size=(3, 5))
    assert np.array_equal(net.forward(x), back.forward(x))
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(ValueError):
        load_checkpoint(path)


def test_point_mass_decode_predicts_like_plaintext():
    codec = AttributeCodec(4, 9)
    values = [5, 1, 1, 1, 2, 1, 3, 1, 1]
    bits = np.frombuffer(encode_instance(values, codec).encode(), dtype=np.uint8) - 48
    counts = np.zeros((36, 2), dtype=np.int64)
    counts[np.arange(36), bits] = 3
    sk = Sketch(counts, QKParams(q=(1.0, 0, 0, 0), attributes=9, p=(0.5, 0.5, 0.0)), 36)
    feats = decode_instance(sk, codec, DiffProfile(np.zeros(4))).expected
    net = Network.build([9, 10, 2], seed=7)
    assert np.array_equal(net.forward(feats / 10), net.forward(np.array(values) / 10))


@settings(max_examples=30)
@given(st.integers(0, 2**31 - 1))
def test_first_layer_sees_expected_value(seed):
    # z = E[x] W equals sum over the explicit 2^L value distribution.
    rng = np.random.default_rng(seed)
    post = rng.dirichlet(np.ones(16), size=3)
    W = rng.normal(size=(3, 4))
    expected = post @ np.arange(16)
    explicit = np.einsum("id,d,ij->j", post, np.arange(16.0), W)
    assert np.allclose(expected @ W, explicit)
