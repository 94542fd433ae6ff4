import numpy as np
import pytest

from twinguard.neuralcore import (
    AdamState,
    DenseNet,
    Layer,
    TrainConfig,
    adam_step,
    backward,
    build_net,
    clip_gradients,
    forward,
    init_lecun_uniform,
    load_net,
    make_dropout_masks,
    save_net,
    train_loop,
)


def finite_difference_grads(nets, loss_fn, h=1e-6):
    """Central finite differences of loss_fn() wrt every parameter."""
    grads = []
    for net in nets:
        for p in net.parameters():
            g = np.zeros_like(p)
            it = np.nditer(p, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                orig = p[idx]
                p[idx] = orig + h
                up = loss_fn()
                p[idx] = orig - h
                down = loss_fn()
                p[idx] = orig
                g[idx] = (up - down) / (2 * h)
            grads.append(g)
    return grads


def rel_err(a, b):
    num = max(abs(x - y).max() for x, y in zip(a, b))
    den = max(max(abs(x).max(), abs(y).max(), 1e-8) for x, y in zip(a, b))
    return num / den


# ------------------------------------------------------------- init
def test_lecun_uniform_bound():
    rng = np.random.default_rng(0)
    w = init_lecun_uniform((3, 50), rng)
    assert np.all(np.abs(w) <= 1.0)  # sqrt(3/3) = 1


def test_lecun_uniform_reproducible():
    a = init_lecun_uniform((4, 4), np.random.default_rng(7))
    b = init_lecun_uniform((4, 4), np.random.default_rng(7))
    assert np.array_equal(a, b)


def test_lecun_uniform_variance():
    rng = np.random.default_rng(1)
    fan_in = 10
    w = init_lecun_uniform((fan_in, 10_000), rng)
    assert np.var(w) == pytest.approx(1.0 / fan_in, rel=0.05)


# ------------------------------------------------------------- forward
def test_forward_identity_linear():
    net = DenseNet([Layer(np.eye(3), np.zeros(3), "linear")])
    out, _ = forward(net, np.array([[1.0, -2.0, 3.0]]))
    assert np.array_equal(out, [[1.0, -2.0, 3.0]])


def test_forward_relu():
    net = DenseNet([Layer(np.eye(2), np.zeros(2), "relu")])
    out, _ = forward(net, np.array([[-1.0, 2.0]]))
    assert np.array_equal(out, [[0.0, 2.0]])


def test_forward_scalar_tanh():
    net = DenseNet([Layer(np.array([[2.0]]), np.array([1.0]), "tanh")])
    out, _ = forward(net, np.array([[0.0]]))
    assert out[0, 0] == pytest.approx(np.tanh(1.0))


def test_forward_dimension_mismatch():
    net = DenseNet([Layer(np.eye(3), np.zeros(3), "linear")])
    with pytest.raises(ValueError):
        forward(net, np.ones((1, 4)))


def test_dense_net_chain_check():
    with pytest.raises(ValueError):
        DenseNet(
            [
                Layer(np.ones((2, 3)), np.zeros(3), "tanh"),
                Layer(np.ones((4, 1)), np.zeros(1), "linear"),
            ]
        )


# ------------------------------------------------------------- backward
def test_backward_linear_closed_form():
    rng = np.random.default_rng(2)
    W = rng.normal(size=(3, 2))
    b = rng.normal(size=2)
    net = DenseNet([Layer(W.copy(), b.copy(), "linear")])
    x = rng.normal(size=(1, 3))
    y = rng.normal(size=(1, 2))
    out, cache = forward(net, x)
    grads, _ = backward(net, cache, 2.0 * (out - y))
    assert np.allclose(grads[0], x.T @ (2.0 * (out - y)))
    assert np.allclose(grads[1], (2.0 * (out - y)).ravel())


def test_backward_zero_gradient_in_zero_out():
    rng = np.random.default_rng(3)
    net = build_net((3, 5, 2), ("tanh", "linear"), rng)
    out, cache = forward(net, rng.normal(size=(4, 3)))
    grads, gin = backward(net, cache, np.zeros_like(out))
    assert all(np.all(g == 0.0) for g in grads)
    assert np.all(gin == 0.0)


@pytest.mark.parametrize("acts", [("tanh", "linear"), ("relu", "sigmoid"), ("sigmoid", "tanh", "linear")])
def test_backward_matches_finite_differences(acts):
    rng = np.random.default_rng(4)
    widths = (4,) + tuple(rng.integers(2, 6) for _ in acts)
    net = build_net(widths, acts, rng)
    x = rng.normal(size=(5, 4))
    target = rng.normal(size=(5, widths[-1]))

    def loss_fn():
        out, _ = forward(net, x)
        return float(np.sum((out - target) ** 2))

    out, cache = forward(net, x)
    analytic, _ = backward(net, cache, 2.0 * (out - target))
    numeric = finite_difference_grads([net], loss_fn)
    assert rel_err(analytic, numeric) < 1e-4


def test_backward_input_gradient_finite_differences():
    rng = np.random.default_rng(5)
    net = build_net((3, 4, 2), ("tanh", "linear"), rng)
    x = rng.normal(size=(1, 3))

    out, cache = forward(net, x)
    _, gin = backward(net, cache, 2.0 * out)

    h = 1e-6
    numeric = np.zeros_like(x)
    for j in range(3):
        xp, xm = x.copy(), x.copy()
        xp[0, j] += h
        xm[0, j] -= h
        fp = float(np.sum(forward(net, xp)[0] ** 2))
        fm = float(np.sum(forward(net, xm)[0] ** 2))
        numeric[0, j] = (fp - fm) / (2 * h)
    assert np.allclose(gin, numeric, rtol=1e-5, atol=1e-7)


# ------------------------------------------------------------- adam
def test_clip_halves_large_gradient():
    grads = [np.array([8.0]), np.array([0.0])]
    clipped, norm = clip_gradients(grads, 4.0)
    assert norm == 8.0
    assert clipped[0][0] == pytest.approx(4.0)


def test_clip_invariant_norm_bound():
    rng = np.random.default_rng(6)
    grads = [rng.normal(size=(5, 5)) * 10 for _ in range(3)]
    clipped, _ = clip_gradients(grads, 4.0)
    total = np.sqrt(sum(np.sum(g * g) for g in clipped))
    assert total <= 4.0 + 1e-12


def test_adam_zero_gradient_keeps_params():
    params = [np.array([1.5, -2.0])]
    cfg = TrainConfig(learning_rate=1e-2)
    state = AdamState()
    adam_step(params, [np.zeros(2)], state, cfg)
    assert np.array_equal(params[0], [1.5, -2.0])
    assert state.t == 1


def test_adam_rejects_nan_gradient():
    with pytest.raises(FloatingPointError):
        adam_step([np.zeros(1)], [np.array([np.nan])], AdamState(), TrainConfig())


def test_adam_converges_on_quadratic():
    # minimize (x - 1)^2 from 0; 500 steps at lr 1e-2 settle well below 1e-3
    params = [np.array([0.0])]
    cfg = TrainConfig(learning_rate=1e-2)
    state = AdamState()
    for _ in range(500):
        grads = [2.0 * (params[0] - 1.0)]
        adam_step(params, grads, state, cfg)
    assert abs(params[0][0] - 1.0) < 1e-3


# ------------------------------------------------------------- train loop
def _mse_batch_fn(net, X):
    def batch_fn(idx):
        xb = X[idx]
        out, cache = forward(net, xb)
        diff = out - xb
        loss = float(np.mean(np.sum(diff * diff, axis=1)))
        grads, _ = backward(net, cache, 2.0 * diff / len(xb))
        return loss, grads

    return batch_fn


def test_train_loop_stops_on_increasing_val_loss():
    rng = np.random.default_rng(7)
    net = build_net((2, 3, 2), ("tanh", "linear"), rng)
    X = rng.normal(size=(32, 2))
    counter = {"n": 0}

    def val_loss_fn():
        counter["n"] += 1
        return float(counter["n"])  # strictly increasing from epoch 0

    cfg = TrainConfig(max_epochs=100, early_stopping_patience=10, batch_size=8, seed=0)
    snapshot = [p.copy() for p in net.parameters()]
    _, hist = train_loop([net], len(X), _mse_batch_fn(net, X), val_loss_fn, cfg)
    # first epoch is "best" (val loss 1), then 10 failed epochs
    assert hist.best_epoch == 0
    assert hist.stopped_epoch == 10
    # restored weights are post-first-epoch, i.e. differ from init
    assert not all(np.array_equal(a, b) for a, b in zip(snapshot, net.parameters()))


def test_train_loop_autoencoder_converges():
    rng = np.random.default_rng(8)
    # data on a 1-D linear subspace of R^3: recoverable by a linear AE
    z = rng.normal(size=(256, 1))
    X = z @ np.array([[1.0, -0.5, 2.0]])
    net = build_net((3, 1, 3), ("linear", "linear"), rng)
    val_idx = np.arange(200, 256)

    def val_loss_fn():
        out, _ = forward(net, X[val_idx])
        return float(np.mean(np.sum((out - X[val_idx]) ** 2, axis=1)))

    cfg = TrainConfig(
        max_epochs=300, early_stopping_patience=30, batch_size=32, learning_rate=1e-2, seed=1
    )
    _, hist = train_loop([net], 200, _mse_batch_fn(net, X), val_loss_fn, cfg)
    assert min(hist.val_loss) < 1e-3


def test_train_loop_deterministic():
    def run():
        rng = np.random.default_rng(9)
        net = build_net((2, 4, 2), ("relu", "linear"), rng)
        X = np.random.default_rng(10).normal(size=(64, 2))

        def val_loss_fn():
            out, _ = forward(net, X)
            return float(np.mean((out - X) ** 2))

        cfg = TrainConfig(max_epochs=5, batch_size=16, seed=3)
        train_loop([net], len(X), _mse_batch_fn(net, X), val_loss_fn, cfg)
        return [p.copy() for p in net.parameters()]

    a, b = run(), run()
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_train_loop_early_stop_beats_final_epoch():
    rng = np.random.default_rng(11)
    net = build_net((2, 3, 2), ("tanh", "linear"), rng)
    X = rng.normal(size=(48, 2))

    def val_loss_fn():
        out, _ = forward(net, X)
        return float(np.mean((out - X) ** 2))

    cfg = TrainConfig(max_epochs=40, early_stopping_patience=5, batch_size=16, seed=4)
    _, hist = train_loop([net], len(X), _mse_batch_fn(net, X), val_loss_fn, cfg)
    assert hist.val_loss[hist.best_epoch] <= hist.val_loss[-1]


def test_train_loop_rejects_empty_stream():
    rng = np.random.default_rng(12)
    net = build_net((2, 2), ("linear",), rng)
    with pytest.raises(ValueError):
        train_loop([net], 0, lambda idx: (0.0, []), lambda: 0.0, TrainConfig())


def test_dropout_masks_disabled_at_zero():
    rng = np.random.default_rng(13)
    net = build_net((3, 4, 3), ("relu", "linear"), rng)
    assert make_dropout_masks(net, 8, 0.0, rng) is None
    x = rng.normal(size=(8, 3))
    a, _ = forward(net, x)
    b, _ = forward(net, x, dropout_masks=None)
    assert np.array_equal(a, b)


def test_dropout_masks_scale():
    rng = np.random.default_rng(14)
    net = build_net((3, 200, 3), ("relu", "linear"), rng)
    masks = make_dropout_masks(net, 4, 0.25, rng)
    vals = np.unique(masks[0])
    assert set(np.round(vals, 12)) <= {0.0, round(1 / 0.75, 12)}


# ------------------------------------------------------------- checkpoints
def test_checkpoint_roundtrip(tmp_path):
    rng = np.random.default_rng(15)
    net = build_net((4, 8, 2), ("relu", "linear"), rng)
    save_net(net, tmp_path / "net.json", tmp_path / "net.bin", extra={"kind": "test"})
    loaded = load_net(tmp_path / "net.json", tmp_path / "net.bin")
    assert [l.activation for l in loaded.layers] == ["relu", "linear"]
    for a, b in zip(net.parameters(), loaded.parameters()):
        assert np.array_equal(a, b)
