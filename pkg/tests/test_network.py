import io

import numpy as np
import numpy.testing as npt
import pytest

from deepmusic import FileFormatError, TruncatedFileError, UnsupportedVersionError
from deepmusic.nn.checkpoint import InputStats, load_checkpoint, save_checkpoint
from deepmusic.nn.network import (
    LayerSpec,
    Network,
    backward,
    build_deepmusic_network,
    build_network,
    conv_spec,
    fc_spec,
)
from deepmusic.nn.train import (
    TrainConfig,
    TrainingLog,
    learning_rate_at,
    sgd_momentum_step,
    train_network,
)
from deepmusic.rng import substream

from oracles import numeric_gradient, relative_error


def toy_specs(dropout_p=0.5, filters=2, fc_width=8, out_len=4):
    return build_network([(3, filters), (1, filters)], fc_width, out_len, dropout_p)


def toy_batch(n=3, out_len=4, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, 4, 4, 3))
    z = rng.random((n, out_len))
    z /= z.sum(axis=1, keepdims=True)
    return x, z


def test_deepmusic_chain_shapes():
    net = Network(build_deepmusic_network(16, 64, num_filters=4, fc_width=32),
                  (16, 16, 3), seed=0)
    conv_shapes = [layer.out_shape for layer in net.layers if hasattr(layer, "out_shape")]
    spatial = [s[0] for s in conv_shapes if len(s) == 3][::3]
    assert spatial == [12, 8, 6, 4]
    assert net.output_len == 64
    fc1 = next(l for l in net.layers if getattr(l, "params", {}).get("weight") is not None)
    assert fc1.params["weight"].shape == (4 * 4 * 4, 32)


def test_deepmusic_chain_flatten_width_at_paper_scale():
    net = Network(build_deepmusic_network(16, 512, num_filters=256, fc_width=1024),
                  (16, 16, 3), seed=0)
    fc1 = next(l for l in net.layers if getattr(l, "params", {}).get("weight") is not None)
    assert fc1.params["weight"].shape[0] == 4096


def test_deepmusic_chain_minimum_input_side():
    net = Network(build_deepmusic_network(13, 8, num_filters=2, fc_width=8), (13, 13, 3), seed=0)
    conv_shapes = [layer.out_shape for layer in net.layers if len(layer.out_shape) == 3]
    assert conv_shapes[-3][0] == 1  # final conv stage collapses to 1x1
    with pytest.raises(ValueError):
        build_deepmusic_network(12, 8)


def test_layer_spec_validation():
    with pytest.raises(ValueError):
        LayerSpec("pooling")
    with pytest.raises(ValueError):
        conv_spec(4, 8)
    with pytest.raises(ValueError):
        fc_spec(0)
    with pytest.raises(ValueError):
        build_network([(3, 2)], 8, 4, dropout_p=1.0)


def test_network_initialization_deterministic():
    a = Network(toy_specs(), (4, 4, 3), seed=5, stream=(2,))
    b = Network(toy_specs(), (4, 4, 3), seed=5, stream=(2,))
    c = Network(toy_specs(), (4, 4, 3), seed=5, stream=(3,))
    for pa, pb in zip(a.parameters(), b.parameters()):
        assert np.array_equal(pa, pb)
    assert any(not np.array_equal(pa, pc) for pa, pc in zip(a.parameters(), c.parameters()))


def test_full_network_gradient_check():
    x, z = toy_batch()
    net = Network(toy_specs(), (4, 4, 3), seed=3, dtype=np.float64)
    _, grads = net.loss_and_grads(x, z, rng=substream(42))
    params = net.parameters()

    def scalar():
        return net.loss(x, z, mode="train", rng=substream(42))

    numeric = numeric_gradient(scalar, params)
    worst = max(relative_error(g, n) for g, n in zip(grads, numeric))
    assert worst < 1e-3


def test_backward_wrapper_matches_loss_and_grads():
    x, z = toy_batch(seed=9)
    net = Network(toy_specs(dropout_p=0.0), (4, 4, 3), seed=3)
    _, grads = net.loss_and_grads(x, z)
    again = backward(net, x, z)
    for a, b in zip(grads, again):
        npt.assert_array_equal(a, b)


def test_zero_loss_batch_gives_zero_gradients():
    specs = [fc_spec(4), LayerSpec("softmax")]
    net = Network(specs, (4,), seed=1, dtype=np.float64)
    x = np.random.default_rng(0).standard_normal((3, 4))
    targets = net.forward(x, mode="infer")
    _, grads = net.loss_and_grads(x, targets)
    for g in grads:
        npt.assert_allclose(g, np.zeros_like(g), atol=1e-12)


def test_forward_rejects_wrong_shape():
    net = Network(toy_specs(), (4, 4, 3), seed=0)
    with pytest.raises(ValueError):
        net.forward(np.zeros((2, 5, 5, 3)))


def test_sgd_step_examples():
    p = np.array([1.0, 2.0])
    g = np.array([0.5, -1.0])
    v = np.zeros(2)
    sgd_momentum_step([p], [g], [v], learning_rate=1.0, momentum=0.0)
    npt.assert_allclose(p, [0.5, 3.0])

    p = np.array([0.0])
    v = np.array([2.0])
    sgd_momentum_step([p], [np.zeros(1)], [v], learning_rate=0.1, momentum=0.5)
    npt.assert_allclose(p, [1.0])
    npt.assert_allclose(v, [1.0])

    # two steps with constant gradient: displacement -lr g (2 + m)
    lr, m, g0 = 0.2, 0.9, 1.5
    p = np.array([0.0])
    v = np.zeros(1)
    for _ in range(2):
        sgd_momentum_step([p], [np.array([g0])], [v], lr, m)
    npt.assert_allclose(p, [-lr * g0 * (2 + m)], rtol=1e-12)


def test_learning_rate_schedule():
    cfg = TrainConfig(learning_rate=0.01, lr_drop_factor=0.5, lr_drop_period_epochs=10)
    assert learning_rate_at(cfg, 1) == 0.01
    assert learning_rate_at(cfg, 10) == 0.01
    assert learning_rate_at(cfg, 11) == 0.005
    assert learning_rate_at(cfg, 20) == 0.005
    assert learning_rate_at(cfg, 21) == 0.0025


def test_early_stopping_rule(monkeypatch):
    sequence = iter([5.0, 4.0, 4.5, 4.4, 4.3, 0.1, 0.1])
    monkeypatch.setattr("deepmusic.nn.train.evaluate_loss",
                        lambda net, x, z, batch=256: next(sequence))
    x, z = toy_batch(n=8)
    net = Network(toy_specs(dropout_p=0.0), (4, 4, 3), seed=2)
    snapshots = {}

    def capture(rec):
        snapshots[rec.epoch] = net.snapshot()

    cfg = TrainConfig(learning_rate=0.01, batch_size=4, early_stop_patience_epochs=3,
                      max_epochs=50, seed=0)
    log = train_network(net, x, z, x, z, cfg, log_fn=capture)
    assert len(log.epochs) == 5
    assert log.best_epoch == 2
    assert log.best_val_loss == 4.0
    for current, saved in zip(net.state_arrays(), snapshots[2]):
        assert np.array_equal(current, saved)


def test_training_is_deterministic():
    x, z = toy_batch(n=12, seed=4)
    cfg = TrainConfig(learning_rate=0.5, batch_size=4, max_epochs=5,
                      early_stop_patience_epochs=5, seed=11)
    nets = []
    for _ in range(2):
        net = Network(toy_specs(), (4, 4, 3), seed=7)
        train_network(net, x[:8], z[:8], x[8:], z[8:], cfg)
        nets.append(net.snapshot())
    for a, b in zip(*nets):
        assert np.array_equal(a, b)


def test_zero_learning_rate_leaves_parameters_untouched():
    x, z = toy_batch(n=8, seed=6)
    net = Network(toy_specs(), (4, 4, 3), seed=9)
    before = [p.copy() for p in net.parameters()]
    cfg = TrainConfig(learning_rate=0.0, batch_size=4, max_epochs=3,
                      early_stop_patience_epochs=3, seed=1)
    train_network(net, x[:6], z[:6], x[6:], z[6:], cfg)
    for p, orig in zip(net.parameters(), before):
        assert np.array_equal(p, orig)


def test_toy_network_memorizes_small_set():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((16, 4, 4, 3)).astype(np.float32)
    z = rng.random((16, 4)).astype(np.float32)
    z /= z.sum(axis=1, keepdims=True)
    net = Network(build_network([(3, 4), (1, 4)], 16, 4, dropout_p=0.0), (4, 4, 3), seed=7)
    cfg = TrainConfig(learning_rate=3.0, momentum=0.9, batch_size=16,
                      lr_drop_period_epochs=200, early_stop_patience_epochs=500,
                      max_epochs=500, seed=7)
    log = train_network(net, x, z, x, z, cfg)
    assert log.epochs[-1].train_loss < 1e-4


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=-1.0)
    with pytest.raises(ValueError):
        TrainConfig(momentum=1.0)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(lr_drop_factor=0.0)


def test_checkpoint_round_trip():
    x, z = toy_batch(n=8, seed=8)
    net = Network(toy_specs(), (4, 4, 3), seed=13)
    cfg = TrainConfig(learning_rate=0.5, batch_size=4, max_epochs=3,
                      early_stop_patience_epochs=3, seed=2)
    log = train_network(net, x[:6], z[:6], x[6:], z[6:], cfg)
    stats = InputStats(np.array([0.1, 0.2, 0.3]), np.array([1.0, 2.0, 3.0]))

    blob = io.BytesIO()
    save_checkpoint(blob, net, stats, log)
    blob.seek(0)
    loaded, loaded_stats, loaded_log = load_checkpoint(blob)

    for a, b in zip(net.state_arrays(), loaded.state_arrays()):
        npt.assert_allclose(b, a.astype(np.float32), atol=0)
    npt.assert_array_equal(loaded_stats.mean, stats.mean)
    npt.assert_array_equal(loaded_stats.std, stats.std)
    assert loaded_log.best_epoch == log.best_epoch
    assert [r.epoch for r in loaded_log.epochs] == [r.epoch for r in log.epochs]
    assert [r.val_loss for r in loaded_log.epochs] == [r.val_loss for r in log.epochs]

    # a second save of the loaded network is byte-identical
    blob2 = io.BytesIO()
    save_checkpoint(blob2, loaded, loaded_stats, loaded_log)
    assert blob2.getvalue() == blob.getvalue()


def test_checkpoint_corruption_errors():
    net = Network(toy_specs(), (4, 4, 3), seed=1)
    stats = InputStats(np.zeros(3), np.ones(3))
    blob = io.BytesIO()
    save_checkpoint(blob, net, stats, TrainingLog())
    raw = blob.getvalue()

    with pytest.raises(TruncatedFileError):
        load_checkpoint(io.BytesIO(raw[: len(raw) // 2]))
    with pytest.raises(FileFormatError):
        load_checkpoint(io.BytesIO(b"XXXX" + raw[4:]))
    with pytest.raises(UnsupportedVersionError):
        load_checkpoint(io.BytesIO(raw[:4] + (77).to_bytes(2, "little") + raw[6:]))


def test_input_stats_standardize_and_validation():
    stats = InputStats(np.array([1.0, 2.0, 3.0]), np.array([2.0, 4.0, 8.0]))
    x = np.ones((2, 2, 2, 3), dtype=np.float32)
    out = stats.standardize(x)
    npt.assert_allclose(out[..., 0], 0.0, atol=1e-7)
    npt.assert_allclose(out[..., 1], -0.25, atol=1e-7)
    assert out.dtype == np.float32
    with pytest.raises(ValueError):
        InputStats(np.zeros(3), np.zeros(3))


def test_input_stats_from_inputs():
    rng = np.random.default_rng(10)
    x = rng.standard_normal((50, 4, 4, 3)) * np.array([1.0, 2.0, 3.0]) + np.array([0.5, 0.0, -1.0])
    stats = InputStats.from_inputs(x)
    flat = x.reshape(-1, 3)
    npt.assert_allclose(stats.mean, flat.mean(axis=0), rtol=1e-12)
    npt.assert_allclose(stats.std, flat.std(axis=0), rtol=1e-12)
