import numpy as np
import pytest

from errors import ManifestError, ShapeError
from nn.gradcheck import grad_check, relative_error
from nn.layers import Conv1D, Conv2D, Dense, Flatten, MaxPool1D, MaxPool2D, ReLU, RepeatVector, Upsample1D
from nn.lstm import LSTM
from nn.network import MeanSquaredError, Sequential, SoftmaxCrossEntropy, build_layer, create_loss, softmax
from nn.serialization import load_model, read_header, save_model
from nn.trainer import SGDConfig, fit


def _rng(seed=0):
    return np.random.default_rng(seed)


def _small_cnn(seed=1):
    rng = _rng(seed)
    return Sequential([
        Conv2D(1, 2, kernel=3, pad=1, rng=rng), ReLU(), MaxPool2D(),
        Flatten(), Dense(2 * 4 * 4, 2, rng=rng),
    ])


# ── layers ──

def test_conv2d_matches_direct_correlation():
    rng = _rng()
    layer = Conv2D(2, 3, kernel=3, pad=1, rng=rng)
    layer.params["b"] = rng.normal(size=3)
    x = rng.normal(size=(2, 2, 5, 6))
    out = layer.forward(x)
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    n, o, i, j = 1, 2, 3, 4
    expected = (xp[n, :, i:i + 3, j:j + 3] * layer.params["W"][o]).sum() + layer.params["b"][o]
    assert out.shape == (2, 3, 5, 6)
    assert out[n, o, i, j] == pytest.approx(expected)


def test_conv1d_matches_direct_correlation():
    rng = _rng()
    layer = Conv1D(2, 3, kernel=5, pad=2, rng=rng)
    x = rng.normal(size=(1, 2, 9))
    out = layer.forward(x)
    xp = np.pad(x, ((0, 0), (0, 0), (2, 2)))
    assert out[0, 1, 4] == pytest.approx((xp[0, :, 4:9] * layer.params["W"][1]).sum())


def test_maxpool2d_ties_go_to_first_element():
    x = np.ones((1, 1, 2, 2))
    pool = MaxPool2D()
    pool.forward(x, training=True)
    back = pool.backward(np.ones((1, 1, 1, 1)))
    assert back[0, 0].tolist() == [[1.0, 0.0], [0.0, 0.0]]


def test_pooling_needs_even_sizes():
    with pytest.raises(ShapeError):
        MaxPool2D().forward(np.zeros((1, 1, 3, 4)))
    with pytest.raises(ShapeError):
        MaxPool1D().forward(np.zeros((1, 1, 5)))


def test_upsample_and_repeat_shapes():
    x = np.arange(6.0).reshape(1, 2, 3)
    assert Upsample1D().forward(x).shape == (1, 2, 6)
    assert RepeatVector(4).forward(np.zeros((3, 5))).shape == (3, 5, 4)


def test_dense_rejects_wrong_width():
    with pytest.raises(ShapeError):
        Dense(4, 2).forward(np.zeros((1, 5)))


def test_backward_without_training_forward_fails():
    layer = ReLU()
    layer.forward(np.ones((1, 3)))
    with pytest.raises(RuntimeError):
        layer.backward(np.ones((1, 3)))


def test_inference_does_not_touch_cache():
    layer = Dense(3, 2, rng=_rng())
    layer.forward(np.ones((4, 3)), training=True)
    cached = layer._cache
    layer.forward(np.zeros((1, 3)))
    assert layer._cache is cached


def test_unknown_layer_type():
    with pytest.raises(ValueError, match="conv2d"):
        build_layer({"type": "attention"})


def test_forward_does_not_depend_on_batch():
    model = _small_cnn()
    x = _rng(3).normal(size=(300, 1, 8, 8))
    batched = model.forward(x)
    for i in (0, 7, 150, 299):
        assert np.array_equal(model.forward(x[i:i + 1])[0], batched[i])
    conv = Conv1D(2, 3, kernel=5, pad=2, rng=_rng(4))
    seq = _rng(5).normal(size=(64, 2, 12))
    assert np.array_equal(conv.forward(seq[10:11])[0], conv.forward(seq)[10])


# ── losses ──

def test_softmax_rows_sum_to_one():
    p = softmax(np.array([[1000.0, 1000.0], [0.0, np.log(3.0)]]))
    assert np.allclose(p, [[0.5, 0.5], [0.25, 0.75]])


def test_cross_entropy_value_and_gradient():
    loss = SoftmaxCrossEntropy()
    value = loss.forward(np.zeros((2, 2)), np.array([0, 1]))
    assert value == pytest.approx(np.log(2.0))
    assert np.allclose(loss.backward(), [[-0.25, 0.25], [0.25, -0.25]])


def test_mse_shape_mismatch():
    with pytest.raises(ShapeError):
        MeanSquaredError().forward(np.zeros((2, 3)), np.zeros((3, 2)))
    with pytest.raises(ValueError, match="mse"):
        create_loss("hinge")


# ── gradient checks ──

def test_cnn_gradients_match_finite_differences():
    x = _rng(2).uniform(0, 1, (3, 1, 8, 8))
    result = grad_check(_small_cnn(), "cross_entropy", x, np.array([0, 1, 1]), fraction=0.3)
    assert result.checked > 0
    assert result.max_rel_error < 1e-4


def test_sequence_layers_gradients():
    rng = _rng(3)
    net = Sequential([Conv1D(1, 2, kernel=3, pad=1, rng=rng), ReLU(), MaxPool1D(), Upsample1D(),
                      Conv1D(2, 1, kernel=3, pad=1, rng=rng)])
    x = rng.normal(size=(2, 1, 8))
    result = grad_check(net, "mse", x, x, fraction=0.5)
    assert result.max_rel_error < 1e-4


def test_lstm_gradients():
    rng = _rng(4)
    net = Sequential([LSTM(1, 3, rng=rng), RepeatVector(5), LSTM(3, 2, return_sequences=True, rng=rng),
                      Conv1D(2, 1, kernel=1, pad=0, rng=rng)])
    x = rng.normal(size=(2, 1, 5))
    result = grad_check(net, "mse", x, x, fraction=0.5)
    assert result.max_rel_error < 1e-4


def test_relative_error_floor():
    assert relative_error(0.0, 0.0) == 0.0
    assert relative_error(1.0, 1.0 + 1e-9) < 1e-8


# ── training ──

def test_fit_reduces_loss_deterministically():
    rng = _rng(5)
    x = rng.uniform(0, 1, (32, 1, 8, 8))
    y = (x.mean(axis=(1, 2, 3)) > 0.5).astype(int)
    cfg = SGDConfig(learning_rate=0.1, epochs=5, batch_size=8, seed=9)
    a, b = _small_cnn(), _small_cnn()
    ha = fit(a, "cross_entropy", x, y, cfg)
    hb = fit(b, "cross_entropy", x, y, cfg)
    assert len(ha.records) == 6 and ha.records[0]["epoch"] == 0
    assert ha.final_loss < ha.losses[0]
    assert ha.losses == hb.losses
    for (_, pa), (_, pb) in zip(a.named_params(), b.named_params()):
        assert np.array_equal(pa, pb)


def test_fit_rejects_mismatched_targets():
    with pytest.raises(ShapeError):
        fit(_small_cnn(), "cross_entropy", np.zeros((4, 1, 8, 8)), np.zeros(3, dtype=int), SGDConfig(epochs=1))


def test_history_csv(tmp_path):
    x = _rng().uniform(0, 1, (8, 1, 8, 8))
    history = fit(_small_cnn(), "cross_entropy", x, np.zeros(8, dtype=int), SGDConfig(epochs=2))
    frame = history.to_frame()
    assert list(frame.columns) == ["epoch", "loss", "train_accuracy"]
    assert history.to_csv(tmp_path / "loss.csv").read_text().startswith("epoch,loss,train_accuracy")


# ── model files ──

def test_model_file_round_trip(tmp_path):
    net = _small_cnn()
    path = save_model(tmp_path / "m.rsmd", net, kind="pixel_cnn", provenance={"seed": 1}, extra={"tau": 0.5})
    back, header = load_model(path, kind="pixel_cnn")
    assert header["extra"]["tau"] == 0.5
    assert header["provenance"]["seed"] == 1
    for (name, a), (_, b) in zip(net.named_params(), back.named_params()):
        assert np.array_equal(a.astype(np.float32), b.astype(np.float32)), name
    x = _rng(1).uniform(0, 1, (2, 1, 8, 8))
    assert np.allclose(net.forward(x), back.forward(x), atol=1e-5)


def test_model_file_checks(tmp_path):
    path = save_model(tmp_path / "m.rsmd", _small_cnn(), kind="pixel_cnn")
    with pytest.raises(ManifestError):
        load_model(path, kind="autoencoder")
    bad = tmp_path / "bad.rsmd"
    bad.write_bytes(b"NOPE" + path.read_bytes()[4:])
    with pytest.raises(ManifestError):
        read_header(bad)
    (tmp_path / "short.rsmd").write_bytes(b"RS")
    with pytest.raises(ManifestError):
        read_header(tmp_path / "short.rsmd")
