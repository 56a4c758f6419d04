import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drivermodel.seqnet import (HiddenState, LstmEdConfig, LstmEdForecaster, LstmEdModel, LstmLayerWeights,
                                TrainConfig, apply_dropout, clip_grads, decode_iterative, encode, grad_check,
                                loss_and_grads, lstm_cell_forward, numeric_gradients, predict, relative_error,
                                train)
from drivermodel.synthdrive import NormStats, WindowConfig, window_dataset
from drivermodel.trace import DriveTrace


def sig(x):
    return 1.0 / (1.0 + math.exp(-x))


def small_model(H=4, n_h=6, n_p=3, seed=0, dropout_p=0.0):
    return LstmEdModel.initialize(LstmEdConfig(H, H, n_h=n_h, n_p=n_p, dropout_p=dropout_p), seed)


def random_sample(rng, n_h=6, n_p=3):
    return rng.uniform(0, 1, (6, n_h)), rng.uniform(0, 1, (2, n_p))


def tiny_traces(n=4, length=40):
    rng = np.random.default_rng(0)
    out = []
    for i in range(n):
        t = np.arange(length)
        v = 10 + 3 * np.sin(t / 5 + i)
        acc = np.append(np.diff(v), 0.0)
        v_ref = v + np.cos(t / 7)
        feats = np.column_stack([v, acc, 300 - t, v_ref, rng.choice([0.0, 1.0], length), v_ref - v])
        out.append(DriveTrace(f"d{i}", 1.0, np.cumsum(v), feats))
    return out


# ---- cell


def test_zero_cell():
    w = LstmLayerWeights.zeros(3, 2)
    s = lstm_cell_forward(w, np.array([0.3, -1.0, 2.0]), HiddenState(np.zeros(2), np.zeros(2)))
    assert np.all(s.h == 0) and np.all(s.c == 0)


def test_forget_saturation_keeps_cell():
    w = LstmLayerWeights.zeros(3, 2)
    w.b[2:4] = 100.0
    c = np.array([0.7, -1.3])
    s = lstm_cell_forward(w, np.array([1.0, 2.0, 3.0]), HiddenState(np.zeros(2), c))
    assert np.max(np.abs(s.c - c)) < 1e-6


def test_one_unit_cell_hand_values():
    W = {"i": 0.5, "f": -0.3, "g": 0.8, "o": 1.1}
    U = {"i": 0.2, "f": 0.4, "g": -0.6, "o": 0.1}
    b = {"i": 0.1, "f": 0.2, "g": -0.1, "o": 0.05}
    w = LstmLayerWeights.from_gates(W, U, b)
    h0, c0, x = 0.3, -0.2, 1.0
    i = sig(W["i"] * x + U["i"] * h0 + b["i"])
    f = sig(W["f"] * x + U["f"] * h0 + b["f"])
    g = math.tanh(W["g"] * x + U["g"] * h0 + b["g"])
    o = sig(W["o"] * x + U["o"] * h0 + b["o"])
    c1 = f * c0 + i * g
    h1 = o * math.tanh(c1)
    s = lstm_cell_forward(w, np.array([x]), HiddenState(np.array([h0]), np.array([c0])))
    assert s.c[0] == pytest.approx(c1, abs=1e-14)
    assert s.h[0] == pytest.approx(h1, abs=1e-14)


def test_cell_shape_errors():
    w = LstmLayerWeights.zeros(3, 2)
    with pytest.raises(ValueError):
        lstm_cell_forward(w, np.zeros(4), HiddenState(np.zeros(2), np.zeros(2)))


# ---- encoder


def test_zero_model_encodes_to_zero():
    model = LstmEdModel.zeros(LstmEdConfig(3, 3, n_h=5, n_p=2))
    s = encode(model, np.ones((6, 5)))
    assert np.all(s.h == 0) and np.all(s.c == 0)


def test_length_one_encoder_is_one_cell():
    model = small_model(n_h=1)
    x = np.linspace(0, 1, 6)
    s = encode(model, x[:, None])
    ref = lstm_cell_forward(model.encoder, x, HiddenState(np.zeros(4), np.zeros(4)))
    np.testing.assert_allclose(s.h, ref.h, atol=1e-15)
    np.testing.assert_allclose(s.c, ref.c, atol=1e-15)


def test_encoder_is_order_sensitive():
    model = small_model(n_h=8)
    X = np.random.default_rng(1).uniform(0, 1, (6, 8))
    a = encode(model, X)
    b = encode(model, X[:, ::-1])
    assert np.max(np.abs(a.h - b.h)) > 1e-6


def test_forward_bounds_over_long_history():
    model = small_model(H=8, n_h=300)
    X = np.random.default_rng(2).uniform(0, 1, (6, 300))
    s = encode(model, X)
    assert np.all(np.abs(s.h) < 1) and np.all(np.isfinite(s.c))


# ---- dropout


def test_dropout_identities():
    h = np.random.default_rng(0).normal(size=50)
    np.testing.assert_array_equal(apply_dropout(h, 0.2, "eval"), h)
    np.testing.assert_array_equal(apply_dropout(h, 0.0, "train", seed=1), h)


def test_dropout_frequency_and_expectation():
    h = np.ones(100000)
    out = apply_dropout(h, 0.2, "train", seed=0)
    assert abs(np.mean(out == 0) - 0.2) < 0.01
    assert abs(out.mean() - 1.0) < 0.01


def test_dropout_bad_arguments():
    with pytest.raises(ValueError):
        apply_dropout(np.ones(3), 1.0, "train")
    with pytest.raises(ValueError):
        apply_dropout(np.ones(3), 0.2, "sometimes")


# ---- decoder


def test_single_step_decode():
    model = small_model()
    init = HiddenState(np.full(4, 0.1), np.full(4, -0.2))
    last = np.array([0.4, 0.6])
    out = decode_iterative(model, init, last, 1)
    step = lstm_cell_forward(model.decoder, model.bridge(last), init)
    np.testing.assert_allclose(out[:, 0], model.head(step.h), atol=1e-15)


def test_zero_model_decodes_zero():
    model = LstmEdModel.zeros(LstmEdConfig(3, 3, n_h=5, n_p=4))
    out = decode_iterative(model, HiddenState(np.zeros(3), np.zeros(3)), np.array([0.5, 0.5]), 4)
    assert out.shape == (2, 4) and np.all(out == 0)


def test_second_step_input_is_bridged_first_output():
    rng = np.random.default_rng(7)
    cfg = LstmEdConfig(1, 1, n_h=2, n_p=2)
    model = LstmEdModel(cfg, LstmLayerWeights.init(6, 1, rng), LstmLayerWeights.init(6, 1, rng),
                        rng.normal(size=(1, 2)), rng.normal(size=2), rng.normal(size=(2, 6)), rng.normal(size=6))
    init = HiddenState(np.array([0.2]), np.array([0.1]))
    last = np.array([0.3, 0.9])
    out = decode_iterative(model, init, last, 2)
    s1 = lstm_cell_forward(model.decoder, last @ model.bridge_W + model.bridge_b, init)
    y1 = s1.h @ model.head_W + model.head_b
    s2 = lstm_cell_forward(model.decoder, y1 @ model.bridge_W + model.bridge_b, s1)
    y2 = s2.h @ model.head_W + model.head_b
    np.testing.assert_allclose(out[:, 0], y1, atol=1e-15)
    np.testing.assert_allclose(out[:, 1], y2, atol=1e-15)


# ---- gradients


def test_grad_check_random_models():
    rng = np.random.default_rng(0)
    for k in range(3):
        model = small_model(H=3, n_h=4, n_p=3, seed=k)
        X, Y = random_sample(rng, 4, 3)
        tf = rng.random((1, 3)) < 0.5
        drop = (rng.random((1, 3)) >= 0.2) / 0.8
        assert grad_check(model, (X, Y), tf_mask=tf, drop_mask=drop) < 1e-5


def test_doubled_gradient_error_is_one_third():
    model = small_model(H=2, n_h=3, n_p=2)
    X, Y = random_sample(np.random.default_rng(1), 3, 2)
    Xb, Yb = X.T[None], Y.T[None]
    _, ga, _ = loss_and_grads(model, Xb, Yb)
    gn = numeric_gradients(model, Xb, Yb)
    ga["head_W"] = ga["head_W"] * 2
    assert relative_error(ga, gn)["head_W"] == pytest.approx(1 / 3, abs=1e-4)


def test_zero_loss_point_passes():
    model = small_model(H=2, n_h=3, n_p=2)
    X = np.random.default_rng(2).uniform(0, 1, (6, 3))
    Y = model.forecast(X.T[None])[0].T
    loss, grads, _ = loss_and_grads(model, X.T[None], Y.T[None])
    assert loss < 1e-25
    assert max(np.abs(g).max() for g in grads.values()) < 1e-12
    assert grad_check(model, (X, Y)) < 1e-5


def test_clip_grads():
    g = {"a": np.array([3.0, 4.0])}
    assert clip_grads(g, 1.0) == 5.0
    assert np.linalg.norm(g["a"]) == pytest.approx(1.0)


# ---- training


def tiny_dataset():
    train_ds, _ = window_dataset(tiny_traces(), WindowConfig(6.0, 3.0, 1.0), 0, 1)
    return train_ds


def test_zero_epochs_returns_initialisation():
    ds = tiny_dataset()
    mcfg = LstmEdConfig(4, 4, n_h=6, n_p=3)
    init = LstmEdModel.initialize(mcfg, 5)
    model, hist = train(ds, mcfg, TrainConfig(epochs=0), init)
    assert hist == []
    for k, v in init.params().items():
        np.testing.assert_array_equal(model.params()[k], v)


def test_training_deterministic():
    ds = tiny_dataset()
    mcfg = LstmEdConfig(4, 4, n_h=6, n_p=3)
    tcfg = TrainConfig(epochs=3, batch_size=8, seed=4)
    _, h1 = train(ds, mcfg, tcfg)
    _, h2 = train(ds, mcfg, tcfg)
    assert h1 == h2


def test_training_loss_nonincreasing_at_small_lr():
    ds = tiny_dataset()
    mcfg = LstmEdConfig(4, 4, n_h=6, n_p=3, dropout_p=0.0)
    tcfg = TrainConfig(epochs=15, batch_size=16, learning_rate=1e-3, teacher_forcing_ratio=0.0, seed=1)
    _, hist = train(ds, mcfg, tcfg)
    assert all(b <= a * 1.05 for a, b in zip(hist, hist[1:]))
    assert hist[-1] < hist[0]


def test_window_size_mismatch():
    with pytest.raises(ValueError):
        train(tiny_dataset(), LstmEdConfig(4, 4, n_h=7, n_p=3), TrainConfig(epochs=1))


# ---- prediction


@pytest.fixture(scope="module")
def trained():
    ds = tiny_dataset()
    model, _ = train(ds, LstmEdConfig(4, 4, n_h=6, n_p=3), TrainConfig(epochs=5, batch_size=8))
    return model, ds.norm


def test_predict_length_and_envelope(trained):
    model, norm = trained
    hist = np.zeros((6, 6))
    hist[0] = 12.0
    hist[2] = 200.0
    hist[3] = 12.0
    v, e = predict(model, norm, hist)
    assert len(v) == len(e) == 3
    assert np.all(v >= 0) and np.all(v <= 13.0 + 5.0)


def test_predict_deterministic_and_round_trip(trained):
    model, norm = trained
    hist = tiny_traces(1)[0].features[:6].T
    v1, e1 = predict(model, norm, hist)
    v2, e2 = predict(model, norm, hist)
    np.testing.assert_array_equal(v1, v2)
    lo, hi = norm.lo_hi([0, 5])
    Xb = np.clip((hist.T[None] - np.array(norm.mins)) / (np.array(norm.maxs) - np.array(norm.mins)), 0, 1)
    z = model.forecast(Xb)[0]
    np.testing.assert_allclose((v1 - lo[0]) / (hi[0] - lo[0]), z[:, 0], atol=1e-6)
    np.testing.assert_allclose((e1 - lo[1]) / (hi[1] - lo[1]), z[:, 1], atol=1e-6)


def test_fifty_step_output():
    model = small_model(H=3, n_h=300, n_p=50)
    norm = NormStats((0.0,) * 6, (30.0,) * 6)
    v, e = predict(model, norm, np.full((6, 300), 10.0))
    assert v.shape == (50,) and e.shape == (50,)


def test_predict_rejects_short_history(trained):
    model, norm = trained
    with pytest.raises(ValueError):
        predict(model, norm, np.zeros((6, 2)))


def test_checkpoint_round_trip(tmp_path, trained):
    model, norm = trained
    model.save(tmp_path / "m.json", norm, {"note": 1})
    back, back_norm = LstmEdModel.load(tmp_path / "m.json")
    assert back_norm == norm
    for k, v in model.params().items():
        np.testing.assert_array_equal(back.params()[k], v)


def test_checkpoint_rejects_foreign_file(tmp_path):
    (tmp_path / "x.json").write_text('{"format": "other"}')
    with pytest.raises(ValueError):
        LstmEdModel.load(tmp_path / "x.json")


def test_config_validation():
    with pytest.raises(ValueError):
        LstmEdConfig(4, 8)
    with pytest.raises(ValueError):
        LstmEdConfig(dropout_p=1.0)
    with pytest.raises(ValueError):
        TrainConfig(teacher_forcing_ratio=2.0)


def test_forecaster_estimator_api():
    rng = np.random.default_rng(0)
    X = rng.uniform(0, 1, (12, 6, 5))
    y = rng.uniform(0, 1, (12, 2, 3))
    est = LstmEdForecaster(n_e=3, n_d=3, epochs=2, batch_size=4)
    assert est.get_params()["n_e"] == 3
    pred = est.fit(X, y).predict(X)
    assert pred.shape == (12, 2, 3)
    assert len(est.loss_history_) == 2


@settings(max_examples=10)
@given(st.integers(0, 10**6))
def test_grad_check_property(seed):
    rng = np.random.default_rng(seed)
    model = small_model(H=2, n_h=3, n_p=2, seed=seed)
    X, Y = random_sample(rng, 3, 2)
    assert grad_check(model, (X, Y), tf_mask=rng.random((1, 2)) < 0.5) < 1e-5
