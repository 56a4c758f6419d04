"""LSTM encoder-decoder driver model written directly in numpy.

Batched arrays use the network layout: inputs ``(B, n_h, 6)``, targets and
forecasts ``(B, n_p, 2)``.  Single-sample helpers take the feature-major
layout ``(6, n_h)`` used elsewhere in the package.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .synthdrive import OUTPUT_CHANNELS, NormStats, WindowedDataset
from .trace import FEATURES

log = logging.getLogger(__name__)

CHECKPOINT_HEADER = "LSTMED-v1"
GATES = ("i", "f", "g", "o")


class InsufficientHistory(ValueError):
    pass


class TrainingDiverged(RuntimeError):
    pass


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass(frozen=True)
class LstmEdConfig:
    n_e: int = 64
    n_d: int = 64
    n_in: int = 6
    n_out: int = 2
    dropout_p: float = 0.2
    n_h: int = 300
    n_p: int = 50

    def __post_init__(self):
        if self.n_e < 1 or self.n_d < 1:
            raise ValueError("hidden sizes must be >= 1")
        if self.n_e != self.n_d:
            raise ValueError("the decoder starts from the encoder state, so n_e must equal n_d")
        if self.n_in != len(FEATURES) or self.n_out != len(OUTPUT_CHANNELS):
            raise ValueError("n_in=6 and n_out=2 are fixed by the feature sets")
        if not 0 <= self.dropout_p < 1:
            raise ValueError("dropout_p must lie in [0, 1)")
        if self.n_h < 1 or self.n_p < 1:
            raise ValueError("n_h and n_p must be >= 1")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 64
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    grad_clip_norm: float = 5.0
    teacher_forcing_ratio: float = 0.5
    seed: int = 0
    windows_per_epoch: int | None = None

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")
        if not 0 <= self.teacher_forcing_ratio <= 1:
            raise ValueError("teacher_forcing_ratio must lie in [0, 1]")


@dataclass
class HiddenState:
    h: np.ndarray
    c: np.ndarray


@dataclass
class LstmLayerWeights:
    """Gate-stacked weights in ``[i, f, g, o]`` order: ``z = x W + h U + b``."""

    W: np.ndarray  # (n_input, 4H)
    U: np.ndarray  # (H, 4H)
    b: np.ndarray  # (4H,)

    @property
    def hidden(self) -> int:
        return self.U.shape[0]

    @property
    def n_input(self) -> int:
        return self.W.shape[0]

    @classmethod
    def from_gates(cls, W: dict, U: dict, b: dict) -> LstmLayerWeights:
        """Build from per-gate ``hidden x input`` and ``hidden x hidden`` matrices."""
        return cls(np.concatenate([np.atleast_2d(W[k]).T for k in GATES], axis=1).astype(float),
                   np.concatenate([np.atleast_2d(U[k]).T for k in GATES], axis=1).astype(float),
                   np.concatenate([np.atleast_1d(b[k]) for k in GATES]).astype(float))

    def gate(self, name: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        k = GATES.index(name)
        sl = slice(k * self.hidden, (k + 1) * self.hidden)
        return self.W[:, sl].T, self.U[:, sl].T, self.b[sl]

    @classmethod
    def zeros(cls, n_input: int, hidden: int) -> LstmLayerWeights:
        return cls(np.zeros((n_input, 4 * hidden)), np.zeros((hidden, 4 * hidden)), np.zeros(4 * hidden))

    @classmethod
    def init(cls, n_input: int, hidden: int, rng: np.random.Generator) -> LstmLayerWeights:
        r = 1.0 / math.sqrt(hidden)
        b = np.zeros(4 * hidden)
        b[hidden:2 * hidden] = 1.0
        return cls(rng.uniform(-r, r, (n_input, 4 * hidden)), rng.uniform(-r, r, (hidden, 4 * hidden)), b)


def _gates(z, H):
    return sigmoid(z[:, :H]), sigmoid(z[:, H:2 * H]), np.tanh(z[:, 2 * H:3 * H]), sigmoid(z[:, 3 * H:])


def lstm_cell_forward(w: LstmLayerWeights, x, prev: HiddenState) -> HiddenState:
    """One LSTM update; ``x`` and the state may be single vectors or ``(B, .)`` batches."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x2, h2, c2 = np.atleast_2d(x), np.atleast_2d(prev.h), np.atleast_2d(prev.c)
    if x2.shape[1] != w.n_input or h2.shape[1] != w.hidden or c2.shape != h2.shape:
        raise ValueError(f"shape mismatch: x {x.shape}, h {np.shape(prev.h)}, layer {w.n_input}->{w.hidden}")
    i, f, g, o = _gates(x2 @ w.W + h2 @ w.U + w.b, w.hidden)
    c = f * c2 + i * g
    h = o * np.tanh(c)
    return HiddenState(h[0], c[0]) if single else HiddenState(h, c)


def apply_dropout(h, p: float = 0.2, mode: str = "eval", seed=None):
    """Inverted dropout: in ``"train"`` mode zero each unit with probability ``p`` and rescale."""
    if not 0 <= p < 1:
        raise ValueError("dropout probability must lie in [0, 1)")
    h = np.asarray(h, dtype=float)
    if mode == "eval" or p == 0:
        return h.copy()
    if mode != "train":
        raise ValueError(f"unknown dropout mode {mode!r}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return h * (rng.random(h.shape) >= p) / (1.0 - p)


class LstmEdModel:
    """Encoder LSTM, dropout, decoder LSTM fed back through a linear bridge, linear head."""

    PARAM_NAMES = ("enc_W", "enc_U", "enc_b", "dec_W", "dec_U", "dec_b", "head_W", "head_b",
                   "bridge_W", "bridge_b")

    def __init__(self, config: LstmEdConfig, encoder: LstmLayerWeights, decoder: LstmLayerWeights,
                 head_W, head_b, bridge_W, bridge_b):
        self.config = config
        self.encoder = encoder
        self.decoder = decoder
        self.head_W = np.asarray(head_W, dtype=float)  # (H, 2)
        self.head_b = np.asarray(head_b, dtype=float)
        self.bridge_W = np.asarray(bridge_W, dtype=float)  # (2, decoder input)
        self.bridge_b = np.asarray(bridge_b, dtype=float)
        if self.head_W.shape != (decoder.hidden, config.n_out):
            raise ValueError("head must map decoder hidden state to 2 outputs")
        if self.bridge_W.shape != (config.n_out, decoder.n_input):
            raise ValueError("bridge must map 2 outputs to the decoder input")

    @classmethod
    def initialize(cls, config: LstmEdConfig, seed=0) -> LstmEdModel:
        rng = np.random.default_rng(seed)
        H, n_dec_in = config.n_d, config.n_in
        r = 1.0 / math.sqrt(H)
        return cls(config,
                   LstmLayerWeights.init(config.n_in, config.n_e, rng),
                   LstmLayerWeights.init(n_dec_in, H, rng),
                   rng.uniform(-r, r, (H, config.n_out)), np.zeros(config.n_out),
                   rng.uniform(-r, r, (config.n_out, n_dec_in)), np.zeros(n_dec_in))

    @classmethod
    def zeros(cls, config: LstmEdConfig) -> LstmEdModel:
        H = config.n_d
        return cls(config, LstmLayerWeights.zeros(config.n_in, config.n_e), LstmLayerWeights.zeros(config.n_in, H),
                   np.zeros((H, config.n_out)), np.zeros(config.n_out),
                   np.zeros((config.n_out, config.n_in)), np.zeros(config.n_in))

    def params(self) -> dict[str, np.ndarray]:
        """Live references to every trainable array."""
        return {
            "enc_W": self.encoder.W, "enc_U": self.encoder.U, "enc_b": self.encoder.b,
            "dec_W": self.decoder.W, "dec_U": self.decoder.U, "dec_b": self.decoder.b,
            "head_W": self.head_W, "head_b": self.head_b,
            "bridge_W": self.bridge_W, "bridge_b": self.bridge_b,
        }

    def copy(self) -> LstmEdModel:
        p = {k: v.copy() for k, v in self.params().items()}
        return LstmEdModel(self.config, LstmLayerWeights(p["enc_W"], p["enc_U"], p["enc_b"]),
                           LstmLayerWeights(p["dec_W"], p["dec_U"], p["dec_b"]),
                           p["head_W"], p["head_b"], p["bridge_W"], p["bridge_b"])

    def head(self, h):
        return h @ self.head_W + self.head_b

    def bridge(self, y):
        return y @ self.bridge_W + self.bridge_b

    # ---- inference --------------------------------------------------------

    def forecast(self, Xb: np.ndarray, n_p: int | None = None) -> np.ndarray:
        """Eval-mode forecasts ``(B, n_p, 2)`` for normalized inputs ``(B, n_h, 6)``."""
        state = _encode_batch(self, Xb)
        return _decode_batch(self, state, Xb[:, -1, OUTPUT_CHANNELS], n_p or self.config.n_p)

    def predict_histories(self, norm: NormStats, histories) -> tuple[np.ndarray, np.ndarray]:
        """Raw ``(B, 6, n_h)`` histories to raw ``(v_hat, err_hat)``, each ``(B, n_p)``."""
        hist = np.asarray(histories, dtype=float)
        if hist.ndim != 3 or hist.shape[1] != len(FEATURES):
            raise ValueError("histories must have shape (B, 6, n_h)")
        n_h = self.config.n_h
        if hist.shape[2] < n_h:
            raise InsufficientHistory(f"history has {hist.shape[2]} steps, model needs {n_h}")
        lo, hi = norm.lo_hi()
        Xb = np.clip((hist[:, :, -n_h:].transpose(0, 2, 1) - lo) / (hi - lo), 0.0, 1.0)
        out = self.forecast(Xb)
        lo_y, hi_y = norm.lo_hi(OUTPUT_CHANNELS)
        raw = lo_y + out * (hi_y - lo_y)
        return raw[:, :, 0], raw[:, :, 1]

    # ---- checkpoint -------------------------------------------------------

    def save(self, path, norm: NormStats | None = None, extra: dict | None = None) -> None:
        doc = {
            "format": CHECKPOINT_HEADER,
            "config": asdict(self.config),
            "norm": norm.to_dict() if norm is not None else None,
            "arrays": {k: {"shape": list(v.shape), "data": v.ravel(order="C").tolist()}
                       for k, v in self.params().items()},
        }
        if extra:
            doc["meta"] = extra
        Path(path).write_text(json.dumps(doc) + "\n")

    @classmethod
    def load(cls, path) -> tuple[LstmEdModel, NormStats | None]:
        doc = json.loads(Path(path).read_text())
        if doc.get("format") != CHECKPOINT_HEADER:
            raise ValueError(f"{path}: not an {CHECKPOINT_HEADER} checkpoint")
        arr = {k: np.array(v["data"], dtype=float).reshape(v["shape"]) for k, v in doc["arrays"].items()}
        model = cls(LstmEdConfig(**doc["config"]),
                    LstmLayerWeights(arr["enc_W"], arr["enc_U"], arr["enc_b"]),
                    LstmLayerWeights(arr["dec_W"], arr["dec_U"], arr["dec_b"]),
                    arr["head_W"], arr["head_b"], arr["bridge_W"], arr["bridge_b"])
        norm = NormStats.from_dict(doc["norm"]) if doc.get("norm") else None
        return model, norm


def _encode_batch(model: LstmEdModel, Xb) -> HiddenState:
    w = model.encoder
    B, T, _ = Xb.shape
    H = w.hidden
    XW = (Xb.reshape(B * T, -1) @ w.W).reshape(B, T, 4 * H) + w.b
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    for t in range(T):
        i, f, g, o = _gates(XW[:, t] + h @ w.U, H)
        c = f * c + i * g
        h = o * np.tanh(c)
    return HiddenState(h, c)


def _decode_batch(model: LstmEdModel, state: HiddenState, last_y, n_p: int) -> np.ndarray:
    h, c = state.h, state.c
    y = last_y
    out = np.empty((h.shape[0], n_p, model.config.n_out))
    for k in range(n_p):
        s = lstm_cell_forward(model.decoder, model.bridge(y), HiddenState(h, c))
        h, c = s.h, s.c
        y = model.head(h)
        out[:, k] = y
    return out


def _as_batch(X):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != len(FEATURES):
        raise ValueError(f"expected a (6, n_h) matrix, got {X.shape}")
    return X.T[None]


def encode(model: LstmEdModel, X) -> HiddenState:
    """Run the encoder from a zero state over a normalized ``(6, n_h)`` history."""
    s = _encode_batch(model, _as_batch(X))
    return HiddenState(s.h[0], s.c[0])


def decode_iterative(model: LstmEdModel, init: HiddenState, last_y, n_p: int) -> np.ndarray:
    """Unroll the decoder ``n_p`` steps feeding each prediction back; returns ``(2, n_p)``."""
    if n_p < 1:
        raise ValueError("n_p must be >= 1")
    state = HiddenState(np.atleast_2d(init.h), np.atleast_2d(init.c))
    out = _decode_batch(model, state, np.atleast_2d(np.asarray(last_y, dtype=float)), n_p)
    return out[0].T


def predict(model: LstmEdModel, norm: NormStats, history) -> tuple[np.ndarray, np.ndarray]:
    """Raw ``(6, n_h)`` history to raw ``(v_hat, err_hat)`` series of length ``n_p``."""
    history = np.asarray(history, dtype=float)
    if history.ndim != 2 or history.shape[0] != len(FEATURES):
        raise ValueError(f"history must have shape (6, n_h), got {history.shape}")
    v, e = model.predict_histories(norm, history[None])
    return v[0], e[0]


# ---------------------------------------------------------------------------
# loss and backpropagation through time


def _cell_step(w: LstmLayerWeights, zx, h, c):
    H = w.hidden
    i, f, g, o = _gates(zx + h @ w.U, H)
    c_new = f * c + i * g
    tc = np.tanh(c_new)
    return o * tc, c_new, (h, c, i, f, g, o, tc)


def _cell_back(w: LstmLayerWeights, cache, dh, dc):
    h_prev, c_prev, i, f, g, o, tc = cache
    do = dh * tc
    dc = dc + dh * o * (1.0 - tc * tc)
    dz = np.concatenate([dc * g * i * (1.0 - i), dc * c_prev * f * (1.0 - f),
                         dc * i * (1.0 - g * g), do * o * (1.0 - o)], axis=1)
    return dz, dz @ w.U.T, dc * f


def loss_and_grads(model: LstmEdModel, Xb, Yb, drop_mask=None, tf_mask=None, need_grads=True):
    """Mean squared error over ``(B, n_p, 2)`` and its gradient for every parameter.

    ``drop_mask`` multiplies the encoder's final hidden state (already
    scaled by ``1/(1-p)``); ``tf_mask[:, k]`` set means step ``k`` is fed the
    true ``Y[:, k-1]`` instead of the model's own previous prediction.
    """
    enc, dec = model.encoder, model.decoder
    B, T, _ = Xb.shape
    n_p = Yb.shape[1]
    H = enc.hidden
    Hd = dec.hidden

    XW = (Xb.reshape(B * T, -1) @ enc.W).reshape(B, T, 4 * H) + enc.b
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    enc_cache = []
    for t in range(T):
        h, c, cache = _cell_step(enc, XW[:, t], h, c)
        enc_cache.append(cache)
    mask = np.ones((B, H)) if drop_mask is None else drop_mask
    hd, cd = h * mask, c

    tf = np.zeros((B, n_p), dtype=bool) if tf_mask is None else np.asarray(tf_mask, dtype=bool)
    y_in = Xb[:, -1, OUTPUT_CHANNELS]
    y_ins, dec_cache, hs = [], [], []
    preds = np.empty((B, n_p, model.config.n_out))
    for k in range(n_p):
        if k > 0:
            y_in = np.where(tf[:, k:k + 1], Yb[:, k - 1], preds[:, k - 1])
        u = y_in @ model.bridge_W + model.bridge_b
        hd, cd, cache = _cell_step(dec, u @ dec.W + dec.b, hd, cd)
        preds[:, k] = hd @ model.head_W + model.head_b
        y_ins.append((y_in, u))
        dec_cache.append(cache)
        hs.append(hd)
    resid = preds - Yb
    loss = float(np.mean(resid ** 2))
    if not need_grads:
        return loss, None, preds

    g = {k: np.zeros_like(v) for k, v in model.params().items()}
    dpred = 2.0 * resid / resid.size
    dh = np.zeros((B, Hd))
    dc = np.zeros((B, Hd))
    dy_fb = np.zeros((B, model.config.n_out))  # gradient reaching preds[:, k] through step k+1's input
    for k in reversed(range(n_p)):
        dy = dpred[:, k] + dy_fb
        g["head_W"] += hs[k].T @ dy
        g["head_b"] += dy.sum(axis=0)
        dh = dh + dy @ model.head_W.T
        dz, dh, dc = _cell_back(dec, dec_cache[k], dh, dc)
        y_in, u = y_ins[k]
        g["dec_W"] += u.T @ dz
        g["dec_U"] += dec_cache[k][0].T @ dz
        g["dec_b"] += dz.sum(axis=0)
        du = dz @ dec.W.T
        g["bridge_W"] += y_in.T @ du
        g["bridge_b"] += du.sum(axis=0)
        dy_in = du @ model.bridge_W.T
        dy_fb = np.where(tf[:, k:k + 1], 0.0, dy_in) if k > 0 else 0.0

    dh = dh * mask
    dZ = np.empty((B, T, 4 * H))
    Hprev = np.empty((B, T, H))
    for t in reversed(range(T)):
        dz, dh, dc = _cell_back(enc, enc_cache[t], dh, dc)
        dZ[:, t] = dz
        Hprev[:, t] = enc_cache[t][0]
    dZ2 = dZ.reshape(B * T, 4 * H)
    g["enc_W"] = Xb.reshape(B * T, -1).T @ dZ2
    g["enc_U"] = Hprev.reshape(B * T, H).T @ dZ2
    g["enc_b"] = dZ2.sum(axis=0)
    return loss, g, preds


# ---------------------------------------------------------------------------
# gradient verification


def numeric_gradients(model: LstmEdModel, Xb, Yb, eps: float = 1e-5, drop_mask=None, tf_mask=None):
    """Central finite differences of the loss for every weight."""
    out = {}
    for name, arr in model.params().items():
        grad = np.zeros_like(arr)
        flat, gflat = arr.reshape(-1), grad.reshape(-1)
        for n in range(flat.size):
            keep = flat[n]
            flat[n] = keep + eps
            lp = loss_and_grads(model, Xb, Yb, drop_mask, tf_mask, need_grads=False)[0]
            flat[n] = keep - eps
            lm = loss_and_grads(model, Xb, Yb, drop_mask, tf_mask, need_grads=False)[0]
            flat[n] = keep
            gflat[n] = (lp - lm) / (2 * eps)
        out[name] = grad
    return out


def relative_error(analytic: dict, numeric: dict, floor: float = 1e-12, atol: float = 1e-8) -> dict[str, float]:
    """Per-tensor ``|g_a - g_n| / max(|g_a| + |g_n|, floor)`` using Euclidean norms.

    Tensors whose combined gradient norm is below ``atol`` are at a
    stationary point and report 0.
    """
    errs = {}
    for name, ga in analytic.items():
        gn = numeric[name]
        scale = np.linalg.norm(ga) + np.linalg.norm(gn)
        errs[name] = 0.0 if scale < atol else float(np.linalg.norm(ga - gn) / max(scale, floor))
    return errs


def grad_check(model: LstmEdModel, sample, eps: float = 1e-5, tf_mask=None, drop_mask=None) -> float:
    """Largest per-tensor relative error between BPTT and finite-difference gradients.

    ``sample`` is ``(X, Y)`` in either ``(6, n_h)``/``(2, n_p)`` layout or
    batched network layout.
    """
    X, Y = (np.asarray(a, dtype=float) for a in sample)
    if X.ndim == 2:
        X, Y = X.T[None], Y.T[None]
    _, ga, _ = loss_and_grads(model, X, Y, drop_mask, tf_mask)
    gn = numeric_gradients(model, X, Y, eps, drop_mask, tf_mask)
    return max(relative_error(ga, gn).values())


# ---------------------------------------------------------------------------
# training


class Adam:
    def __init__(self, params: dict, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k, p in params.items():
            g = grads[k]
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            p -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def clip_grads(grads: dict, max_norm: float) -> float:
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if max_norm and norm > max_norm:
        for g in grads.values():
            g *= max_norm / norm
    return norm


def train(dataset: WindowedDataset, mcfg: LstmEdConfig, tcfg: TrainConfig | None = None,
          init: LstmEdModel | None = None) -> tuple[LstmEdModel, list[float]]:
    """Minibatch Adam on the normalized MSE with BPTT through encoder, decoder, head and bridge.

    Teacher forcing starts at ``teacher_forcing_ratio`` and decays linearly
    to zero over the epochs.  Returns the model and per-epoch mean loss.
    """
    tcfg = tcfg or TrainConfig()
    if len(dataset) == 0:
        raise ValueError("empty training dataset")
    if (dataset.cfg.n_h, dataset.cfg.n_p) != (mcfg.n_h, mcfg.n_p):
        raise ValueError("model window sizes differ from the dataset's")
    rng = np.random.default_rng(tcfg.seed)
    model = init.copy() if init is not None else LstmEdModel.initialize(mcfg, rng.integers(2**32))
    params = model.params()
    opt = Adam(params, tcfg.learning_rate, tcfg.beta1, tcfg.beta2, tcfg.adam_eps)
    p_drop = mcfg.dropout_p
    history = []
    for epoch in range(tcfg.epochs):
        ratio = tcfg.teacher_forcing_ratio * (1.0 - epoch / tcfg.epochs)
        order = rng.permutation(len(dataset))
        if tcfg.windows_per_epoch:
            order = order[:tcfg.windows_per_epoch]
        total, count = 0.0, 0
        for lo in range(0, len(order), tcfg.batch_size):
            rows = np.sort(order[lo:lo + tcfg.batch_size])
            Xb, Yb = dataset.batch(rows)
            B = len(rows)
            drop = (rng.random((B, mcfg.n_e)) >= p_drop) / (1.0 - p_drop)
            tf = rng.random((B, mcfg.n_p)) < ratio
            loss, grads, _ = loss_and_grads(model, Xb, Yb, drop, tf)
            if not math.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}, batch starting {lo}")
            clip_grads(grads, tcfg.grad_clip_norm)
            opt.step(params, grads)
            total += loss * B
            count += B
        history.append(total / count)
        log.info("epoch %d loss %.6g (teacher forcing %.2f)", epoch, history[-1], ratio)
    return model, history


class LstmEdForecaster(RegressorMixin, BaseEstimator):
    """Estimator wrapper: ``fit`` on a :class:`WindowedDataset` or normalized arrays.

    Array inputs use the feature-major layout ``X: (n, 6, n_h)`` and
    ``y: (n, 2, n_p)``; ``predict`` returns normalized ``(n, 2, n_p)``.
    """

    def __init__(self, n_e=64, n_d=64, dropout_p=0.2, epochs=20, batch_size=64, learning_rate=1e-3,
                 grad_clip_norm=5.0, teacher_forcing_ratio=0.5, windows_per_epoch=None, seed=0):
        self.n_e = n_e
        self.n_d = n_d
        self.dropout_p = dropout_p
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.grad_clip_norm = grad_clip_norm
        self.teacher_forcing_ratio = teacher_forcing_ratio
        self.windows_per_epoch = windows_per_epoch
        self.seed = seed

    def fit(self, X, y=None):
        if isinstance(X, WindowedDataset):
            dataset = X
        else:
            dataset = _ArrayDataset(np.asarray(X, dtype=float), np.asarray(y, dtype=float))
        mcfg = LstmEdConfig(self.n_e, self.n_d, dropout_p=self.dropout_p,
                            n_h=dataset.cfg.n_h, n_p=dataset.cfg.n_p)
        tcfg = TrainConfig(epochs=self.epochs, batch_size=self.batch_size, learning_rate=self.learning_rate,
                           grad_clip_norm=self.grad_clip_norm, teacher_forcing_ratio=self.teacher_forcing_ratio,
                           seed=self.seed, windows_per_epoch=self.windows_per_epoch)
        self.model_, self.loss_history_ = train(dataset, mcfg, tcfg)
        self.norm_ = getattr(dataset, "norm", None)
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        X = np.asarray(X, dtype=float)
        return self.model_.forecast(X.transpose(0, 2, 1)).transpose(0, 2, 1)


class _ArrayDataset:
    """Minimal dataset view over in-memory normalized arrays."""

    class _Cfg:
        def __init__(self, n_h, n_p):
            self.n_h, self.n_p = n_h, n_p

    def __init__(self, X, Y):
        if X.ndim != 3 or Y.ndim != 3 or X.shape[1] != len(FEATURES) or Y.shape[1] != len(OUTPUT_CHANNELS):
            raise ValueError("expected X (n, 6, n_h) and y (n, 2, n_p)")
        self.X = X.transpose(0, 2, 1)
        self.Y = Y.transpose(0, 2, 1)
        self.cfg = self._Cfg(X.shape[2], Y.shape[2])

    def __len__(self):
        return len(self.X)

    def batch(self, rows):
        return self.X[rows], self.Y[rows]
