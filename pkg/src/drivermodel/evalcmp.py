"""RMSE scoring, EDM-vs-LSTMED comparison tables and distribution summaries."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .trace import FEATURES, DriveTrace

VELOCITY_HIST = (30, (0.0, 30.0))
ERROR_HIST = (30, (-10.0, 10.0))


def rmse(y, yhat) -> float:
    y = np.asarray(y, dtype=float).ravel()
    yhat = np.asarray(yhat, dtype=float).ravel()
    if y.shape != yhat.shape:
        raise ValueError(f"length mismatch: {y.size} vs {yhat.size}")
    if y.size == 0:
        raise ValueError("rmse of an empty series")
    return math.sqrt(float(np.mean((y - yhat) ** 2)))


@dataclass
class DriverScore:
    driver_id: str
    rmse_v: float
    rmse_err: float
    v_pred: np.ndarray = field(repr=False, default=None)
    err_pred: np.ndarray = field(repr=False, default=None)
    v_true: np.ndarray = field(repr=False, default=None)
    err_true: np.ndarray = field(repr=False, default=None)


def window_histories(trace: DriveTrace, n_h: int, n_p: int, starts) -> tuple[np.ndarray, np.ndarray]:
    """Raw histories ``(B, 6, n_h)`` and true futures ``(B, 2, n_p)`` of ``(v, err)``."""
    idx = np.asarray(starts)[:, None]
    feats = trace.features
    hist = feats[idx + np.arange(n_h)].transpose(0, 2, 1)
    fut = feats[idx + n_h + np.arange(n_p)][:, :, [FEATURES.index("v"), FEATURES.index("err")]]
    return hist, fut.transpose(0, 2, 1)


def evaluate_lstmed(model, norm, traces: list[DriveTrace], cfg, batch_size: int = 256) -> list[DriverScore]:
    """Score every stride-1 window of each trace, pooling all point predictions per driver.

    ``model`` needs ``predict_histories(norm, histories)`` returning raw
    ``(v_hat, err_hat)`` arrays of shape ``(B, n_p)``.
    """
    n_h, n_p = cfg.n_h, cfg.n_p
    scores = []
    for tr in traces:
        n_win = cfg.n_windows(len(tr))
        if n_win == 0:
            warnings.warn(f"trace {tr.driver_id} too short for one window; skipped", stacklevel=2)
            continue
        preds_v, preds_e, true_v, true_e = [], [], [], []
        for lo in range(0, n_win, batch_size):
            hist, fut = window_histories(tr, n_h, n_p, np.arange(lo, min(lo + batch_size, n_win)))
            v_hat, e_hat = model.predict_histories(norm, hist)
            preds_v.append(np.asarray(v_hat).ravel())
            preds_e.append(np.asarray(e_hat).ravel())
            true_v.append(fut[:, 0].ravel())
            true_e.append(fut[:, 1].ravel())
        pv, pe, tv, te = (np.concatenate(x) for x in (preds_v, preds_e, true_v, true_e))
        scores.append(DriverScore(tr.driver_id, rmse(tv, pv), rmse(te, pe), pv, pe, tv, te))
    return scores


def evaluate_edm(calibrated, traces: list[DriveTrace], route) -> list[DriverScore]:
    """Replay each driver's calibrated EDM on the advisory the driver saw.

    ``calibrated`` maps driver id to :class:`EdmParams` (or is a list aligned
    with ``traces``).  The predicted tracking error is ``v_ref - v_edm``.
    """
    from .edm import replay

    if not isinstance(calibrated, dict):
        if len(calibrated) != len(traces):
            raise ValueError("need one calibration per test trace")
        calibrated = {tr.driver_id: p for tr, p in zip(traces, calibrated)}
    scores = []
    for tr in traces:
        v_edm = replay(calibrated[tr.driver_id], tr, route)
        n = len(v_edm)
        v_act, v_ref = tr.v[:n], tr.v_ref[:n]
        err_edm, err_act = v_ref - v_edm, v_ref - v_act
        rmse_v = rmse(v_act, v_edm)
        # (v_ref - v_edm) - (v_ref - v_act) reduces to v_act - v_edm; scoring the
        # reduced residual keeps it free of the rounding in the two differences
        rmse_err = rmse(v_act, v_edm)
        scores.append(DriverScore(tr.driver_id, rmse_v, rmse_err, v_edm, err_edm, v_act, err_act))
    return scores


@dataclass
class ComparisonRow:
    driver_id: str
    rmse_v_lstm: float
    rmse_v_edm: float
    rmse_err_lstm: float
    rmse_err_edm: float

    def __post_init__(self):
        for name in ("rmse_v_lstm", "rmse_v_edm", "rmse_err_lstm", "rmse_err_edm"):
            x = getattr(self, name)
            if not (math.isfinite(x) and x >= 0):
                raise ValueError(f"{name} must be finite and non-negative, got {x}")


def _tally(pairs) -> tuple[int, int]:
    pairs = list(pairs)
    wins = sum(1 for lstm, edm in pairs if round(lstm, 2) < round(edm, 2))
    ties = sum(1 for lstm, edm in pairs if round(lstm, 2) == round(edm, 2))
    return wins, ties


def comparison_table(rows: list[ComparisonRow]) -> tuple[str, str]:
    """Aligned text and CSV renderings of the per-driver RMSE table.

    Wins and ties are judged at the printed two-decimal precision.
    """
    if not rows:
        raise ValueError("need at least one row")
    head = f"{'Driver ID':<12}| {'Vel LSTM':>8} | {'Vel EDM':>8} | {'Err LSTM':>8} | {'Err EDM':>8}"
    lines = [head, "-" * len(head)]
    csv = ["driver_id,rmse_v_lstm,rmse_v_edm,rmse_err_lstm,rmse_err_edm"]
    for r in rows:
        lines.append(f"{r.driver_id:<12}| {r.rmse_v_lstm:>8.2f} | {r.rmse_v_edm:>8.2f} | "
                     f"{r.rmse_err_lstm:>8.2f} | {r.rmse_err_edm:>8.2f}")
        csv.append(f"{r.driver_id},{r.rmse_v_lstm:.2f},{r.rmse_v_edm:.2f},{r.rmse_err_lstm:.2f},{r.rmse_err_edm:.2f}")
    n = len(rows)
    vw, vt = _tally((r.rmse_v_lstm, r.rmse_v_edm) for r in rows)
    ew, et = _tally((r.rmse_err_lstm, r.rmse_err_edm) for r in rows)
    lines.append("-" * len(head))
    lines.append(f"LSTMED better: velocity {vw}/{n} (ties {vt}), tracking error {ew}/{n} (ties {et})")
    return "\n".join(lines) + "\n", "\n".join(csv) + "\n"


@dataclass
class DistSummary:
    channel: str
    source: str
    mean: float
    std: float
    edges: np.ndarray
    counts: np.ndarray

    def to_csv(self) -> str:
        lines = ["channel,source,mean,std,bin_lo,bin_hi,count"]
        for lo, hi, c in zip(self.edges[:-1], self.edges[1:], self.counts):
            lines.append(f"{self.channel},{self.source},{self.mean:.6g},{self.std:.6g},{lo:.6g},{hi:.6g},{int(c)}")
        return "\n".join(lines) + "\n"


def dist_summary(series, bins: int, range: tuple[float, float], channel: str = "velocity",
                 source: str = "actual") -> DistSummary:
    """Mean, population std and fixed-edge histogram; out-of-range values land in the end bins."""
    x = np.asarray(series, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("empty series")
    lo, hi = range
    if bins < 1 or not hi > lo:
        raise ValueError("need bins >= 1 and hi > lo")
    counts, edges = np.histogram(np.clip(x, lo, hi), bins=bins, range=(lo, hi))
    return DistSummary(channel, source, float(x.mean()), float(x.std()), edges, counts)
