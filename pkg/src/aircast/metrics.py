"""Forecast error metrics and the historical-average baseline.

MAE/RMSE are computed per fixed horizon in raw (denormalized) AQI units over
the evaluated stations. The HA baseline predicts the mean of all same-phase
observations (period 168 h = one week) inside the training history.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

HA_PERIOD = 168


def _horizon_slice(preds: np.ndarray, targets: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    preds = np.asarray(preds, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if preds.shape != targets.shape:
        raise ValidationError(f"metrics: preds {preds.shape} vs targets {targets.shape}")
    if preds.size == 0:
        raise ValidationError("metrics: empty evaluation set")
    if not 1 <= k <= preds.shape[-1]:
        raise ValidationError(f"metrics: horizon {k} outside 1..{preds.shape[-1]}")
    return preds[..., k - 1], targets[..., k - 1]


def mae(preds, targets, k: int) -> float:
    p, t = _horizon_slice(preds, targets, k)
    return float(np.abs(p - t).mean())


def rmse(preds, targets, k: int) -> float:
    p, t = _horizon_slice(preds, targets, k)
    return float(np.sqrt(((p - t) ** 2).mean()))


@dataclass
class HorizonMetrics:
    """mae/rmse per horizon, with a per-city breakdown and sample counts."""

    horizons: list[int]
    mae: dict[int, float]
    rmse: dict[int, float]
    per_city: dict[str, dict[int, tuple[float, float]]]
    count: int


def compute_horizon_metrics(
    preds: np.ndarray,  # (W, n_st, tau_out) denormalized
    targets: np.ndarray,
    horizons: list[int],
    station_city: np.ndarray,
    cities: list[str],
    station_mask: np.ndarray,
) -> HorizonMetrics:
    if not station_mask.any():
        raise ValidationError("metrics: empty evaluation set")
    sel_p, sel_t = preds[:, station_mask, :], targets[:, station_mask, :]
    out_mae = {k: mae(sel_p, sel_t, k) for k in horizons}
    out_rmse = {k: rmse(sel_p, sel_t, k) for k in horizons}
    per_city = {}
    for ci, cid in enumerate(cities):
        members = (station_city == ci) & station_mask
        if not members.any():
            continue
        cp, ct = preds[:, members, :], targets[:, members, :]
        per_city[cid] = {k: (mae(cp, ct, k), rmse(cp, ct, k)) for k in horizons}
    return HorizonMetrics(
        horizons=list(horizons),
        mae=out_mae,
        rmse=out_rmse,
        per_city=per_city,
        count=int(sel_p[..., 0].size),
    )


# ---------------------------------------------------------------------------
# historical average


def ha_baseline(history: np.ndarray, t: int, k: int, period: int = HA_PERIOD) -> float:
    """Mean of history at times t+k - period*j (j >= 1) that fall inside history."""
    history = np.asarray(history, dtype=np.float64)
    s = t + k
    phase = s % period
    stop = min(len(history), s - period + 1)
    idxs = np.arange(phase, stop, period) if stop > phase else np.array([], dtype=int)
    if len(idxs) == 0:
        warnings.warn(
            f"ha_baseline: no same-phase observation for t+k={s}; falling back to the global mean",
            stacklevel=2,
        )
        return float(history.mean())
    return float(history[idxs].mean())


def ha_predict_windows(
    aqi: np.ndarray,  # (T, n_st) raw
    train_end: int,  # first row NOT in the training history
    t_list: np.ndarray,
    tau_out: int,
    period: int = HA_PERIOD,
) -> np.ndarray:
    """HA forecasts for windows ending at each t, shape (W, n_st, tau_out).

    Matches ha_baseline per (station, t, k) whenever every target row lies at
    or beyond train_end, which the chronological split guarantees.
    """
    aqi = np.asarray(aqi, dtype=np.float64)
    train = aqi[:train_end]
    global_mean = train.mean(axis=0)
    phase_mean = np.empty((period, aqi.shape[1]))
    warned = False
    for phase in range(period):
        rows = np.arange(phase, train_end, period)
        if len(rows) == 0:
            phase_mean[phase] = global_mean
            warned = True
        else:
            phase_mean[phase] = train[rows].mean(axis=0)
    if warned:
        warnings.warn("ha_predict_windows: some phases unobserved in training history", stacklevel=2)
    t_list = np.asarray(t_list, dtype=np.int64)
    ks = np.arange(1, tau_out + 1)
    phases = (t_list[:, None] + ks[None, :]) % period  # (W, tau_out)
    return phase_mean[phases].transpose(0, 2, 1)
