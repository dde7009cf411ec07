"""Small fitting helpers shared by the profile and scattering analytics."""

from __future__ import annotations

import numpy as np


def loglog_slope(ts, vals, floor: float = 1e-300):
    """Least-squares slope of log(vals) against log(ts).

    Entries at or below ``floor`` are dropped; returns None if fewer than two
    usable points remain.
    """
    ts = np.asarray(ts, dtype=float)
    vals = np.asarray(vals, dtype=float)
    keep = (vals > floor) & (ts > 0)
    if int(np.sum(keep)) < 2:
        return None
    slope = np.polyfit(np.log(ts[keep]), np.log(vals[keep]), 1)[0]
    return float(slope)


def trailing_window_mask(ts, fraction: float = 0.1) -> np.ndarray:
    """Mask selecting the trailing window [T * fraction, T]."""
    ts = np.asarray(ts, dtype=float)
    return ts >= fraction * ts[-1]


def power_tail_integral(ts, vals, moment: float = 0.0):
    """Estimate ``integral_T^inf vals(t) t^moment dt`` from a fitted power law.

    Fits ``vals ~ c t^p`` over the supplied window; requires the combined
    exponent ``p + moment < -1`` for integrability, else returns (nan, p).
    Returns ``(tail, p)`` with ``tail = vals[-1] * T^(1+moment) / -(p+moment+1)``.
    """
    ts = np.asarray(ts, dtype=float)
    vals = np.asarray(vals, dtype=float)
    p = loglog_slope(ts, vals)
    if p is None:
        return 0.0, None
    q = p + moment
    if q >= -1.0:
        return float("nan"), p
    T = ts[-1]
    tail = float(vals[-1] * T ** (1.0 + moment) / (-(q + 1.0)))
    return tail, p


def reverse_cumtrapz(ts, vals):
    """``I(t_i) = integral_{t_i}^{t_end} vals dt`` by trapezoid, vectorised.

    ``vals`` may carry leading axes; integration runs along the last axis.
    """
    ts = np.asarray(ts, dtype=float)
    vals = np.asarray(vals)
    dt = np.diff(ts)
    seg = 0.5 * (vals[..., 1:] + vals[..., :-1]) * dt
    out = np.zeros_like(vals)
    out[..., :-1] = np.cumsum(seg[..., ::-1], axis=-1)[..., ::-1]
    return out


def cumtrapz_from_start(ts, vals):
    """``I(t_i) = integral_{t_0}^{t_i} vals dt`` by trapezoid along the last axis."""
    ts = np.asarray(ts, dtype=float)
    vals = np.asarray(vals)
    dt = np.diff(ts)
    seg = 0.5 * (vals[..., 1:] + vals[..., :-1]) * dt
    out = np.zeros_like(vals)
    out[..., 1:] = np.cumsum(seg, axis=-1)
    return out
