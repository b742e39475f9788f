"""Activation maps from reconstructed epicardial signals.

Threshold method on V, and deflection methods (temporal and
spatio-temporal) on V and U, plus the baseline adjustment and temporal
smoothing that precede them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ParameterError
from .fem.assembly import nodal_gradient_norm
from .fields import ActivationMap, TimeSeries


@dataclass(frozen=True)
class PostprocessConfig:
    smoothing_std: float = 10.0
    n_thresholds: int = 11
    threshold_center_fraction: float = 2.0 / 3.0
    threshold_halfwidth_fraction: float = 1.0 / 6.0
    v_sign: int = 1     # V activates at the maximal positive deflection
    u_sign: int = -1    # U at the maximal negative one

    def __post_init__(self):
        if self.smoothing_std < 0:
            raise ConfigError(f"smoothing_std must be >= 0, got {self.smoothing_std}",
                              field="smoothing_std")
        if int(self.n_thresholds) < 1:
            raise ConfigError(f"n_thresholds must be >= 1, got {self.n_thresholds}",
                              field="n_thresholds")
        lo = self.threshold_center_fraction - self.threshold_halfwidth_fraction
        hi = self.threshold_center_fraction + self.threshold_halfwidth_fraction
        if self.threshold_halfwidth_fraction < 0 or not (0 < lo <= hi < 1):
            raise ConfigError(
                f"threshold band [{lo:g}, {hi:g}] must lie inside (0, 1)",
                field="threshold_center_fraction",
            )
        if self.v_sign not in (1, -1) or self.u_sign not in (1, -1):
            raise ConfigError("deflection signs must be +1 or -1", field="v_sign")

    @property
    def threshold_fractions(self) -> np.ndarray:
        c, w = self.threshold_center_fraction, self.threshold_halfwidth_fraction
        if self.n_thresholds == 1:
            return np.array([c])
        return np.linspace(c - w, c + w, int(self.n_thresholds))


def first_upward_crossing(values: np.ndarray, level, times: np.ndarray) -> np.ndarray:
    """Earliest time each column rises through ``level``, linearly interpolated.

    A crossing is a sample pair with ``v[k-1] < level <= v[k]``. Columns that
    never cross get NaN. ``level`` may be a scalar or one value per column.
    """
    values = np.asarray(values, dtype=float)
    level = np.broadcast_to(np.asarray(level, dtype=float), values.shape[1:])
    below = values[:-1] < level
    above = values[1:] >= level
    hit = below & above
    any_hit = hit.any(axis=0)
    k = np.argmax(hit, axis=0)
    cols = np.arange(values.shape[1])
    v0 = values[k, cols]
    v1 = values[k + 1, cols]
    frac = (level - v0) / np.where(v1 > v0, v1 - v0, 1.0)
    t = times[k] + frac * (times[k + 1] - times[k])
    return np.where(any_hit, t, np.nan)


def time_derivative(values: np.ndarray, dt: float) -> np.ndarray:
    """Centred differences in the interior, one-sided at both ends."""
    values = np.asarray(values, dtype=float)
    if values.shape[0] < 3:
        raise ParameterError("temporal derivative needs at least 3 samples")
    d = np.empty_like(values)
    d[1:-1] = (values[2:] - values[:-2]) / (2 * dt)
    d[0] = (values[1] - values[0]) / dt
    d[-1] = (values[-1] - values[-2]) / dt
    return d


def activation_phase_time(v: TimeSeries, smoothing_std: float = 10.0) -> int:
    """Index of maximal spatial-mean unsigned rate of the de-meaned, smoothed V.

    Removing the spatial mean of every snapshot makes the marker blind to
    per-step constants; smoothing keeps it off isolated noise spikes.
    """
    vals = v.values - v.values.mean(axis=1, keepdims=True)
    vals = gaussian_smooth_time(vals, smoothing_std, v.dt)
    rate = np.abs(time_derivative(vals, v.dt)).mean(axis=1)
    return int(np.argmax(rate))


def adjust_baseline(v: TimeSeries, marker_smoothing_std: float = 10.0) -> TimeSeries:
    """Remove the per-step constant left undetermined by the reconstruction.

    Up to the activation-phase time ``t_d`` every snapshot is shifted so its
    spatial minimum is 0; afterwards so its spatial maximum equals that of
    the shifted snapshot at ``t_d``.
    """
    if v.n_times < 3:
        raise ParameterError("baseline adjustment needs at least 3 samples")
    vals = v.values
    kd = activation_phase_time(v, marker_smoothing_std)
    out = np.empty_like(vals)
    out[:kd + 1] = vals[:kd + 1] - vals[:kd + 1].min(axis=1, keepdims=True)
    plateau = out[kd].max()
    out[kd + 1:] = vals[kd + 1:] + (plateau - vals[kd + 1:].max(axis=1, keepdims=True))
    return v.with_values(out)


def gaussian_kernel(std_samples: float) -> np.ndarray:
    radius = int(np.ceil(3.0 * std_samples))
    x = np.arange(-radius, radius + 1)
    k = np.exp(-0.5 * (x / std_samples) ** 2)
    return k / k.sum()


def gaussian_smooth_time(series, std: float, dt: float | None = None):
    """Order-0 Gaussian filter along time, truncated at 3 std.

    The kernel is renormalised where it overhangs the ends of the record, so
    constants are preserved exactly. Accepts a :class:`TimeSeries` (``dt``
    taken from it) or an array with time on axis 0.
    """
    if isinstance(series, TimeSeries):
        return series.with_values(gaussian_smooth_time(series.values, std, series.dt))
    values = np.asarray(series, dtype=float)
    if std < 0:
        raise ParameterError(f"smoothing std must be >= 0, got {std}")
    if std == 0:
        return values.copy()
    kernel = gaussian_kernel(std / dt)
    n = values.shape[0]
    radius = len(kernel) // 2
    out = np.zeros_like(values)
    weight = np.zeros(n)
    for offset, w in zip(range(-radius, radius + 1), kernel):
        lo, hi = max(0, -offset), min(n, n - offset)
        if lo >= hi:
            continue
        out[lo:hi] += w * values[lo + offset:hi + offset]
        weight[lo:hi] += w
    return out / weight.reshape((n,) + (1,) * (values.ndim - 1))


def spatiotemporal_deflection(series: TimeSeries, curve, gradient_smoothing_std: float = 0.0):
    """Per node and time, dS/dt times the nodal norm of the surface gradient.

    The gradient norm is the length-weighted mean of the adjacent segment
    slopes; it is optionally smoothed in time before the product.
    """
    if series.n_times < 3:
        raise ParameterError("spatio-temporal deflection needs at least 3 time samples")
    dsdt = time_derivative(series.values, series.dt)
    grad = nodal_gradient_norm(curve, series.values)
    if gradient_smoothing_std > 0:
        grad = gaussian_smooth_time(grad, gradient_smoothing_std, series.dt)
    return dsdt * grad


def _argmax_refined(score: np.ndarray, times: np.ndarray, flat_tol: float) -> np.ndarray:
    """Earliest argmax per column with parabolic sub-sample refinement."""
    n_t, n = score.shape
    k = np.argmax(score, axis=0)
    cols = np.arange(n)
    peak = score[k, cols]
    spread = peak - score.min(axis=0)
    dt = times[1] - times[0]
    t = times[k].astype(float)
    inner = (k > 0) & (k < n_t - 1)
    km, kp = np.clip(k - 1, 0, n_t - 1), np.clip(k + 1, 0, n_t - 1)
    y0, y1, y2 = score[km, cols], peak, score[kp, cols]
    denom = y0 - 2 * y1 + y2
    with np.errstate(divide="ignore", invalid="ignore"):
        shift = np.where(inner & (denom < 0), 0.5 * (y0 - y2) / denom, 0.0)
    t = t + np.clip(shift, -0.5, 0.5) * dt
    scale = np.max(np.abs(score)) if score.size else 0.0
    flat = spread <= flat_tol * max(scale, 1e-300)
    return np.where(flat, np.nan, t)


def _sign(signal_kind: str, cfg: PostprocessConfig) -> int:
    if signal_kind == "V":
        return cfg.v_sign
    if signal_kind == "U":
        return cfg.u_sign
    raise ParameterError(f"signal_kind must be 'U' or 'V', got {signal_kind!r}")


def defl_st_at(series: TimeSeries, curve, signal_kind: str,
               cfg: PostprocessConfig | None = None, gradient_smoothing_std: float | None = None,
               flat_tol: float = 1e-9) -> ActivationMap:
    """Time of extremal spatio-temporal deflection (max for V, min for U)."""
    cfg = PostprocessConfig() if cfg is None else cfg
    g_std = cfg.smoothing_std if gradient_smoothing_std is None else gradient_smoothing_std
    prod = spatiotemporal_deflection(series, curve, g_std)
    times = _argmax_refined(_sign(signal_kind, cfg) * prod, series.times, flat_tol)
    method = "defl_st_v" if signal_kind == "V" else "defl_st_u"
    return ActivationMap(times, method, {"gradient_smoothing_std": g_std})


def defl_t_at(series: TimeSeries, signal_kind: str, cfg: PostprocessConfig | None = None,
              flat_tol: float = 1e-9) -> ActivationMap:
    """Time of extremal temporal derivative (max dV/dt, min dU/dt)."""
    cfg = PostprocessConfig() if cfg is None else cfg
    rate = time_derivative(series.values, series.dt)
    times = _argmax_refined(_sign(signal_kind, cfg) * rate, series.times, flat_tol)
    return ActivationMap(times, "defl_t_v" if signal_kind == "V" else "defl_t_u", {})


def threshold_at(v: TimeSeries, cfg: PostprocessConfig | None = None) -> ActivationMap:
    """Mean first-crossing time over a band of levels set as fractions of per-node max V.

    Levels that a node never crosses are left out of its mean; a node that
    crosses none is non-activated.
    """
    cfg = PostprocessConfig() if cfg is None else cfg
    vmax = v.values.max(axis=0)
    fractions = cfg.threshold_fractions
    crossings = np.stack([
        first_upward_crossing(v.values, f * vmax, v.times) for f in fractions
    ])
    crossings[:, ~(vmax > 0)] = np.nan
    counts = np.isfinite(crossings).sum(axis=0)
    total = np.nansum(crossings, axis=0)
    times = np.where(counts > 0, total / np.maximum(counts, 1), np.nan)
    return ActivationMap(times, "threshold", {
        "n_thresholds": int(cfg.n_thresholds),
        "band": [float(fractions[0]), float(fractions[-1])],
    })


def activation_maps(U: TimeSeries, V: TimeSeries, curve,
                    cfg: PostprocessConfig | None = None) -> dict[str, ActivationMap]:
    """All five maps from raw reconstructions: baseline (V), smoothing, detection."""
    cfg = PostprocessConfig() if cfg is None else cfg
    v_s = gaussian_smooth_time(adjust_baseline(V, cfg.smoothing_std), cfg.smoothing_std)
    u_s = gaussian_smooth_time(U, cfg.smoothing_std)
    return {
        "threshold": threshold_at(v_s, cfg),
        "defl_st_v": defl_st_at(v_s, curve, "V", cfg),
        "defl_st_u": defl_st_at(u_s, curve, "U", cfg),
        "defl_t_v": defl_t_at(v_s, "V", cfg),
        "defl_t_u": defl_t_at(u_s, "U", cfg),
    }
