"""Node-indexed time series and activation maps."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError

METHODS = ("reference", "threshold", "defl_st_v", "defl_st_u", "defl_t_v", "defl_t_u")


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Scalar field sampled on nodes at uniform times ``t0 + k*dt``.

    ``values`` has shape (n_times, n_nodes); voltages are in mV, times in ms.
    """

    values: np.ndarray
    dt: float
    t0: float = 0.0

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True)
        if v.ndim != 2:
            raise ParameterError(f"time series values must be 2D (time, node), got {v.shape}")
        if not self.dt > 0:
            raise ParameterError(f"time step must be positive, got {self.dt}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n_times(self) -> int:
        return self.values.shape[0]

    @property
    def n_nodes(self) -> int:
        return self.values.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_times)

    def with_values(self, values) -> "TimeSeries":
        return TimeSeries(values, self.dt, self.t0)


@dataclass(frozen=True, eq=False)
class ActivationMap:
    """Activation time per node in ms; NaN marks a node that never activated."""

    times: np.ndarray
    method: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ParameterError(f"unknown activation method {self.method!r}")
        t = np.array(self.times, dtype=float, copy=True)
        t.setflags(write=False)
        object.__setattr__(self, "times", t)

    @property
    def activated(self) -> np.ndarray:
        return np.isfinite(self.times)

    def __len__(self):
        return len(self.times)
