"""Per-time-step Tikhonov reconstruction of epicardial U and V."""

from __future__ import annotations

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from .errors import ConfigError, NumericsError
from .fields import TimeSeries
from .transfer import TransferOperator

log = logging.getLogger(__name__)

COND_WARN = 1e13


@dataclass(frozen=True)
class InverseConfig:
    """Regularization settings.

    With ``epsilon_scaling="trace"`` the penalty weight is
    ``epsilon * tr(A'WA) / tr(R)``, which makes ``epsilon`` independent of
    mesh size and unit choices; ``"none"`` uses ``epsilon`` as is. ``ridge``
    is relative to the mean diagonal of A'WA, so it does not grow with
    ``epsilon``.
    """

    epsilon: float = 1.0
    ridge: float = 1e-10
    constraint_weight: float | None = None
    epsilon_scaling: str = "trace"

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be > 0, got {self.epsilon}", field="epsilon")
        if self.ridge < 0:
            raise ConfigError(f"ridge must be >= 0, got {self.ridge}", field="ridge")
        if self.constraint_weight is not None and not self.constraint_weight > 0:
            raise ConfigError("constraint_weight must be > 0", field="constraint_weight")
        if self.epsilon_scaling not in ("trace", "none"):
            raise ConfigError("epsilon_scaling must be 'trace' or 'none'",
                              field="epsilon_scaling")


@dataclass(frozen=True, eq=False)
class ReconstructionResult:
    U_rec: TimeSeries
    V_rec: TimeSeries
    residual_norms: np.ndarray      # FEM L2 data misfit per step
    constraint_norms: np.ndarray    # epicardial-equation residual per step


class TikhonovSolver:
    """Factorised normal equations (A'WA + eps R + ridge I) x = A'W z.

    A stacks the body-surface prediction rows and the weighted epicardial
    constraint rows; W is the body-surface mass on data rows and identity on
    constraint rows (whose right-hand side is zero).
    """

    def __init__(self, op: TransferOperator, cfg: InverseConfig | None = None):
        cfg = InverseConfig() if cfg is None else cfg
        self.op, self.cfg = op, cfg
        n = op.n_epi
        w = op.constraint_weight if cfg.constraint_weight is None else cfg.constraint_weight
        self.weight = w
        d, c = op.data_block, w * op.constraint_block
        m_b = op.mass_body.toarray()
        self._dtw = d.T @ m_b                      # maps z to A'W z
        gram = d.T @ m_b @ d + c.T @ c
        reg = np.zeros((2 * n, 2 * n))
        reg[n:, n:] = op.regularizer
        if cfg.epsilon_scaling == "trace":
            self.epsilon_eff = cfg.epsilon * np.trace(gram) / np.trace(reg)
        else:
            self.epsilon_eff = cfg.epsilon
        normal = gram + self.epsilon_eff * reg
        self.ridge_eff = cfg.ridge * np.trace(gram) / (2 * n)
        normal = normal + self.ridge_eff * np.eye(2 * n)
        normal = 0.5 * (normal + normal.T)
        self.normal = normal
        self.reg = reg
        cond = np.linalg.cond(normal)
        self.condition = float(cond)
        if not np.isfinite(cond) or cond > COND_WARN:
            warnings.warn(f"normal matrix is ill-conditioned (cond ~ {cond:.2e})",
                          RuntimeWarning, stacklevel=2)
        try:
            self._chol = la.cho_factor(normal)
        except la.LinAlgError as exc:
            raise NumericsError(f"normal matrix is not positive definite: {exc}") from exc

    def rhs(self, z) -> np.ndarray:
        return self._dtw @ np.asarray(z, dtype=float).T

    def solve(self, z):
        """Minimiser for one snapshot (n_body,) or a stack (k, n_body); returns (U, V)."""
        z = np.asarray(z, dtype=float)
        x = la.cho_solve(self._chol, self.rhs(z)).T
        n = self.op.n_epi
        return x[..., :n], x[..., n:]

    def misfit(self, U, V, z):
        x = np.concatenate([U, V], axis=-1)
        r = x @ self.op.data_block.T - z
        data = np.sqrt(np.einsum("...i,ij,...j->...", r, self.op.mass_body.toarray(), r))
        cons = np.linalg.norm(x @ self.op.constraint_block.T, axis=-1)
        return data, cons


def solve_timestep(op: TransferOperator, z, cfg: InverseConfig | None = None):
    return TikhonovSolver(op, cfg).solve(z)


def reconstruct_series(op: TransferOperator, z: TimeSeries, cfg: InverseConfig | None = None,
                       workers: int = 1, solver: TikhonovSolver | None = None,
                       chunk: int = 64) -> ReconstructionResult:
    """Reconstruct every snapshot with one factorisation; chunks merge in time order."""
    solver = TikhonovSolver(op, cfg) if solver is None else solver
    vals = z.values
    blocks = [vals[i:i + chunk] for i in range(0, len(vals), chunk)]
    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(solver.solve, blocks))
    else:
        parts = [solver.solve(b) for b in blocks]
    U = np.vstack([p[0] for p in parts])
    V = np.vstack([p[1] for p in parts])
    data, cons = solver.misfit(U, V, vals)
    log.info("reconstructed %d steps (eps_eff=%.3g, cond=%.2e)", len(vals),
             solver.epsilon_eff, solver.condition)
    return ReconstructionResult(TimeSeries(U, z.dt, z.t0), TimeSeries(V, z.dt, z.t0), data, cons)
