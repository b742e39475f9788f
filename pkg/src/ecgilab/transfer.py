"""Averaged epicardial source model and its condensed observation operator.

Unknowns on the inverse mesh are the layer-averaged extracellular potential
U and transmembrane voltage V on the epicardial curve, and the torso
potential U_T. The thin-layer equation on the epicardium

    (si + se) Lap_S U + (sT / h) dU_T/dn + si Lap_S V = 0

is closed with the Robin relation sT dU_T/dn = se (U_T - U) / (alpha h),
and U_T is harmonic in the torso with zero flux on the body surface. With n
pointing from the heart into the torso the weak forms read

    torso:  K_T U_T + beta E' M_S (E U_T - U) = 0
    epi:   -(si + se) K_S U - si K_S V + (beta / h) M_S (E U_T - U) = 0

with beta = se / (alpha h), E the trace onto the epicardial curve and K_S,
M_S the curve stiffness and mass.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigError, GeometryError, NumericsError
from .fem import (
    BODY_SURFACE,
    EPICARDIAL,
    CurveMesh,
    Mesh2D,
    assemble_mass,
    assemble_stiffness,
    lumped_mass,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AveragedModelParams:
    sigma_i: float = 1.7
    sigma_e: float = 3.0
    sigma_t: float = 2.0
    h: float = 0.5
    alpha: float = 0.5

    def __post_init__(self):
        for name in ("sigma_i", "sigma_e", "sigma_t", "h"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0, got {getattr(self, name)}", field=name)
        if not 0 < self.alpha < 1:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}", field="alpha")

    @property
    def robin_coefficient(self) -> float:
        """se / (alpha h): Robin coupling between U_T and U on the epicardium."""
        return self.sigma_e / (self.alpha * self.h)

    @property
    def flux_coefficient(self) -> float:
        """Coefficient of (U_T - U) in the epicardial equation, (1/h) * robin."""
        return self.robin_coefficient / self.h

    @classmethod
    def from_scenario(cls, cfg) -> "AveragedModelParams":
        return cls(cfg.sigma_i, cfg.sigma_e, cfg.sigma_t, cfg.layer_depth, cfg.alpha)


@dataclass(frozen=True, eq=False)
class AveragedSystem:
    """Raw coupled system, columns ordered (U, V, U_T), rows (torso, epicardium)."""

    torso: Mesh2D
    epi: CurveMesh
    body: CurveMesh
    params: AveragedModelParams
    trace: sp.csr_matrix          # E: torso nodes -> epicardial curve nodes
    k_torso: sp.csr_matrix
    k_epi: sp.csr_matrix
    m_epi: sp.csr_matrix
    m_body: sp.csr_matrix
    matrix: sp.csr_matrix

    @property
    def n_epi(self) -> int:
        return self.epi.n_nodes

    @property
    def n_torso(self) -> int:
        return self.torso.n_nodes

    def residual(self, U, V, UT) -> np.ndarray:
        return self.matrix @ np.concatenate([U, V, UT])


def assemble_averaged_system(torso: Mesh2D, params: AveragedModelParams) -> AveragedSystem:
    """Weak-form assembly of the averaged model on a torso mesh whose inner ring is the epicardium."""
    epi = CurveMesh.from_mesh(torso, EPICARDIAL)
    body = CurveMesh.from_mesh(torso, BODY_SURFACE)
    boundary = set(map(tuple, torso.boundary_edges().tolist()))
    for a, b in epi.segments:
        edge = tuple(sorted((int(epi.node_indices[a]), int(epi.node_indices[b]))))
        if edge not in boundary:
            raise GeometryError(
                f"epicardial segment {edge} is not on the torso mesh boundary; the inverse "
                "torso mesh must end at the epicardium"
            )
    n, m = epi.n_nodes, torso.n_nodes
    trace = sp.csr_matrix((np.ones(n), (np.arange(n), epi.node_indices)), shape=(n, m))
    k_t = assemble_stiffness(torso, params.sigma_t)
    k_s = assemble_stiffness(epi)
    m_s = assemble_mass(epi)
    beta = params.robin_coefficient
    gamma = params.flux_coefficient
    m_s_trace = m_s @ trace
    torso_rows = sp.hstack([-beta * trace.T @ m_s, sp.csr_matrix((m, n)),
                            k_t + beta * trace.T @ m_s_trace])
    epi_rows = sp.hstack([-(params.sigma_i + params.sigma_e) * k_s - gamma * m_s,
                          -params.sigma_i * k_s, gamma * m_s_trace])
    matrix = sp.vstack([torso_rows, epi_rows]).tocsr()
    return AveragedSystem(torso, epi, body, params, trace, k_t, k_s, m_s,
                          assemble_mass(body), matrix)


@dataclass(frozen=True, eq=False)
class TransferOperator:
    """Condensed operator acting on stacked x = (U, V) on the epicardial curve.

    ``data_block`` predicts body-surface potentials; ``constraint_block`` is
    the epicardial equation with U_T eliminated; ``regularizer`` is the
    quadratic form of the discrete ||si Lap_S V||^2 on the V half.
    """

    epi: CurveMesh
    body: CurveMesh
    data_block: np.ndarray
    constraint_block: np.ndarray
    constraint_weight: float
    mass_body: sp.csr_matrix
    mass_epi: sp.csr_matrix
    regularizer: np.ndarray
    params: AveragedModelParams

    @property
    def n_epi(self) -> int:
        return self.epi.n_nodes

    @property
    def n_body(self) -> int:
        return self.body.n_nodes

    def predict(self, U, V) -> np.ndarray:
        return self.data_block @ np.concatenate([U, V])

    def constraint_residual(self, U, V) -> np.ndarray:
        return self.constraint_block @ np.concatenate([U, V])

    def stacked(self, weight: float | None = None) -> np.ndarray:
        w = self.constraint_weight if weight is None else weight
        return np.vstack([self.data_block, w * self.constraint_block])

    def save(self, path) -> Path:
        path = Path(path)
        np.savez_compressed(
            path,
            epi_points=self.epi.points, epi_index=self.epi.node_indices,
            body_points=self.body.points, body_index=self.body.node_indices,
            data_block=self.data_block, constraint_block=self.constraint_block,
            constraint_weight=self.constraint_weight,
            mass_body=self.mass_body.toarray(), mass_epi=self.mass_epi.toarray(),
            regularizer=self.regularizer,
            params=np.array([self.params.sigma_i, self.params.sigma_e, self.params.sigma_t,
                             self.params.h, self.params.alpha]),
        )
        return path

    @classmethod
    def load(cls, path) -> "TransferOperator":
        with np.load(path) as z:
            return cls(
                CurveMesh(z["epi_points"], z["epi_index"]),
                CurveMesh(z["body_points"], z["body_index"]),
                z["data_block"], z["constraint_block"], float(z["constraint_weight"]),
                sp.csr_matrix(z["mass_body"]), sp.csr_matrix(z["mass_epi"]),
                z["regularizer"], AveragedModelParams(*map(float, z["params"])),
            )


def regularizer_matrix(epi: CurveMesh, sigma_i: float) -> np.ndarray:
    """sigma_i^2 K' M_lumped^-1 K: discrete ||sigma_i Lap_S V||^2 (PSD, constants in kernel)."""
    k = assemble_stiffness(epi).toarray()
    ml = lumped_mass(epi)
    return sigma_i**2 * (k.T / ml) @ k


def condense_to_transfer(system: AveragedSystem,
                         constraint_weight: float | None = None) -> TransferOperator:
    """Eliminate U_T by a Schur complement on the torso block.

    The torso block K_T + beta E' M_S E is positive definite because the
    Robin term ties U_T to U, so no extra pinning of the constant is needed.
    """
    n, m = system.n_epi, system.n_torso
    p = system.params
    beta, gamma = p.robin_coefficient, p.flux_coefficient
    e = system.trace
    a_tt = (system.k_torso + beta * e.T @ system.m_epi @ e).tocsc()
    try:
        lu = spla.splu(a_tt)
    except RuntimeError as exc:
        raise NumericsError(
            f"torso block is singular ({exc}); the Robin coupling should make it definite"
        ) from exc
    coupling = (beta * e.T @ system.m_epi).toarray()   # (m, n)
    s = lu.solve(coupling)                              # U_T = s @ U
    if not np.all(np.isfinite(s)):
        raise NumericsError("torso condensation produced non-finite values")
    body_rows = system.body.node_indices
    data_u = s[body_rows]
    data = np.hstack([data_u, np.zeros((system.body.n_nodes, n))])
    k_s = system.k_epi.toarray()
    m_s = system.m_epi.toarray()
    c_u = -(p.sigma_i + p.sigma_e) * k_s - gamma * m_s + gamma * m_s @ (e @ s)
    c_v = -p.sigma_i * k_s
    constraint = np.hstack([c_u, c_v])
    if constraint_weight is None:
        m_b = system.m_body.toarray()
        data_norm = np.sqrt(np.trace(data.T @ m_b @ data))
        constraint_weight = float(data_norm / np.linalg.norm(constraint))
    return TransferOperator(
        system.epi, system.body, data, constraint, float(constraint_weight),
        system.m_body.tocsr(), system.m_epi.tocsr(),
        regularizer_matrix(system.epi, p.sigma_i), p,
    )


def operator_key(torso: Mesh2D, params: AveragedModelParams) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(torso.nodes).tobytes())
    h.update(np.ascontiguousarray(torso.triangles).tobytes())
    h.update(np.ascontiguousarray(torso.tags).tobytes())
    h.update(repr(params).encode())
    return h.hexdigest()[:16]


def build_transfer(torso: Mesh2D, params: AveragedModelParams,
                   cache_dir=None) -> TransferOperator:
    """Assemble and condense, reusing a cached operator keyed by (mesh, params) when available."""
    path = None
    if cache_dir is not None:
        cache_dir = Path(cache_dir)
        cache_dir.mkdir(parents=True, exist_ok=True)
        path = cache_dir / f"transfer-{operator_key(torso, params)}.npz"
        if path.exists():
            log.info("loading cached transfer operator %s", path.name)
            return TransferOperator.load(path)
    op = condense_to_transfer(assemble_averaged_system(torso, params))
    if path is not None:
        op.save(path)
    return op
