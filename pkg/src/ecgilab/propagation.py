"""Forward simulator.

Mitchell-Schaeffer monodomain propagation on the myocardial annulus, the
static extracellular/extracardiac elliptic solve that turns transmembrane
voltage snapshots into potentials, reference activation times and
measurement noise.
"""

from __future__ import annotations

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigError, NumericsError, StabilityError
from .fem import (
    BODY_SURFACE,
    EPICARDIAL,
    HEART,
    CurveMesh,
    Mesh2D,
    assemble_mass,
    assemble_stiffness,
    heart_torso_mesh,
    submesh,
)
from .fields import ActivationMap, TimeSeries
from .postprocess import first_upward_crossing

log = logging.getLogger(__name__)


def _require(cond, name, message):
    if not cond:
        raise ConfigError(f"{name}: {message}", field=name)


@dataclass(frozen=True)
class MSParams:
    """Mitchell-Schaeffer time constants (ms), gate voltage and diffusivity (cm^2/ms)."""

    tau_in: float = 0.3
    tau_out: float = 6.0
    tau_open: float = 120.0
    tau_close: float = 150.0
    v_gate: float = 0.13
    diffusivity: float = 0.005

    def __post_init__(self):
        for name in ("tau_in", "tau_out", "tau_open", "tau_close"):
            _require(getattr(self, name) > 0, name, f"must be > 0, got {getattr(self, name)}")
        _require(0 < self.v_gate < 1, "v_gate", f"must lie in (0, 1), got {self.v_gate}")
        _require(self.diffusivity >= 0, "diffusivity", f"must be >= 0, got {self.diffusivity}")


@dataclass(frozen=True)
class StimulusSpec:
    """Current injected in a disc centred on the myocardial midline at ``angle`` (rad)."""

    angle: float
    radius: float = 0.3
    start: float = 5.0
    duration: float = 2.0
    amplitude: float = 0.5

    def __post_init__(self):
        _require(self.radius > 0, "radius", f"must be > 0, got {self.radius}")
        _require(self.duration > 0, "duration", f"must be > 0, got {self.duration}")
        _require(self.amplitude > 0, "amplitude", f"must be > 0, got {self.amplitude}")

    def active(self, t: float) -> bool:
        # small slack so accumulated step times do not shift the window by a step
        eps = 1e-9 * max(1.0, abs(t))
        return self.start - eps <= t < self.start + self.duration - eps

    def nodes(self, mesh: Mesh2D, midline_radius: float) -> np.ndarray:
        centre = midline_radius * np.array([np.cos(self.angle), np.sin(self.angle)])
        return np.linalg.norm(mesh.nodes - centre, axis=1) <= self.radius


@dataclass(frozen=True)
class BlockRegion:
    """Low-conductivity angular sector reaching ``depth_fraction`` of the wall from the epicardium."""

    angle: float
    width: float
    depth_fraction: float = 0.75
    scale: float = 0.01

    def __post_init__(self):
        _require(self.width > 0, "width", f"must be > 0, got {self.width}")
        _require(0 < self.depth_fraction <= 1, "depth_fraction",
                 f"must lie in (0, 1], got {self.depth_fraction}")
        _require(self.scale > 0, "scale", f"must be > 0, got {self.scale}")

    def contains(self, points: np.ndarray, endo_radius: float, epi_radius: float) -> np.ndarray:
        theta = np.arctan2(points[:, 1], points[:, 0])
        dtheta = np.angle(np.exp(1j * (theta - self.angle)))
        r = np.linalg.norm(points, axis=1)
        r_min = epi_radius - self.depth_fraction * (epi_radius - endo_radius)
        return (np.abs(dtheta) <= 0.5 * self.width) & (r >= r_min)


@dataclass(frozen=True)
class ScenarioConfig:
    """Complete description of one forward experiment."""

    name: str = "scenario"
    # geometry (cm)
    torso_radius: float = 10.0
    epi_radius: float = 3.0
    endo_radius: float = 2.0
    layer_depth: float = 0.5
    n_theta_forward: int = 256
    n_heart_layers: int = 12
    n_theta_inverse: int = 192
    # conductivities (mS/cm)
    sigma_i: float = 1.7
    sigma_e: float = 3.0
    sigma_t: float = 2.0
    alpha: float = 0.5
    ionic: MSParams = field(default_factory=MSParams)
    stimuli: tuple = ()
    blocks: tuple = ()
    # timing (ms)
    dt_sim: float = 0.05
    dt_output: float = 1.0
    t_end: float = 200.0
    noise_fraction: float = 0.04
    rng_seed: int = 0
    v_rest: float = -85.0
    v_amplitude: float = 100.0

    def __post_init__(self):
        object.__setattr__(self, "stimuli", tuple(self.stimuli))
        object.__setattr__(self, "blocks", tuple(self.blocks))
        _require(0 < self.endo_radius < self.epi_radius < self.torso_radius, "epi_radius",
                 "radii must satisfy 0 < endo_radius < epi_radius < torso_radius")
        _require(self.layer_depth > 0, "layer_depth", f"must be > 0, got {self.layer_depth}")
        _require(0 < self.alpha < 1, "alpha", f"must lie in (0, 1), got {self.alpha}")
        for name in ("sigma_i", "sigma_e", "sigma_t"):
            _require(getattr(self, name) > 0, name, f"must be > 0, got {getattr(self, name)}")
        for name in ("n_theta_forward", "n_theta_inverse", "n_heart_layers"):
            _require(int(getattr(self, name)) >= 3 if name != "n_heart_layers"
                     else int(getattr(self, name)) >= 1, name, "too small")
        _require(0 <= self.noise_fraction < 1, "noise_fraction",
                 f"must lie in [0, 1), got {self.noise_fraction}")
        _require(self.dt_sim > 0, "dt_sim", f"must be > 0, got {self.dt_sim}")
        _require(self.dt_output > 0, "dt_output", f"must be > 0, got {self.dt_output}")
        ratio = self.dt_output / self.dt_sim
        _require(abs(ratio - round(ratio)) < 1e-9 * max(1.0, ratio) and round(ratio) >= 1,
                 "dt_output", f"must be an integer multiple of dt_sim ({self.dt_sim})")
        _require(self.t_end >= 2 * self.dt_output, "t_end",
                 "must cover at least three output samples")
        _require(self.v_amplitude > 0, "v_amplitude", "must be > 0")

    @property
    def midline_radius(self) -> float:
        return 0.5 * (self.endo_radius + self.epi_radius)

    @property
    def substeps(self) -> int:
        return int(round(self.dt_output / self.dt_sim))

    @property
    def n_outputs(self) -> int:
        return int(np.floor(self.t_end / self.dt_output + 1e-9)) + 1


@dataclass(frozen=True)
class ForwardMeshes:
    full: Mesh2D            # heart + torso
    heart: Mesh2D           # myocardial annulus
    heart_nodes: np.ndarray  # heart node -> full node
    epi: CurveMesh
    body: CurveMesh


def build_forward_meshes(cfg: ScenarioConfig) -> ForwardMeshes:
    full = heart_torso_mesh(cfg.endo_radius, cfg.epi_radius, cfg.torso_radius,
                            cfg.n_theta_forward, cfg.n_heart_layers)
    heart, heart_nodes = submesh(full, HEART)
    return ForwardMeshes(full, heart, heart_nodes,
                         CurveMesh.from_mesh(full, EPICARDIAL),
                         CurveMesh.from_mesh(full, BODY_SURFACE))


def block_scale(mesh: Mesh2D, cfg: ScenarioConfig) -> np.ndarray:
    """Per-element conductivity multiplier (1 outside block sectors)."""
    scale = np.ones(mesh.n_elements)
    centroids = mesh.centroids
    heart = mesh.regions == HEART
    for block in cfg.blocks:
        inside = heart & block.contains(centroids, cfg.endo_radius, cfg.epi_radius)
        scale[inside] = np.minimum(scale[inside], block.scale)
    return scale


# --------------------------------------------------------------------------
# Monodomain


@dataclass(frozen=True, eq=False)
class MonodomainState:
    v: np.ndarray       # dimensionless transmembrane voltage
    h: np.ndarray       # gate
    t: float = 0.0

    @classmethod
    def rest(cls, n: int) -> "MonodomainState":
        return cls(np.zeros(n), np.ones(n), 0.0)


class Monodomain:
    """Semi-implicit Mitchell-Schaeffer monodomain stepper on a fixed mesh.

    Reaction and stimulus are explicit (Heun); diffusion is implicit through
    a prefactorised ``M + dt*K`` with consistent mass.
    """

    def __init__(self, mesh, params: MSParams, stimuli=(), dt: float = 0.05,
                 diffusivity=None, midline_radius: float | None = None):
        self.mesh = mesh
        self.params = params
        self.dt = float(dt)
        self.stimuli = tuple(stimuli)
        if midline_radius is None:
            r = np.linalg.norm(mesh.nodes if isinstance(mesh, Mesh2D) else mesh.points, axis=1)
            midline_radius = 0.5 * (r.min() + r.max())
        self._stim_nodes = [
            s.nodes(mesh, midline_radius) if isinstance(mesh, Mesh2D)
            else np.linalg.norm(mesh.points - midline_radius * np.array(
                [np.cos(s.angle), np.sin(s.angle)]), axis=1) <= s.radius
            for s in self.stimuli
        ]
        d = params.diffusivity if diffusivity is None else diffusivity
        self.mass = assemble_mass(mesh).tocsc()
        if np.all(np.asarray(d) == 0):
            system = self.mass
        else:
            system = self.mass + self.dt * assemble_stiffness(mesh, d)
        self._lu = spla.splu(sp.csc_matrix(system))

    def stimulus(self, t: float) -> np.ndarray:
        current = np.zeros(self.mass.shape[0])
        for stim, nodes in zip(self.stimuli, self._stim_nodes):
            if stim.active(t):
                current[nodes] += stim.amplitude
        return current

    def _rates(self, v, h, current):
        p = self.params
        dv = h * v * v * (1.0 - v) / p.tau_in - v / p.tau_out + current
        dh = np.where(v < p.v_gate, (1.0 - h) / p.tau_open, -h / p.tau_close)
        return dv, dh

    def step(self, state: MonodomainState) -> MonodomainState:
        """Explicit Heun (RK2) reaction sub-step, then one implicit diffusion solve."""
        v, h, dt = state.v, state.h, self.dt
        current = self.stimulus(state.t)
        dv1, dh1 = self._rates(v, h, current)
        v1, h1 = v + dt * dv1, np.clip(h + dt * dh1, 0.0, 1.0)
        dv2, dh2 = self._rates(v1, h1, current)
        v_star = v + 0.5 * dt * (dv1 + dv2)
        h_new = np.clip(h + 0.5 * dt * (dh1 + dh2), 0.0, 1.0)
        v_new = self._lu.solve(self.mass @ v_star)
        vmax = float(np.max(np.abs(v_new)))
        if not np.isfinite(vmax) or vmax > 10.0:
            raise StabilityError(
                f"monodomain diverged at t={state.t + self.dt:.3f} ms with dt={self.dt} ms "
                f"(max |v| = {vmax:.3g})"
            )
        return MonodomainState(v_new, h_new, state.t + self.dt)


def step_monodomain(state: MonodomainState, model: Monodomain) -> MonodomainState:
    return model.step(state)


# --------------------------------------------------------------------------
# Extracardiac potentials


class ExtracardiacSolver:
    """Static bidomain elliptic solve on the heart+torso mesh.

    Solves div((si+se) grad U) = -div(si grad V) in the heart and
    div(sT grad U) = 0 in the torso, zero flux on the body surface and the
    blood cavity, with the mass-weighted mean of U over the body surface
    pinned to zero via a Lagrange multiplier.
    """

    def __init__(self, meshes: ForwardMeshes, cfg: ScenarioConfig):
        mesh = meshes.full
        scale = block_scale(mesh, cfg)
        heart = mesh.regions == HEART
        sigma_bulk = np.where(heart, (cfg.sigma_i + cfg.sigma_e) * scale, cfg.sigma_t)
        k_bulk = assemble_stiffness(mesh, sigma_bulk)
        # intracellular stiffness restricted to heart elements
        heart_mesh = Mesh2D(mesh.nodes, mesh.triangles[heart])
        self.k_intra = assemble_stiffness(heart_mesh, cfg.sigma_i * scale[heart])
        body = meshes.body
        c = np.zeros(mesh.n_nodes)
        c[body.node_indices] = np.asarray(assemble_mass(body).sum(axis=1)).ravel()
        self.mean_weights = c
        n = mesh.n_nodes
        bordered = sp.bmat([[k_bulk, sp.csr_matrix(c[:, None])],
                            [sp.csr_matrix(c[None, :]), None]], format="csc")
        try:
            self._lu = spla.splu(bordered)
        except RuntimeError as exc:
            raise NumericsError(f"extracardiac system is singular: {exc}") from exc
        self.n = n
        self.meshes = meshes

    def solve(self, v_full: np.ndarray) -> np.ndarray:
        """Potential on every mesh node for V given on the full mesh; accepts (n,) or (k, n)."""
        v = np.atleast_2d(v_full)
        rhs = np.zeros((self.n + 1, v.shape[0]))
        rhs[:-1] = -(self.k_intra @ v.T)
        sol = self._lu.solve(rhs)[:-1].T
        if not np.all(np.isfinite(sol)):
            raise NumericsError("extracardiac solve produced non-finite values")
        return sol[0] if np.ndim(v_full) == 1 else sol

    def solve_many(self, v_full: np.ndarray, workers: int = 1, chunk: int = 32) -> np.ndarray:
        blocks = [v_full[i:i + chunk] for i in range(0, len(v_full), chunk)]
        if workers > 1 and len(blocks) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                parts = list(pool.map(self.solve, blocks))
        else:
            parts = [self.solve(b) for b in blocks]
        return np.vstack(parts)


def solve_extracardiac(v_heart: np.ndarray, cfg: ScenarioConfig,
                       meshes: ForwardMeshes | None = None):
    """Epicardial and body-surface potentials for one V snapshot on the heart nodes."""
    meshes = build_forward_meshes(cfg) if meshes is None else meshes
    solver = ExtracardiacSolver(meshes, cfg)
    v_full = np.zeros(meshes.full.n_nodes)
    v_full[meshes.heart_nodes] = v_heart
    u = solver.solve(v_full)
    return u[meshes.epi.node_indices], u[meshes.body.node_indices]


# --------------------------------------------------------------------------
# Forward run


@dataclass(frozen=True, eq=False)
class ForwardResult:
    meshes: ForwardMeshes
    V_heart: TimeSeries
    V_epi: TimeSeries
    U_epi: TimeSeries
    Z_body: TimeSeries
    AT_ref: ActivationMap
    U_full: np.ndarray | None = None


def compute_reference_at(v: TimeSeries, level: float = 0.5) -> ActivationMap:
    """First upward crossing of ``level`` (fraction of the global amplitude range)."""
    if not 0 < level < 1:
        raise ConfigError(f"level must lie in (0, 1), got {level}", field="level")
    vals = v.values
    lo, hi = float(vals.min()), float(vals.max())
    if hi - lo <= 1e-12 * max(1.0, abs(hi)):
        times = np.full(v.n_nodes, np.nan)
    else:
        times = first_upward_crossing(vals, lo + level * (hi - lo), v.times)
    return ActivationMap(times, "reference", {"level": level})


def run_forward(cfg: ScenarioConfig, workers: int = 1, keep_full: bool = False,
                meshes: ForwardMeshes | None = None) -> ForwardResult:
    """Simulate propagation, record V every ``dt_output`` and solve for U at each record."""
    meshes = build_forward_meshes(cfg) if meshes is None else meshes
    heart = meshes.heart
    diff = cfg.ionic.diffusivity * block_scale(heart, cfg)
    model = Monodomain(heart, cfg.ionic, cfg.stimuli, cfg.dt_sim,
                       diffusivity=diff if cfg.ionic.diffusivity > 0 else None,
                       midline_radius=cfg.midline_radius)
    state = MonodomainState.rest(heart.n_nodes)
    n_out = cfg.n_outputs
    record = np.empty((n_out, heart.n_nodes))
    record[0] = state.v
    for k in range(1, n_out):
        for _ in range(cfg.substeps):
            state = model.step(state)
        record[k] = state.v
    v_mv = cfg.v_rest + cfg.v_amplitude * record
    V_heart = TimeSeries(v_mv, cfg.dt_output)

    v_full = np.zeros((n_out, meshes.full.n_nodes))
    v_full[:, meshes.heart_nodes] = v_mv
    solver = ExtracardiacSolver(meshes, cfg)
    u_full = solver.solve_many(v_full, workers=workers)

    V_epi = TimeSeries(v_full[:, meshes.epi.node_indices], cfg.dt_output)
    U_epi = TimeSeries(u_full[:, meshes.epi.node_indices], cfg.dt_output)
    Z_body = TimeSeries(u_full[:, meshes.body.node_indices], cfg.dt_output)
    at_ref = compute_reference_at(V_epi)
    if not at_ref.activated.any():
        warnings.warn(f"scenario {cfg.name!r}: no epicardial node activated", RuntimeWarning)
    log.info("forward %s: %d outputs, %d/%d epicardial nodes activated", cfg.name, n_out,
             int(at_ref.activated.sum()), len(at_ref))
    return ForwardResult(meshes, V_heart, V_epi, U_epi, Z_body, at_ref,
                         u_full if keep_full else None)


def add_noise(z: TimeSeries, noise_fraction: float, rng_seed: int) -> TimeSeries:
    """Add i.i.d. Gaussian noise with std ``noise_fraction * max|Z|``, fresh at every step."""
    if noise_fraction < 0:
        raise ConfigError(f"noise_fraction must be >= 0, got {noise_fraction}",
                          field="noise_fraction")
    if noise_fraction == 0:
        return z.with_values(z.values)
    amplitude = float(np.max(np.abs(z.values)))
    rng = np.random.default_rng(rng_seed)
    noise = rng.normal(0.0, noise_fraction * amplitude, size=z.values.shape)
    return z.with_values(z.values + noise)
