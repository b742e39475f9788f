"""Batch orchestration: simulate, reconstruct, post-process, evaluate.

Every stage writes its artifacts under ``<out_dir>/<scenario name>/`` and a
compressed ``.npz`` cache that the next stage reads, so stages can be run
separately. A ``manifest.json`` records the config hash, seed, outputs,
timings and metrics, and is rewritten after each stage (also on failure).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import time
from pathlib import Path

import numpy as np

from .config import RunConfig
from .errors import ConfigError, EcgiError
from .fem import interpolation_matrix, torso_mesh, write_vtk
from .fields import METHODS, ActivationMap, TimeSeries
from .inverse import TikhonovSolver, reconstruct_series
from .metrics import map_errors, max_jump_across
from .postprocess import activation_maps
from .propagation import add_noise, build_forward_meshes, compute_reference_at, run_forward
from .transfer import AveragedModelParams, build_transfer

log = logging.getLogger(__name__)

STAGES = ("simulate", "reconstruct", "postprocess", "evaluate")
MAP_METHODS = METHODS[1:]
VTK_EVERY_MS = 20.0
JUMP_MARGIN = 0.15      # rad added on each side of a block sector


class StageError(EcgiError):
    """A stage failed; ``stage`` names it and ``__cause__`` holds the original error."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


class MissingArtifactError(EcgiError):
    """A stage needs the output of an earlier stage that is absent or stale."""


def _fingerprint(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()[:16]


def forward_key(cfg: RunConfig) -> str:
    """Hash of the fields the forward run depends on (noise and seed excluded)."""
    d = dataclasses.asdict(cfg.scenario)
    for k in ("name", "noise_fraction", "rng_seed"):
        d.pop(k)
    return _fingerprint(d)


def inverse_key(cfg: RunConfig) -> str:
    return _fingerprint([forward_key(cfg), cfg.scenario.noise_fraction, cfg.scenario.rng_seed,
                         dataclasses.asdict(cfg.inverse)])


def write_series_csv(path, series: TimeSeries) -> Path:
    """Long format: one ``node,time,value`` row per node and sample."""
    n_t, n = series.values.shape
    nodes = np.tile(np.arange(n), n_t)
    times = np.repeat(series.times, n)
    with open(path, "w") as f:
        f.write("node,time,value\n")
        np.savetxt(f, np.column_stack([nodes, times, series.values.ravel()]),
                   fmt=["%d", "%.6f", "%.10g"], delimiter=",")
    return Path(path)


def write_activation_csv(path, maps: dict) -> Path:
    """Long format ``node,time,method``; non-activated nodes are written as ``nan``."""
    with open(path, "w") as f:
        f.write("node,time,method\n")
        for method, m in maps.items():
            for i, t in enumerate(m.times):
                f.write(f"{i},{t:.6f},{method}\n" if np.isfinite(t) else f"{i},nan,{method}\n")
    return Path(path)


class Pipeline:
    """One scenario run rooted at ``out_dir / cfg.scenario.name``."""

    def __init__(self, cfg: RunConfig, out_dir="runs", workers: int = 1, figures: bool = False):
        self.cfg = cfg
        self.root = Path(out_dir) / cfg.scenario.name
        self.workers = max(1, int(workers))
        self.figures = figures
        self.outputs: list[str] = []
        self.timings: dict[str, float] = {}
        self.metrics: dict | None = None
        self.block_jumps: dict | None = None
        self._inverse_geometry = None

    # ---------------------------------------------------------------- helpers

    def _path(self, rel: str) -> Path:
        p = self.root / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def _record(self, path: Path):
        rel = str(path.relative_to(self.root))
        if rel not in self.outputs:
            self.outputs.append(rel)

    def _load(self, rel: str, key: str, stage: str):
        path = self.root / rel
        if not path.exists():
            raise MissingArtifactError(f"{path} not found; run the '{stage}' stage first")
        with np.load(path, allow_pickle=False) as z:
            data = {k: z[k] for k in z.files}
        if str(data["key"]) != key:
            raise MissingArtifactError(
                f"{path} was produced with a different configuration; rerun '{stage}'")
        return data

    def inverse_geometry(self):
        """Inverse torso mesh and transfer operator (cached on disk by mesh and parameters)."""
        if self._inverse_geometry is None:
            sc = self.cfg.scenario
            torso = torso_mesh(sc.epi_radius, sc.torso_radius, sc.n_theta_inverse)
            op = build_transfer(torso, AveragedModelParams.from_scenario(sc),
                                cache_dir=self.root.parent / "cache")
            self._inverse_geometry = op
        return self._inverse_geometry

    def write_manifest(self, failed: str | None = None) -> Path:
        manifest = {
            "scenario": self.cfg.scenario.name,
            "config": self.cfg.source,
            "config_sha256": self.cfg.sha256,
            "seed": self.cfg.seed,
            "outputs": [o for o in self.outputs if (self.root / o).exists()],
            "timings": {k: round(v, 4) for k, v in self.timings.items()},
            "metrics": self.metrics,
        }
        if self.block_jumps is not None:
            manifest["block_jumps"] = self.block_jumps
        if failed is not None:
            manifest["failed_stage"] = failed
        path = self._path("manifest.json")
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return path

    def _run_stage(self, name, fn, *args):
        t0 = time.perf_counter()
        try:
            out = fn(*args)
        except (StageError, MissingArtifactError, ConfigError):
            self.write_manifest(failed=name)
            raise
        except EcgiError as exc:
            self.write_manifest(failed=name)
            raise StageError(name, exc) from exc
        except (np.linalg.LinAlgError, FloatingPointError) as exc:
            self.write_manifest(failed=name)
            raise StageError(name, exc) from exc
        self.timings[name] = time.perf_counter() - t0
        log.info("stage %s done in %.2f s", name, self.timings[name])
        self.write_manifest()
        return out

    # ----------------------------------------------------------------- stages

    def simulate(self):
        return self._run_stage("simulate", self._simulate)

    def _simulate(self):
        sc = self.cfg.scenario
        meshes = build_forward_meshes(sc)
        fw = run_forward(sc, workers=self.workers, keep_full=True, meshes=meshes)
        for name, series in (("V_epi", fw.V_epi), ("U_epi", fw.U_epi), ("Z_body", fw.Z_body)):
            self._record(write_series_csv(self._path(f"forward/{name}.csv"), series))
        self._record(write_activation_csv(self._path("forward/at_reference.csv"),
                                          {"reference": fw.AT_ref}))
        every = max(1, int(round(VTK_EVERY_MS / sc.dt_output)))
        v_full = np.zeros((fw.V_heart.n_times, meshes.full.n_nodes))
        v_full[:, meshes.heart_nodes] = fw.V_heart.values
        for k in range(0, fw.V_heart.n_times, every):
            t = fw.V_heart.times[k]
            path = self._path(f"forward/vtk/state_{int(round(t)):04d}ms.vtk")
            self._record(write_vtk(path, meshes.full, {"V": v_full[k], "U": fw.U_full[k]},
                                   title=f"{sc.name} t={t:g} ms"))
        path = self._path("forward/forward.npz")
        np.savez_compressed(path, key=forward_key(self.cfg), dt=sc.dt_output,
                            V_epi=fw.V_epi.values, U_epi=fw.U_epi.values,
                            Z_body=fw.Z_body.values, AT_ref=fw.AT_ref.times)
        self._record(path)
        return fw

    def reconstruct(self, skip_simulate: bool = False):
        if not skip_simulate:
            self.simulate()
        return self._run_stage("reconstruct", self._reconstruct)

    def _reconstruct(self):
        sc = self.cfg.scenario
        fwd = self._load("forward/forward.npz", forward_key(self.cfg), "simulate")
        dt = float(fwd["dt"])
        meshes = build_forward_meshes(sc)
        op = self.inverse_geometry()
        p_body = interpolation_matrix(meshes.body, op.body)
        p_epi = interpolation_matrix(meshes.epi, op.epi)
        z = TimeSeries((p_body @ fwd["Z_body"].T).T, dt)
        z = add_noise(z, sc.noise_fraction, sc.rng_seed)
        v_ref = TimeSeries((p_epi @ fwd["V_epi"].T).T, dt)
        at_ref = compute_reference_at(v_ref)
        solver = TikhonovSolver(op, self.cfg.inverse)
        rec = reconstruct_series(op, z, workers=self.workers, solver=solver)
        self._record(write_series_csv(self._path("inverse/Z_measured.csv"), z))
        self._record(write_series_csv(self._path("inverse/U_rec.csv"), rec.U_rec))
        self._record(write_series_csv(self._path("inverse/V_rec.csv"), rec.V_rec))
        path = self._path("inverse/residuals.json")
        path.write_text(json.dumps({
            "epsilon": self.cfg.inverse.epsilon,
            "epsilon_effective": solver.epsilon_eff,
            "condition": solver.condition,
            "time": z.times.tolist(),
            "data_misfit": rec.residual_norms.tolist(),
            "constraint_residual": rec.constraint_norms.tolist(),
        }, indent=1) + "\n")
        self._record(path)
        path = self._path("inverse/reconstruction.npz")
        np.savez_compressed(path, key=inverse_key(self.cfg), dt=dt, U_rec=rec.U_rec.values,
                            V_rec=rec.V_rec.values, AT_ref=at_ref.times,
                            epsilon_eff=solver.epsilon_eff, condition=solver.condition)
        self._record(path)
        return rec

    def postprocess(self):
        return self._run_stage("postprocess", self._postprocess)

    def _postprocess(self):
        rec = self._load("inverse/reconstruction.npz", inverse_key(self.cfg), "reconstruct")
        dt = float(rec["dt"])
        op = self.inverse_geometry()
        maps = {"reference": ActivationMap(rec["AT_ref"], "reference")}
        maps.update(activation_maps(TimeSeries(rec["U_rec"], dt), TimeSeries(rec["V_rec"], dt),
                                    op.epi, self.cfg.postprocess))
        self._record(write_activation_csv(self._path("maps/activation_times.csv"), maps))
        self._record(write_vtk(self._path("maps/activation_maps.vtk"), op.epi,
                               {k: m.times for k, m in maps.items()},
                               title=f"{self.cfg.scenario.name} activation maps"))
        path = self._path("maps/maps.npz")
        np.savez_compressed(path, key=inverse_key(self.cfg), postprocess=_fingerprint(
            dataclasses.asdict(self.cfg.postprocess)), **{k: m.times for k, m in maps.items()})
        self._record(path)
        return maps

    def load_maps(self) -> dict:
        data = self._load("maps/maps.npz", inverse_key(self.cfg), "postprocess")
        if str(data["postprocess"]) != _fingerprint(dataclasses.asdict(self.cfg.postprocess)):
            raise MissingArtifactError("activation maps are stale; rerun 'postprocess'")
        return {k: ActivationMap(data[k], k) for k in METHODS}

    def evaluate(self):
        return self._run_stage("evaluate", self._evaluate)

    def _evaluate(self):
        maps = self.load_maps()
        op = self.inverse_geometry()
        ref = maps["reference"]
        table = {m: map_errors(maps[m], ref, op.epi, op.mass_epi).as_dict() for m in MAP_METHODS}
        self.metrics = {self.cfg.scenario.name: table}
        path = self._path("metrics.json")
        path.write_text(json.dumps(self.metrics, indent=2, sort_keys=True) + "\n")
        self._record(path)
        if self.cfg.scenario.blocks:
            self.block_jumps = {}
            for i, b in enumerate(self.cfg.scenario.blocks):
                hw = 0.5 * b.width + JUMP_MARGIN
                self.block_jumps[f"block{i}"] = {
                    k: max_jump_across(m, op.epi, b.angle, hw) for k, m in maps.items()}
        if self.figures:
            from .plotting import plot_errors, plot_maps
            self._record(plot_maps(self._path("figures/maps.png"), maps, op.epi,
                                   self.cfg.scenario.name))
            self._record(plot_errors(self._path("figures/errors.png"), table,
                                     self.cfg.scenario.name))
        return self.metrics

    def run(self, skip_simulate: bool = False):
        self.reconstruct(skip_simulate=skip_simulate)
        self.postprocess()
        return self.evaluate()


def summary_grid(metrics: dict) -> str:
    """Method x (L2, CC, SC) table per scenario, comma-delimited."""
    lines = []
    for scenario, table in metrics.items():
        lines.append(f"# {scenario}")
        lines.append("method,l2,cc,sc,excluded_fraction")
        for method in MAP_METHODS:
            e = table[method]
            lines.append(f"{method},{e['l2']:.4f},{e['cc']:.4f},{e['sc']:.4f},"
                         f"{e['excluded_fraction']:.4f}")
    return "\n".join(lines)
