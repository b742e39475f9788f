"""Accuracy of an activation map against the reference: L2, CC and SC."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from .errors import UndefinedMetricError
from .fem.assembly import element_gradient
from .fem.mesh import CurveMesh

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MapErrors:
    l2: float
    cc: float
    sc: float
    excluded_fraction: float = 0.0

    def as_dict(self) -> dict:
        return asdict(self)


def _times(at):
    return np.asarray(getattr(at, "times", at), dtype=float)


def _common(at, at_ref):
    a, r = _times(at), _times(at_ref)
    if a.shape != r.shape:
        raise ValueError(f"maps have different sizes: {a.shape} vs {r.shape}")
    keep = np.isfinite(a) & np.isfinite(r)
    return a, r, keep


def l2err(at, at_ref, mass) -> float:
    """Mass-weighted relative error sqrt(d' M d / ref' M ref), d = AT - AT_ref.

    Nodes non-activated in either map are dropped (rows and columns of M).
    """
    a, r, keep = _common(at, at_ref)
    if not keep.all():
        log.debug("l2err: excluding %d non-activated nodes", int((~keep).sum()))
    m = mass.tocsr()[keep][:, keep]
    d = a[keep] - r[keep]
    ref_norm = float(r[keep] @ (m @ r[keep]))
    if not ref_norm > 0:
        raise UndefinedMetricError("reference activation map has zero mass-weighted norm")
    return float(np.sqrt(max(float(d @ (m @ d)), 0.0) / ref_norm))


def _pearson(x, y, what):
    x = x - x.mean()
    y = y - y.mean()
    sx, sy = np.sqrt(x @ x), np.sqrt(y @ y)
    if sx == 0 or sy == 0:
        raise UndefinedMetricError(f"{what}: zero variance")
    return float(np.clip((x @ y) / (sx * sy), -1.0, 1.0))


def pearson_cc(at, at_ref) -> float:
    """Standard Pearson correlation over nodes activated in both maps."""
    a, r, keep = _common(at, at_ref)
    if keep.sum() < 2:
        raise UndefinedMetricError("pearson_cc: fewer than two common activated nodes")
    return _pearson(a[keep], r[keep], "pearson_cc")


def slowness_coefficient(at, at_ref, mesh) -> float:
    """Pearson correlation of stacked per-element gradient components of both maps.

    Elements touching a node that is non-activated in either map are left out.
    """
    a, r, keep = _common(at, at_ref)
    conn = mesh.segments if isinstance(mesh, CurveMesh) else mesh.triangles
    ok = keep[conn].all(axis=1)
    ga = element_gradient(mesh, np.where(keep, a, 0.0))[ok]
    gr = element_gradient(mesh, np.where(keep, r, 0.0))[ok]
    if ga.size < 2:
        raise UndefinedMetricError("slowness_coefficient: no element with both maps activated")
    return _pearson(ga.ravel(), gr.ravel(), "slowness_coefficient")


def map_errors(at, at_ref, mesh, mass) -> MapErrors:
    a, r, keep = _common(at, at_ref)
    return MapErrors(
        l2=l2err(a, r, mass),
        cc=pearson_cc(a, r),
        sc=slowness_coefficient(a, r, mesh),
        excluded_fraction=float(1.0 - keep.mean()),
    )


def max_jump_across(at, curve: CurveMesh, angle: float, half_width: float) -> float:
    """Largest AT difference between neighbouring nodes within an angular window.

    The window is centred on ``angle`` (rad) on the curve; pairs with a
    non-activated end are skipped. Returns NaN when no pair qualifies.
    """
    t = _times(at)
    theta = np.arctan2(curve.points[:, 1], curve.points[:, 0])
    inside = np.abs(np.angle(np.exp(1j * (theta - angle)))) <= half_width
    seg = curve.segments
    ok = inside[seg].all(axis=1) & np.isfinite(t[seg]).all(axis=1)
    if not ok.any():
        return float("nan")
    return float(np.max(np.abs(t[seg[ok, 1]] - t[seg[ok, 0]])))
