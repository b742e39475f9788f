"""P1 interpolation between meshes.

Point location is brute force over all elements with barycentric tests;
the meshes handled here are small enough that this is not a bottleneck.
Interpolation is returned as a sparse matrix so one location pass serves a
whole time series.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from ..errors import GeometryError
from .mesh import CurveMesh, Mesh2D

INSIDE_TOL = 1e-9  # cm


def barycentric(mesh: Mesh2D, points: np.ndarray) -> np.ndarray:
    """Barycentric coordinates of every point in every triangle, shape (p, m, 3)."""
    p = mesh.nodes[mesh.triangles]
    a, b, c = p[:, 0], p[:, 1], p[:, 2]
    det = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (c[:, 0] - a[:, 0]) * (b[:, 1] - a[:, 1])
    dx = points[:, None, 0] - a[None, :, 0]
    dy = points[:, None, 1] - a[None, :, 1]
    l1 = (dx * (c[:, 1] - a[:, 1]) - dy * (c[:, 0] - a[:, 0])) / det
    l2 = (dy * (b[:, 0] - a[:, 0]) - dx * (b[:, 1] - a[:, 1])) / det
    return np.stack([1.0 - l1 - l2, l1, l2], axis=-1)


def _tri_distance(mesh: Mesh2D, pts: np.ndarray) -> np.ndarray:
    """Distance from each point to each triangle (0 inside), shape (p, m)."""
    best = np.full((len(pts), mesh.n_elements), np.inf)
    for i, j in ((0, 1), (1, 2), (2, 0)):
        a = mesh.nodes[mesh.triangles[:, i]]
        b = mesh.nodes[mesh.triangles[:, j]]
        ab = b - a
        t = ((pts[:, None, :] - a[None]) * ab[None]).sum(-1) / (ab * ab).sum(-1)[None]
        t = np.clip(t, 0.0, 1.0)
        q = a[None] + t[..., None] * ab[None]
        best = np.minimum(best, np.linalg.norm(pts[:, None, :] - q, axis=-1))
    return best


def mesh_interpolation_matrix(src: Mesh2D, points, tol: float = INSIDE_TOL,
                              chunk: int = 128) -> sp.csr_matrix:
    """Sparse (n_points, src.n_nodes) P1 evaluation matrix at ``points``.

    Points within ``tol`` of the mesh but outside it are evaluated with the
    clamped barycentric coordinates of the nearest triangle.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    rows, cols, vals = [], [], []
    for start in range(0, len(points), chunk):
        pts = points[start:start + chunk]
        lam = barycentric(src, pts)
        inside = lam.min(axis=-1)
        k = np.argmax(inside, axis=1)
        ok = inside[np.arange(len(pts)), k] >= -1e-12
        if not ok.all():
            dist = _tri_distance(src, pts[~ok])
            near = np.argmin(dist, axis=1)
            d = dist[np.arange(len(near)), near]
            if np.any(d > tol):
                bad = start + int(np.flatnonzero(~ok)[np.argmax(d > tol)])
                raise GeometryError(
                    f"point {bad} at {points[bad].tolist()} lies {float(d.max()):.3g} cm "
                    f"outside the source mesh (tolerance {tol:g})"
                )
            k[~ok] = near
        w = lam[np.arange(len(pts)), k]
        w = np.clip(w, 0.0, None)
        w /= w.sum(axis=1, keepdims=True)
        rows.append(np.repeat(start + np.arange(len(pts)), 3))
        cols.append(src.triangles[k].ravel())
        vals.append(w.ravel())
    mat = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(len(points), src.n_nodes),
    )
    mat.eliminate_zeros()
    return mat


def curve_interpolation_matrix(src: CurveMesh, points, tol: float | None = None) -> sp.csr_matrix:
    """Sparse evaluation matrix of the piecewise-linear field on ``src`` at ``points``.

    Each point is projected onto the nearest segment of the source polygon,
    which is linear interpolation in arc length. The default tolerance is 5%
    of the longest source segment, enough to absorb the chord/arc gap
    between two polygonal approximations of the same smooth curve.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if tol is None:
        tol = 0.05 * float(src.segment_lengths.max())
    a = src.points
    ab = np.roll(a, -1, axis=0) - a
    t = ((points[:, None, :] - a[None]) * ab[None]).sum(-1) / (ab * ab).sum(-1)[None]
    t = np.clip(t, 0.0, 1.0)
    q = a[None] + t[..., None] * ab[None]
    dist = np.linalg.norm(points[:, None, :] - q, axis=-1)
    seg = np.argmin(dist, axis=1)
    d = dist[np.arange(len(points)), seg]
    if np.any(d > tol):
        bad = int(np.argmax(d > tol))
        raise GeometryError(
            f"point {bad} at {points[bad].tolist()} lies {d[bad]:.3g} cm from the source "
            f"curve (tolerance {tol:g})"
        )
    tt = t[np.arange(len(points)), seg]
    n = src.n_nodes
    rows = np.repeat(np.arange(len(points)), 2)
    cols = np.stack([seg, (seg + 1) % n], axis=1).ravel()
    vals = np.stack([1.0 - tt, tt], axis=1).ravel()
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(len(points), n))
    mat.eliminate_zeros()
    return mat


def interpolation_matrix(src, dst, tol: float | None = None) -> sp.csr_matrix:
    dst_pts = dst.points if isinstance(dst, CurveMesh) else dst.nodes
    if isinstance(src, CurveMesh):
        return curve_interpolation_matrix(src, dst_pts, tol)
    return mesh_interpolation_matrix(src, dst_pts, INSIDE_TOL if tol is None else tol)


def interpolate(src, dst, field, tol: float | None = None) -> np.ndarray:
    """Interpolate a nodal field (or a (time, node) series) from ``src`` onto ``dst`` nodes."""
    mat = interpolation_matrix(src, dst, tol)
    f = np.asarray(field, dtype=float)
    return (mat @ f.T).T if f.ndim == 2 else mat @ f
