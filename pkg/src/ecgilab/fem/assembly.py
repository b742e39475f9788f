"""P1 finite-element assembly on triangle meshes and closed curves."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from ..errors import ParameterError
from .mesh import CurveMesh, Mesh2D


def _coefficient(coefficient, n_elements):
    c = np.broadcast_to(np.asarray(coefficient, dtype=float), (n_elements,)).copy()
    if not np.all(np.isfinite(c)) or np.any(c <= 0):
        bad = int(np.flatnonzero(~(c > 0))[0])
        raise ParameterError(f"coefficient must be strictly positive (element {bad}: {c[bad]})")
    return c


def _scatter(conn, local, n):
    k = conn.shape[1]
    rows = np.repeat(conn, k, axis=1).ravel()
    cols = np.tile(conn, (1, k)).ravel()
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def _p1_gradients(mesh: Mesh2D):
    """Barycentric basis gradients, shape (m, 3, 2), and element areas."""
    p = mesh.nodes[mesh.triangles]
    area = mesh.areas
    # grad(lambda_i) = rot90(opposite edge) / (2 area)
    e0 = p[:, 2] - p[:, 1]
    e1 = p[:, 0] - p[:, 2]
    e2 = p[:, 1] - p[:, 0]
    edges = np.stack([e0, e1, e2], axis=1)
    grads = np.stack([-edges[..., 1], edges[..., 0]], axis=-1) / (2 * area[:, None, None])
    return grads, area


def assemble_mass(mesh) -> sp.csr_matrix:
    """Consistent P1 mass matrix of a :class:`Mesh2D` or :class:`CurveMesh`."""
    mesh.check_elements()
    if isinstance(mesh, CurveMesh):
        ell = mesh.segment_lengths
        local = ell[:, None, None] * np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
        return _scatter(mesh.segments, local, mesh.n_nodes)
    area = mesh.areas
    local = area[:, None, None] * (np.ones((3, 3)) + np.eye(3)) / 12.0
    return _scatter(mesh.triangles, local, mesh.n_nodes)


def lumped_mass(mesh) -> np.ndarray:
    """Row-sum lumped mass (diagonal entries)."""
    return np.asarray(assemble_mass(mesh).sum(axis=1)).ravel()


def assemble_stiffness(mesh, coefficient=1.0) -> sp.csr_matrix:
    """P1 stiffness of ``-div(c grad u)``; ``coefficient`` is scalar or per element.

    On a curve this is the 1D Laplace-Beltrami operator along arc length.
    """
    mesh.check_elements()
    c = _coefficient(coefficient, mesh.n_elements)
    if isinstance(mesh, CurveMesh):
        w = c / mesh.segment_lengths
        local = w[:, None, None] * np.array([[1.0, -1.0], [-1.0, 1.0]])
        return _scatter(mesh.segments, local, mesh.n_nodes)
    grads, area = _p1_gradients(mesh)
    local = (c * area)[:, None, None] * np.einsum("eik,ejk->eij", grads, grads)
    return _scatter(mesh.triangles, local, mesh.n_nodes)


def element_gradient(mesh, field) -> np.ndarray:
    """Exact gradient of the P1 interpolant of ``field``, one value per element.

    Returns shape (m, 2) on a :class:`Mesh2D` and the scalar tangential
    derivative, shape (n,), on a :class:`CurveMesh`. A leading time axis
    in ``field`` is carried through.
    """
    f = np.asarray(field, dtype=float)
    if f.shape[-1] != mesh.n_nodes:
        raise ParameterError(f"field has {f.shape[-1]} values for {mesh.n_nodes} nodes")
    if isinstance(mesh, CurveMesh):
        return (np.roll(f, -1, axis=-1) - f) / mesh.segment_lengths
    grads, _ = _p1_gradients(mesh)
    fe = f[..., mesh.triangles]  # (..., m, 3)
    return np.einsum("...ei,eik->...ek", fe, grads)


def nodal_gradient_norm(curve: CurveMesh, field) -> np.ndarray:
    """Length-weighted average of adjacent segment |d/ds| values at each curve node."""
    g = np.abs(element_gradient(curve, field))
    ell = curve.segment_lengths
    prev = np.roll(np.arange(curve.n_nodes), 1)
    g_prev = g[..., prev]
    return (g_prev * ell[prev] + g * ell) / (ell[prev] + ell)
