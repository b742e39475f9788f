"""Triangle meshes, closed curve meshes and procedural generators.

All mesh objects are immutable: arrays are copied on construction and
flagged read-only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import AssemblyError, GeometryError

# Per-node boundary tags.
INTERIOR = 0
EPICARDIAL = 1
BODY_SURFACE = 2
BLOOD = 3

TAG_NAMES = {
    INTERIOR: "interior",
    EPICARDIAL: "epicardial",
    BODY_SURFACE: "body_surface",
    BLOOD: "blood",
}
TAG_CODES = {name: code for code, name in TAG_NAMES.items()}

# Per-element region labels.
TORSO = 0
HEART = 1


def _frozen(a, dtype):
    out = np.array(a, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


def signed_areas(nodes: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p0, p1, p2 = (nodes[triangles[:, k]] for k in range(3))
    d1 = p1 - p0
    d2 = p2 - p0
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


@dataclass(frozen=True, eq=False)
class Mesh2D:
    """Linear triangle mesh in the plane.

    Parameters
    ----------
    nodes : array_like, shape (n, 2)
        Node coordinates in cm.
    triangles : array_like, shape (m, 3)
        Node indices of each triangle. Clockwise triangles are reoriented.
    tags : array_like, shape (n,), optional
        Boundary tag per node (``INTERIOR``, ``EPICARDIAL``, ...).
    regions : array_like, shape (m,), optional
        Region label per triangle (``TORSO`` or ``HEART``).
    """

    nodes: np.ndarray
    triangles: np.ndarray
    tags: np.ndarray = None
    regions: np.ndarray = None

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        tris = np.array(self.triangles, dtype=np.int64, copy=True)
        if nodes.ndim != 2 or nodes.shape[1] != 2:
            raise GeometryError(f"nodes must have shape (n, 2), got {nodes.shape}")
        if tris.ndim != 2 or tris.shape[1] != 3:
            raise GeometryError(f"triangles must have shape (m, 3), got {tris.shape}")
        if tris.size and (tris.min() < 0 or tris.max() >= len(nodes)):
            bad = int(np.flatnonzero((tris < 0).any(1) | (tris >= len(nodes)).any(1))[0])
            raise GeometryError(f"triangle {bad} references a node that does not exist")
        flip = signed_areas(nodes, tris) < 0
        tris[flip] = tris[flip][:, [0, 2, 1]]
        tags = np.zeros(len(nodes), dtype=np.int64) if self.tags is None else self.tags
        regions = np.zeros(len(tris), dtype=np.int64) if self.regions is None else self.regions
        tags = np.asarray(tags, dtype=np.int64)
        regions = np.asarray(regions, dtype=np.int64)
        if tags.shape != (len(nodes),):
            raise GeometryError("one tag per node is required")
        if regions.shape != (len(tris),):
            raise GeometryError("one region label per triangle is required")
        object.__setattr__(self, "nodes", _frozen(nodes, float))
        object.__setattr__(self, "triangles", _frozen(tris, np.int64))
        object.__setattr__(self, "tags", _frozen(tags, np.int64))
        object.__setattr__(self, "regions", _frozen(regions, np.int64))

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.triangles)

    @property
    def areas(self) -> np.ndarray:
        return signed_areas(self.nodes, self.triangles)

    @property
    def centroids(self) -> np.ndarray:
        return self.nodes[self.triangles].mean(axis=1)

    def edges(self) -> np.ndarray:
        """Unique undirected edges, shape (k, 2), sorted per row."""
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        return np.unique(np.sort(e, axis=1), axis=0)

    def boundary_edges(self) -> np.ndarray:
        t = self.triangles
        e = np.sort(np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]]), axis=1)
        uniq, counts = np.unique(e, axis=0, return_counts=True)
        return uniq[counts == 1]

    def check_elements(self):
        """Raise :class:`AssemblyError` naming the first degenerate triangle."""
        areas = self.areas
        scale = max(np.ptp(self.nodes[:, 0]), np.ptp(self.nodes[:, 1]), 1e-300)
        bad = np.flatnonzero(np.abs(areas) <= 1e-14 * scale**2)
        if bad.size:
            i = int(bad[0])
            raise AssemblyError(
                f"degenerate triangle {i} (nodes {self.triangles[i].tolist()}) has zero area"
            )


@dataclass(frozen=True, eq=False)
class CurveMesh:
    """Closed polygonal curve; segment ``i`` joins node ``i`` to ``i+1 mod n``.

    ``node_indices`` refers to the parent :class:`Mesh2D` when the curve was
    extracted from one, otherwise it is ``arange(n)``.
    """

    points: np.ndarray
    node_indices: np.ndarray = None
    segment_lengths: np.ndarray = field(init=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
            raise GeometryError("a closed curve needs at least 3 points of shape (n, 2)")
        idx = np.arange(len(pts)) if self.node_indices is None else self.node_indices
        idx = np.asarray(idx, dtype=np.int64)
        if idx.shape != (len(pts),):
            raise GeometryError("one node index per curve point is required")
        lengths = np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)
        object.__setattr__(self, "points", _frozen(pts, float))
        object.__setattr__(self, "node_indices", _frozen(idx, np.int64))
        object.__setattr__(self, "segment_lengths", _frozen(lengths, float))

    @property
    def n_nodes(self) -> int:
        return len(self.points)

    @property
    def n_elements(self) -> int:
        return len(self.points)

    @property
    def segments(self) -> np.ndarray:
        i = np.arange(self.n_nodes)
        return np.stack([i, (i + 1) % self.n_nodes], axis=1)

    @property
    def length(self) -> float:
        return float(self.segment_lengths.sum())

    @property
    def tangents(self) -> np.ndarray:
        d = np.roll(self.points, -1, axis=0) - self.points
        return d / self.segment_lengths[:, None]

    @property
    def angles(self) -> np.ndarray:
        """Polar angle of each node in [0, 2*pi)."""
        return np.mod(np.arctan2(self.points[:, 1], self.points[:, 0]), 2 * np.pi)

    def check_elements(self):
        bad = np.flatnonzero(self.segment_lengths <= 0.0)
        if bad.size:
            i = int(bad[0])
            raise AssemblyError(f"degenerate segment {i} has zero length")

    @classmethod
    def circle(cls, radius: float, n: int, theta0: float = 0.0) -> "CurveMesh":
        theta = theta0 + 2 * np.pi * np.arange(n) / n
        return cls(np.stack([radius * np.cos(theta), radius * np.sin(theta)], axis=1))

    @classmethod
    def from_mesh(cls, mesh: Mesh2D, tag: int) -> "CurveMesh":
        """Chain the nodes carrying ``tag`` into a counter-clockwise closed curve.

        Consecutive curve nodes must be joined by a mesh edge; every tagged
        node must have exactly two tagged neighbours.
        """
        tagged = mesh.tags == tag
        name = TAG_NAMES.get(tag, str(tag))
        if tagged.sum() < 3:
            raise GeometryError(f"fewer than 3 nodes tagged {name!r}")
        e = mesh.edges()
        e = e[tagged[e[:, 0]] & tagged[e[:, 1]]]
        nbrs: dict[int, list[int]] = {}
        for a, b in e:
            nbrs.setdefault(int(a), []).append(int(b))
            nbrs.setdefault(int(b), []).append(int(a))
        nodes = np.flatnonzero(tagged)
        for k in nodes:
            if len(nbrs.get(int(k), [])) != 2:
                raise GeometryError(
                    f"{name} nodes do not form a single closed polyline (node {k} has "
                    f"{len(nbrs.get(int(k), []))} tagged neighbours)"
                )
        start = int(nodes[0])
        order = [start]
        prev, cur = start, nbrs[start][0]
        while cur != start:
            order.append(cur)
            a, b = nbrs[cur]
            prev, cur = cur, (b if a == prev else a)
            if len(order) > len(nodes):
                break
        if len(order) != len(nodes):
            raise GeometryError(f"{name} nodes form more than one closed polyline")
        pts = mesh.nodes[order]
        x, y = pts[:, 0], pts[:, 1]
        if np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y) < 0:
            order = [order[0]] + order[1:][::-1]
        return cls(mesh.nodes[order], np.asarray(order))


# --------------------------------------------------------------------------
# Generators


def _checkerboard_quads(n_rings: int, n_theta: int, periodic: bool) -> np.ndarray:
    """Split structured quads along alternating diagonals (mirror symmetric)."""
    tris = []
    n_cols = n_theta if periodic else n_theta - 1
    for k in range(n_rings - 1):
        for j in range(n_cols):
            jp = (j + 1) % n_theta
            a = k * n_theta + j
            b = k * n_theta + jp
            c = (k + 1) * n_theta + jp
            d = (k + 1) * n_theta + j
            if (k + j) % 2 == 0:
                tris += [(a, b, c), (a, c, d)]
            else:
                tris += [(a, b, d), (b, c, d)]
    return np.asarray(tris, dtype=np.int64)


def graded_radii(r_inner: float, r_outer: float, n_theta: int, growth: float = 1.0) -> np.ndarray:
    """Radii whose spacing tracks the local arc length ``r * dtheta``.

    ``growth`` > 1 coarsens the radial spacing relative to the angular one.
    """
    dtheta = 2 * np.pi / n_theta
    ratio = 1.0 + growth * dtheta
    n = max(1, int(np.ceil(np.log(r_outer / r_inner) / np.log(ratio))))
    return r_inner * (r_outer / r_inner) ** (np.arange(n + 1) / n)


def annulus_mesh(radii, n_theta: int, inner_tag=INTERIOR, outer_tag=INTERIOR,
                 region=TORSO, theta0: float = 0.0) -> Mesh2D:
    """Structured annulus mesh with rings at ``radii`` and ``n_theta`` nodes per ring."""
    radii = np.asarray(radii, dtype=float)
    if np.any(np.diff(radii) <= 0) or radii[0] <= 0:
        raise GeometryError("annulus radii must be positive and strictly increasing")
    theta = theta0 + 2 * np.pi * np.arange(n_theta) / n_theta
    rr, tt = np.meshgrid(radii, theta, indexing="ij")
    nodes = np.stack([(rr * np.cos(tt)).ravel(), (rr * np.sin(tt)).ravel()], axis=1)
    tris = _checkerboard_quads(len(radii), n_theta, periodic=True)
    tags = np.full(len(nodes), INTERIOR)
    tags[:n_theta] = inner_tag
    tags[-n_theta:] = outer_tag
    return Mesh2D(nodes, tris, tags, np.full(len(tris), region))


def heart_torso_mesh(endo_radius: float, epi_radius: float, torso_radius: float,
                     n_theta: int, n_heart_layers: int, torso_growth: float = 1.0) -> Mesh2D:
    """Myocardial annulus surrounded by a torso annulus, sharing the epicardial ring."""
    r_heart = np.linspace(endo_radius, epi_radius, n_heart_layers + 1)
    r_torso = graded_radii(epi_radius, torso_radius, n_theta, torso_growth)
    radii = np.concatenate([r_heart, r_torso[1:]])
    mesh = annulus_mesh(radii, n_theta, inner_tag=BLOOD, outer_tag=BODY_SURFACE)
    tags = mesh.tags.copy()
    tags[n_heart_layers * n_theta:(n_heart_layers + 1) * n_theta] = EPICARDIAL
    n_heart_tris = 2 * n_heart_layers * n_theta
    regions = np.full(mesh.n_elements, TORSO)
    regions[:n_heart_tris] = HEART
    return Mesh2D(mesh.nodes, mesh.triangles, tags, regions)


def torso_mesh(epi_radius: float, torso_radius: float, n_theta: int,
               growth: float = 1.0) -> Mesh2D:
    """Torso annulus whose inner ring is the epicardium."""
    radii = graded_radii(epi_radius, torso_radius, n_theta, growth)
    return annulus_mesh(radii, n_theta, inner_tag=EPICARDIAL, outer_tag=BODY_SURFACE)


def rectangle_mesh(nx: int, ny: int, lx: float = 1.0, ly: float = 1.0,
                   diagonal: str = "right") -> Mesh2D:
    """Structured rectangle split along one diagonal family ('right', 'left' or 'cross')."""
    x = np.linspace(0.0, lx, nx + 1)
    y = np.linspace(0.0, ly, ny + 1)
    xx, yy = np.meshgrid(x, y)
    nodes = np.stack([xx.ravel(), yy.ravel()], axis=1)
    tris = []
    for j in range(ny):
        for i in range(nx):
            a = j * (nx + 1) + i
            b, c, d = a + 1, a + nx + 2, a + nx + 1
            use_right = diagonal == "right" or (diagonal == "cross" and (i + j) % 2 == 0)
            if use_right:
                tris += [(a, b, c), (a, c, d)]
            else:
                tris += [(a, b, d), (b, c, d)]
    return Mesh2D(nodes, np.asarray(tris))


def disk_mesh(radius: float, n_rings: int, n_theta: int) -> Mesh2D:
    """Disk made of a central fan plus a structured annulus; outer ring tagged body_surface."""
    radii = radius * np.arange(1, n_rings + 1) / n_rings
    ring = annulus_mesh(radii, n_theta, outer_tag=BODY_SURFACE) if n_rings > 1 else None
    centre = np.zeros((1, 2))
    theta = 2 * np.pi * np.arange(n_theta) / n_theta
    first = radii[0] * np.stack([np.cos(theta), np.sin(theta)], axis=1)
    fan = np.array([(0, 1 + j, 1 + (j + 1) % n_theta) for j in range(n_theta)])
    if ring is None:
        tags = np.r_[INTERIOR, np.full(n_theta, BODY_SURFACE)]
        return Mesh2D(np.vstack([centre, first]), fan, tags)
    nodes = np.vstack([centre, ring.nodes])
    tris = np.vstack([fan, ring.triangles + 1])
    tags = np.r_[INTERIOR, ring.tags]
    return Mesh2D(nodes, tris, tags)


def submesh(mesh: Mesh2D, region: int) -> tuple[Mesh2D, np.ndarray]:
    """Triangles of one region, renumbered. Returns (mesh, parent node index per node)."""
    tris = mesh.triangles[mesh.regions == region]
    if len(tris) == 0:
        raise GeometryError(f"no triangles in region {region}")
    used = np.unique(tris)
    remap = np.full(mesh.n_nodes, -1)
    remap[used] = np.arange(len(used))
    sub = Mesh2D(mesh.nodes[used], remap[tris], mesh.tags[used], np.full(len(tris), region))
    return sub, used
