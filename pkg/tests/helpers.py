"""Shared constructions for the test-suite."""

import numpy as np


def smooth_crime_pair(op):
    """A smooth (U*, V*) on the inverse curve with zero constraint residual."""
    th = op.epi.angles
    v = np.cos(th) + 0.5 * np.sin(2 * th) + 0.2 * np.cos(3 * th)
    n = op.n_epi
    cu, cv = op.constraint_block[:, :n], op.constraint_block[:, n:]
    u = np.linalg.lstsq(cu, -cv @ v, rcond=None)[0]
    return u, v


def rel_err_mod_constant(x, ref, mass):
    """FEM-L2 relative error after removing the mass-weighted means."""
    m = mass.toarray() if hasattr(mass, "toarray") else mass
    w = m.sum(axis=1)

    def centre(a):
        return a - (w @ a) / w.sum()

    d, r = centre(x) - centre(ref), centre(ref)
    return float(np.sqrt(d @ m @ d / (r @ m @ r)))


def ring_conduction_velocity(n_theta, n_layers, dt, t_end=110.0):
    """Front speed (cm/ms) along the epicardium of a homogeneous ring, fitted over 90 degrees."""
    from ecgilab.fem import HEART, heart_torso_mesh, submesh
    from ecgilab.propagation import Monodomain, MonodomainState, MSParams, StimulusSpec

    full = heart_torso_mesh(2.0, 3.0, 10.0, n_theta, n_layers)
    heart, _ = submesh(full, HEART)
    r = np.linalg.norm(heart.nodes, axis=1)
    th = np.arctan2(heart.nodes[:, 1], heart.nodes[:, 0])
    model = Monodomain(heart, MSParams(), (StimulusSpec(angle=0.0),), dt, midline_radius=2.5)
    s = MonodomainState.rest(heart.n_nodes)
    at = np.full(heart.n_nodes, np.nan)
    while s.t < t_end - 1e-9:
        v0 = s.v
        s = model.step(s)
        hit = (v0 < 0.5) & (s.v >= 0.5) & np.isnan(at)
        at[hit] = s.t - dt + dt * (0.5 - v0[hit]) / (s.v[hit] - v0[hit])
    sel = (np.abs(r - r.max()) < 1e-9) & (th >= np.pi / 4 - 1e-9) & (th <= 3 * np.pi / 4 + 1e-9)
    slope = np.polyfit(r.max() * th[sel], at[sel], 1)[0]
    return 1.0 / slope


def traveling_ramp(n=120, radius=None, dt=1.0, n_t=160, a=0.1, c=0.05, t0=5.0):
    """Clamped linear ramp v = clamp(a (t - t0 - s/c)) travelling along a uniform ring.

    ``s`` is the arc position measured from node 0 the long way round, so the
    front never wraps within the record. Returns (curve, series, front) where
    ``front`` is the time the ramp passes its midpoint at each node.
    """
    from ecgilab.fem import CurveMesh
    from ecgilab.fields import TimeSeries

    dx = c * dt            # one node per output step
    radius = n * dx / (2 * np.pi) if radius is None else radius
    curve = CurveMesh.circle(radius, n)
    s = np.arange(n) * curve.segment_lengths[0]
    t = np.arange(n_t) * dt
    v = np.clip(a * (t[:, None] - t0 - s[None, :] / c), 0.0, 1.0)
    front = t0 + s / c + 0.5 / a
    return curve, TimeSeries(v, dt), front, s
