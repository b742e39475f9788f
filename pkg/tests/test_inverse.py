import warnings

import numpy as np
import pytest

import ecgilab.inverse as inverse
from ecgilab.errors import ConfigError
from ecgilab.fem import assemble_stiffness
from ecgilab.fields import TimeSeries
from ecgilab.inverse import InverseConfig, TikhonovSolver, reconstruct_series, solve_timestep
from ecgilab.postprocess import activation_maps
from ecgilab.propagation import add_noise, compute_reference_at
from helpers import rel_err_mod_constant, smooth_crime_pair


def test_config_validation():
    with pytest.raises(ConfigError):
        InverseConfig(epsilon=0.0)
    with pytest.raises(ConfigError):
        InverseConfig(ridge=-1.0)
    with pytest.raises(ConfigError):
        InverseConfig(epsilon_scaling="auto")


def test_zero_data_zero_solution(inverse_op):
    u, v = solve_timestep(inverse_op, np.zeros(inverse_op.n_body))
    assert np.abs(u).max() == 0.0 and np.abs(v).max() == 0.0


def test_inverse_crime_recovers_v(inverse_op):
    u, v = smooth_crime_pair(inverse_op)
    z = inverse_op.predict(u, v)
    _, v_rec = solve_timestep(inverse_op, z, InverseConfig(epsilon=1e-6))
    assert rel_err_mod_constant(v_rec, v, inverse_op.mass_epi) < 0.01


def test_large_epsilon_flattens_v(inverse_op, case1_on_inverse):
    # the constant part of V is invisible to data, constraint and penalty alike and is
    # set to zero by the ridge, so the flatness is measured against a normal solution
    z = case1_on_inverse["Z"].values[60]
    k = assemble_stiffness(inverse_op.epi)
    _, v_ref = solve_timestep(inverse_op, z, InverseConfig(epsilon=1e-2))
    with pytest.warns(RuntimeWarning, match="ill-conditioned"):
        _, v_big = solve_timestep(inverse_op, z, InverseConfig(epsilon=1e6))
    assert np.linalg.norm(k @ v_big) < 1e-6 * np.linalg.norm(v_ref)


def test_identical_snapshots_identical_output(inverse_op, case1_on_inverse):
    z = np.tile(case1_on_inverse["Z"].values[50], (7, 1))
    rec = reconstruct_series(inverse_op, TimeSeries(z, 1.0))
    assert np.all(rec.V_rec.values == rec.V_rec.values[0])
    assert np.all(rec.U_rec.values == rec.U_rec.values[0])
    assert rec.V_rec.n_times == 7 and len(rec.residual_norms) == 7


def test_linearity(inverse_op, rng):
    solver = TikhonovSolver(inverse_op)
    z1, z2 = rng.normal(size=(2, inverse_op.n_body))
    u12, v12 = solver.solve(z1 + z2)
    u1, v1 = solver.solve(z1)
    u2, v2 = solver.solve(z2)
    # round-off bound for a normal matrix with condition ~1e12
    np.testing.assert_allclose(v12, v1 + v2, atol=1e-7 * np.abs(v12).max())
    np.testing.assert_allclose(u12, u1 + u2, atol=1e-7 * np.abs(u12).max())


def test_normal_equation_residual(inverse_op, case1_on_inverse):
    solver = TikhonovSolver(inverse_op)
    z = case1_on_inverse["Z"].values[40]
    u, v = solver.solve(z)
    x = np.concatenate([u, v])
    rhs = solver.rhs(z)
    assert np.linalg.norm(solver.normal @ x - rhs) <= 1e-10 * np.linalg.norm(rhs)


def test_monotone_in_epsilon(inverse_op, case1_on_inverse):
    """Fidelity (data + weighted constraint rows) grows and the penalty shrinks with epsilon."""
    z = case1_on_inverse["Z"].values[45]
    m_b = inverse_op.mass_body.toarray()
    fid, pen = [], []
    for eps in np.logspace(-4, 3, 8):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            s = TikhonovSolver(inverse_op, InverseConfig(epsilon=eps))
        u, v = s.solve(z)
        x = np.concatenate([u, v])
        r = inverse_op.data_block @ x - z
        c = s.weight * inverse_op.constraint_block @ x
        fid.append(r @ m_b @ r + c @ c)
        pen.append(v @ inverse_op.regularizer @ v)
    assert np.all(np.diff(fid) >= -1e-9 * max(fid))
    assert np.all(np.diff(pen) <= 1e-9 * max(pen))


def test_constant_shift_equivariance(inverse_op, case1_on_inverse):
    z = case1_on_inverse["Z"].values[45]
    s = TikhonovSolver(inverse_op)
    u0, v0 = s.solve(z)
    u1, v1 = s.solve(z + 5.0)
    np.testing.assert_allclose(u1 - u0, 5.0, rtol=1e-6)
    assert np.linalg.norm(v1 - v0) <= 1e-6 * np.linalg.norm(v0)


def test_workers_do_not_change_results(inverse_op, case1_on_inverse):
    z = case1_on_inverse["Z"]
    a = reconstruct_series(inverse_op, z, workers=1, chunk=16)
    b = reconstruct_series(inverse_op, z, workers=4, chunk=16)
    assert np.array_equal(a.V_rec.values, b.V_rec.values)
    assert np.array_equal(a.U_rec.values, b.U_rec.values)


def test_condition_warning(inverse_op, monkeypatch):
    monkeypatch.setattr(inverse, "COND_WARN", 1.0)
    with pytest.warns(RuntimeWarning, match="ill-conditioned"):
        TikhonovSolver(inverse_op)


def test_no_warning_at_default(inverse_op):
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        s = TikhonovSolver(inverse_op)
    assert np.isfinite(s.condition)


def test_case1_noisy_upstrokes_near_reference(inverse_op, case1_on_inverse):
    ref = compute_reference_at(case1_on_inverse["V"])
    z = add_noise(case1_on_inverse["Z"], 0.04, 0)
    rec = reconstruct_series(inverse_op, z)
    maps = activation_maps(rec.U_rec, rec.V_rec, inverse_op.epi)
    close = np.abs(maps["threshold"].times - ref.times) <= 15.0
    assert close.mean() >= 0.9
