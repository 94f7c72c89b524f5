import numpy as np
import pytest

from crackfield.cracks import CrackFamily, CrackGeometry, IsotropicElastic
from crackfield.errors import InvariantViolation, RateOverflowError
from crackfield.io import read_csv
from crackfield.kinetics import (
    LoadProgram,
    MaterialState,
    ModelParams,
    energy_budget,
    integrate,
    kinetics_rhs,
    snapshot,
    stress_rhs,
)
from crackfield.tensor import SymTensor2


def _params(normals, H=1.0, **kw):
    fams = [CrackFamily.from_normal(n, 0.5, 0.8, U=0.3, index=k) for k, n in enumerate(normals)]
    return ModelParams(fams, CrackGeometry.from_theta(0.3, v0=1.5), IsotropicElastic(1.0, 0.25), H=H, **kw)


def test_load_program_interpolation():
    prog = LoadProgram.from_components("strain", [0, 1, 3], [[0] * 6, [1, 0, 0, 0, 0, 0], [1, 2, 0, 0, 0, 0]])
    np.testing.assert_allclose(prog.value(0.5)[:2], [0.5, 0.0])
    np.testing.assert_allclose(prog.value(2.0)[:2], [1.0, 1.0])
    np.testing.assert_allclose(prog.rate(2.0)[:2], [0.0, 1.0])
    with pytest.raises(ValueError):
        LoadProgram.from_components("strain", [0, 0], [[0] * 6, [0] * 6])
    with pytest.raises(ValueError):
        LoadProgram.from_components("torque", [0], [[0] * 6])


def test_initial_state_is_consistent():
    params = _params([[1, 0, 0], [0, 1, 0]])
    s = SymTensor2.from_components(0.2, 0.1, 0, 0.05, 0, 0)
    st = MaterialState.initial(params, sigma=s, p=[0.1, 0.2])
    np.testing.assert_allclose(st.u.mandel, st.eps.mandel)
    with pytest.raises(ValueError):
        MaterialState.initial(params, T=0.0)
    with pytest.raises(InvariantViolation):
        MaterialState.initial(params, p=[0.7, 0.7])


def test_shear_model_reduction():
    params = _params([[1, 0, 0], [0, 1, 0]])
    shear = params.to_shear_model(T=0.8)
    s12 = 0.4
    for p in (0.0, 0.2, 0.6):
        st = MaterialState.initial(params, sigma=SymTensor2.from_components(c12=s12), p=[p / 2, p / 2], T=0.8)
        total = kinetics_rhs(st, params).sum()
        assert total == pytest.approx(float(shear.rhs(p, s12)), rel=1e-12)
    with pytest.raises(ValueError):
        _params([[1, 0, 0], [0, 0, 1]]).to_shear_model(1.0)


def test_stress_rhs_inverts_total_strain_rate():
    params = _params([[1, 0, 0], [0, 1, 1]])
    st = MaterialState.initial(params, sigma=SymTensor2.from_components(0.3, -0.1, 0, 0.2, 0, 0), p=[0.1, 0.1])
    du = np.array([0.1, 0.0, 0.0, 0.05, 0.0, 0.0])
    ds = stress_rhs(st, du, params).mandel
    snap = snapshot(st.sigma, st.p, st.T, params)
    np.testing.assert_allclose(snap.pl.mu @ ds + snap.viscous_strain_rate(), du, atol=1e-13)


def test_rate_overflow_is_reported():
    params = _params([[1, 0, 0]], H=0.0)
    st = MaterialState.initial(params, sigma=SymTensor2.from_components(c12=1e3), T=1e-3)
    with pytest.raises(RateOverflowError):
        kinetics_rhs(st, params)


def test_strain_run_from_rest_with_many_families():
    # at zero stress every family lies on the open/closed boundary
    params = _params([[1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 1, 1]], gamma=0.05, G=0.01)
    prog = LoadProgram.ramp("strain", SymTensor2.from_components(0.2, -0.1, 0.05, 0.1, 0, 0), 2.0)
    traj = integrate(MaterialState.initial(params), prog, params, 2.0, t_eval=np.linspace(0, 2, 11))
    assert energy_budget(traj, params).relative < 1e-6
    assert np.all(np.diff(traj.t) >= 0)
    assert traj.p[-1].sum() > 0
    np.testing.assert_allclose(traj.u, traj.eps + traj.r, atol=1e-6)


def test_stress_controlled_run_tracks_program():
    params = _params([[1, 0, 0], [0, 1, 0]])
    prog = LoadProgram.from_components("stress", [0, 1, 2], [[0] * 6, [0, 0, 0, 0.4, 0, 0], [-0.3, 0, 0, 0.4, 0, 0]])
    traj = integrate(MaterialState.initial(params), prog, params, 2.0, t_eval=np.linspace(0, 2, 21))
    for i in range(0, len(traj), 7):
        np.testing.assert_allclose(traj.sigma[i], prog.value(traj.t[i]), atol=1e-12)
    assert energy_budget(traj, params).relative < 1e-6
    # the compressive ramp closes the family normal to x1
    assert any(0 in hit for _, hit in traj.events)


def test_trajectory_csv(tmp_path):
    params = _params([[1, 0, 0]])
    prog = LoadProgram.ramp("strain", SymTensor2.from_components(c11=0.1), 1.0)
    traj = integrate(MaterialState.initial(params), prog, params, 1.0, t_eval=np.linspace(0, 1, 5))
    traj.to_csv(tmp_path / "t.csv")
    schema, header, data = read_csv(tmp_path / "t.csv")
    assert schema == "v1"
    assert header[:2] == ["t", "p_1"] and header[-2:] == ["T", "w"]
    np.testing.assert_array_equal(data[:, 0], traj.t)


def test_integrate_argument_checks():
    params = _params([[1, 0, 0]])
    prog = LoadProgram.ramp("strain", SymTensor2.from_components(c11=0.1), 1.0)
    with pytest.raises(ValueError):
        integrate(MaterialState.initial(params), prog, params, 0.0)
    with pytest.raises(ValueError):
        integrate(MaterialState.initial(params), prog, params, 2.0)
