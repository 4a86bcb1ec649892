import numpy as np
import pytest
from dataclasses import replace

from hill_orbits import dynamics as dyn
from hill_orbits.integrator import (
    DEFAULT_CONFIG,
    IntegrationConfig,
    IntegrationError,
    TangentFrame,
    crossing_times,
    flow,
    flow_with_frame,
    locate_section_crossing,
    rk4_step,
    sample,
)

S0 = dyn.PhaseState([0.3, 0.0, 0.05], [0.0, 1.9, 0.1])


def test_energy_drift_per_period(variational):
    T = variational.period
    s = flow(variational.initial, T)
    drift = abs(dyn.hamiltonian(s) - dyn.hamiltonian(variational.initial))
    assert drift < 1e-9


def test_frame_is_symplectic_after_one_period(variational):
    _, F = flow_with_frame(variational.initial, None, variational.period)
    M = F.columns
    assert np.abs(M.T @ dyn.J6 @ M - dyn.J6).max() < 1e-8


def test_rk4_order_slope():
    T = 0.3
    ref = flow(S0, T, replace(DEFAULT_CONFIG, step=1e-5)).as_array()
    hs = np.array([4e-3, 2e-3, 1e-3, 5e-4])
    errs = [np.abs(flow(S0, T, replace(DEFAULT_CONFIG, step=h)).as_array() - ref).max() for h in hs]
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert 3.8 <= slope <= 4.2


def test_single_step_matches_flow():
    a = rk4_step(S0, 1e-3).as_array()
    b = flow(S0, 1e-3, replace(DEFAULT_CONFIG, step=1e-3)).as_array()
    np.testing.assert_allclose(a, b, atol=1e-15)


def test_frame_matches_finite_differences():
    t = 0.2
    _, F = flow_with_frame(S0, TangentFrame.identity(), t)
    h = 1e-6
    x0 = S0.as_array()
    fd = np.column_stack([
        (flow(dyn.PhaseState.from_array(x0 + h * e), t).as_array()
         - flow(dyn.PhaseState.from_array(x0 - h * e), t).as_array()) / (2 * h)
        for e in np.eye(6)])
    np.testing.assert_allclose(F.columns, fd, atol=1e-6)


def test_flow_direction_is_eigenvector_of_monodromy(variational):
    _, F = flow_with_frame(variational.initial, None, variational.period)
    f = dyn.vector_field(variational.initial)
    np.testing.assert_allclose(F.columns @ f, f, atol=1e-6 * np.abs(f).max())


def test_sample_rejects_unsorted_times():
    with pytest.raises(ValueError):
        sample(S0, [0.2, 0.1])


def test_sample_agrees_with_flow():
    ts = [0.0, 0.05, 0.13]
    Y = sample(S0, ts)
    for t, y in zip(ts, Y):
        np.testing.assert_allclose(y, flow(S0, t).as_array(), atol=1e-12)


def test_section_crossing_lands_on_section(variational):
    c = locate_section_crossing(variational.initial, 0, count=1, include_start=False)
    assert abs(c.state.q[0]) < 1e-11
    assert c.time == pytest.approx(variational.period / 4, abs=1e-8)
    ts = crossing_times(variational.initial, 0, variational.period * 1.01)
    assert len(ts) == 2


def test_max_time_guard():
    with pytest.raises(IntegrationError):
        flow(S0, 10.0, IntegrationConfig(max_time=1.0))


@pytest.mark.parametrize("field,value", [("step", 0.0), ("tol_event", -1.0), ("max_time", 0.0)])
def test_config_validation(field, value):
    with pytest.raises(ValueError):
        IntegrationConfig(**{field: value})


def test_collision_is_reported():
    s = dyn.to_phase(dyn.VelocityState(np.array([0.01, 0.0, 0.0]), np.array([-5.0, 0.0, 0.0])))
    with pytest.raises(dyn.CollisionError):
        flow(s, 0.1, IntegrationConfig(floor=5e-3))
