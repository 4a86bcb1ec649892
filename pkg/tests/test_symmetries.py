import numpy as np
import pytest
from dataclasses import replace
from hypothesis import given, settings, strategies as st

from hill_orbits import dynamics as dyn
from hill_orbits.integrator import flow, sample
from hill_orbits.symmetries import (
    FIXED_SETS,
    GROUP,
    OrbitSeed,
    OutsideHillRegion,
    build_seed_state,
    composition_table,
    perpendicularity_residual,
    refine_orbit,
    seed_velocity,
    shoot,
)

ORDER = ["id", "-id", "-sigma", "sigma", "rho1", "rho2", "rhobar1", "rhobar2"]
TABLE = """
id -id -sigma sigma rho1 rho2 rhobar1 rhobar2
-id id sigma -sigma rhobar2 rhobar1 rho2 rho1
-sigma sigma id -id rho2 rho1 rhobar2 rhobar1
sigma -sigma -id id rhobar1 rhobar2 rho1 rho2
rho1 rhobar2 rho2 rhobar1 id -sigma sigma -id
rho2 rhobar1 rho1 rhobar2 -sigma id -id sigma
rhobar1 rho2 rhobar2 rho1 sigma -id id -sigma
rhobar2 rho1 rhobar1 rho2 -id sigma -sigma id
"""


def test_composition_table_matches_published_table():
    rows = [r.split() for r in TABLE.strip().splitlines()]
    comp = composition_table()
    assert len(comp) == 64
    for a, row in zip(ORDER, rows):
        for b, c in zip(ORDER, row):
            assert comp[(a, b)] == c


@pytest.mark.parametrize("name", ORDER)
def test_involution_and_kind(name):
    g = GROUP[name]
    M = g.matrix
    np.testing.assert_array_equal(M @ M, np.eye(6))
    expected = "anti-symplectic" if name.startswith("rho") else "symplectic"
    assert g.kind == expected
    sign = 1 if expected == "symplectic" else -1
    np.testing.assert_array_equal(M.T @ dyn.J6 @ M, sign * dyn.J6)


@pytest.mark.parametrize("name", ORDER)
def test_hamiltonian_invariance(name):
    rng = np.random.default_rng(0)
    for _ in range(10):
        x = rng.normal(size=6)
        s = dyn.PhaseState.from_array(x)
        assert dyn.hamiltonian(GROUP[name](s)) == pytest.approx(dyn.hamiltonian(s), rel=1e-13)


@pytest.mark.parametrize("name", ["rho1", "rho2", "rhobar1", "rhobar2"])
def test_fixed_sets(name):
    fs = FIXED_SETS[name]
    g = GROUP[name]
    fixed = [i for i in range(6) if g.signs[i] == 1]
    assert tuple(fixed) == fs.free
    x = fs.project(np.arange(1.0, 7.0))
    np.testing.assert_array_equal(g(x), x)
    assert np.all(perpendicularity_residual(x, fs) == 0)


@pytest.mark.parametrize("name", ["id", "-id", "sigma", "-sigma", "rho1", "rho2", "rhobar1", "rhobar2"])
def test_flow_equivariance(name):
    g = GROUP[name]
    s = dyn.PhaseState([0.3, 0.1, 0.05], [0.05, 1.9, 0.1])
    t = 0.15
    lhs = g(flow(s, t)).as_array()
    if g.kind == "symplectic":
        rhs = flow(g(s), t).as_array()
    else:
        # anti-symplectic: ρ∘φ^t = φ^{-t}∘ρ
        rhs = flow(g(s), -t).as_array()
    np.testing.assert_allclose(lhs, rhs, atol=1e-8)


def test_seed_examples():
    v = seed_velocity(OrbitSeed("rho1", "rho2", 6.5088, {"q1": 0.176097}))
    assert v.qdot[1] == pytest.approx(2.222972, abs=1e-5)
    v = seed_velocity(OrbitSeed("rhobar1", "rho1", 3.046842, {"q1": 0.311905, "q2dot": 1.88871},
                                planar=False))
    assert v.qdot[2] == pytest.approx(0.299, abs=1e-3)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 1.5), st.floats(-2.0, 4.0))
def test_seed_energy_is_exact(q1, gamma):
    seed = OrbitSeed("rho1", "rho2", gamma, {"q1": q1})
    try:
        v = seed_velocity(seed)
    except OutsideHillRegion:
        return
    assert dyn.jacobi_gamma(v) == pytest.approx(gamma, abs=1e-12 * max(1, abs(gamma)) + 1e-12)


def test_outside_hill_region():
    with pytest.raises(OutsideHillRegion):
        build_seed_state(OrbitSeed("rho1", "rho2", 8.0, {"q1": 1.0}))


def test_shoot_variational_seed():
    t, r, _ = shoot(OrbitSeed("rho1", "rho2", 6.5088, {"q1": 0.176097}))
    assert t == pytest.approx(0.126990, abs=2e-5)
    assert np.abs(r).max() < 1e-3
    t2, r2, _ = shoot(OrbitSeed("rho1", "rho2", 6.5088, {"q1": 0.177097}))
    assert abs(r2[0]) > 1e-4 and np.sign(r2[0]) != np.sign(r[0]) or abs(r2[0] - r[0]) > 1e-4


def test_perturbed_state_residual():
    x = FIXED_SETS["rho1"].project(np.array([0.5, 0.0, 0.1, 0.0, 0.3, 0.0]))
    v = dyn.to_velocity(dyn.PhaseState.from_array(x))
    v.qdot[0] += 1e-3
    r = perpendicularity_residual(dyn.to_phase(v), FIXED_SETS["rho1"])
    assert np.abs(r).max() == pytest.approx(1e-3, rel=1e-9)


def test_refine_fixed_point(variational):
    again = refine_orbit(variational.seed)
    assert again.iterations <= 1
    np.testing.assert_allclose(again.initial.as_array(), variational.initial.as_array(), atol=1e-12)
    assert variational.period == pytest.approx(4 * variational.segment_time)


def test_time_reversal_symmetry(variational):
    T = variational.period
    ts = np.linspace(0, T, 17)[:-1]
    fwd = sample(variational.initial, ts)
    bwd = [flow(variational.initial, -t).as_array() for t in ts]
    rho = GROUP[variational.seed.start]
    for a, b in zip(fwd, bwd):
        np.testing.assert_allclose(a, rho(b), atol=1e-7)


def test_quarter_point_on_target_set(variational):
    x = flow(variational.initial, variational.period / 4)
    assert np.abs(perpendicularity_residual(x, FIXED_SETS["rho2"])).max() < 1e-8


def test_planar_orbits_stay_planar(variational):
    Y = sample(variational.initial, np.linspace(0, variational.period, 200))
    assert np.abs(Y[:, [2, 5]]).max() < 1e-12


def test_sigma_mirror_is_a_solution(g2v_orbit):
    x0 = GROUP["sigma"](g2v_orbit.initial)
    xe = flow(x0, g2v_orbit.period)
    assert np.abs(xe.as_array() - x0.as_array()).max() < 1e-8
    assert dyn.jacobi_gamma(dyn.to_velocity(x0)) == pytest.approx(g2v_orbit.gamma, abs=1e-10)


def test_simply_symmetric_multiplicity(gprime_orbit):
    assert gprime_orbit.seed.multiplicity == 2
    assert gprime_orbit.period == pytest.approx(2 * gprime_orbit.segment_time)
    assert gprime_orbit.closure < 1e-8


def test_gprime_row_refines():
    seed = OrbitSeed("rho1", "rho1", 4.347942, {"q1": 0.491443}, family="g'")
    from hill_orbits.symmetries import select_crossing
    o = refine_orbit(select_crossing(seed, 2.41792 / 3))
    assert o.velocity.qdot[1] == pytest.approx(0.668022, abs=1e-4)
