import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hill_orbits.monodromy import (
    ReducedMonodromySpatial,
    StructureError,
    characteristic_polynomial,
    classify_block,
    floquet_multipliers,
    monodromy_matrix,
    signatures,
    spatial_reduced_monodromy,
    stability,
)


def block(a, b):
    # [[a, b], [c, a]] with a² − bc = 1
    return np.array([[a, b], [(a * a - 1) / b, a]])


@pytest.mark.parametrize("a,b,kind", [
    (0.3, -1.0, "elliptic"), (0.3, 1.0, "elliptic"),
    (1.5, -1.0, "pos-hyperbolic-I"), (1.5, 1.0, "pos-hyperbolic-II"),
    (-1.5, 1.0, "neg-hyperbolic-I"), (-1.5, -1.0, "neg-hyperbolic-II"),
])
def test_block_classes(a, b, kind):
    assert classify_block(block(a, b)).kind == kind


@settings(max_examples=60, deadline=None)
@given(st.floats(-0.999, 0.999), st.sampled_from([-1.0, 1.0]), st.floats(0.1, 10.0))
def test_elliptic_angle_convention(a, sb, mag):
    c = classify_block(block(a, sb * mag))
    phi = math.acos(a)
    assert c.angle == pytest.approx(phi if sb < 0 else 2 * math.pi - phi, abs=1e-12)
    assert 2 * math.cos(c.angle) == pytest.approx(c.trace)


def test_degenerate_and_structure_errors():
    assert classify_block(np.eye(2)).kind == "degenerate"
    assert classify_block(-np.eye(2)).kind == "degenerate"
    with pytest.raises(StructureError):
        classify_block(np.array([[2.0, 0.0], [0.0, 2.0]]))
    with pytest.raises(StructureError):
        classify_block(np.array([[0.5, 1.0], [1.0, 0.5]]))


def test_planar_orbit_decouples(variational):
    M = monodromy_matrix(variational)
    planar, spatial = [0, 1, 3, 4], [2, 5]
    assert np.abs(M[np.ix_(planar, spatial)]).max() < 1e-8
    assert np.abs(M[np.ix_(spatial, planar)]).max() < 1e-8


def test_planar_blocks_have_unit_det(variational):
    st_ = stability(variational)
    assert st_.reduced.det_p == pytest.approx(1.0, abs=5e-4)
    assert st_.reduced.det_s == pytest.approx(1.0, abs=1e-9)
    assert [b.kind for b in st_.blocks] == ["elliptic", "elliptic"]


@pytest.mark.parametrize("name", ["g1v_orbit", "g2v_orbit"])
def test_spatial_structure(name, request):
    orbit = request.getfixturevalue(name)
    R = spatial_reduced_monodromy(orbit)
    res = R.structure_residuals()
    m = max(1.0, np.abs(R.assembled()).max())
    # linear identities scale with |M|, product identities with |M|²
    scale = {"B_sym": m, "C_sym": m, "D_AT": m, "CA_sym": m * m, "AB_sym": m * m, "A2_BC_I": m * m}
    for k, v in res.items():
        assert v / scale[k] < 1e-6, k


@pytest.mark.parametrize("name", ["variational", "g1v_orbit", "g2v_orbit"])
def test_reciprocity_and_palindrome(name, request):
    orbit = request.getfixturevalue(name)
    R = stability(orbit).reduced
    lams = np.array(floquet_multipliers(R))
    for lam in lams:
        assert np.min(np.abs(lams - 1 / lam)) < 1e-8 * max(1, abs(lam))
        assert np.min(np.abs(lams - np.conj(lam))) < 1e-8 * max(1, abs(lam))
    p = np.poly(R.assembled())
    scale = np.abs(p).max()
    np.testing.assert_allclose(p, p[::-1], atol=1e-8 * scale)
    np.testing.assert_allclose(characteristic_polynomial(R), p, atol=1e-6 * scale)


def _change_basis(R, Psi):
    Pi = np.linalg.inv(Psi)
    return ReducedMonodromySpatial(Pi @ R.A @ Psi, Pi @ R.B @ Pi.T, Psi.T @ R.C @ Psi, Psi.T @ R.D @ Pi.T)


@pytest.mark.parametrize("name", ["g1v_orbit", "g2v_orbit"])
def test_signature_invariance(name, request):
    orbit = request.getfixturevalue(name)
    R = spatial_reduced_monodromy(orbit)
    ref = [(e.sign_c, e.sign_b) for e in signatures(R)]
    rng = np.random.default_rng(42)
    n = 0
    while n < 100:
        Psi = rng.normal(size=(2, 2))
        if abs(np.linalg.det(Psi)) < 0.2:
            continue
        R2 = _change_basis(R, Psi)
        assert [(e.sign_c, e.sign_b) for e in signatures(R2)] == ref
        n += 1


def test_spatial_signs_match_rows(g1v_orbit, g2v_orbit):
    assert [b.signs for b in stability(g1v_orbit).blocks] == ["(-/-)", "(-/+)"]
    assert [b.signs for b in stability(g2v_orbit).blocks] == ["(-/-)", "(-/+)"]
