import math

import numpy as np
import pytest

from lagrflow import families, temporal
from lagrflow.temporal import (AdmissibilityError, boost_gauge, fixed_time_component, gauge_transform,
                               lambda_invariant, minors, mirrored_solution_residuals, p_minors,
                               q_coefficients, relation_residuals, shear_gauge,
                               solve_time_component, validate_constants)
from lagrflow.verify import plucker_residuals

from conftest import FAMILY_IDS, catalog_flowmap


# ---------------------------------------------------------------- validation

def test_m5_elliptic_requires_nonzero_c12():
    with pytest.raises(AdmissibilityError) as info:
        validate_constants("m5-elliptic", {"c12": 0.0})
    assert ("c12", "c12 must be nonzero") in info.value.violations


def test_elliptic_gamma_squared():
    c = {"k": 0.4, "c12": -3.0, "c13": 0.5, "c14": 0.7, "c56": 1.3}
    out = validate_constants("m6-elliptic-kne1", c)
    want = c["c12"] ** 2 - (c["c12"] * c["k"] - c["c14"]) ** 2 - c["c13"] ** 2
    assert out["gamma2"] == pytest.approx(want)
    assert out["gamma"] == pytest.approx(math.sqrt(want))
    assert out["global_k"] is True


def test_elliptic_gamma_squared_must_be_positive():
    with pytest.raises(AdmissibilityError) as info:
        validate_constants("m6-elliptic-kne1", {"k": 0.4, "c12": 0.5, "c13": 2.0, "c14": 0.7, "c56": 1.3})
    assert info.value.violations[0][0] == "gamma^2"


def test_keq1_m_relation_violation_is_named():
    c = dict(families.get("m6-elliptic-keq1").catalog.constants)
    good = validate_constants("m6-elliptic-keq1", c)
    bad = {k: c[k] for k in ("c12", "gamma", "c36", "c46", "c56")}
    bad.update(m0=good["m0"] + 0.1, m1=good["m1"])
    with pytest.raises(AdmissibilityError) as info:
        validate_constants("m6-elliptic-keq1", bad)
    assert info.value.violations[0][0] == "m-relation"


def test_missing_and_non_numeric_constants():
    with pytest.raises(AdmissibilityError) as info:
        validate_constants("m4", {"c12": 1.0, "c13": "x"})
    names = [n for n, _ in info.value.violations]
    assert "c13" in names and "c14" in names


def test_missing_free_function_is_reported():
    with pytest.raises(AdmissibilityError) as info:
        solve_time_component("m5-elliptic", {"c12": 2.0}, {}, (0, 1))
    assert info.value.violations[0][0] == "free.b11"


def test_vanishing_free_function_is_rejected():
    with pytest.raises(AdmissibilityError):
        solve_time_component("m5-elliptic", {"c12": 2.0}, {"b11": "t - 0.5"}, (0, 1))


# ----------------------------------------------------------- constructions

def test_m5_elliptic_with_unit_b11():
    tc = solve_time_component("m5-elliptic", {"c12": 2.0}, {"b11": "1"}, (0.0, 1.0))
    for t in np.linspace(0, 1, 6):
        B, _, _, w = tc.eval_B(t)
        th = -2 * t      # theta' = -c12/b11^2 in the sign convention that yields Q12 = c12
        np.testing.assert_allclose(w, [0, 0, 2.0], atol=1e-12)
        want = [[1, 0, 0, math.cos(th), -math.sin(th)],
                [0, 1, 0, math.sin(th), math.cos(th)],
                [0, 0, 1, 0, 0]]
        np.testing.assert_allclose(B, want, atol=1e-9)
        assert q_coefficients(tc, t)[(1, 2)] == pytest.approx(2.0, abs=1e-9)


def test_exponential_example():
    tc = fixed_time_component("exponential", c1=1.0, c2=2.0)
    for t in (0.0, 0.3, 0.9):
        Q = q_coefficients(tc, t)
        expected = {(1, 6): 2.0, (2, 4): 4.0, (3, 5): -6.0}
        for key, val in Q.items():
            assert val == pytest.approx(expected.get(key, 0.0), abs=1e-12)


def test_second_degenerate_parabolic_example():
    c = {"k4": 1.0, "k2": 1.0, "k1": 0.0, "k5": 1.0, "k3": 1.0, "k6": 0.0, "k7": 0.0}
    tc = solve_time_component("m6-parabolic-2perhe", c, {}, (0.5, 2.0))
    res = relation_residuals(tc, tc.sample_times(25))
    assert max(res.values()) <= 1e-8


def test_degenerate_parabolic_lemmas_share_b12():
    for family, key in (("m6-parabolic-2perhe", "k5"), ("m6-parabolic-3perhe", "k3")):
        tc = catalog_flowmap(family).tc
        for t in (0.6, 1.1, 1.9):
            assert tc.eval_B(t)[0][0, 1] == pytest.approx(tc.constants[key] / t, rel=1e-14)


def test_constant_matrix_has_zero_derivatives():
    tc = fixed_time_component("constant", matrix=np.eye(3))
    A, Ad, Add = tc.eval_A(0.4)
    assert np.array_equal(A, np.eye(3))
    assert not Ad.any() and not Add.any()
    assert all(v == 0.0 for v in q_coefficients(tc, 0.4).values())


def test_trig_matrix_at_zero():
    tc = fixed_time_component("trig", theta0=0.7)
    A = tc.eval_A(0.0)[0]
    np.testing.assert_array_equal(A, [[1, 0, 1, 0, 0, 0], [0, 1, 0, 1, 0, 0], [0, 0, 0, 0, 1, 0]])


def test_eval_outside_horizon_raises():
    tc = catalog_flowmap("m4").tc
    with pytest.raises(ValueError):
        tc.eval_A(tc.horizon[1] + 1.0)


@pytest.mark.parametrize("family", FAMILY_IDS)
def test_derivatives_match_finite_differences(family):
    tc = catalog_flowmap(family).tc
    lo, hi = tc.horizon
    step = 1e-4 * (hi - lo)
    for t in np.linspace(lo + 0.1 * (hi - lo), hi - 0.1 * (hi - lo), 4):
        A, Ad, Add = tc.eval_A(t)
        Ap, Adp, _ = tc.eval_A(t + step)
        Am, Adm, _ = tc.eval_A(t - step)
        scale = 1 + np.max(np.abs(Ad))
        assert np.max(np.abs((Ap - Am) / (2 * step) - Ad)) <= 1e-6 * scale
        scale = 1 + np.max(np.abs(Add))
        assert np.max(np.abs((Adp - Adm) / (2 * step) - Add)) <= 1e-6 * scale


@pytest.mark.parametrize("family", FAMILY_IDS)
def test_declared_relations_hold(family):
    tc = catalog_flowmap(family).tc
    res = relation_residuals(tc, tc.sample_times(30))
    assert res and max(res.values()) <= 1e-8


@pytest.mark.parametrize("family", FAMILY_IDS)
def test_q_two_routes_agree(family):
    tc = catalog_flowmap(family).tc
    for t in tc.sample_times(5):
        a, b = q_coefficients(tc, t, "direct"), q_coefficients(tc, t, "rotation")
        for key in a:
            assert abs(a[key] - b[key]) <= 1e-10 * (1 + abs(a[key]))


def test_m4_q14_is_c14():
    tc = catalog_flowmap("m4").tc
    for t in tc.sample_times(11):
        assert q_coefficients(tc, t)[(1, 4)] == pytest.approx(tc.constants["c14"], abs=1e-10)


def test_identity_minors():
    p = minors(np.hstack([np.eye(3), np.zeros((3, 3))]))
    assert p[(1, 2, 3)] == 1.0
    assert all(v == 0.0 for k, v in p.items() if k != (1, 2, 3))


def test_m5_elliptic_minors():
    tc = catalog_flowmap("m5-elliptic").tc
    for t in tc.sample_times(7):
        p = p_minors(tc, t)
        assert p[(1, 2, 3)] == pytest.approx(1.0, abs=1e-10)
        assert p[(3, 4, 5)] == pytest.approx(1.0, abs=1e-10)
        assert abs(p[(1, 3, 4)] - p[(2, 3, 5)]) <= 1e-10
        assert abs(p[(1, 3, 5)] + p[(2, 3, 4)]) <= 1e-10


@pytest.mark.parametrize("family", ["m6-hyperbolic-i", "m6-elliptic-kne1", "m6-parabolic-main"])
def test_minors_satisfy_plucker_identities(family):
    tc = catalog_flowmap(family).tc
    for t in tc.sample_times(5):
        A = tc.eval_A(t)[0]
        scale = np.max(np.abs(A)) ** 6
        assert max(plucker_residuals(A).values()) <= 1e-12 * max(1.0, scale)


# --------------------------------------------------------- family invariants

def test_hyperbolic_lambda_invariant():
    tc = catalog_flowmap("m6-hyperbolic-i").tc
    c = tc.constants
    target = c["c16"] * c["c24"] * c["c35"]
    for t in tc.sample_times(30):
        assert abs(lambda_invariant(tc, t) - target) <= 1e-6


def test_exponential_lambda_invariant_closed_form():
    c1, c2 = 1.0, 2.0
    tc = fixed_time_component("exponential", c1=c1, c2=c2)
    Q = q_coefficients(tc, 0.5)
    assert Q[(1, 6)] * Q[(2, 4)] * Q[(3, 5)] == pytest.approx(-8 * c1 * c2 * (c1 + c2), abs=1e-12)
    for t in (0.0, 0.4, 1.0):
        assert lambda_invariant(tc, t) == pytest.approx(-8 * c1 * c2 * (c1 + c2), abs=1e-12)


def test_hyperbolic_ii_discrete_symmetry():
    tc = catalog_flowmap("m6-hyperbolic-ii").tc
    half = min(-tc.horizon[0], tc.horizon[1])
    assert mirrored_solution_residuals(tc, np.linspace(-half, half, 21)).max() <= 1e-8


def test_parabolic_discrete_symmetry():
    tc = catalog_flowmap("m6-parabolic-main").tc
    assert mirrored_solution_residuals(tc, tc.sample_times(21)).max() <= 1e-8


def test_discrete_symmetry_unknown_family():
    with pytest.raises(ValueError):
        mirrored_solution_residuals(catalog_flowmap("m4").tc, [0.5])


def test_hyperbolic_root_branch_selection():
    # c24 c35 > 0 > c16 gives two positive roots for b22^2
    c = {"c16": -2.0, "c24": 0.3, "c35": 0.4}
    runs = {which: solve_time_component("m6-hyperbolic-i", c, {"b11": "1"}, (0.0, 0.3),
                                        init={"root": which})
            for which in ("smaller", "larger")}
    b22 = {k: tc.eval_B(0.0)[0][1, 1] for k, tc in runs.items()}
    assert b22["smaller"] < b22["larger"]
    for tc in runs.values():
        res = relation_residuals(tc, tc.sample_times(20))
        assert max(res.values()) <= 1e-8


def test_hyperbolic_root_loss_is_reported():
    c = {"c16": -2.0, "c24": 0.3, "c35": 0.4}
    with pytest.raises(temporal.RootLossError, match="near t="):
        solve_time_component("m6-hyperbolic-i", c, {"b11": "1"}, (0.0, 3.0))


def test_keq1_truncates_before_theta_reaches_pi():
    tc = catalog_flowmap("m6-elliptic-keq1").tc
    assert tc.blowup is not None and tc.blowup["reason"] == "theta reaches pi"
    assert tc.horizon[1] < tc.requested_horizon[1]
    theta = tc.state_jets(tc.horizon[1])[1][0].v
    assert math.pi - 0.06 < theta < math.pi


# ------------------------------------------------------------------- gauge

def test_identity_gauge():
    fm = catalog_flowmap("m4")
    g = gauge_transform(fm, np.eye(4))
    z = np.array([0.2, -0.3, 0.4])
    for t in (0.3, 1.1):
        assert np.array_equal(g.phi(z, t), fm.phi(z, t))


def test_shear_gauge_removes_m4_minors(rng):
    fm = catalog_flowmap("m4")
    # leave the normal form with a generic shear, then undo it
    e124, e134 = 0.7, -0.4
    H = np.linalg.inv(shear_gauge(e124, e134))
    off = gauge_transform(fm, H)
    t = 0.8
    p = minors(off.tc.eval_A(t)[0])
    assert p[(1, 2, 4)] == pytest.approx(e124, abs=1e-10)
    assert p[(1, 3, 4)] == pytest.approx(e134, abs=1e-10)
    back = gauge_transform(off, shear_gauge(p[(1, 2, 4)], p[(1, 3, 4)]))
    p = minors(back.tc.eval_A(t)[0])
    assert abs(p[(1, 2, 4)]) <= 1e-10 and abs(p[(1, 3, 4)]) <= 1e-10
    z = rng.uniform(-1, 1, (3, 20))
    assert np.max(np.abs(back.phi(z, t) - fm.phi(z, t))) <= 1e-12


def test_boost_gauge_keeps_phi_and_moves_c14_c15(rng):
    fm = catalog_flowmap("m5-elliptic")
    H = boost_gauge(0.6, 0.3)
    g = gauge_transform(fm, H)
    z = rng.uniform(-1, 1, (3, 50))
    for t in fm.tc.sample_times(4):
        assert np.max(np.abs(g.phi(z, t) - fm.phi(z, t))) <= 1e-12
    Q = q_coefficients(g.tc, 0.5)
    assert abs(Q[(1, 4)]) > 1e-3 or abs(Q[(1, 5)]) > 1e-3
    back = gauge_transform(g, np.linalg.inv(H))
    Q = q_coefficients(back.tc, 0.5)
    assert abs(Q[(1, 4)]) <= 1e-10 and abs(Q[(1, 5)]) <= 1e-10


def test_singular_gauge_is_rejected():
    H = np.eye(4)
    H[3, 3] = 0.0
    with pytest.raises(np.linalg.LinAlgError):
        gauge_transform(catalog_flowmap("m4"), H)


# ---------------------------------------------------------------- perturbing

def test_perturbation_breaks_declared_constants():
    tc = solve_time_component("m5-elliptic", {"c12": 2.0}, {"b11": "1+0.2*sin(t)"}, (0, 1),
                              perturb={"c12": 1.1})
    res = relation_residuals(tc, tc.sample_times(10))
    assert res["Q12"] == pytest.approx(0.2, rel=1e-6)


def test_unknown_perturbation_name():
    with pytest.raises(KeyError):
        solve_time_component("m5-elliptic", {"c12": 2.0}, {"b11": "1"}, (0, 1), perturb={"c99": 1.1})
