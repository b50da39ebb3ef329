import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lagrflow import families
from lagrflow.exprcore import evaluate, parse
from lagrflow.spatial import (CONSTRAINTS, ExtensionError, SpatialComponent, SpatialConstraintError,
                              SpatialSchemaError, build_spatial, hyperbolic_extension_build,
                              integrate_q2, linear_transform, parabolic_extension_build,
                              sample_points, spatial_constraint_residuals, spatial_minors,
                              two_forms)

from conftest import FAMILY_IDS

RANDOM_V = SpatialComponent(["z1", "z2", "z3", "sin(z1*z2) + z3^3", "exp(0.3*z1)*cos(z3) - z2^2",
                             "z1*z2*z3 + tanh(z2)"])


def _perm_sign(perm):
    sign, perm = 1, list(perm)
    for i in range(len(perm)):
        for j in range(i + 1, len(perm)):
            if perm[i] > perm[j]:
                sign = -sign
    return sign


def test_identity_component_has_unit_minor():
    v = SpatialComponent(["z1", "z2", "z3"])
    assert spatial_minors(v, np.array([0.3, -0.2, 0.9]))[(1, 2, 3)] == 1.0
    np.testing.assert_array_equal(two_forms(v, np.zeros(3))[(1, 2)], [0, 0, 1])


def test_m4_minor_g234_vanishes_identically(rng):
    v = build_spatial("m4", {"f": "z2^2*sin(z3) + z3"})
    z = rng.uniform(-1, 1, (3, 50))
    assert np.max(np.abs(spatial_minors(v, z)[(2, 3, 4)])) == 0.0


def test_minors_match_direct_determinants(rng):
    z = rng.uniform(-1, 1, (3, 100))
    g = spatial_minors(RANDOM_V, z)
    J = RANDOM_V.jacobian(z)
    for (i, j, k), vals in g.items():
        direct = np.linalg.det(J[:, [i - 1, j - 1, k - 1], :])
        assert np.max(np.abs(vals - direct)) <= 1e-12


def test_two_forms_are_gradient_cross_products(rng):
    z = rng.uniform(-1, 1, 3)
    J = RANDOM_V.jacobian(z)
    G = two_forms(RANDOM_V, z)
    for (i, j), vec in G.items():
        np.testing.assert_allclose(vec, np.cross(J[i - 1], J[j - 1]), atol=1e-15)


@settings(max_examples=40, deadline=None)
@given(st.tuples(*[st.floats(-1, 1) for _ in range(3)]))
def test_minor_antisymmetry_is_the_permutation_sign(pt):
    z = np.array(pt)
    # exactly singular minors (e.g. at z = 0) make LAPACK warn; the value is still 0
    with np.errstate(divide="ignore"):
        g = spatial_minors(RANDOM_V, z)
    J = RANDOM_V.jacobian(z)
    for idx in itertools.combinations(range(1, 7), 3):
        for perm in itertools.permutations(idx):
            with np.errstate(divide="ignore"):
                direct = np.linalg.det(J[[p - 1 for p in perm]])
            assert abs(direct - _perm_sign([idx.index(p) for p in perm]) * g[idx]) <= 1e-13


@settings(max_examples=40, deadline=None)
@given(st.tuples(*[st.floats(-1, 1) for _ in range(3)]))
def test_two_form_antisymmetry(pt):
    J = RANDOM_V.jacobian(np.array(pt))
    G = two_forms(RANDOM_V, np.array(pt))
    for (i, j), vec in G.items():
        assert np.max(np.abs(np.cross(J[j - 1], J[i - 1]) + vec)) <= 1e-14


def test_m5_hyperbolic_constraints_hold_identically():
    v = build_spatial("m5-hyperbolic", {"f1": "z1*z3", "f2": "sin(z2)+z3"})
    res = spatial_constraint_residuals("m5-hyperbolic", v, sample_points(200, seed=3))
    assert res == {"g134": 0.0, "g235": 0.0}


def test_m5_parabolic_components():
    v = build_spatial("m5-parabolic", {"f1": "z1^2", "f2": "z1*z3"})
    z = np.array([0.4, -0.7, 0.2])
    np.testing.assert_allclose(v.values(z)[3:], [0.4 ** 2 + (-0.7) * 0.2, 0.4 * 0.2])


def test_m6_elliptic_anti_cr_pair_satisfies_constraints():
    v = build_spatial("m6-elliptic-kne1", {"f1": "z3^2", "holomorphic": "zeta^2"}, check=False)
    res = spatial_constraint_residuals("m6-elliptic-kne1", v, sample_points(100, seed=4))
    assert set(res) == {"G34", "G15+G26", "G16-G25"}
    assert max(res.values()) <= 1e-12


def test_schema_violation_is_rejected():
    with pytest.raises(SpatialSchemaError) as info:
        build_spatial("m5-hyperbolic", {"f1": "z1*z2", "f2": "z3"})
    assert info.value.field == "f1"


def test_missing_function_is_rejected():
    with pytest.raises(SpatialSchemaError) as info:
        build_spatial("m6-hyperbolic-i", {"f1": "z1", "f2": "z2"})
    assert info.value.field == "f3"


def test_non_anti_cr_pair_is_reported():
    v = build_spatial("m5-elliptic", {"f1": "z1", "f2": "z1"}, check=False)
    res = spatial_constraint_residuals("m5-elliptic", v, sample_points(50, seed=5))
    assert max(res.values()) > 0.5
    with pytest.raises(SpatialConstraintError):
        build_spatial("m5-elliptic", {"f1": "z1", "f2": "z1"})


@pytest.mark.parametrize("family", FAMILY_IDS)
def test_catalog_constraints_vanish(family):
    d = families.get(family)
    v = build_spatial(family, dict(d.catalog.spatial))
    pts = sample_points(1000, seed=6, v=v)
    res = spatial_constraint_residuals(family, v, pts)
    assert set(res) == set(CONSTRAINTS[family])
    if res:
        assert max(res.values()) <= 1e-10


def test_m5_elliptic_determinant_precursor(rng):
    v = build_spatial("m5-elliptic", {"holomorphic": "0.2*zeta^2 + 0.1*z3*zeta"})
    z = rng.uniform(-1, 1, (3, 50))
    f1_100, f1_010 = v.partial("f1", "100", z), v.partial("f1", "010", z)
    g = spatial_minors(v, z)
    # with p123 = p345 = 1 and p134 = p235, p135 = -p234 all zero, alpha = g123 + g345
    np.testing.assert_allclose(g[(1, 2, 3)] + g[(3, 4, 5)], 1 - f1_100 ** 2 - f1_010 ** 2, atol=1e-13)


def test_trig_extension_constraints_are_residual_reports():
    v = SpatialComponent(["z1", "z2", "z3", "z3^2", "z1*z2", "z2"])
    res = spatial_constraint_residuals("m6-elliptic-ext", v, sample_points(20, seed=7))
    assert set(res) == {"g125+g345", "g126+g346", "g135+g236+g245-g146", "g136+g246+g145-g235"}
    assert max(res.values()) > 0


# ---------------------------------------------------------------- extensions

def test_q2_integration():
    q2 = integrate_q2(parse("s^2"))
    assert evaluate(q2, s=1.7) == pytest.approx(2 * 1.7)
    q2 = integrate_q2(parse("3*s^3 - 2/s"))
    for s in (0.5, 1.3):
        # q2' = q1'/s
        h = 1e-6
        dq2 = (evaluate(q2, s=s + h) - evaluate(q2, s=s - h)) / (2 * h)
        assert dq2 == pytest.approx((9 * s ** 2 + 2 / s ** 2) / s, rel=1e-7)
    with pytest.raises(ExtensionError):
        integrate_q2(parse("s + s^2"))


def test_hyperbolic_extension_quotient_g():
    v = hyperbolic_extension_build("(z1-3)/(z2-3)", q1="s^2", q="1+0.3*z3")
    g3 = v.functions["g3"]
    z = np.array([0.2, -0.4, 0.5])
    s = (z[1] - 3) / (z[0] - 3)
    assert evaluate(g3, z1=z[0], z2=z[1]) == pytest.approx(2 * s)
    assert max(v.notes["transport_residuals"].values()) <= 1e-8
    res = spatial_constraint_residuals("m6-hyperbolic-ext", v, sample_points(200, seed=8))
    assert max(res.values()) <= 1e-8


def test_hyperbolic_extension_constant_g():
    v = hyperbolic_extension_build("0.7", g1="sin(z1 - 0.7*z2)", q="exp(z3)")
    res = spatial_constraint_residuals("m6-hyperbolic-ext", v, sample_points(200, seed=9))
    assert max(res.values()) <= 1e-13


def test_hyperbolic_extension_rejects_bad_g():
    with pytest.raises(ExtensionError) as info:
        hyperbolic_extension_build("z1*z2 + 2", q1="s^2")
    assert info.value.residual > 1e-3


def test_hyperbolic_extension_with_nonzero_g2():
    # g2 = (z2-3)^2/(z1-3) solves g1 g2_01 + g3 g2_10 = 0 for g1 = s^2, g3 = 2s
    v = hyperbolic_extension_build("(z1-3)/(z2-3)", q1="s^2", q="1+0.3*z3",
                                   g2="(z2-3)^2/(z1-3)")
    res = spatial_constraint_residuals("m6-hyperbolic-ext", v, sample_points(200, seed=8))
    assert max(res.values()) <= 1e-12


def test_hyperbolic_extension_rejects_bad_g2():
    with pytest.raises(ExtensionError):
        hyperbolic_extension_build("(z1-3)/(z2-3)", q1="s^2", g2="z1")


def test_parabolic_extension_with_linear_f2():
    v = parabolic_extension_build("s^2*z2 + sin(s)", "z1", "z1*z3 + cos(z3)")
    z = np.array([0.3, 0.6, -0.2])
    g = 0.3 * -0.2 + np.cos(-0.2)
    np.testing.assert_allclose(v.values(z)[5], 0.6 + g, rtol=1e-14)
    assert v.notes["pde_residuals"]["f1_100*f3_001-f3_100*f1_001"] <= 1e-12
    assert max(v.notes["pde_residuals"].values()) <= 1e-12


def test_parabolic_extension_constant_F():
    v = parabolic_extension_build("2", "z1", "z3")
    assert np.all(v.values(np.zeros((3, 4)))[3] == 2.0)


def test_parabolic_extension_reports_nonzero_residual():
    v = parabolic_extension_build("s", "z1*z3", "z1+z3")
    assert max(v.notes["pde_residuals"].values()) > 0.1
    with pytest.raises(SpatialConstraintError):
        build_spatial("m6-parabolic-ext", {"F": "s", "f2": "z1*z3", "g": "z1+z3"})


def test_linear_transform_multiplies_components(rng):
    M = rng.normal(size=(6, 6))
    w = linear_transform(RANDOM_V, M)
    z = rng.uniform(-1, 1, 3)
    np.testing.assert_allclose(w.values(z), M @ RANDOM_V.values(z), atol=1e-13)
    np.testing.assert_allclose(w.jacobian(z), M @ RANDOM_V.jacobian(z), atol=1e-13)
