import numpy as np
import pytest

from conftest import FAMILY_IDS, catalog_flowmap
from lagrflow import families, spatial, temporal, verify

EXPECTED_IDS = [
    "m3-kirchhoff", "m4", "m5-elliptic", "m5-hyperbolic", "m5-parabolic",
    "m6-hyperbolic-i", "m6-hyperbolic-ii", "m6-hyperbolic-ext",
    "m6-elliptic-kne1", "m6-elliptic-keq1", "m6-elliptic-ext",
    "m6-parabolic-main", "m6-parabolic-2perhe", "m6-parabolic-3perhe", "m6-parabolic-ext",
]
CLOSED_FORM = [f for f in EXPECTED_IDS if families.get(f).vorticity != families.GENERIC_ONLY]


def test_registry_ids_and_order():
    assert FAMILY_IDS == EXPECTED_IDS
    assert len(set(FAMILY_IDS)) == 15


@pytest.mark.parametrize("family", EXPECTED_IDS)
def test_descriptor_fields(family):
    d = families.get(family)
    assert d.m in (3, 4, 5, 6)
    assert d.m == int(family[1])
    assert d.anchor
    assert d.vorticity in ("closed-form", families.GENERIC_ONLY)
    assert spatial.build_spatial(family, dict(d.catalog.spatial)).m == d.m


def test_unknown_family():
    with pytest.raises(KeyError, match="unknown family"):
        families.get("m7-anything")


def test_generic_only_families():
    generic = {f for f in EXPECTED_IDS if families.get(f).vorticity == families.GENERIC_ONLY}
    assert generic == {"m6-hyperbolic-ii", "m6-hyperbolic-ext", "m6-elliptic-ext",
                       "m6-parabolic-main", "m6-parabolic-ext"}
    fm = catalog_flowmap("m6-hyperbolic-ii")
    z = np.zeros((3, 4))
    assert families.closed_form_vorticity("m6-hyperbolic-ii", fm.v, fm.tc.constants, z) \
        == families.GENERIC_ONLY


@pytest.mark.parametrize("family,expr", [
    ("m4", "1"),
    ("m5-hyperbolic", "1 - f1_100*f2_010"),
    ("m6-hyperbolic-i", "1 + f1_100*f2_010*f3_001"),
    ("m6-elliptic-keq1", "f2_100 + f2_010*f1_001"),
])
def test_det_expressions(family, expr):
    assert families.get(family).det_expression == expr


@pytest.mark.parametrize("family", CLOSED_FORM)
def test_closed_form_vorticity_matches_generic(family):
    fm = catalog_flowmap(family)
    z = spatial.sample_points(200, seed=5, v=fm.v).T
    closed = families.closed_form_vorticity(family, fm.v, fm.tc.constants, z)
    for t in fm.tc.sample_times(4):
        generic = verify.cauchy_invariants(fm, z, t)
        err = np.max(np.abs(closed - generic) / (1 + np.abs(generic)))
        assert err <= 1e-8, (family, t, err)


@pytest.mark.parametrize("family", EXPECTED_IDS)
def test_closed_form_det_matches_alpha(family):
    fm = catalog_flowmap(family)
    z = spatial.sample_points(100, seed=6, v=fm.v).T
    closed = families.closed_form_det(family, fm.v, z)
    if closed is None:
        assert families.get(family).det_expression == ""
        return
    a = verify.alpha(fm, z, fm.tc.sample_times(3)[1], route="direct")
    assert np.max(np.abs(closed - a)) <= 1e-10


@pytest.mark.parametrize("family", EXPECTED_IDS)
def test_sample_constants_are_admissible(family, rng):
    c = families.sample_constants(family, rng)
    assert set(c) == set(families.get(family).catalog.constants)
    temporal.validate_constants(family, c)


def test_sample_constants_differ_from_catalog(rng):
    base = families.get("m6-hyperbolic-i").catalog.constants
    c = families.sample_constants("m6-hyperbolic-i", rng)
    assert any(c[k] != base[k] for k in base)


def test_build_flowmap_dimensions():
    fm = families.build_flowmap("m5-parabolic")
    assert fm.m == fm.v.m == 5
    assert fm.phi(np.zeros(3), 0.5).shape == (3,)
    assert fm.jacobian(np.zeros((3, 7)), 0.5).shape == (7, 3, 3)


def test_mismatched_components_rejected():
    from lagrflow.flowmap import FlowMap
    tc = catalog_flowmap("m4").tc
    v = catalog_flowmap("m5-elliptic").v
    with pytest.raises(ValueError, match="m=4"):
        FlowMap(tc, v, "mixed")


def test_reducible_cases_are_documented_only():
    assert len(families.REDUCIBLE) == 2
    assert not any("reduc" in f for f in FAMILY_IDS)


# -------------------------------------------------------- worked examples

def test_m4_example_at_point():
    fm = families.build_flowmap("m4", spatial_fns={"f": "z2*z3"})
    c = fm.tc.constants
    z = np.array([[0.0], [1.0], [2.0]])
    h = families.closed_form_vorticity("m4", fm.v, c, z)[:, 0]
    expected = [c["c24"] - 2 * c["c34"] + c["c23"], -c["c14"] - c["c13"], 2 * c["c14"] + c["c12"]]
    np.testing.assert_allclose(h, expected, atol=1e-14)
    np.testing.assert_allclose(verify.cauchy_invariants(fm, z[:, 0], 0.7), expected, atol=1e-10)


def test_m6_hyperbolic_first_component():
    fm = families.build_flowmap("m6-hyperbolic-i",
                                spatial_fns={"f1": "z1", "f2": "z2^2", "f3": "z3"})
    h = verify.cauchy_invariants(fm, [0.3, 1.0, -0.2], 0.4)
    assert h[0] == pytest.approx(-2 * fm.tc.constants["c35"], abs=1e-10)


def test_m5_hyperbolic_example_at_point():
    fm = families.build_flowmap("m5-hyperbolic", constants={"c15": 1.0},
                                spatial_fns={"f1": "z1*z3", "f2": "z2*z3"})
    z = np.array([1.0, 1.0, 0.0])
    np.testing.assert_allclose(verify.cauchy_invariants(fm, z, 0.9), [-1.0, -1.0, 0.0],
                               atol=1e-10)


def test_m4_vorticity_generality():
    # h2 and h3 are divergence-free in (z2, z3) and do not involve z1;
    # h1 - e2 h2 - e3 h3 is the constant c23 - (c24 c13 - c34 c12) / c14,
    # which vanishes exactly when c23 takes that value
    fm = catalog_flowmap("m4")
    c = dict(fm.tc.constants)
    z = interior = spatial.sample_points(100, seed=13, v=fm.v).T
    h = families.closed_form_vorticity("m4", fm.v, c, z)
    step = 1e-5
    e2_, e3_ = np.array([[0.0], [step], [0.0]]), np.array([[0.0], [0.0], [step]])
    div = ((verify.cauchy_invariants(fm, z + e2_, 0.8)[1]
            - verify.cauchy_invariants(fm, z - e2_, 0.8)[1])
           + (verify.cauchy_invariants(fm, z + e3_, 0.8)[2]
              - verify.cauchy_invariants(fm, z - e3_, 0.8)[2])) / (2 * step)
    assert np.max(np.abs(div)) <= 1e-6
    shifted = interior.copy()
    shifted[0] += 0.5
    np.testing.assert_array_equal(families.closed_form_vorticity("m4", fm.v, c, shifted), h)
    e2, e3 = -c["c24"] / c["c14"], -c["c34"] / c["c14"]
    offset = c["c23"] - (c["c24"] * c["c13"] - c["c34"] * c["c12"]) / c["c14"]
    np.testing.assert_allclose(h[0] - e2 * h[1] - e3 * h[2], offset, atol=1e-12)
    c["c23"] -= offset
    fm0 = families.build_flowmap("m4", constants=c)
    h0 = verify.cauchy_invariants(fm0, z, 0.8)
    assert np.max(np.abs(h0[0] - e2 * h0[1] - e3 * h0[2])) <= 1e-10
