"""Registry of the fifteen solution families.

Each descriptor ties a family id to its spatial schema, constants, free
functions, a worked catalog instance and, where one is known, a closed
form for the Cauchy invariants in terms of the spatial functions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from . import spatial, temporal
from .flowmap import FlowMap

GENERIC_ONLY = "generic-only"


@dataclass(frozen=True)
class Catalog:
    """A worked admissible instance of a family."""
    constants: Mapping[str, float]
    spatial: Mapping[str, str]
    free: Mapping[str, str] = field(default_factory=dict)
    horizon: tuple = (0.0, 2.0)
    init: Mapping = field(default_factory=dict)


@dataclass(frozen=True)
class FamilyDescriptor:
    id: str
    m: int
    anchor: str
    det_expression: str
    vorticity: str                      # "closed-form" or GENERIC_ONLY
    catalog: Catalog
    notes: str = ""

    @property
    def spatial_schema(self) -> dict:
        return spatial.SCHEMAS[self.id]

    @property
    def constant_names(self) -> tuple:
        return temporal.recipe_for(self.id).required

    @property
    def free_functions(self) -> tuple:
        return temporal.recipe_for(self.id).free


_B11 = "1+0.2*sin(t)"
_ELLIPTIC_V = {"f1": "0.3*z3^2", "holomorphic": "1.5*zeta + 0.1*zeta^2"}
_PARABOLIC_V = {"f1": "0.3*z3^2", "f2": "1.5*z1 + 0.1*z1^2", "f3": "0.2*sin(z1)"}
_HYPERBOLIC_V = {"f1": "0.5*sin(z1)", "f2": "0.4*z2^3", "f3": "0.3*exp(z3)"}

_FAMILIES = [
    FamilyDescriptor(
        "m3-kirchhoff", 3, "m=3: Kirchhoff-type flows, A in SL(3) with five free functions",
        "1", "closed-form",
        Catalog({"c12": 0.3, "c13": -0.5, "c23": 0.7}, {},
                {"b11": _B11, "b22": "1.1+0.1*cos(2*t)", "w1": "0.3*cos(t)", "w2": "0.5",
                 "w3": "sin(3*t)"})),
    FamilyDescriptor(
        "m4", 4, "m=4: theorem on the general solution of the time component",
        "1", "closed-form",
        Catalog({"c12": 0.3, "c13": -0.5, "c14": 0.8, "c23": 0.7, "c24": 0.2, "c34": -0.4},
                {"f": "0.3*z2*z3 + 0.2*sin(z3)"},
                {"b11": _B11, "b22": "1.1+0.1*cos(2*t)", "w1": "0.3*cos(t)"})),
    FamilyDescriptor(
        "m5-elliptic", 5, "m=5 elliptic case: anti-CR pair, theta' = -w3 = c12/b11^2",
        "1 - f1_100^2 - f1_010^2", "closed-form",
        Catalog({"c12": 2.0}, {"holomorphic": "0.2*zeta^2 + 0.1*z3*zeta"}, {"b11": _B11})),
    FamilyDescriptor(
        "m5-hyperbolic", 5, "m=5 hyperbolic case: w = 0, l' = -1/b11^2",
        "1 - f1_100*f2_010", "closed-form",
        Catalog({"c15": 0.7}, {"f1": "0.3*z1*z3 + 0.2*z1", "f2": "0.4*sin(z2) + z3^2"},
                {"b11": _B11}, init={"l": 3.0})),
    FamilyDescriptor(
        "m5-parabolic", 5, "m=5 parabolic case: l' = c12/b12^2",
        "f1_100 + z2*f2_200", "closed-form",
        Catalog({"c12": 0.7}, {"f1": "1.5*z1 + 0.1*z3^2", "f2": "0.2*z1^2*z3 + 0.3*z3"},
                {"b12": _B11})),
    FamilyDescriptor(
        "m6-hyperbolic-i", 6, "m=6 hyperbolic theorem, case (i): one free function b11",
        "1 + f1_100*f2_010*f3_001", "closed-form",
        Catalog({"c16": 0.5, "c24": 0.8, "c35": -1.2}, _HYPERBOLIC_V, {"b11": _B11})),
    FamilyDescriptor(
        "m6-hyperbolic-ii", 6, "m=6 hyperbolic theorem, case (ii): (l1')^3 = k0 l1^2 (m1 l1 + m0)^2",
        "1 + f1_100*f2_010*f3_001", GENERIC_ONLY,
        Catalog({"k0": 1.0, "k1": 1.2, "k2": 0.8, "k3": 0.3, "k4": 0.5, "k5": 0.4, "m0": 1.0,
                 "m1": 0.7}, _HYPERBOLIC_V, horizon=(-0.25, 0.25))),
    FamilyDescriptor(
        "m6-hyperbolic-ext", 6, "m=6 hyperbolic extension: exponential matrix, triangular system",
        "1 + det(grad f1, grad f2, grad f3)", GENERIC_ONLY,
        Catalog({"c": 0.6}, {"g": "(z1-3)/(z2-3)", "q1": "0.2*s^2", "q": "1+0.3*z3",
                             "g2": "0.2*(z2-3)^2/(z1-3)"})),
    FamilyDescriptor(
        "m6-elliptic-kne1", 6, "m=6 elliptic theorem for k != 1: (theta')^3 law",
        "f2_100 + f2_010*f1_001", "closed-form",
        Catalog({"k": 0.4, "c12": -3.0, "c13": 0.5, "c14": 0.7, "c56": 1.3}, _ELLIPTIC_V,
                horizon=(0.0, 3.0))),
    FamilyDescriptor(
        "m6-elliptic-keq1", 6, "m=6 elliptic theorem for k = 1: theta reaches pi in finite time",
        "f2_100 + f2_010*f1_001", "closed-form",
        Catalog({"c12": -3.0, "gamma": math.sqrt(8.5), "c36": 0.4, "c46": -0.6, "c56": 1.3,
                 "phi": 0.7}, _ELLIPTIC_V, horizon=(0.0, 10.0))),
    FamilyDescriptor(
        "m6-elliptic-ext", 6, "m=6 elliptic extension: the trigonometric time matrix",
        "", GENERIC_ONLY,
        Catalog({"theta0": 0.7}, {"f1": "0.3*z3^2", "holomorphic": "-1.5*zeta - 0.1*zeta^2"})),
    FamilyDescriptor(
        "m6-parabolic-main", 6, "m=6 parabolic lemma for k2*k0 != 0: (l2')^3 law",
        "f2_100 + z2*f3_200 - f1_001*f3_100", GENERIC_ONLY,
        Catalog({"k0": 2.0, "k1": 0.3, "k2": 0.5, "k3": 1.2, "k4": 0.7, "c12": -0.8, "c45": 1.1},
                _PARABOLIC_V, horizon=(0.0, 0.5))),
    FamilyDescriptor(
        "m6-parabolic-2perhe", 6, "m=6 parabolic degenerate lemma: l2 = k4 t^3",
        "f2_100 + z2*f3_200 - f1_001*f3_100", "closed-form",
        Catalog({"k1": 0.3, "k2": 0.5, "k3": 1.2, "k4": 0.7, "k5": 0.8, "k6": 0.4, "k7": -0.3},
                _PARABOLIC_V, horizon=(0.5, 2.0))),
    FamilyDescriptor(
        "m6-parabolic-3perhe", 6, "m=6 parabolic degenerate lemma: l2 = k4/t^3",
        "f2_100 + z2*f3_200 - f1_001*f3_100", "closed-form",
        Catalog({"k0": 0.4, "k1": 0.3, "k3": 1.2, "k4": 0.7, "k5": 0.8, "k6": 0.4, "k7": -0.3,
                 "k8": 0.6}, _PARABOLIC_V, horizon=(0.5, 2.0))),
    FamilyDescriptor(
        "m6-parabolic-ext", 6, "m=6 parabolic extension: the (t^2, 1/t) time matrix",
        "", GENERIC_ONLY,
        Catalog({}, {"F": "0.2*s*z2", "f2": "z1", "g": "z1+0.3*sin(z3)"}, horizon=(0.5, 2.0))),
]

REGISTRY: dict[str, FamilyDescriptor] = {d.id: d for d in _FAMILIES}

# families proven to collapse to smaller m; documented, never constructed
REDUCIBLE = (
    "m=6 hyperbolic with two of c16, c24, c35 vanishing: reduces to m <= 5",
    "m=6 elliptic cases (1) and (2) of the case lemma: reduce to m <= 5",
)


def list_families() -> list:
    return list(_FAMILIES)


def get(family: str) -> FamilyDescriptor:
    try:
        return REGISTRY[family]
    except KeyError:
        raise KeyError(f"unknown family '{family}'") from None


# ------------------------------------------------------------ instances

def build_flowmap(family: str, constants: Mapping | None = None, free: Mapping | None = None,
                  spatial_fns: Mapping | None = None, horizon=None, init: Mapping | None = None,
                  tol: float = 1e-12, perturb: Mapping | None = None) -> FlowMap:
    """A flow map of ``family``; omitted parts come from the catalog."""
    d = get(family)
    cat = d.catalog
    c = dict(cat.constants if constants is None else constants)
    tc = temporal.solve_time_component(
        family, c, dict(cat.free if free is None else free),
        cat.horizon if horizon is None else horizon, tol=tol,
        init=dict(cat.init if init is None else init), perturb=perturb)
    v = spatial.build_spatial(family, dict(cat.spatial if spatial_fns is None else spatial_fns))
    return FlowMap(tc, v, family, tc.constants)


def sample_constants(family: str, rng: np.random.Generator, spread: float = 0.15,
                     attempts: int = 200) -> dict:
    """Random admissible constants near the catalog values."""
    d = get(family)
    base = dict(d.catalog.constants)
    for _ in range(attempts):
        c = {k: v * rng.uniform(1 - spread, 1 + spread) for k, v in base.items()}
        if "phi" in c:
            c["phi"] = base["phi"] + rng.uniform(-0.5, 0.5)
        try:
            temporal.validate_constants(family, c)
        except temporal.AdmissibilityError:
            continue
        return c
    raise RuntimeError(f"no admissible constants found for {family}")


# ---------------------------------------------------- closed-form formulas

def _q(rel: Mapping[str, float], combo: str) -> float:
    """Value of a Q combination such as 'Q15-Q26' from declared relations."""
    if combo in rel:
        return rel[combo]
    kind, terms = temporal.parse_relation(combo)
    return sum(s * rel.get("Q" + "".join(map(str, idx)), 0.0) for idx, s in terms.items())


def closed_form_vorticity(family: str, v: spatial.SpatialComponent, c: Mapping[str, float], z):
    """Cauchy invariants from the family's explicit formula.

    ``c`` are validated constants (see ``temporal.validate_constants``).
    Returns GENERIC_ONLY for families without a closed form. ``z`` is (3,)
    or (3, N); the result has the same layout.
    """
    d = get(family)
    if d.vorticity == GENERIC_ONLY:
        return GENERIC_ONLY
    rel = temporal.recipe_for(family).relations(c)
    Q = lambda combo: _q(rel, combo)  # noqa: E731
    z = np.asarray(z, dtype=float)
    one = np.ones(z.shape[1:])
    P = v.partial

    if family == "m3-kirchhoff":
        return np.array([Q("Q23") * one, -Q("Q13") * one, Q("Q12") * one])
    if family == "m4":
        f2, f3 = P("f", "010", z), P("f", "001", z)
        return np.array([Q("Q24") * f3 - Q("Q34") * f2 + Q("Q23"),
                         -Q("Q14") * f3 - Q("Q13"),
                         Q("Q14") * f2 + Q("Q12")])
    if family == "m5-elliptic":
        a, b, r = P("f1", "100", z), P("f1", "010", z), P("f1", "001", z)
        r2 = P("f2", "001", z)
        return Q("Q12") * np.array([-a * r - b * r2, a * r2 - b * r, a * a + b * b + 1])
    if family == "m5-hyperbolic":
        return Q("Q15") * np.array([-P("f1", "001", z), -P("f2", "001", z),
                                    P("f1", "100", z) + P("f2", "010", z)])
    if family == "m5-parabolic":
        s1, s3 = P("f2", "100", z), P("f2", "001", z)
        v4_1 = P("f1", "100", z) + z[1] * P("f2", "200", z)
        v4_3 = P("f1", "001", z) + z[1] * P("f2", "101", z)
        return Q("Q12") * np.array([-s1 * s3, s3 * v4_1 - s1 * v4_3, 1 + s1 * s1])
    if family == "m6-hyperbolic-i":
        return -np.array([Q("Q35") * P("f2", "010", z), Q("Q16") * P("f3", "001", z),
                          Q("Q24") * P("f1", "100", z)])
    if family in ("m6-elliptic-kne1", "m6-elliptic-keq1"):
        f1 = P("f1", "001", z)
        p, q = P("f2", "100", z), P("f2", "010", z)
        return np.array([
            Q("Q23") + Q("Q24") * f1 - Q("Q35") * q + Q("Q36") * p - Q("Q45") * f1 * q
            + Q("Q46") * f1 * p,
            -Q("Q13") - Q("Q14") * f1 + Q("Q35") * p + Q("Q36") * q + Q("Q45") * f1 * p
            + Q("Q46") * f1 * q,
            Q("Q12") + Q("Q15-Q26") * q - Q("Q16+Q25") * p - Q("Q56") * (p * p + q * q),
        ])
    if family in ("m6-parabolic-2perhe", "m6-parabolic-3perhe"):
        f1 = P("f1", "001", z)
        f3 = P("f3", "100", z)
        a = z[1] * P("f3", "200", z) + P("f2", "100", z)
        return np.array([
            Q("Q23") + Q("Q24") * f1 - Q("Q35") * f3 - Q("Q45") * f1 * f3,
            -Q("Q13") - Q("Q14") * f1 + Q("Q35") * a + Q("Q36") * f3 + Q("Q45") * a * f1
            + Q("Q46") * f1 * f3,
            Q("Q12") + Q("Q15-Q26") * f3 - Q("Q25") * a - Q("Q56") * f3 * f3,
        ])
    raise KeyError(family)


def closed_form_det(family: str, v: spatial.SpatialComponent, z):
    """det(d phi) from the family's explicit expression, or None if the
    family has none."""
    z = np.asarray(z, dtype=float)
    P = v.partial
    one = np.ones(z.shape[1:])
    if family in ("m3-kirchhoff", "m4"):
        return 1.0 * one
    if family == "m5-elliptic":
        return 1 - P("f1", "100", z) ** 2 - P("f1", "010", z) ** 2
    if family == "m5-hyperbolic":
        return 1 - P("f1", "100", z) * P("f2", "010", z)
    if family == "m5-parabolic":
        return P("f1", "100", z) + z[1] * P("f2", "200", z)
    if family in ("m6-hyperbolic-i", "m6-hyperbolic-ii"):
        return 1 + P("f1", "100", z) * P("f2", "010", z) * P("f3", "001", z)
    if family == "m6-hyperbolic-ext":
        J = v.jacobian(z)
        return 1 + np.linalg.det(J[..., 3:, :])
    if family in ("m6-elliptic-kne1", "m6-elliptic-keq1"):
        return P("f2", "100", z) + P("f2", "010", z) * P("f1", "001", z)
    if family in ("m6-parabolic-main", "m6-parabolic-2perhe", "m6-parabolic-3perhe"):
        return (P("f2", "100", z) + z[1] * P("f3", "200", z)
                - P("f1", "001", z) * P("f3", "100", z))
    return None
