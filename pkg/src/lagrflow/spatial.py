"""Spatial components v(z), their minors g_ijk and two-forms G_ij.

Every family fixes v1..v3 = z1..z3 and asks for up to three more
functions with prescribed variable dependencies. ``build_spatial`` checks
those dependencies and the family's linear constraints among the g's and
G's; the two extension families have dedicated constructors.
"""
from __future__ import annotations

import itertools
import re
from typing import Mapping, Sequence

import numpy as np

from .exprcore import (BinOp, Compiled, Expr, ExprError, Neg, Num, Param, Pow, Var, add,
                       anti_cr_pair, derivative, div, free_variables, mul, num, parse,
                       substitute)

LABELS = ("z1", "z2", "z3")
DOMAIN = (-1.0, 1.0)


class SpatialSchemaError(ValueError):
    """A function bundle does not fit the family's spatial schema."""

    def __init__(self, family: str, field: str, message: str):
        super().__init__(f"{family}: {field}: {message}")
        self.family = family
        self.field = field


class SpatialConstraintError(ValueError):
    def __init__(self, family: str, residuals: Mapping[str, float]):
        worst = max(residuals, key=residuals.get)
        super().__init__(f"{family}: spatial constraint {worst} fails "
                         f"(max residual {residuals[worst]:.3e})")
        self.family = family
        self.residuals = dict(residuals)


def _split_points(z):
    z = np.asarray(z, dtype=float)
    if z.shape[0] != 3:
        raise ValueError(f"labels must have shape (3,) or (3, N), got {z.shape}")
    return z


class SpatialComponent:
    """v: R^3 -> R^m given by expressions in (z1, z2, z3).

    ``functions`` keeps the named free functions (f, f1, f2, ...) the
    component was built from, so closed-form formulas can ask for their
    partial derivatives. Instances are treated as immutable.
    """

    def __init__(self, components: Sequence, family: str = "",
                 functions: Mapping[str, Expr] | None = None,
                 notes: Mapping | None = None, normal_form: bool = True):
        comps = tuple(c if isinstance(c, Expr) else parse(str(c)) for c in components)
        for k, e in enumerate(comps):
            extra = free_variables(e) - set(LABELS)
            if extra:
                raise ExprError(f"component v{k + 1} depends on {sorted(extra)}")
        if normal_form and [str(e) for e in comps[:3]] != list(LABELS):
            raise ValueError("the first three components must be z1, z2, z3")
        self.components = comps
        self.family = family
        self.functions = dict(functions or {})
        self.notes = dict(notes or {})
        self.normal_form = normal_form
        self.gradient_exprs = tuple(tuple(derivative(e, x) for x in LABELS) for e in comps)
        self._values = [Compiled(e) for e in comps]
        self._grads = [[Compiled(d) for d in row] for row in self.gradient_exprs]
        self._partials: dict = {}

    @property
    def m(self) -> int:
        return len(self.components)

    def __repr__(self):
        return f"SpatialComponent({', '.join(map(str, self.components))})"

    def values(self, z) -> np.ndarray:
        """v(z) with shape (m,) or (m, N)."""
        z = _split_points(z)
        env = dict(zip(LABELS, z))
        return np.array([f(**env) for f in self._values], dtype=float)

    def jacobian(self, z) -> np.ndarray:
        """dv with shape (m, 3) or (N, m, 3)."""
        z = _split_points(z)
        env = dict(zip(LABELS, z))
        J = np.array([[f(**env) for f in row] for row in self._grads], dtype=float)
        return J if z.ndim == 1 else np.moveaxis(J, -1, 0)

    def raw_values(self, z) -> np.ndarray:
        """Values and gradients without domain checks, stacked as (4m, ...)."""
        env = dict(zip(LABELS, _split_points(z)))
        out = [f.raw(**env) for f in self._values]
        out += [f.raw(**env) for row in self._grads for f in row]
        return np.array([np.broadcast_to(o, np.shape(env["z1"])) for o in out])

    def partial(self, name: str, orders: str, z):
        """Partial derivative of a named function, e.g. ``partial('f2', '101', z)``
        for d^2 f2 / dz1 dz3."""
        key = (name, orders)
        if key not in self._partials:
            if name not in self.functions:
                raise KeyError(f"no function named '{name}' in this component")
            if len(orders) != 3 or not orders.isdigit():
                raise ValueError(f"derivative orders must be three digits, got '{orders}'")
            vars_ = [x for x, n in zip(LABELS, orders) for _ in range(int(n))]
            self._partials[key] = Compiled(derivative(self.functions[name], *vars_))
        z = _split_points(z)
        return self._partials[key](**dict(zip(LABELS, z)))


# ------------------------------------------------------------- minors

def spatial_minors(v: SpatialComponent, z) -> dict:
    """g_ijk = det(grad v_i, grad v_j, grad v_k) for i < j < k (1-based)."""
    J = v.jacobian(z)
    out = {}
    for i, j, k in itertools.combinations(range(v.m), 3):
        out[(i + 1, j + 1, k + 1)] = np.linalg.det(J[..., [i, j, k], :])
    return out


def two_forms(v: SpatialComponent, z) -> dict:
    """G_ij = grad v_i x grad v_j for i < j (1-based)."""
    J = v.jacobian(z)
    return {(i + 1, j + 1): np.cross(J[..., i, :], J[..., j, :])
            for i, j in itertools.combinations(range(v.m), 2)}


_TERM = re.compile(r"([+-]?)\s*([gG])(\d+)")


def parse_constraint(text: str) -> tuple:
    """'g134+g235' -> ('g', {(1,3,4): 1, (2,3,5): 1})."""
    terms, kinds, pos = {}, set(), 0
    text = text.replace(" ", "")
    for mt in _TERM.finditer(text):
        if mt.start() != pos:
            break
        sign = -1 if mt.group(1) == "-" else 1
        kinds.add(mt.group(2))
        terms[tuple(int(ch) for ch in mt.group(3))] = sign
        pos = mt.end()
    if pos != len(text) or len(kinds) != 1:
        raise ValueError(f"malformed constraint '{text}'")
    return kinds.pop(), terms


CONSTRAINTS: dict[str, tuple] = {
    "m3-kirchhoff": (),
    "m4": ("g234",),
    "m5-elliptic": ("g134+g235", "g135-g234"),
    "m5-hyperbolic": ("g134", "g235"),
    "m5-parabolic": ("g134+g235", "g135"),
    "m6-hyperbolic-i": ("G14", "G25", "G36"),
    "m6-hyperbolic-ii": ("G14", "G25", "G36"),
    "m6-hyperbolic-ext": ("g145+g256", "g236-g134", "g125", "g346"),
    "m6-elliptic-kne1": ("G34", "G15+G26", "G16-G25"),
    "m6-elliptic-keq1": ("G34", "G15+G26", "G16-G25"),
    # coefficients of 1, 1, sin and cos of the trigonometric time matrix
    "m6-elliptic-ext": ("g125+g345", "g126+g346", "g135+g236+g245-g146",
                        "g136+g246+g145-g235"),
    "m6-parabolic-main": ("G15+G26", "G16", "G34"),
    "m6-parabolic-2perhe": ("G15+G26", "G16", "G34"),
    "m6-parabolic-3perhe": ("G15+G26", "G16", "G34"),
    "m6-parabolic-ext": ("g135", "g246", "g235+g136+g145"),
}


def constraint_values(constraints: Sequence[str], v: SpatialComponent, z) -> dict:
    """Pointwise values; G-constraints return their Euclidean norm."""
    g = spatial_minors(v, z)
    G = two_forms(v, z)
    out = {}
    for name in constraints:
        kind, terms = parse_constraint(name)
        if kind == "g":
            out[name] = np.abs(sum(s * g[idx] for idx, s in terms.items()))
        else:
            out[name] = np.linalg.norm(sum(s * G[idx] for idx, s in terms.items()), axis=-1)
    return out


def spatial_constraint_residuals(family: str, v: SpatialComponent, samples,
                                 constraints: Sequence[str] | None = None) -> dict:
    """max |residual| of each of the family's constraints over ``samples``
    (points as rows, shape (N, 3))."""
    if constraints is None:
        if family not in CONSTRAINTS:
            raise KeyError(f"unknown family '{family}'")
        constraints = CONSTRAINTS[family]
    pts = np.asarray(samples, dtype=float).reshape(-1, 3).T
    vals = constraint_values(constraints, v, pts)
    return {name: float(np.max(r)) if np.size(r) else 0.0 for name, r in vals.items()}


def sample_points(n: int, seed: int = 0, box=DOMAIN, v: SpatialComponent | None = None) -> np.ndarray:
    """``n`` uniform points of the cube as rows. With ``v``, points where v
    or its gradient is not finite are replaced."""
    rng = np.random.default_rng(seed)
    lo, hi = box
    out = np.empty((0, 3))
    for _ in range(50):
        pts = rng.uniform(lo, hi, size=(2 * n, 3))
        if v is not None:
            ok = np.all(np.isfinite(v.raw_values(pts.T)), axis=0)
            pts = pts[ok]
        out = np.vstack([out, pts])
        if len(out) >= n:
            return out[:n]
    raise ValueError("could not find enough regular sample points")


# ------------------------------------------------------------- builders

Z1, Z2, Z3 = Var("z1"), Var("z2"), Var("z3")
ALL = frozenset(LABELS)

# allowed variables for each named function
SCHEMAS: dict[str, dict] = {
    "m3-kirchhoff": {},
    "m4": {"f": {"z2", "z3"}},
    "m5-elliptic": {"f1": ALL, "f2": ALL},
    "m5-hyperbolic": {"f1": {"z1", "z3"}, "f2": {"z2", "z3"}},
    "m5-parabolic": {"f1": {"z1", "z3"}, "f2": {"z1", "z3"}},
    "m6-hyperbolic-i": {"f1": {"z1"}, "f2": {"z2"}, "f3": {"z3"}},
    "m6-hyperbolic-ii": {"f1": {"z1"}, "f2": {"z2"}, "f3": {"z3"}},
    "m6-hyperbolic-ext": {"f1": ALL, "f2": ALL, "f3": ALL},
    "m6-elliptic-kne1": {"f1": {"z3"}, "f2": {"z1", "z2"}, "f3": {"z1", "z2"}},
    "m6-elliptic-keq1": {"f1": {"z3"}, "f2": {"z1", "z2"}, "f3": {"z1", "z2"}},
    "m6-elliptic-ext": {"f1": ALL, "f2": ALL, "f3": ALL},
    "m6-parabolic-main": {"f1": {"z3"}, "f2": {"z1"}, "f3": {"z1"}},
    "m6-parabolic-2perhe": {"f1": {"z3"}, "f2": {"z1"}, "f3": {"z1"}},
    "m6-parabolic-3perhe": {"f1": {"z3"}, "f2": {"z1"}, "f3": {"z1"}},
    "m6-parabolic-ext": {"f1": ALL, "f2": ALL, "f3": ALL},
}

# the anti-CR pair of each elliptic family, fillable from a holomorphic descriptor
_HOLOMORPHIC_SLOTS = {"m5-elliptic": ("f1", "f2"), "m6-elliptic-kne1": ("f2", "f3"),
                      "m6-elliptic-keq1": ("f2", "f3"), "m6-elliptic-ext": ("f2", "f3")}

CHECK_POINTS = 200
CHECK_TOL = 1e-8


def _as_expr(family, name, value) -> Expr:
    if isinstance(value, Expr):
        return value
    try:
        return parse(str(value))
    except ExprError as err:
        raise SpatialSchemaError(family, name, str(err)) from err


def _components(family: str, f: dict) -> list:
    """Components v4.. from the named functions."""
    if family == "m3-kirchhoff":
        return []
    if family == "m4":
        return [f["f"]]
    if family == "m5-parabolic":
        return [add(f["f1"], mul(Z2, derivative(f["f2"], "z1"))), f["f2"]]
    if family in ("m5-elliptic", "m5-hyperbolic"):
        return [f["f1"], f["f2"]]
    if family in ("m6-parabolic-main", "m6-parabolic-2perhe", "m6-parabolic-3perhe"):
        return [f["f1"], add(mul(Z2, derivative(f["f3"], "z1")), f["f2"]), f["f3"]]
    return [f["f1"], f["f2"], f["f3"]]


def build_spatial(family: str, fns: Mapping | None = None, check: bool = True) -> SpatialComponent:
    """Spatial component of ``family`` from named functions.

    Elliptic families accept ``holomorphic`` (an expression in ``zeta``) in
    place of their anti-CR pair. The extension families also accept the
    inputs of :func:`hyperbolic_extension_build` / :func:`parabolic_extension_build`.
    With ``check`` the family's constraints are verified at sample points.
    """
    if family not in SCHEMAS:
        raise KeyError(f"unknown family '{family}'")
    fns = dict(fns or {})
    if family == "m6-hyperbolic-ext" and "f1" not in fns:
        return hyperbolic_extension_build(**fns)
    if family == "m6-parabolic-ext" and "f1" not in fns:
        v = parabolic_extension_build(**fns)
        if check:
            worst = max(v.notes["pde_residuals"].values())
            if worst > CHECK_TOL:
                raise SpatialConstraintError(family, v.notes["pde_residuals"])
        return v
    schema = SCHEMAS[family]
    if "holomorphic" in fns and family in _HOLOMORPHIC_SLOTS:
        try:
            pair = anti_cr_pair(str(fns.pop("holomorphic")))
        except ExprError as err:
            raise SpatialSchemaError(family, "holomorphic", str(err)) from err
        a, b = _HOLOMORPHIC_SLOTS[family]
        fns.setdefault(a, pair.f_a)
        fns.setdefault(b, pair.f_b)
    f = {}
    for name, allowed in schema.items():
        if name not in fns:
            raise SpatialSchemaError(family, name, "missing function")
        e = _as_expr(family, name, fns.pop(name))
        bad = free_variables(e) - set(allowed)
        if bad:
            raise SpatialSchemaError(family, name, f"may depend on {sorted(allowed)} only, "
                                                   f"found {sorted(bad)}")
        f[name] = e
    if fns:
        raise SpatialSchemaError(family, sorted(fns)[0], "not a function of this family")
    v = SpatialComponent([Z1, Z2, Z3, *_components(family, f)], family, f)
    if check:
        check_constraints(family, v)
    return v


def check_constraints(family: str, v: SpatialComponent, n: int = CHECK_POINTS) -> dict:
    """Raise :class:`SpatialConstraintError` unless every constraint holds."""
    pts = sample_points(n, seed=1, v=v)
    res = spatial_constraint_residuals(family, v, pts)
    if res and max(res.values()) > CHECK_TOL:
        raise SpatialConstraintError(family, res)
    return res


def linear_transform(v: SpatialComponent, M) -> SpatialComponent:
    """The component M v (used by gauge transformations)."""
    M = np.asarray(M, dtype=float)
    if M.shape != (v.m, v.m):
        raise ValueError(f"matrix must be {v.m}x{v.m}")
    comps = []
    for row in M:
        e = num(0.0)
        for coef, comp in zip(row, v.components):
            if coef != 0.0:
                e = add(e, mul(num(float(coef)), comp))
        comps.append(e)
    return SpatialComponent(comps, v.family, v.functions, v.notes, normal_form=False)


# ------------------------------------------------------------ extensions

class ExtensionError(ValueError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (max residual {residual:.3e})")
        self.residual = residual


def _laurent(e: Expr, var: str):
    """Coefficients {power: coef} if ``e`` is a Laurent polynomial in ``var``."""
    if isinstance(e, Num):
        return {0: e.value}
    if isinstance(e, Param):
        return {0: e.value}
    if isinstance(e, Var):
        return {1: 1.0} if e.name == var else None
    if isinstance(e, Neg):
        a = _laurent(e.arg, var)
        return None if a is None else {k: -c for k, c in a.items()}
    if isinstance(e, Pow):
        a = _laurent(e.base, var)
        if a is None:
            return None
        if len(a) == 1:
            (k, c), = a.items()
            return {k * e.exponent: c ** e.exponent}
        if e.exponent < 0:
            return None
        out = {0: 1.0}
        for _ in range(e.exponent):
            out = _poly_mul(out, a)
        return out
    if isinstance(e, BinOp):
        a, b = _laurent(e.left, var), _laurent(e.right, var)
        if a is None or b is None:
            return None
        if e.op in "+-":
            s = 1.0 if e.op == "+" else -1.0
            out = dict(a)
            for k, c in b.items():
                out[k] = out.get(k, 0.0) + s * c
            return out
        if e.op == "*":
            return _poly_mul(a, b)
        if len(b) == 1:
            (k, c), = b.items()
            return {j - k: x / c for j, x in a.items()}
    return None


def _poly_mul(a, b):
    out = {}
    for i, x in a.items():
        for j, y in b.items():
            out[i + j] = out.get(i + j, 0.0) + x * y
    return out


def integrate_q2(q1: Expr) -> Expr:
    """q2 with q2'(s) = q1'(s)/s and no constant term, for Laurent
    polynomial q1 without an s^1 term."""
    coeffs = _laurent(q1, "s")
    if coeffs is None:
        raise ExtensionError("q1 is not a Laurent polynomial in s; pass q2 explicitly", float("nan"))
    if abs(coeffs.get(1, 0.0)) > 0:
        raise ExtensionError("q1 has a linear term, so q2 needs a logarithm; pass q2 explicitly",
                             float("nan"))
    e = num(0.0)
    for n, c in sorted(coeffs.items()):
        if n in (0, 1) or c == 0:
            continue
        coef = n * c / (n - 1)
        term = Var("s") if n - 1 == 1 else parse(f"s^{n - 1}")
        e = add(e, mul(num(coef), term))
    return e


def _max_abs(expr: Expr, pts) -> float:
    vals = Compiled(expr).raw(z1=pts[0], z2=pts[1], z3=pts[2])
    vals = np.broadcast_to(vals, pts[0].shape)
    return float(np.max(np.abs(vals)))


def _extension_points(exprs, n=CHECK_POINTS, seed=2):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(*DOMAIN, size=(3, 4 * n))
    ok = np.ones(pts.shape[1], dtype=bool)
    for e in exprs:
        for x in (e, *(derivative(e, z) for z in LABELS)):
            vals = np.broadcast_to(Compiled(x).raw(z1=pts[0], z2=pts[1], z3=pts[2]), ok.shape)
            ok &= np.isfinite(vals) & (np.abs(vals) < 1e8)
    pts = pts[:, ok][:, :n]
    if pts.shape[1] < n // 2:
        raise ExtensionError("too few regular sample points", float("nan"))
    return pts


def hyperbolic_extension_build(g, q1=None, q="1", *, q2=None, g1=None, g2=None,
                               g3=None) -> SpatialComponent:
    """v = (z, g1 q, g2, g3 q) for the exponential time matrix with c1 = c2.

    ``g(z1, z2)`` must solve g_{01} + g g_{10} = 0. Unless given, g1 = q1(s)
    and g3 = q2(s) with s = 1/g and q2' = q1'/s (integrated for Laurent
    polynomials). For constant g, pass g1 as a function of z1 - g z2; g3
    defaults to g g1. g2 defaults to 0; any g2 must solve
    g1 g2_{01} + g3 g2_{10} = 0. All transport equations are checked.
    """
    fam = "m6-hyperbolic-ext"
    g = _as_expr(fam, "g", g)
    q = _as_expr(fam, "q", q)
    for name, e, allowed in (("g", g, {"z1", "z2"}), ("q", q, {"z3"})):
        bad = free_variables(e) - allowed
        if bad:
            raise SpatialSchemaError(fam, name, f"may depend on {sorted(allowed)} only, found {sorted(bad)}")
    s_of_z = {"s": div(num(1.0), g)}
    if g1 is None:
        if q1 is None:
            raise SpatialSchemaError(fam, "q1", "either q1 or g1 is required")
        q1 = _as_expr(fam, "q1", q1)
        g1 = substitute(q1, s_of_z)
        if g3 is None:
            q2 = integrate_q2(q1) if q2 is None else _as_expr(fam, "q2", q2)
            g3 = substitute(q2, s_of_z)
    else:
        g1 = _as_expr(fam, "g1", g1)
        if g3 is None:
            if free_variables(g):
                raise SpatialSchemaError(fam, "g3", "required when g is not constant and g1 is given")
            g3 = mul(g, g1)
    g3 = _as_expr(fam, "g3", g3)
    g2 = _as_expr(fam, "g2", "0" if g2 is None else g2)
    for name, e in (("g1", g1), ("g2", g2), ("g3", g3)):
        bad = free_variables(e) - {"z1", "z2"}
        if bad:
            raise SpatialSchemaError(fam, name, f"may depend on z1, z2 only, found {sorted(bad)}")

    def d(e, x):
        return derivative(e, x)

    pts = _extension_points([g, g1, g2, g3, q])
    checks = {
        "g_01+g*g_10": add(d(g, "z2"), mul(g, d(g, "z1"))),
        "g1_01+g*g1_10": add(d(g1, "z2"), mul(g, d(g1, "z1"))),
        "g3_10-g*g1_10": add(d(g3, "z1"), mul(num(-1.0), mul(g, d(g1, "z1")))),
        "g3_01-g*g1_01": add(d(g3, "z2"), mul(num(-1.0), mul(g, d(g1, "z2")))),
        "g1*g2_01+g3*g2_10": add(mul(g1, d(g2, "z2")), mul(g3, d(g2, "z1"))),
    }
    transport = {k: _max_abs(e, pts) for k, e in checks.items()}
    if transport["g_01+g*g_10"] > CHECK_TOL:
        raise ExtensionError("g does not solve g_01 + g g_10 = 0", transport["g_01+g*g_10"])
    worst = max(transport, key=transport.get)
    if transport[worst] > CHECK_TOL:
        raise ExtensionError(f"transport equation {worst} fails", transport[worst])
    f = {"f1": mul(g1, q), "f2": g2, "f3": mul(g3, q), "g": g, "g1": g1, "g2": g2, "g3": g3, "q": q}
    v = SpatialComponent([Z1, Z2, Z3, f["f1"], f["f2"], f["f3"]], fam, f,
                         notes={"transport_residuals": transport})
    res = spatial_constraint_residuals(fam, v, pts.T)
    if max(res.values()) > CHECK_TOL:
        raise SpatialConstraintError(fam, res)
    return v


def parabolic_extension_build(F, f2, g) -> SpatialComponent:
    """v = (z, F(g, z2), f2, z2 f2_100 + f1 f2_001 + g) for the (t^2, 1/t)
    time matrix. Residuals of the three remaining equations are stored in
    ``notes['pde_residuals']``; the caller decides what to accept."""
    fam = "m6-parabolic-ext"
    F = _as_expr(fam, "F", F)
    f2 = _as_expr(fam, "f2", f2)
    g = _as_expr(fam, "g", g)
    for name, e, allowed in (("F", F, {"s", "z2"}), ("f2", f2, {"z1", "z3"}), ("g", g, {"z1", "z3"})):
        bad = free_variables(e) - allowed
        if bad:
            raise SpatialSchemaError(fam, name, f"may depend on {sorted(allowed)} only, found {sorted(bad)}")
    f1 = substitute(F, {"s": g})
    f3 = add(add(mul(Z2, derivative(f2, "z1")), mul(f1, derivative(f2, "z3"))), g)

    def d(e, x):
        return derivative(e, x)

    pde = {
        "f2_010": d(f2, "z2"),
        "f1_100*f3_001-f3_100*f1_001": add(mul(d(f1, "z1"), d(f3, "z3")),
                                           mul(num(-1.0), mul(d(f3, "z1"), d(f1, "z3")))),
        "f2_100-f3_010+f1_010*f2_001": add(add(d(f2, "z1"), mul(num(-1.0), d(f3, "z2"))),
                                           mul(d(f1, "z2"), d(f2, "z3"))),
    }
    pts = _extension_points([f1, f2, f3])
    residuals = {k: _max_abs(e, pts) for k, e in pde.items()}
    return SpatialComponent([Z1, Z2, Z3, f1, f2, f3], fam,
                            {"F": F, "f1": f1, "f2": f2, "f3": f3, "g": g},
                            notes={"pde_residuals": residuals})
