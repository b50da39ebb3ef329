"""Time components A(t) = R_{a(t)} B(t) for every family.

Each family is described by a recipe: the free functions of t it takes, the
quantities it integrates, and how B(t) and the angular data w(t) are
assembled from them. Values and time derivatives are produced together with
second-order jets, so A, A' and A'' come from one evaluation.
"""
from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional

import numpy as np

from . import integrator, jet
from .exprcore import Compiled, Expr, ExprError, derivative, parse
from .jet import Jet, cbrt, cos, sin, sqrt, tan
from .rotations import attitude_rhs, h_matrix, renormalizer, rotation_entries

DENOMINATOR_FLOOR = 1e-8


class AdmissibilityError(ValueError):
    """One or more family predicates failed; ``violations`` lists them."""

    def __init__(self, family: str, violations: list):
        self.family = family
        self.violations = violations
        lines = "; ".join(f"{name}: {msg}" for name, msg in violations)
        super().__init__(f"{family}: {lines}")


class RootLossError(ArithmeticError):
    pass


# ----------------------------------------------------------- relations

_TERM = re.compile(r"([+-]?)\s*([Qp])(\d+)")


def parse_relation(text: str) -> tuple:
    """'p134-p235' -> ('p', {(1,3,4): 1.0, (2,3,5): -1.0})."""
    terms = {}
    kind = None
    pos = 0
    compact = text.replace(" ", "")
    for m in _TERM.finditer(compact):
        if m.start() != pos:
            raise ValueError(f"bad relation {text!r}")
        pos = m.end()
        sign = -1.0 if m.group(1) == "-" else 1.0
        if kind is None:
            kind = m.group(2)
        elif kind != m.group(2):
            raise ValueError(f"mixed relation {text!r}")
        terms[tuple(int(ch) for ch in m.group(3))] = sign
    if pos != len(compact) or not terms:
        raise ValueError(f"bad relation {text!r}")
    return kind, terms


def _index_name(idx) -> str:
    return "".join(str(i) for i in idx)


# ------------------------------------------------------------- recipes

class Recipe:
    """Base class; subclasses describe one family's time component."""

    family = ""
    m = 0
    free: tuple = ()          # free functions of t
    state: tuple = ()         # integrated quantities besides the attitude
    attitude = False          # whether w can be nonzero
    required: tuple = ()      # constants that must be supplied
    defaults: dict = {}       # optional constants
    nonzero: tuple = ()       # constants that must not vanish
    law_constants: tuple = () # constants entering the integrated time laws
    closed_form = False       # B depends on t only

    def validate(self, c: dict, errors: list) -> dict:
        return {}

    def initial(self, c, init) -> list:
        return [float(init.get(name, 1.0)) for name in self.state]

    def rates(self, t, s, F, law) -> list:
        return []

    def matrix(self, t, s, F, c) -> list:
        raise NotImplementedError

    def angular(self, t, s, F, c) -> list:
        return [0.0, 0.0, 0.0]

    def relations(self, c) -> dict:
        return {}

    def margin(self, t, s, F, c) -> tuple:
        return math.inf, ""


def _v(x):
    return jet.value(x)


class Kirchhoff(Recipe):
    family = "m3-kirchhoff"
    m = 3
    free = ("b11", "b22", "w1", "w2", "w3")
    state = ("b12", "b13", "b23")
    attitude = True
    required = ("c12", "c13", "c23")
    law_constants = ("c12", "c13", "c23")

    def initial(self, c, init):
        return [float(init.get(n, 0.0)) for n in self.state]

    def rates(self, t, s, F, c):
        b12, b13, b23 = s
        b11, b22, w1, w2, w3 = (F[n] for n in self.free)
        b11p, b22p = F["b11_t"], F["b22_t"]
        b33 = 1.0 / (b11 * b22)
        return [(b12 * b11p + w3 * b11 * b22 - c["c12"]) / b11,
                (b13 * b11p - w2 * b11 * b33 + w3 * b11 * b23 - c["c13"]) / b11,
                (b11 * b23 * b22p + w1 - b11 * c["c23"] + b12 * c["c13"] - b13 * c["c12"]) / (b11 * b22)]

    def matrix(self, t, s, F, c):
        b12, b13, b23 = s
        b11, b22 = F["b11"], F["b22"]
        return [[b11, b12, b13], [0.0, b22, b23], [0.0, 0.0, 1.0 / (b11 * b22)]]

    def angular(self, t, s, F, c):
        return [F["w1"], F["w2"], F["w3"]]

    def relations(self, c):
        return {"Q12": c["c12"], "Q13": c["c13"], "Q23": c["c23"], "p123": 1.0}

    def margin(self, t, s, F, c):
        return min(abs(_v(F["b11"])), abs(_v(F["b22"]))) - DENOMINATOR_FLOOR, "b11*b22 vanishes"


class Four(Recipe):
    family = "m4"
    m = 4
    free = ("b11", "b22", "w1")
    state = ("b14", "b23")
    attitude = True
    required = ("c12", "c13", "c14", "c23", "c24", "c34")
    nonzero = ("c14",)
    law_constants = ("c14", "c23", "c12", "c13", "c24", "c34")

    def initial(self, c, init):
        return [float(init.get(n, 0.0)) for n in self.state]

    def rates(self, t, s, F, c):
        b14, b23 = s
        b11, b22, w1 = F["b11"], F["b22"], F["w1"]
        b11p, b22p = F["b11_t"], F["b22_t"]
        shift = c["c23"] + (c["c12"] * c["c34"] - c["c13"] * c["c24"]) / c["c14"]
        return [(b14 * b11p - c["c14"]) / b11,
                (b11 * b23 * b22p + w1) / (b11 * b22) - shift / b22]

    def matrix(self, t, s, F, c):
        b14, b23 = s
        b11, b22 = F["b11"], F["b22"]
        b12 = (c["c24"] * b11 + c["c12"] * b14) / c["c14"]
        b13 = (c["c34"] * b11 + c["c13"] * b14) / c["c14"]
        return [[b11, b12, b13, b14], [0.0, b22, b23, 0.0], [0.0, 0.0, 1.0 / (b11 * b22), 0.0]]

    def angular(self, t, s, F, c):
        return [F["w1"], 0.0, 0.0]

    def relations(self, c):
        rel = {f"Q{k[1:]}": c[k] for k in self.required}
        rel.update({"p123": 1.0, "p124": 0.0, "p134": 0.0})
        return rel

    def margin(self, t, s, F, c):
        return min(abs(_v(F["b11"])), abs(_v(F["b22"]))) - DENOMINATOR_FLOOR, "b11*b22 vanishes"


class FiveElliptic(Recipe):
    family = "m5-elliptic"
    m = 5
    free = ("b11",)
    state = ("theta",)
    attitude = True
    required = ("c12",)
    nonzero = ("c12",)
    law_constants = ("c12",)

    def initial(self, c, init):
        return [float(init.get("theta", 0.0))]

    def rates(self, t, s, F, c):
        return [-c["c12"] / F["b11"] ** 2]

    def matrix(self, t, s, F, c):
        th = s[0]
        b11 = F["b11"]
        ct, st = cos(th), sin(th)
        return [[b11, 0.0, 0.0, ct * b11, -st * b11],
                [0.0, b11, 0.0, st * b11, ct * b11],
                [0.0, 0.0, 1.0 / b11 ** 2, 0.0, 0.0]]

    def angular(self, t, s, F, c):
        return [0.0, 0.0, c["c12"] / F["b11"] ** 2]

    def relations(self, c):
        rel = {f"Q{i}{j}": 0.0 for i, j in itertools.combinations(range(1, 6), 2)}
        rel.update({"Q12": c["c12"], "Q45": -c["c12"], "p123": 1.0, "p345": 1.0,
                    "p134-p235": 0.0, "p135+p234": 0.0})
        return rel

    def margin(self, t, s, F, c):
        return abs(_v(F["b11"])) - DENOMINATOR_FLOOR, "b11 vanishes"


class FiveHyperbolic(Recipe):
    family = "m5-hyperbolic"
    m = 5
    free = ("b11",)
    state = ("l",)
    required = ()
    defaults = {"c15": 1.0}
    nonzero = ("c15",)
    law_constants = ("c15",)

    def rates(self, t, s, F, c):
        return [-c["c15"] / F["b11"] ** 2]

    def matrix(self, t, s, F, c):
        l = s[0]
        b11 = F["b11"]
        return [[b11, 0.0, 0.0, 0.0, l * b11],
                [0.0, l * b11, 0.0, b11, 0.0],
                [0.0, 0.0, 1.0 / (l * b11 ** 2), 0.0, 0.0]]

    def relations(self, c):
        rel = {f"Q{i}{j}": 0.0 for i, j in itertools.combinations(range(1, 6), 2)}
        rel.update({"Q15": c["c15"], "Q24": -c["c15"], "p123": 1.0, "p345": -1.0})
        return rel

    def margin(self, t, s, F, c):
        return min(abs(_v(s[0])), abs(_v(F["b11"]))) - DENOMINATOR_FLOOR, "l*b11 vanishes"


class FiveParabolic(Recipe):
    family = "m5-parabolic"
    m = 5
    free = ("b12",)
    state = ("l",)
    required = ("c12",)
    nonzero = ("c12",)
    law_constants = ("c12",)

    def rates(self, t, s, F, c):
        return [c["c12"] / F["b12"] ** 2]

    def matrix(self, t, s, F, c):
        l = s[0]
        b12 = F["b12"]
        return [[l * b12, b12, 0.0, 0.0, 0.0],
                [0.0, 0.0, 1.0 / b12 ** 2, 0.0, 0.0],
                [0.0, 0.0, 0.0, b12, l * b12]]

    def relations(self, c):
        rel = {f"Q{i}{j}": 0.0 for i, j in itertools.combinations(range(1, 6), 2)}
        rel.update({"Q12": c["c12"], "Q45": -c["c12"], "p234": 1.0, "p134-p235": 0.0})
        return rel

    def margin(self, t, s, F, c):
        return abs(_v(F["b12"])) - DENOMINATOR_FLOOR, "b12 vanishes"


def _hyperbolic_matrix(b11, b12, b13, b22, b23, l1, l2):
    beta = 1.0 / (b11 * b22)
    return [[b11, b12, b13, l2 * b12, b13 / (l1 * l2), l1 * b11],
            [0.0, b22, b23, l2 * b22, b23 / (l1 * l2), 0.0],
            [0.0, 0.0, beta, 0.0, beta / (l1 * l2), 0.0]]


class SixHyperbolicI(Recipe):
    """b22^2 solves c35 l1^2 l2^2 b11^4 X^2 + c16 l2 X + c24 l1 b11^2 = 0."""

    family = "m6-hyperbolic-i"
    m = 6
    free = ("b11",)
    state = ("l1", "l2")
    required = ("c16", "c24", "c35")
    nonzero = ("c16", "c24", "c35")
    law_constants = ("c16", "c24")

    @staticmethod
    def b22_squared(b11, l1, l2, c):
        qa = c["c35"] * l1 ** 2 * l2 ** 2 * b11 ** 4
        qb = c["c16"] * l2
        qc = c["c24"] * l1 * b11 ** 2
        disc = qb * qb - 4.0 * qa * qc
        if _v(disc) < 0:
            raise RootLossError(f"relation for b22^2 lost its real roots (discriminant {_v(disc):.3e})")
        sign = 1.0 if _v(qb) >= 0 else -1.0
        q = -0.5 * (qb + sign * sqrt(disc))
        # the two roots are q/qa and qc/q; the branch is fixed at t0
        root = q / qa if c["_branch"] == 0 else qc / q
        if _v(root) <= 0:
            raise RootLossError("selected root for b22^2 is no longer positive")
        return root

    def rates(self, t, s, F, c):
        l1, l2 = s
        x = self.b22_squared(F["b11"], l1, l2, c)
        return [-c["c16"] / F["b11"] ** 2, -c["c24"] / x]

    def matrix(self, t, s, F, c):
        l1, l2 = s
        b11 = F["b11"]
        b22 = sqrt(self.b22_squared(b11, l1, l2, c))
        return _hyperbolic_matrix(b11, 0.0, 0.0, b22, 0.0, l1, l2)

    def relations(self, c):
        rel = {f"Q{i}{j}": 0.0 for i, j in itertools.combinations(range(1, 7), 2)}
        rel.update({"Q16": c["c16"], "Q24": c["c24"], "Q35": c["c35"], "p123": 1.0, "p456": 1.0})
        return rel

    def margin(self, t, s, F, c):
        return min(abs(_v(s[0])), abs(_v(s[1])), abs(_v(F["b11"]))) - DENOMINATOR_FLOOR, "l1*l2*b11 vanishes"


class SixHyperbolicII(Recipe):
    family = "m6-hyperbolic-ii"
    m = 6
    state = ("l1",)
    required = ("k0", "k1", "k2", "k3", "k4", "k5", "m0", "m1")
    nonzero = ("k0", "k1", "k2", "m0", "m1")
    law_constants = ("k0", "m0", "m1")

    def rates(self, t, s, F, c):
        l1 = s[0]
        return [cbrt(c["k0"] * l1 ** 2 * (c["m1"] * l1 + c["m0"]) ** 2)]

    def matrix(self, t, s, F, c):
        l1 = s[0]
        S = c["m1"] * l1 + c["m0"]
        b11 = cbrt(c["k1"] / (l1 * S))
        return _hyperbolic_matrix(b11, c["k3"] * b11 * S, c["k4"] * b11 * l1,
                                  c["k2"] * b11 * S, c["k5"] * b11 * l1, l1, 1.0 / S)

    def validate(self, c, errors):
        k0, k1, k2, k3, k4, k5, m0, m1 = (c[n] for n in self.required)
        if k3 == 0 and k4 == 0 and k5 == 0:
            errors.append(("k3,k4,k5", "not all of k3, k4, k5 may vanish"))
        if not errors:
            K = float(np.cbrt(k0 * k1 ** 2))
            return {"K": K}
        return {}

    def relations(self, c):
        k0, k1, k2, k3, k4, k5, m0, m1 = (c[n] for n in self.required)
        K = float(np.cbrt(k0 * k1 ** 2))
        mix = k2 * k5 + k3 * k4
        q35 = (float(np.cbrt(k0)) * m0 * (k1 ** 2 * k2 ** 2 * k4 ** 2 + k1 ** 2 * k2 ** 2 * k5 ** 2 + 1)
               / (float(np.cbrt(k1)) ** 4 * k2 ** 2))
        rel = {
            "Q12": -K * k3 * m1, "Q13": -K * k4, "Q14": 0.0, "Q15": -K * k4 * m1, "Q16": -K,
            "Q23": -K * m0 * mix, "Q24": K * m1 * (k2 ** 2 + k3 ** 2), "Q25": 0.0,
            "Q26": -K * k3 * m0, "Q34": K * mix, "Q35": q35, "Q36": 0.0,
            "Q45": -K * m1 * mix, "Q46": -K * k3, "Q56": -K * k4 * m0,
            "p123": 1.0, "p456": 1.0,
        }
        for idx in ("126", "135", "156", "234", "246", "345"):
            rel["p" + idx] = 0.0
        return rel

    def margin(self, t, s, F, c):
        l1 = _v(s[0])
        return min(abs(l1), abs(c["m1"] * l1 + c["m0"])) - DENOMINATOR_FLOOR, "l1*(m1*l1+m0) vanishes"


def _elliptic_matrix(b11, b12, b22, b15, b25, b35, l1, l2):
    return [[b11, b12, l1 * b11 + l2 * b12, -l2 * b11 + l1 * b12, l1 * b15, -l2 * b15],
            [0.0, b22, l2 * b22, l1 * b22, l1 * b25, -l2 * b25],
            [0.0, 0.0, 0.0, 0.0, l1 * b35, -l2 * b35]]


_ELLIPTIC_P = {"p123": 0.0, "p356": 0.0, "p124": 0.0, "p456": 0.0, "p135-p236": 0.0,
               "p146+p245": 0.0, "p136+p235": 1.0, "-p145+p246": 1.0}


class SixEllipticKne1(Recipe):
    family = "m6-elliptic-kne1"
    m = 6
    state = ("theta",)
    attitude = True
    required = ("k", "c12", "c13", "c14", "c56")
    defaults = {"gamma_sign": 1.0}
    nonzero = ("c56",)
    law_constants = ("c56", "k")

    def validate(self, c, errors):
        k, c12, c13, c14, c56 = (c[n] for n in self.required)
        if k == 1:
            errors.append(("k", "k must differ from 1 (use m6-elliptic-keq1)"))
            return {}
        if k < 0:
            errors.append(("k", f"k must be nonnegative, got {k}"))
        g2 = c12 ** 2 - (c12 * k - c14) ** 2 - c13 ** 2
        if g2 <= 0:
            errors.append(("gamma^2", f"gamma^2 = c12^2 - (c12*k - c14)^2 - c13^2 must be > 0, got {g2}"))
            return {}
        gamma = math.copysign(math.sqrt(g2), c.get("gamma_sign", 1.0))
        th = np.linspace(0.0, 2 * np.pi, 721)[:-1]
        den = k * np.cos(th) + 1
        with np.errstate(all="ignore"):
            F = g2 * c56 * (k * k + 2 * k * np.cos(th) + 1) ** 2 / den
            N = (c14 - c12 * k) * np.cos(th) + c13 * np.sin(th) - c12
            b11sq = N / np.cbrt(F)
        positive = bool(np.all(b11sq > 0) and np.all(np.isfinite(b11sq)))
        return {"gamma": gamma, "gamma2": g2, "global_k": k < 1, "global_b11": positive}

    def initial(self, c, init):
        return [float(init.get("theta", 0.0))]

    @staticmethod
    def rate(th, c):
        k = c["k"]
        return cbrt(c["gamma2"] * c["c56"] * (k * k + 2 * k * cos(th) + 1) ** 2 / (k * cos(th) + 1))

    def rates(self, t, s, F, c):
        return [self.rate(s[0], c)]

    def _entries(self, th, c):
        k, c12, c13, c14, g = c["k"], c["c12"], c["c13"], c["c14"], c["gamma"]
        P = self.rate(th, c)
        N = (c14 - c12 * k) * cos(th) + c13 * sin(th) - c12
        b11 = sqrt(N / P)
        b12 = ((c14 - c12 * k) * sin(th) - c13 * cos(th)) / (b11 * P)
        b22 = g / (b11 * P)
        b35 = -P / (g * (k * k + 2 * k * cos(th) + 1))
        return b11, b12, b22, b35

    def matrix(self, t, s, F, c):
        th = s[0]
        b11, b12, b22, b35 = self._entries(th, c)
        return _elliptic_matrix(b11, b12, b22, 0.0, 0.0, b35, c["k"] + cos(th), sin(th))

    def angular(self, t, s, F, c):
        b11 = self._entries(s[0], c)[0]
        return [0.0, 0.0, -c["gamma"] / b11 ** 2]

    def relations(self, c):
        k, c12, c13, c14, c56 = (c[n] for n in self.required)
        rel = {"Q12": c12, "Q13": c13, "Q14": c14, "Q23": c14 - 2 * c12 * k, "Q24": -c13,
               "Q56": c56}
        for idx in ("15", "26", "16", "25", "35", "36", "45", "46"):
            rel["Q" + idx] = 0.0
        rel.update(_ELLIPTIC_P)
        return rel

    def margin(self, t, s, F, c):
        th = _v(s[0])
        den = c["k"] * math.cos(th) + 1
        N = (c["c14"] - c["c12"] * c["k"]) * math.cos(th) + c["c13"] * math.sin(th) - c["c12"]
        P = _v(self.rate(th, c)) if abs(den) > 0 else 0.0
        sq = N / P if P != 0 else 0.0
        return min(abs(den), sq) - DENOMINATOR_FLOOR, "k*cos(theta)+1 or b11^2 vanishes"


class SixEllipticKeq1(Recipe):
    """theta increases to pi in finite time; the run is truncated before."""

    family = "m6-elliptic-keq1"
    m = 6
    state = ("theta",)
    attitude = True
    required = ("c12", "gamma", "c36", "c46", "c56")
    defaults = {"blowup_margin": 0.05}
    nonzero = ("c12", "gamma")
    law_constants = ("c56", "c36", "c46", "gamma")

    def validate(self, c, errors):
        c12, g, c36, c46, c56 = (c[n] for n in self.required)
        if "m0" not in c or "m1" not in c:
            if "phi" not in c:
                errors.append(("m0,m1", "give m0 and m1, or the angle phi parametrizing them"))
                return {}
            rad = (c36 ** 2 + c46 ** 2) * (c12 ** 2 - g ** 2)
            if rad < 0:
                errors.append(("gamma", f"gamma^2 < c12^2 is needed to solve for m0, m1 (gamma={g}, c12={c12})"))
                return {}
            r = math.sqrt(rad) / 2
            m0 = -c12 * c46 / 2 + r * math.cos(c["phi"])
            m1 = -c12 * c36 / 2 + r * math.sin(c["phi"])
        else:
            m0, m1 = c["m0"], c["m1"]
        out = {"m0": m0, "m1": m1}
        rel = (c36 ** 2 + c46 ** 2) * g ** 2 + 4 * c12 * (c46 * m0 + c36 * m1) + 4 * m0 ** 2 + 4 * m1 ** 2
        scale = (c36 ** 2 + c46 ** 2) * g ** 2 + 4 * abs(c12) * (abs(c46 * m0) + abs(c36 * m1)) + 4 * m0 ** 2 + 4 * m1 ** 2
        if abs(rel) > 1e-12 * max(1.0, scale):
            errors.append(("m-relation", "(c36^2+c46^2)*gamma^2 + 4*c12*(c46*m0 + c36*m1) + 4*m0^2 + 4*m1^2 = 0 "
                           f"violated by {rel:.3e}"))
            return out
        D = c36 * m1 + c46 * m0
        if D == 0:
            errors.append(("c36*m1+c46*m0", "must be nonzero"))
            return out
        coef = c56 * g ** 2 - c36 * m1 - c46 * m0
        if coef <= 0:
            errors.append(("theta-rate", f"c56*gamma^2 - c36*m1 - c46*m0 must be > 0, got {coef}"))
        m2 = (g ** 2 * c36 ** 2 + 4 * m0 ** 2) / D
        m3 = (g ** 2 * c46 ** 2 + 4 * m1 ** 2) / D
        m4 = (g ** 2 * c36 * c46 - 4 * m0 * m1) / D
        N0 = ((m2 - m3) + m2 + m3) / 4
        if N0 <= 0 or m2 * m3 < m4 ** 2:
            errors.append(("b11^2", "b11^2 = N(theta)/theta' must stay positive on (-pi, pi)"))
        out.update({"m2": m2, "m3": m3, "m4": m4, "rate_coef": coef})
        return out

    def initial(self, c, init):
        th0 = float(init.get("theta", 0.0))
        if not -math.pi < th0 < math.pi:
            raise AdmissibilityError(self.family, [("theta0", "initial theta must lie in (-pi, pi)")])
        return [th0]

    @staticmethod
    def rate(th, c):
        return cbrt(4.0 * c["rate_coef"] * (1.0 + cos(th)))

    def rates(self, t, s, F, c):
        # the coefficient is recomputed here so that perturbed law constants act
        coef = c["c56"] * c["gamma"] ** 2 - c["c36"] * c["m1"] - c["c46"] * c["m0"]
        return [cbrt(4.0 * coef * (1.0 + cos(s[0])))]

    def _entries(self, th, c):
        g, m0, m1, m2, m3, m4 = c["gamma"], c["m0"], c["m1"], c["m2"], c["m3"], c["m4"]
        P = self.rate(th, c)
        N = ((m2 - m3) * cos(th) - 2 * m4 * sin(th) + m2 + m3) / 4
        b11 = sqrt(N / P)
        b12 = ((m2 - m3) * sin(th) + 2 * m4 * cos(th)) / (4 * b11 * P)
        b22 = g / (b11 * P)
        b35 = -P / (2 * g * (1 + cos(th)))
        half = tan(0.5 * th)
        b15 = (c["c36"] - c["c46"] * half) * b22 / (2 * g)
        b25 = (m1 * half + m0) * b22 / g ** 2
        return b11, b12, b22, b15, b25, b35

    def matrix(self, t, s, F, c):
        th = s[0]
        b11, b12, b22, b15, b25, b35 = self._entries(th, c)
        return _elliptic_matrix(b11, b12, b22, b15, b25, b35, 1.0 + cos(th), sin(th))

    def angular(self, t, s, F, c):
        b11 = self._entries(s[0], c)[0]
        return [0.0, 0.0, -c["gamma"] / b11 ** 2]

    def relations(self, c):
        c12, m2, m3, m4 = c["c12"], c["m2"], c["m3"], c["m4"]
        q14 = c12 + (m2 - m3) / 4
        rel = {"Q12": c12, "Q13": -m4 / 2, "Q14": q14, "Q23": q14 - 2 * c12, "Q24": m4 / 2,
               "Q15": -c["c46"] / 2, "Q26": c["c46"] / 2, "Q16": c["c36"] / 2, "Q25": c["c36"] / 2,
               "Q36": c["c36"], "Q46": c["c46"], "Q56": c["c56"], "Q35": 0.0, "Q45": 0.0,
               "Q34": 0.0}
        rel.update(_ELLIPTIC_P)
        return rel

    def margin(self, t, s, F, c):
        return math.pi - abs(_v(s[0])) - c["blowup_margin"], "theta reaches pi"


def _parabolic_matrix(l1, l2, b12, b13, b15, b23, b25):
    return [[l1 * b12, b12, b13, l2 * b15, b15, l1 * b15 + b13 / l2],
            [0.0, 0.0, b23, l2 * b25, b25, l1 * b25 + b23 / l2],
            [0.0, 0.0, -1.0 / (b12 * b25), 0.0, 0.0, -1.0 / (l2 * b12 * b25)]]


_PARABOLIC_P = {"p235": 1.0, "p145-p246": 1.0, "p123": 0.0, "p356": 0.0, "p124": 0.0,
                "p456": 0.0, "p245": 0.0, "p135-p236": 0.0}


class SixParabolicMain(Recipe):
    family = "m6-parabolic-main"
    m = 6
    state = ("l2",)
    required = ("k0", "k1", "k2", "k3", "k4", "c12", "c45")
    defaults = {"blowup_margin": 0.02}
    nonzero = ("k0", "k2", "k3", "c12", "c45")
    law_constants = ("k0", "k2", "k3")

    @staticmethod
    def rate(l2, c):
        return cbrt(c["k3"] * l2 ** 4 / (c["k0"] - c["k2"] * l2 ** 2))

    def rates(self, t, s, F, c):
        return [self.rate(s[0], c)]

    def matrix(self, t, s, F, c):
        l2 = s[0]
        den = c["k0"] - c["k2"] * l2 ** 2
        b25 = sqrt(c["c45"] / self.rate(l2, c))
        b12 = sqrt(-c["c12"] * b25 ** 2 * l2 ** 2 / (c["c45"] * den))
        l1 = c["k2"] * l2 + c["k1"] + c["k0"] / l2
        b23 = (c["k4"] * l2 - c["k0"]) * b25
        return _parabolic_matrix(l1, l2, b12, 0.0, 0.0, b23, b25)

    def validate(self, c, errors):
        return {}

    def relations(self, c):
        k0, k1, k2, k3, k4, c12, c45 = (c[n] for n in self.required)
        rel = {"Q12": c12, "Q35": c45 * k4, "Q45": c45, "Q46": c45 * (k1 + k4),
               "Q56": -c45 * k2, "Q36": c45 * (k0 * k2 + k1 * k4 + k4 ** 2) - k3 / (c12 * c45),
               "Q34": c45 * k0, "Q15-Q26": 0.0}
        for idx in ("13", "14", "16", "23", "24", "25"):
            rel["Q" + idx] = 0.0
        rel.update(_PARABOLIC_P)
        return rel

    def margin(self, t, s, F, c):
        l2 = _v(s[0])
        den = c["k0"] - c["k2"] * l2 * l2
        with np.errstate(all="ignore"):
            ok = min(abs(l2), abs(den))
        sq = -c["c12"] / (c["c45"] * den) if den != 0 else 0.0
        b25sq = c["c45"] / _v(self.rate(l2, c)) if ok > 0 else 0.0
        # l2' is infinite where k0 = k2*l2^2; stop a fixed relative distance before
        near = abs(den) / abs(c["k0"]) - c["blowup_margin"]
        return (min(min(ok, sq, b25sq) - DENOMINATOR_FLOOR, near),
                "l2, k0-k2*l2^2, b12^2 or b25^2 degenerates")


class SixParabolic2(Recipe):
    family = "m6-parabolic-2perhe"
    m = 6
    closed_form = True
    required = ("k1", "k2", "k3", "k4", "k5", "k6", "k7")
    nonzero = ("k3", "k4", "k5")

    def matrix(self, t, s, F, c):
        k1, k2, k3, k4, k5, k6, k7 = (c[n] for n in self.required)
        t3 = t ** 3
        return _parabolic_matrix(k2 * k4 * t3 + k1, k4 * t3, k5 / t, k6 * t ** 2, 0.0,
                                 k7 * t ** 2, k3 / t)

    def relations(self, c):
        k1, k2, k3, k4, k5, k6, k7 = (c[n] for n in self.required)
        rel = {f"Q{i}{j}": 0.0 for i, j in itertools.combinations(range(1, 7), 2)}
        rel.update({
            "Q12": 3 * k2 * k4 * k5 ** 2, "Q13": -3 * k1 * k5 * k6, "Q16": 3 * k2 * k5 * k6,
            "Q23": -3 * k5 * k6, "Q35": 3 * k3 * k7,
            "Q36": 3 * k1 * k3 * k7 + 3 * k6 ** 2 / k4 + 3 * k7 ** 2 / k4 + 3 / (k3 ** 2 * k4 * k5 ** 2),
            "Q45": 3 * k3 ** 2 * k4, "Q46": 3 * k3 * (k1 * k3 * k4 + k7), "Q56": -3 * k2 * k3 ** 2 * k4,
        })
        rel.update(_PARABOLIC_P)
        return rel

    def margin(self, t, s, F, c):
        return abs(_v(t)) - DENOMINATOR_FLOOR, "t = 0 is singular"


class SixParabolic3(Recipe):
    family = "m6-parabolic-3perhe"
    m = 6
    closed_form = True
    required = ("k0", "k1", "k3", "k4", "k5", "k6", "k7", "k8")
    nonzero = ("k3", "k4", "k5")

    def matrix(self, t, s, F, c):
        k0, k1, k3, k4, k5, k6, k7, k8 = (c[n] for n in self.required)
        t3 = t ** 3
        return _parabolic_matrix(k1 + k0 * t3 / k4, k4 / t3, k3 / t, -k0 * k6 * t ** 2 + k7 / t,
                                 k6 * t ** 2, -k0 * k5 * t ** 2 + k8 / t, k5 * t ** 2)

    def relations(self, c):
        k0, k1, k3, k4, k5, k6, k7, k8 = (c[n] for n in self.required)
        r = k1 * k4 * k6 + k7
        s56 = k5 ** 2 + k6 ** 2
        rel = {f"Q{i}{j}": 0.0 for i, j in itertools.combinations(range(1, 7), 2)}
        rel.update({
            "Q12": 3 * k0 * k3 ** 2 / k4, "Q13": 3 * k0 * k3 * r / k4, "Q14": 3 * k0 * k3 * k6,
            "Q15": -3 * k1 * k3 * k6, "Q16": -3 * k1 * k3 * r / k4, "Q23": 3 * k0 * k3 * k6,
            "Q25": -3 * k3 * k6, "Q26": -3 * k3 * r / k4, "Q34": -3 * k0 * k4 * s56,
            "Q35": -3 * k5 * k8 - 3 * k6 * k7,
            "Q36": (-3 * k1 * k5 * k8 - 3 * k1 * k6 * k7 - 3 * k7 ** 2 / k4 - 3 * k8 ** 2 / k4
                    - 3 / (k3 ** 2 * k4 * k5 ** 2)),
            "Q45": -3 * k4 * s56, "Q46": -3 * k1 * k4 * s56 - 3 * k5 * k8 - 3 * k6 * k7,
        })
        rel.update(_PARABOLIC_P)
        return rel

    def margin(self, t, s, F, c):
        return abs(_v(t)) - DENOMINATOR_FLOOR, "t = 0 is singular"


class Exponential(Recipe):
    """Fixed matrix with exponentials exp(+-c1 t), exp(+-c2 t), exp(+-(c1+c2) t)."""

    family = "exponential"
    m = 6
    closed_form = True
    required = ("c1", "c2")

    def matrix(self, t, s, F, c):
        e = jet.exp
        c1, c2 = c["c1"], c["c2"]
        return [[e(c1 * t), 0.0, 0.0, 0.0, 0.0, e(-c1 * t)],
                [0.0, e(c2 * t), 0.0, e(-c2 * t), 0.0, 0.0],
                [0.0, 0.0, e(-(c1 + c2) * t), 0.0, e((c1 + c2) * t), 0.0]]

    def relations(self, c):
        c1, c2 = c["c1"], c["c2"]
        rel = {f"Q{i}{j}": 0.0 for i, j in itertools.combinations(range(1, 7), 2)}
        rel.update({"Q16": 2 * c1, "Q24": 2 * c2, "Q35": -2 * (c1 + c2), "p123": 1.0, "p456": 1.0})
        return rel


class SixHyperbolicExt(Exponential):
    family = "m6-hyperbolic-ext"
    required = ("c",)

    def matrix(self, t, s, F, c):
        return super().matrix(t, s, F, {"c1": c["c"], "c2": c["c"]})

    def relations(self, c):
        return super().relations({"c1": c["c"], "c2": c["c"]})


class SixEllipticExt(Recipe):
    family = "m6-elliptic-ext"
    m = 6
    closed_form = True
    required = ("theta0",)

    def matrix(self, t, s, F, c):
        th = c["theta0"] * t
        C, S = cos(th), sin(th)
        return [[C, -S, C, S, 0.0, 0.0],
                [S, C, -S, C, 0.0, 0.0],
                [0.0, 0.0, 0.0, 0.0, cos(2 * th), sin(2 * th)]]

    def relations(self, c):
        q = 2 * c["theta0"]
        rel = {f"Q{i}{j}": 0.0 for i, j in itertools.combinations(range(1, 7), 2)}
        rel.update({"Q12": q, "Q34": -q, "Q56": -q})
        return rel


class SixParabolicExt(Recipe):
    family = "m6-parabolic-ext"
    m = 6
    closed_form = True

    def matrix(self, t, s, F, c):
        return [[t ** 2, 1.0 / t, 0.0, 0.0, 0.0, 0.0],
                [0.0, 0.0, t ** 2, 1.0 / t, 0.0, 0.0],
                [0.0, 0.0, 0.0, 0.0, t ** 2, 1.0 / t]]

    def relations(self, c):
        rel = {f"Q{i}{j}": 0.0 for i, j in itertools.combinations(range(1, 7), 2)}
        rel.update({"Q12": 3.0, "Q34": 3.0, "Q56": 3.0, "p146": 1.0, "p236": 1.0, "p245": 1.0})
        return rel

    def margin(self, t, s, F, c):
        return abs(_v(t)) - DENOMINATOR_FLOOR, "t = 0 is singular"


class Constant(Recipe):
    """A constant matrix, used for trivial checks and static configurations."""

    family = "constant"
    closed_form = True

    def __init__(self, matrix):
        self.M = np.asarray(matrix, dtype=float)
        self.m = self.M.shape[1]

    def matrix(self, t, s, F, c):
        return self.M.tolist()


RECIPES: dict[str, Recipe] = {r.family: r for r in (
    Kirchhoff(), Four(), FiveElliptic(), FiveHyperbolic(), FiveParabolic(),
    SixHyperbolicI(), SixHyperbolicII(), SixHyperbolicExt(), SixEllipticKne1(),
    SixEllipticKeq1(), SixEllipticExt(), SixParabolicMain(), SixParabolic2(),
    SixParabolic3(), SixParabolicExt(), Exponential(),
)}


def recipe_for(family: str) -> Recipe:
    try:
        return RECIPES[family]
    except KeyError:
        raise KeyError(f"unknown family '{family}'") from None


# ---------------------------------------------------------- validation

def validate_constants(family: str, c: Mapping[str, float]) -> dict:
    """Check the family's admissibility predicates; return constants plus
    derived quantities (e.g. gamma for the elliptic families)."""
    recipe = recipe_for(family)
    out = dict(recipe.defaults)
    errors = []
    for name, val in c.items():
        try:
            out[name] = float(val)
        except (TypeError, ValueError):
            errors.append((name, f"not a number: {val!r}"))
    for name in recipe.required:
        if name not in out:
            errors.append((name, "missing"))
    for name, val in out.items():
        if not math.isfinite(val):
            errors.append((name, f"must be finite, got {val}"))
    if errors:
        raise AdmissibilityError(family, errors)
    for name in recipe.nonzero:
        if name in out and out[name] == 0:
            errors.append((name, f"{name} must be nonzero"))
    if errors:
        raise AdmissibilityError(family, errors)
    derived = recipe.validate(out, errors)
    if errors:
        raise AdmissibilityError(family, errors)
    out.update(derived)
    return out


# ------------------------------------------------------- time components

class FreeFunction:
    """A free function of t with compiled derivatives up to third order."""

    def __init__(self, name: str, expr: Expr):
        if not expr.free_variables() <= {"t"}:
            raise ExprError(f"free function {name} may depend on t only, "
                            f"found {sorted(expr.free_variables())}")
        self.name = name
        self.expr = expr
        self.orders = [Compiled(derivative(expr, *["t"] * k)) for k in range(4)]

    def __call__(self, t, order=0) -> float:
        return float(self.orders[order](t=float(t)))


@dataclass
class TimeComponent:
    """A(t) = R_{a(t)} B(t) on a (possibly truncated) horizon."""

    family: str
    m: int
    recipe: Recipe
    constants: dict
    law: dict
    free: dict
    horizon: tuple
    requested_horizon: tuple
    trajectory: Optional[integrator.Trajectory] = None
    blowup: Optional[dict] = None
    init: dict = field(default_factory=dict)
    tol: float = 1e-12

    # -- evaluation ----------------------------------------------------
    def _free_values(self, t, as_jets: bool) -> dict:
        F = {}
        for name, fn in self.free.items():
            if as_jets:
                F[name] = Jet(fn(t, 0), fn(t, 1), fn(t, 2))
                F[name + "_t"] = Jet(fn(t, 1), fn(t, 2), fn(t, 3))
            else:
                F[name] = fn(t, 0)
                F[name + "_t"] = fn(t, 1)
        return F

    def _split(self, y):
        if self.recipe.attitude:
            return list(y[:4]), list(y[4:])
        return None, list(y)

    def _full_rhs(self, t, y, F):
        a, s = self._split(y)
        ds = self.recipe.rates(t, s, F, self.law)
        if a is None:
            return list(ds)
        w = self.recipe.angular(t, s, F, self.law)
        return attitude_rhs(a, w) + list(ds)

    def check_t(self, t):
        lo, hi = sorted(self.horizon)
        span = hi - lo
        if not (lo - 1e-12 * max(1.0, span) <= t <= hi + 1e-12 * max(1.0, span)):
            raise ValueError(f"t={t} outside horizon [{lo}, {hi}]")

    def state_jets(self, t: float):
        """(attitude jets or None, state jets, free jets, t jet)."""
        t = float(t)
        self.check_t(t)
        Fj = self._free_values(t, True)
        tj = Jet(t, 1.0, 0.0)
        if self.trajectory is None:
            return None, [], Fj, tj
        y = self.trajectory(t)
        dy = [jet.value(v) for v in self._full_rhs(t, y, self._free_values(t, False))]
        y1 = [Jet(v, d) for v, d in zip(y, dy)]
        ddy = [r.d if isinstance(r, Jet) else 0.0 for r in self._full_rhs(tj, y1, Fj)]
        yj = [Jet(v, d, dd) for v, d, dd in zip(y, dy, ddy)]
        a, s = self._split(yj)
        return a, s, Fj, tj

    def eval_B(self, t: float):
        """(B, B', B'', w) with w the angular data at t."""
        a, s, F, tj = self.state_jets(t)
        B = jet.stack(self.recipe.matrix(tj, s, F, self.law))
        w = np.array([jet.value(x) for x in self.recipe.angular(tj, s, F, self.law)])
        return B[0], B[1], B[2], w

    def attitude(self, t: float) -> np.ndarray:
        if not self.recipe.attitude or self.trajectory is None:
            return np.array(self.init.get("a", (1.0, 0.0, 0.0, 0.0)), dtype=float)
        return self.trajectory(float(t))[:4].copy()

    def eval_A(self, t: float):
        """(A, A', A'') each of shape 3 x m."""
        a, s, F, tj = self.state_jets(t)
        B, Bd, Bdd = jet.stack(self.recipe.matrix(tj, s, F, self.law))
        if a is None:
            a0 = self.init.get("a", (1.0, 0.0, 0.0, 0.0))
            R, Rd, Rdd = np.array(rotation_entries(np.asarray(a0, float))), 0.0, 0.0
        else:
            R, Rd, Rdd = jet.stack(rotation_entries(a))
        A = R @ B
        Ad = Rd @ B + R @ Bd if a is not None else R @ Bd
        Add = Rdd @ B + 2 * Rd @ Bd + R @ Bdd if a is not None else R @ Bdd
        return A, Ad, Add

    def angular_data(self, t: float) -> np.ndarray:
        """w = 4 H_a a' from the attitude trajectory."""
        a, s, F, tj = self.state_jets(t)
        if a is None:
            return np.zeros(3)
        return 4.0 * h_matrix([x.v for x in a]) @ np.array([x.d for x in a])

    # -- convenience ---------------------------------------------------
    def sample_times(self, n: int) -> np.ndarray:
        lo, hi = self.horizon
        return np.linspace(lo, hi, n)

    def relations(self) -> dict:
        return self.recipe.relations(self.constants)


class GaugedTimeComponent(TimeComponent):
    """A(t) H for a constant invertible H."""

    def __init__(self, base: TimeComponent, H: np.ndarray):
        self.__dict__.update(base.__dict__)
        self.base = base
        self.H = np.asarray(H, dtype=float)

    def eval_A(self, t):
        A, Ad, Add = self.base.eval_A(t)
        return A @ self.H, Ad @ self.H, Add @ self.H

    def eval_B(self, t):
        B, Bd, Bdd, w = self.base.eval_B(t)
        return B @ self.H, Bd @ self.H, Bdd @ self.H, w

    def relations(self) -> dict:
        return {}


def _as_expr(name, value) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, (int, float)):
        return parse(repr(float(value)))
    return parse(str(value))


def solve_time_component(family: str, c: Mapping[str, float], free: Mapping | None = None,
                         horizon=(0.0, 1.0), tol: float = 1e-12, init: Mapping | None = None,
                         perturb: Mapping[str, float] | None = None,
                         recipe: Recipe | None = None) -> TimeComponent:
    """Build the time component of ``family``.

    ``free`` maps the family's free-function names to expressions in t.
    ``init`` holds initial values (``a``, ``theta``, ``l``, ``b23``...) at
    horizon[0]. ``perturb`` multiplies constants wherever the construction
    uses them while derived quantities and the declared relations keep their
    unperturbed values; it exists to exercise the verifier.
    """
    recipe = recipe or recipe_for(family)
    consts = validate_constants(family, c) if family in RECIPES else dict(c)
    init = dict(init or {})
    free = dict(free or {})
    missing = [n for n in recipe.free if n not in free]
    if missing:
        raise AdmissibilityError(family, [(f"free.{n}", "missing free function") for n in missing])
    extra = [n for n in free if n not in recipe.free]
    if extra:
        raise AdmissibilityError(family, [(f"free.{n}", "not a free function of this family") for n in extra])
    fns = {n: FreeFunction(n, _as_expr(n, free[n])) for n in recipe.free}
    t0, t1 = float(horizon[0]), float(horizon[1])
    if not t1 > t0:
        raise ValueError(f"horizon must be increasing, got {horizon}")

    law = dict(consts)
    for name, factor in (perturb or {}).items():
        if name not in consts:
            raise KeyError(f"cannot perturb unknown constant '{name}'")
        law[name] = consts[name] * float(factor)
    if family == "m6-elliptic-keq1" and perturb:
        # m0..m4 and the rate coefficient are functions of the declared
        # constants, so they follow the perturbed values
        base = {k: v for k, v in law.items() if k in c or k in recipe.defaults}
        law.update(recipe.validate(base, []))

    # free functions must not vanish where the recipe divides by them
    ts = np.linspace(t0, t1, 201)
    tc = TimeComponent(family, recipe.m, recipe, consts, law, fns, (t0, t1), (t0, t1),
                       init=init, tol=tol)
    for t in ts:
        F = tc._free_values(t, False)
        if recipe.closed_form:
            margin, reason = recipe.margin(t, [], F, consts)
            if margin <= 0:
                raise AdmissibilityError(family, [("horizon", f"{reason} at t={t}")])
        elif recipe.free:
            vals = [abs(F[n]) for n in recipe.free if n.startswith("b")]
            if vals and min(vals) < DENOMINATOR_FLOOR:
                raise AdmissibilityError(family, [("free", f"free function vanishes near t={t}")])

    if family == "m6-hyperbolic-i":
        _choose_branch(tc, init, t0)

    if recipe.closed_form or (not recipe.state and not recipe.attitude):
        return tc

    s0 = recipe.initial(consts, init)
    y0 = list(s0)
    if recipe.attitude:
        a0 = np.asarray(init.get("a", (1.0, 0.0, 0.0, 0.0)), dtype=float)
        if abs(np.linalg.norm(a0) - 1.0) > 1e-9:
            raise AdmissibilityError(family, [("init.a", "Euler parameters must have unit length")])
        y0 = list(a0) + y0
    F0 = tc._free_values(t0, False)
    margin0, reason0 = recipe.margin(t0, s0, F0, consts)
    if margin0 <= 0:
        raise AdmissibilityError(family, [("init", f"initial data is singular: {reason0}")])

    def rhs(t, y):
        F = tc._free_values(t, False)
        return np.array([jet.value(v) for v in tc._full_rhs(t, list(y), F)])

    def monitor(t, y):
        a, s = tc._split(list(y))
        return recipe.margin(t, s, tc._free_values(t, False), consts)

    project = renormalizer(slice(0, 4)) if recipe.attitude else None
    try:
        traj = integrator.solve(rhs, t0, t1, y0, rtol=tol, atol=tol, project=project, monitor=monitor)
    except integrator.IntegrationError as err:
        if isinstance(err.__cause__, RootLossError):
            raise RootLossError(f"{err.__cause__} near t={err.t:.6g}") from err
        raise
    tc.trajectory = traj
    if traj.stopped:
        tc.horizon = (t0, traj.t_end)
        tc.blowup = {"time": traj.t_end, "reason": traj.stop_reason}
    return tc


def _choose_branch(tc: TimeComponent, init: Mapping, t0: float):
    c = tc.constants
    l1 = float(init.get("l1", 1.0))
    l2 = float(init.get("l2", 1.0))
    b11 = tc.free["b11"](t0)
    roots = []
    for branch in (0, 1):
        try:
            roots.append((SixHyperbolicI.b22_squared(b11, l1, l2, {**c, "_branch": branch}), branch))
        except (RootLossError, ZeroDivisionError):
            pass
    if not roots:
        raise AdmissibilityError(tc.family, [("c16,c24,c35", "the b22^2 relation has no positive root at t0")])
    want = init.get("root", "larger")
    roots.sort()
    branch = roots[-1][1] if want == "larger" else roots[0][1]
    c["_branch"] = branch
    tc.law["_branch"] = branch


def fixed_time_component(name: str, horizon=(0.0, 1.0), **c) -> TimeComponent:
    """One of the fixed matrices: 'exponential' (c1, c2), 'trig' (theta0) or
    't2' (no constants); or ``name='constant'`` with ``matrix=...``."""
    if name == "constant":
        recipe = Constant(c.pop("matrix"))
        return solve_time_component("constant", {}, horizon=horizon, recipe=recipe)
    family = {"exponential": "exponential", "trig": "m6-elliptic-ext",
              "t2": "m6-parabolic-ext"}[name]
    return solve_time_component(family, c, horizon=horizon)


# ------------------------------------------------------ Q and p queries

def q_matrix(A: np.ndarray, Ad: np.ndarray) -> np.ndarray:
    """Q_ij = <A_i', A_j> - <A_j', A_i> as an antisymmetric m x m array."""
    M = Ad.T @ A
    return M - M.T


def q_coefficients(tc: TimeComponent, t: float, route: str = "direct") -> dict:
    """Q_ij for i < j.

    ``route='direct'`` uses the columns of A; ``route='rotation'`` uses
    <w, B_i x B_j> + <B_i', B_j> - <B_i, B_j'> with w from the attitude.
    """
    m = tc.m
    if route == "direct":
        A, Ad, _ = tc.eval_A(t)
        Q = q_matrix(A, Ad)
    elif route == "rotation":
        B, Bd, _, _ = tc.eval_B(t)
        w = tc.angular_data(t)
        cross = np.einsum("k,kij->ij", w, _cross_table(B))
        Q = cross + q_matrix(B, Bd)
    else:
        raise ValueError(route)
    return {(i + 1, j + 1): float(Q[i, j]) for i, j in itertools.combinations(range(m), 2)}


def _cross_table(B: np.ndarray) -> np.ndarray:
    """T[k, i, j] = (B_i x B_j)_k."""
    m = B.shape[1]
    T = np.zeros((3, m, m))
    for i in range(m):
        for j in range(m):
            T[:, i, j] = np.cross(B[:, i], B[:, j])
    return T


def minors(M: np.ndarray) -> dict:
    """All 3x3 column minors p_ijk (1-based, i < j < k)."""
    m = M.shape[1]
    return {(i + 1, j + 1, k + 1): float(np.linalg.det(M[:, [i, j, k]]))
            for i, j, k in itertools.combinations(range(m), 3)}


def p_minors(tc: TimeComponent, t: float) -> dict:
    return minors(tc.eval_A(t)[0])


def relation_residuals(tc: TimeComponent, times) -> dict:
    """max_t |relation(t) - declared value| for each declared relation."""
    rel = tc.relations()
    out = {name: 0.0 for name in rel}
    parsed = {name: parse_relation(name) for name in rel}
    for t in times:
        A, Ad, _ = tc.eval_A(t)
        Q = q_matrix(A, Ad)
        P = minors(A)
        for name, (kind, terms) in parsed.items():
            if kind == "Q":
                val = sum(coef * Q[i[0] - 1, i[1] - 1] for i, coef in terms.items())
            else:
                val = sum(coef * P[i] for i, coef in terms.items())
            out[name] = max(out[name], abs(val - rel[name]))
    return out


# -------------------------------------------------------------- gauges

def gauge_transform(fm, H):
    """(A, v) -> (A H, H^{-1} v); phi is unchanged."""
    from .flowmap import FlowMap
    from .spatial import linear_transform

    H = np.asarray(H, dtype=float)
    if H.shape != (fm.m, fm.m):
        raise ValueError(f"H must be {fm.m}x{fm.m}")
    cond = np.linalg.cond(H)
    if not np.isfinite(cond) or cond > 1e12:
        raise np.linalg.LinAlgError(f"H is singular (condition number {cond:.3e})")
    Hinv = np.linalg.inv(H)
    return FlowMap(GaugedTimeComponent(fm.tc, H), linear_transform(fm.v, Hinv),
                   fm.family, dict(fm.constants))


def shear_gauge(e124: float, e134: float) -> np.ndarray:
    """The m=4 gauge that removes the minors p124 and p134 (given p123 = 1)."""
    return np.array([[1.0, 0.0, 0.0, 0.0],
                     [0.0, 1.0, 0.0, e134],
                     [0.0, 0.0, 1.0, -e124],
                     [0.0, 0.0, 0.0, 1.0]])


def boost_gauge(d: float, s: float) -> np.ndarray:
    """The m=5 elliptic gauge mixing columns 1, 2 with 4, 5."""
    ch, sh = math.cosh(s), math.sinh(s)
    cd, sd = math.cos(d), math.sin(d)
    return np.array([[ch, 0.0, 0.0, sh * cd, sh * sd],
                     [0.0, ch, 0.0, sh * sd, -sh * cd],
                     [0.0, 0.0, 1.0, 0.0, 0.0],
                     [sh * cd, sh * sd, 0.0, ch, 0.0],
                     [sh * sd, -sh * cd, 0.0, 0.0, ch]])


def lambda_invariant(tc: TimeComponent, t: float) -> float:
    """lambda1' lambda2' (lambda1' + lambda2') with l_j = exp(lambda_j).

    l1 and l2 are read off the hyperbolic column pattern (A16/A11 and
    A24/A22), so the value comes from A and A' alone.
    """
    A, Ad, _ = tc.eval_A(t)
    lam1 = Ad[0, 5] / A[0, 5] - Ad[0, 0] / A[0, 0]
    lam2 = Ad[1, 3] / A[1, 3] - Ad[1, 1] / A[1, 1]
    return float(lam1 * lam2 * (lam1 + lam2))


def _state_value(tc: TimeComponent, t: float, index: int = 0) -> tuple:
    _, s, _, _ = tc.state_jets(t)
    return s[index].v, s[index].d


def mirrored_solution_residuals(tc: TimeComponent, times) -> np.ndarray:
    """Residuals of the cubed-derivative ODE for the discrete symmetry image.

    m6-hyperbolic-ii: mu_hat(t) = m0^2 / (m1^2 mu(-t)) must solve
    (l1')^3 = k0 l1^2 (m1 l1 + m0)^2, so ``times`` and their negatives must
    lie on the horizon.  m6-parabolic-main: k0 / (k2 mu) must solve
    (l2')^3 = k3 l2^4 / (k0 - k2 l2^2).  Each residual is relative to
    1 + |right-hand side|.
    """
    c = tc.constants
    out = []
    for t in times:
        if tc.family == "m6-hyperbolic-ii":
            mu, dmu = _state_value(tc, -t)
            scale = c["m0"] ** 2 / c["m1"] ** 2
            hat, dhat = scale / mu, scale * dmu / mu ** 2
            rhs = c["k0"] * hat ** 2 * (c["m1"] * hat + c["m0"]) ** 2
        elif tc.family == "m6-parabolic-main":
            mu, dmu = _state_value(tc, t)
            scale = c["k0"] / c["k2"]
            hat, dhat = scale / mu, -scale * dmu / mu ** 2
            rhs = c["k3"] * hat ** 4 / (c["k0"] - c["k2"] * hat ** 2)
        else:
            raise ValueError(f"no discrete symmetry is known for {tc.family}")
        out.append(abs(dhat ** 3 - rhs) / (1.0 + abs(rhs)))
    return np.array(out)
