"""Independent checks of a flow map phi(z, t) = A(t) v(z).

A map solves the Euler equations when the volume factor alpha = det(d phi)
and the Cauchy invariants h are both independent of t. Everything here is
computed from A, its time derivatives and the spatial Jacobian, without
reference to how a family was constructed.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from . import spatial
from .flowmap import FlowMap
from .temporal import minors, parse_relation, q_matrix


class SingularMapError(ArithmeticError):
    pass


class NewtonError(ArithmeticError):
    pass


def _points(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.shape[0] != 3:
        raise ValueError(f"labels must have shape (3,) or (3, N), got {z.shape}")
    return z


def _dphi(fm: FlowMap, z, A) -> np.ndarray:
    J = fm.v.jacobian(z)
    return A @ J if J.ndim == 2 else np.einsum("im,nmk->nik", A, J)


# --------------------------------------------------------- alpha and h

def alpha(fm: FlowMap, z, t: float, route: str = "minors"):
    """Volume factor at labels ``z`` ((3,) or (3, N)).

    ``route='minors'`` sums p_ijk g_ijk; ``route='direct'`` takes det(A dv).
    """
    z = _points(z)
    A = fm.tc.eval_A(t)[0]
    if route == "direct":
        return np.linalg.det(_dphi(fm, z, A))
    if route != "minors":
        raise ValueError(route)
    p = minors(A)
    g = spatial.spatial_minors(fm.v, z)
    return sum(p[idx] * g[idx] for idx in p)


def _h_from(D, Dd) -> np.ndarray:
    """h from d phi and d phi': the 2-form sum_k d phi_k' ^ d phi_k."""
    M = np.swapaxes(Dd, -1, -2) @ D
    M = M - np.swapaxes(M, -1, -2)
    return np.stack([M[..., 1, 2], M[..., 2, 0], M[..., 0, 1]], axis=0)


def cauchy_invariants(fm: FlowMap, z, t: float, route: str = "forms") -> np.ndarray:
    """(h1, h2, h3) at labels ``z``; shape (3,) or (3, N).

    ``route='forms'`` sums Q_ij (grad v_i x grad v_j); ``route='time-fd'``
    differentiates d phi in t by central differences instead.
    """
    z = _points(z)
    if route == "forms":
        A, Ad, _ = fm.tc.eval_A(t)
        Q = q_matrix(A, Ad)
        J = fm.v.jacobian(z)
        M = np.swapaxes(J, -1, -2) @ Q @ J
        # M is antisymmetric with M = D'^T D - D^T D'
        return np.stack([M[..., 1, 2], M[..., 2, 0], M[..., 0, 1]], axis=0)
    if route != "time-fd":
        raise ValueError(route)
    lo, hi = fm.tc.horizon
    dt = 1e-4 * (hi - lo)
    ta, tb = max(lo, t - dt), min(hi, t + dt)
    D = _dphi(fm, z, fm.tc.eval_A(t)[0])
    Dd = (_dphi(fm, z, fm.tc.eval_A(tb)[0]) - _dphi(fm, z, fm.tc.eval_A(ta)[0])) / (tb - ta)
    return _h_from(D, Dd)


# ----------------------------------------------------------- reports

@dataclass
class CheckResult:
    residual: float
    tol: float
    passed: bool
    location: Optional[dict] = None


@dataclass
class VerificationReport:
    family: str
    checks: dict = field(default_factory=dict)
    blowup: Optional[dict] = None
    horizon: tuple = ()
    grid: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def add(self, name: str, residual: float, tol: float, location=None):
        residual = float(residual)
        self.checks[name] = CheckResult(residual, float(tol), bool(residual <= tol), location)

    def failures(self) -> list:
        return [name for name, c in self.checks.items() if not c.passed]

    def to_dict(self) -> dict:
        return {"family": self.family, "passed": self.passed,
                "horizon": [float(x) for x in self.horizon],
                "blowup": _plain(self.blowup), "grid": self.grid,
                "checks": {k: asdict(v) for k, v in self.checks.items()}}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _plain(x):
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    return x


def grid_points(n: int = 5, box=spatial.DOMAIN) -> np.ndarray:
    """n x n x n grid of the cube, shape (3, n^3)."""
    axis = np.linspace(box[0], box[1], n)
    return np.array([g.ravel() for g in np.meshgrid(axis, axis, axis, indexing="ij")])


def constancy_report(fm: FlowMap, n_space: int = 5, n_time: int = 20, tol: float = 1e-6,
                     box=spatial.DOMAIN, points=None) -> VerificationReport:
    """Certify that h and alpha do not depend on t.

    Residuals are max |value(z, t) - value(z, t0)| / (1 + |value(z, t0)|)
    over the grid and n_time samples of the (possibly truncated) horizon.
    The report also checks the Q_ij and p_ijk relations the time component
    declares and records the smallest det(d phi) seen.
    """
    z = grid_points(n_space, box) if points is None else _points(points)
    times = fm.tc.sample_times(n_time)
    J = fm.v.jacobian(z)
    t0 = times[0]

    def fields(t):
        A, Ad, _ = fm.tc.eval_A(t)
        M = np.swapaxes(J, -1, -2) @ q_matrix(A, Ad) @ J
        h = np.stack([M[..., 1, 2], M[..., 2, 0], M[..., 0, 1]], axis=0)
        return h, np.linalg.det(np.einsum("im,nmk->nik", A, J))

    h0, a0 = fields(t0)
    worst = {"h": (0.0, None), "alpha": (0.0, None), "declared": (0.0, None)}
    min_det = (np.inf, None)
    declared = {name: (parse_relation(name), val) for name, val in fm.tc.relations().items()}
    for t in times:
        h, a = fields(t)
        if declared:
            A, Ad, _ = fm.tc.eval_A(t)
            Q, P = q_matrix(A, Ad), minors(A)
            for name, ((kind, terms), val) in declared.items():
                if kind == "Q":
                    got = sum(s * Q[i[0] - 1, i[1] - 1] for i, s in terms.items())
                else:
                    got = sum(s * P[i] for i, s in terms.items())
                r = abs(got - val) / (1 + abs(val))
                if r > worst["declared"][0]:
                    worst["declared"] = (float(r), {"relation": name, "t": float(t)})
        rh = np.linalg.norm(h - h0, axis=0) / (1 + np.linalg.norm(h0, axis=0))
        ra = np.abs(a - a0) / (1 + np.abs(a0))
        for key, r in (("h", rh), ("alpha", ra)):
            i = int(np.argmax(r))
            if r[i] > worst[key][0] or worst[key][1] is None:
                worst[key] = (float(r[i]), {"z": z[:, i].tolist(), "t": float(t)})
        i = int(np.argmin(a))
        if a[i] < min_det[0]:
            min_det = (float(a[i]), {"z": z[:, i].tolist(), "t": float(t)})
    rep = VerificationReport(fm.family, blowup=fm.tc.blowup, horizon=tuple(fm.tc.horizon),
                             grid={"n_space": int(round(z.shape[1] ** (1 / 3))) if points is None else z.shape[1],
                                   "n_time": int(n_time), "box": list(box)})
    rep.add("h_constant", worst["h"][0], tol, worst["h"][1])
    rep.add("alpha_constant", worst["alpha"][0], tol, worst["alpha"][1])
    # the time component must also realize the constants it was built with
    rep.add("declared_constants", worst["declared"][0], tol, worst["declared"][1])
    # positive determinant: residual is how far below zero the minimum sits
    rep.add("det_positive", max(0.0, -min_det[0]) if min_det[0] != 0 else 1.0, 0.0, min_det[1])
    rep.checks["det_positive"].location = {**(min_det[1] or {}), "min_det": min_det[0]}
    return rep


# ---------------------------------------------------- Eulerian fields

def velocity(fm: FlowMap, z, t: float) -> np.ndarray:
    """u at the particle with label z: A'(t) v(z)."""
    return fm.tc.eval_A(t)[1] @ fm.v.values(_points(z))


def pressure_gradient(fm: FlowMap, z, t: float) -> np.ndarray:
    """grad p at x = phi(z, t), which equals -A''(t) v(z)."""
    return -(fm.tc.eval_A(t)[2] @ fm.v.values(_points(z)))


def eulerian_vorticity(fm: FlowMap, z, t: float) -> np.ndarray:
    """Vorticity at x = phi(z, t) from Cauchy's formula d phi h / alpha."""
    z = _points(z)
    A = fm.tc.eval_A(t)[0]
    D = _dphi(fm, z, A)
    a = np.linalg.det(D)
    if np.any(np.abs(a) < 1e-10):
        raise SingularMapError(f"det(d phi) vanishes at t={t}")
    h = cauchy_invariants(fm, z, t)
    if z.ndim == 1:
        return D @ h / a
    return np.einsum("nik,kn->in", D, h) / a


class Inverter:
    """Inverts z -> phi(z, t) by damped Newton iteration.

    The previous solution seeds the next query; the first query (or one
    that fails from the warm start) seeds from a coarse label grid.
    """

    def __init__(self, fm: FlowMap, box=spatial.DOMAIN, grid: int = 11,
                 max_iter: int = 50, step_tol: float = 1e-12):
        self.fm = fm
        self.box = box
        self.max_iter = max_iter
        self.step_tol = step_tol
        self._grid = grid_points(grid, box)
        self._last = None

    def _seed(self, x, A):
        vals = A @ self.fm.v.values(self._grid)
        i = int(np.argmin(np.linalg.norm(vals - x[:, None], axis=0)))
        return self._grid[:, i].copy()

    def _newton(self, x, t, z, A):
        v = self.fm.v
        r = A @ v.values(z) - x
        for _ in range(self.max_iter):
            D = A @ v.jacobian(z)
            try:
                step = np.linalg.solve(D, r)
            except np.linalg.LinAlgError:
                return None
            lam, nr = 1.0, np.linalg.norm(r)
            while lam > 1e-6:
                z_new = z - lam * step
                try:
                    r_new = A @ v.values(z_new) - x
                except ArithmeticError:
                    r_new = None
                if r_new is not None and np.linalg.norm(r_new) <= nr:
                    break
                lam *= 0.5
            else:
                return None
            z, r = z_new, r_new
            if np.linalg.norm(lam * step) <= self.step_tol or np.linalg.norm(r) == 0.0:
                return z
        return None

    def __call__(self, x, t: float) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        A = self.fm.tc.eval_A(t)[0]
        seeds = ([self._last] if self._last is not None else []) + [None]
        for seed in seeds:
            z0 = self._seed(x, A) if seed is None else seed
            z = self._newton(x, t, z0, A)
            if z is not None:
                self._last = z
                return z
        raise NewtonError(f"Newton inversion did not converge for x={x.tolist()} at t={t}")


def invert(fm: FlowMap, x, t: float, z0=None) -> np.ndarray:
    inv = Inverter(fm)
    if z0 is not None:
        inv._last = np.asarray(z0, dtype=float)
    return inv(x, t)


def eulerian_velocity(fm: FlowMap, x, t: float, inverter: Inverter | None = None) -> np.ndarray:
    """u(x, t) = A'(t) v(phi^{-1}(x, t))."""
    inv = inverter or Inverter(fm)
    return velocity(fm, inv(x, t), t)


# ------------------------------------------------ finite-difference oracles

def fd_curl(field, x, step: float) -> np.ndarray:
    """Central-difference curl of a vector field at x."""
    x = np.asarray(x, dtype=float)
    J = np.empty((3, 3))
    for k in range(3):
        e = np.zeros(3)
        e[k] = step
        J[:, k] = (np.asarray(field(x + e)) - np.asarray(field(x - e))) / (2 * step)
    return np.array([J[2, 1] - J[1, 2], J[0, 2] - J[2, 0], J[1, 0] - J[0, 1]])


def fd_divergence(field, x, step: float) -> float:
    x = np.asarray(x, dtype=float)
    total = 0.0
    for k in range(3):
        e = np.zeros(3)
        e[k] = step
        total += (field(x + e)[k] - field(x - e)[k]) / (2 * step)
    return float(total)


# ------------------------------------------------ algebraic identities

def _det3(a, b, c):
    return (a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0])
            + a[2] * (b[0] * c[1] - b[1] * c[0]))


def _exact(M) -> bool:
    return all(isinstance(x, (int, Fraction, np.integer)) for row in M for x in row)


def plucker_residuals(M) -> dict:
    """Residuals of the four minor identities of a 3 x m matrix.

    Integer or Fraction entries are handled in exact arithmetic; the
    residuals are then exact zeros for any input. Identities needing more
    columns than available are skipped.
    """
    if isinstance(M, np.ndarray) and M.dtype.kind in "iu":
        M = M.tolist()
    exact = _exact(M) if not isinstance(M, np.ndarray) else False
    if exact:
        cols = [[Fraction(M[r][c]) for r in range(3)] for c in range(len(M[0]))]
    else:
        M = np.asarray(M, dtype=float)
        cols = [M[:, c] for c in range(M.shape[1])]
    m = len(cols)
    if m < 4:
        raise ValueError("the identities need at least four columns")

    def p(i, j, k):
        return _det3(cols[i - 1], cols[j - 1], cols[k - 1])

    out = {}
    if m >= 5:
        out["p123p145-p124p135+p125p134"] = (p(1, 2, 3) * p(1, 4, 5) - p(1, 2, 4) * p(1, 3, 5)
                                             + p(1, 2, 5) * p(1, 3, 4))
    if m >= 6:
        out["p123p456-p124p356+p125p346-p126p345"] = (
            p(1, 2, 3) * p(4, 5, 6) - p(1, 2, 4) * p(3, 5, 6) + p(1, 2, 5) * p(3, 4, 6)
            - p(1, 2, 6) * p(3, 4, 5))
    vec = [p(2, 3, 4) * cols[0][r] - p(1, 3, 4) * cols[1][r] + p(1, 2, 4) * cols[2][r]
           - p(1, 2, 3) * cols[3][r] for r in range(3)]
    out["p234A1-p134A2+p124A3-p123A4"] = max(abs(x) for x in vec)
    if m >= 6:
        rows = [[p(2, 3, 4), p(2, 3, 5), p(2, 3, 6)],
                [p(1, 3, 4), p(1, 3, 5), p(1, 3, 6)],
                [p(1, 2, 4), p(1, 2, 5), p(1, 2, 6)]]
        out["p123^2p456+det"] = p(1, 2, 3) ** 2 * p(4, 5, 6) + _det3(*rows)
    return {k: abs(v) if exact else float(abs(v)) for k, v in out.items()}


def _five_groups(m: int):
    return list(itertools.combinations(range(m), 5))


def omega_wedge_residual(tc, t: float) -> float:
    """Largest coefficient of the 5-form A*vol ^ beta at time t.

    Writing it as sum_j det(rows 1..3, row_j', row_j) makes every term vanish
    by a repeated row, so the value is assembled instead from the 3x3 minors
    and Q through the shuffle expansion.
    """
    if tc.m < 5:
        raise ValueError("needs m >= 5")
    A, Ad, _ = tc.eval_A(t)
    coeffs = omega_wedge_coefficients(A, Ad)
    return float(max(abs(v) for v in coeffs.values()))


def omega_wedge_coefficients(A: np.ndarray, Ad: np.ndarray, Q=None) -> dict:
    """Coefficients of A*vol ^ beta from the minors and Q by shuffles.

    ``Q`` overrides the antisymmetric matrix derived from (A, A').
    """
    m = A.shape[1]
    p = minors(A)
    Q = q_matrix(A, Ad) if Q is None else np.asarray(Q, dtype=float)
    out = {}
    for grp in _five_groups(m):
        total = 0.0
        for tri in itertools.combinations(grp, 3):
            rest = [i for i in grp if i not in tri]
            perm = list(tri) + rest
            sign = _perm_sign([grp.index(i) for i in perm])
            total += sign * p[tuple(i + 1 for i in tri)] * Q[rest[0], rest[1]]
        out[tuple(i + 1 for i in grp)] = total
    return out


def _perm_sign(perm) -> int:
    sign, perm = 1, list(perm)
    for i in range(len(perm)):
        while perm[i] != i:
            j = perm[i]
            perm[i], perm[j] = perm[j], perm[i]
            sign = -sign
    return sign
