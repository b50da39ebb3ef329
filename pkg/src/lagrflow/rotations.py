"""Euler-parameter rotation algebra and the attitude equation a' = K~_w^T a / 4."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import integrator

UNIT_TOL = 1e-9


def h_tilde(a) -> np.ndarray:
    a0, a1, a2, a3 = a
    return np.array([[-a1, a0, -a3, a2],
                     [-a2, a3, a0, -a1],
                     [-a3, -a2, a1, a0]])


def h_matrix(a) -> np.ndarray:
    a0, a1, a2, a3 = a
    return np.array([[-a1, a0, a3, -a2],
                     [-a2, -a3, a0, a1],
                     [-a3, a2, -a1, a0]])


def k_tilde(a) -> np.ndarray:
    a0, a1, a2, a3 = a
    return np.array([[a0, a1, a2, a3],
                     [-a1, a0, -a3, a2],
                     [-a2, a3, a0, -a1],
                     [-a3, -a2, a1, a0]])


def k_matrix(a) -> np.ndarray:
    a0, a1, a2, a3 = a
    return np.array([[a0, a1, a2, a3],
                     [-a1, a0, a3, -a2],
                     [-a2, -a3, a0, a1],
                     [-a3, a2, -a1, a0]])


def rotation_entries(a) -> list:
    """Entries of R_a as polynomials in a; works for floats and jets."""
    a0, a1, a2, a3 = a
    return [[a0 * a0 + a1 * a1 - a2 * a2 - a3 * a3, 2 * (a1 * a2) - 2 * (a0 * a3), 2 * (a1 * a3) + 2 * (a0 * a2)],
            [2 * (a1 * a2) + 2 * (a0 * a3), a0 * a0 - a1 * a1 + a2 * a2 - a3 * a3, 2 * (a2 * a3) - 2 * (a0 * a1)],
            [2 * (a1 * a3) - 2 * (a0 * a2), 2 * (a2 * a3) + 2 * (a0 * a1), a0 * a0 - a1 * a1 - a2 * a2 + a3 * a3]]


def rotation_matrix(a) -> np.ndarray:
    """R_a for a unit 4-vector ``a``."""
    a = np.asarray(a, dtype=float)
    if a.shape != (4,):
        raise ValueError("Euler parameters must be a 4-vector")
    if abs(np.linalg.norm(a) - 1.0) > UNIT_TOL:
        raise ValueError(f"Euler parameters must have unit length, |a|={np.linalg.norm(a)!r}")
    return np.array(rotation_entries(a), dtype=float)


def attitude_rhs(a, w):
    """a' = (1/4) K~_{w^}^T a with w^ = (0, w1, w2, w3).

    Written out componentwise so that it also runs on jets.
    """
    a0, a1, a2, a3 = a
    w1, w2, w3 = w
    return [-(a1 * w1 + a2 * w2 + a3 * w3) * 0.25,
            (a0 * w1 + a2 * w3 - a3 * w2) * 0.25,
            (a0 * w2 - a1 * w3 + a3 * w1) * 0.25,
            (a0 * w3 + a1 * w2 - a2 * w1) * 0.25]


def angular_data(a, a_dot) -> np.ndarray:
    """w = 4 H_a a'."""
    return 4.0 * h_matrix(a) @ np.asarray(a_dot, dtype=float)


def cross_matrix(w) -> np.ndarray:
    w1, w2, w3 = w
    return np.array([[0.0, -w3, w2], [w3, 0.0, -w1], [-w2, w1, 0.0]])


def renormalizer(slc: slice, norm: float = 1.0) -> Callable[[np.ndarray], np.ndarray]:
    """Projection for the integrator: rescale ``y[slc]`` to length ``norm``."""
    def project(y):
        y = y.copy()
        n = np.linalg.norm(y[slc])
        if n > 0:
            y[slc] *= norm / n
        return y
    return project


@dataclass
class AttitudeTrajectory:
    traj: integrator.Trajectory
    w: Callable[[float], np.ndarray]

    def __call__(self, t) -> np.ndarray:
        return self.traj(t)

    def derivative(self, t) -> np.ndarray:
        return np.array(attitude_rhs(self.traj(t), self.w(t)))

    @property
    def t_end(self) -> float:
        return self.traj.t_end


def integrate_attitude(w: Callable[[float], Sequence[float]], a0, horizon,
                       tol: float = 1e-12, renormalize: bool = True) -> AttitudeTrajectory:
    """Integrate the attitude equation for angular data ``w(t)``.

    The state is rescaled to its initial length after every accepted step.
    """
    a0 = np.asarray(a0, dtype=float)
    t0, t1 = map(float, horizon)
    norm0 = float(np.linalg.norm(a0))
    traj = integrator.solve(lambda t, a: np.array(attitude_rhs(a, w(t))), t0, t1, a0,
                            rtol=tol, atol=tol,
                            project=renormalizer(slice(0, 4), norm0) if renormalize else None)
    return AttitudeTrajectory(traj, lambda t: np.asarray(w(t), dtype=float))


def symplectic_form(x, y) -> float:
    """omega = da0^da1 + da2^da3 evaluated on tangent vectors x, y."""
    return x[0] * y[1] - x[1] * y[0] + x[2] * y[3] - x[3] * y[2]


def symplectic_defect(w, a0, d1, d2, horizon, samples: int = 101, eps: float = 1e-6,
                      tol: float = 1e-10) -> float:
    """max_t |omega(da(t)_1, da(t)_2) - omega(d1, d2)|.

    The tangent flows da_k(t) are approximated by differencing a reference
    trajectory from ``a0`` against trajectories from ``a0 + eps*d_k``.
    """
    a0 = np.asarray(a0, dtype=float)
    runs = [integrate_attitude(w, a0 + eps * np.asarray(d, float), horizon, tol=tol)
            for d in (np.zeros(4), d1, d2)]
    ref = symplectic_form(np.asarray(d1, float), np.asarray(d2, float))
    worst = 0.0
    for t in np.linspace(horizon[0], horizon[1], samples):
        base = runs[0](t)
        om = symplectic_form((runs[1](t) - base) / eps, (runs[2](t) - base) / eps)
        worst = max(worst, abs(om - ref))
    return worst
