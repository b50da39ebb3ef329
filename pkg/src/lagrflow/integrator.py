"""Adaptive Dormand-Prince 5(4) integration with dense output.

Written out here rather than delegated to scipy so that a projection hook
(unit-norm renormalization of Euler parameters) and an early-stop monitor
can act after every accepted step.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
A = np.array([
    [0.0, 0.0, 0.0, 0.0, 0.0],
    [1 / 5, 0.0, 0.0, 0.0, 0.0],
    [3 / 40, 9 / 40, 0.0, 0.0, 0.0],
    [44 / 45, -56 / 15, 32 / 9, 0.0, 0.0],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0.0],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
])
B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
# difference between the 5th and embedded 4th order weights (7 stages, FSAL)
E = np.array([-71 / 57600, 0.0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40])
# dense output: y(t + x h) = y + h K^T (P [x, x^2, x^3, x^4])
P = np.array([
    [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])


class IntegrationError(RuntimeError):
    def __init__(self, message: str, t: float):
        super().__init__(f"{message} at t={t!r}")
        self.t = t


@dataclass
class Trajectory:
    """Piecewise quartic dense output of an integration run."""
    ts: np.ndarray          # step boundaries, increasing or decreasing
    ys: np.ndarray          # states at the boundaries
    ks: list                # stage derivatives per step (7 x n)
    t_end: float
    stopped: bool = False   # True when a monitor ended the run early
    stop_reason: str = ""
    nfev: int = 0

    @property
    def t0(self) -> float:
        return float(self.ts[0])

    def __call__(self, t) -> np.ndarray:
        t = float(t)
        ts = self.ts
        lo, hi = min(ts[0], self.t_end), max(ts[0], self.t_end)
        span = abs(self.t_end - ts[0])
        if t < lo - 1e-12 * max(1.0, span) or t > hi + 1e-12 * max(1.0, span):
            raise ValueError(f"t={t} outside integrated interval [{lo}, {hi}]")
        if len(ts) == 1:
            return self.ys[0].copy()
        forward = ts[-1] > ts[0]
        if forward:
            i = int(np.searchsorted(ts, t, side="right")) - 1
        else:
            i = int(np.searchsorted(-ts, -t, side="right")) - 1
        i = min(max(i, 0), len(ts) - 2)
        h = ts[i + 1] - ts[i]
        x = (t - ts[i]) / h
        q = P @ np.array([x, x * x, x ** 3, x ** 4])
        return self.ys[i] + h * (self.ks[i].T @ q)


def solve(rhs: Callable[[float, np.ndarray], np.ndarray], t0: float, t1: float,
          y0, rtol: float = 1e-10, atol: float = 1e-10,
          project: Optional[Callable[[np.ndarray], np.ndarray]] = None,
          monitor: Optional[Callable[[float, np.ndarray], tuple]] = None,
          max_steps: int = 200000, first_step: Optional[float] = None) -> Trajectory:
    """Integrate ``y' = rhs(t, y)`` from ``t0`` to ``t1`` (either direction).

    ``project`` maps an accepted state back onto the constraint manifold.
    ``monitor(t, y)`` returns ``(margin, reason)``; once the margin drops to
    zero or below, the crossing is located on the dense output by bisection
    and the run ends there.
    """
    y = np.array(y0, dtype=float)
    t = float(t0)
    direction = 1.0 if t1 >= t0 else -1.0
    span = abs(t1 - t0)
    ts, ys, ks = [t], [y.copy()], []
    if span == 0.0:
        return Trajectory(np.array(ts), np.array(ys), ks, t)
    f = np.asarray(rhs(t, y), dtype=float)
    nfev = 1
    if first_step is None:
        scale = atol + rtol * np.abs(y)
        d0 = np.linalg.norm(y / scale) / np.sqrt(y.size)
        d1 = np.linalg.norm(f / scale) / np.sqrt(y.size)
        h = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
        h = min(h, span)
    else:
        h = first_step
    K = np.empty((7, y.size))
    steps = 0
    while direction * (t1 - t) > 0:
        steps += 1
        if steps > max_steps:
            raise IntegrationError("too many steps", t)
        h = min(h, abs(t1 - t))
        if h < 1e-14 * max(1.0, abs(t)):
            raise IntegrationError("step size underflow", t)
        hs = direction * h
        K[0] = f
        try:
            for s in range(1, 6):
                dy = hs * (A[s, :s] @ K[:s])
                K[s] = rhs(t + C[s] * hs, y + dy)
            y_new = y + hs * (B @ K[:6])
            f_new = np.asarray(rhs(t + hs, y_new), dtype=float)
        except (ArithmeticError, ValueError) as err:
            # a stage left the domain of the right-hand side: shrink and retry
            nfev += 6
            h *= 0.25
            if h < 1e-14 * max(1.0, abs(t)):
                raise IntegrationError(f"right-hand side failed ({err})", t) from err
            continue
        nfev += 6
        K[6] = f_new
        if not (np.all(np.isfinite(y_new)) and np.all(np.isfinite(f_new))):
            h *= 0.25
            continue
        err_vec = hs * (E @ K)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = np.linalg.norm(err_vec / scale) / np.sqrt(y.size)
        if err <= 1.0:
            t_new = t + hs
            if direction * (t1 - t_new) < 1e-13 * span:
                t_new = t1
            ks.append(K.copy())
            if project is not None:
                y_new = project(y_new)
                f_new = np.asarray(rhs(t_new, y_new), dtype=float)
                nfev += 1
            t, y, f = t_new, y_new, f_new
            ts.append(t)
            ys.append(y.copy())
            factor = 5.0 if err == 0 else min(5.0, 0.9 * err ** -0.2)
            h *= factor
            if monitor is not None:
                margin, reason = monitor(t, y)
                if margin <= 0:
                    traj = Trajectory(np.array(ts), np.array(ys), ks, t, True, reason, nfev)
                    traj.t_end = _crossing(traj, monitor, ts[-2], t)
                    return traj
        else:
            h *= max(0.2, 0.9 * err ** -0.2)
    return Trajectory(np.array(ts), np.array(ys), ks, t, False, "", nfev)


def _crossing(traj: Trajectory, monitor, ta: float, tb: float) -> float:
    """Last time in [ta, tb] with a positive monitor margin (bisection)."""
    if monitor(ta, traj(ta))[0] <= 0:
        return ta
    for _ in range(200):
        tm = 0.5 * (ta + tb)
        if tm == ta or tm == tb:
            break
        try:
            ok = monitor(tm, traj(tm))[0] > 0
        except (ArithmeticError, ValueError):
            ok = False
        if ok:
            ta = tm
        else:
            tb = tm
    return ta
