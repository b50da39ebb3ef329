"""The flow map phi(z, t) = A(t) v(z)."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class FlowMap:
    tc: "object"   # temporal.TimeComponent
    v: "object"    # spatial.SpatialComponent
    family: str
    constants: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.tc.m != self.v.m:
            raise ValueError(f"time component has m={self.tc.m}, spatial component m={self.v.m}")

    @property
    def m(self) -> int:
        return self.tc.m

    @property
    def horizon(self) -> tuple:
        return self.tc.horizon

    def phi(self, z, t) -> np.ndarray:
        """Positions for labels ``z`` of shape (3,) or (3, N)."""
        A = self.tc.eval_A(t)[0]
        return A @ self.v.values(z)

    def jacobian(self, z, t) -> np.ndarray:
        """d phi with shape (3, 3) or (N, 3, 3)."""
        A = self.tc.eval_A(t)[0]
        dv = self.v.jacobian(z)
        if dv.ndim == 2:
            return A @ dv
        return np.einsum("im,nmk->nik", A, dv)
