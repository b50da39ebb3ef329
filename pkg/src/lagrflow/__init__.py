"""Exact Lagrangian solutions of the incompressible Euler equations.

Flow maps of the separated form phi(z, t) = A(t) v(z), built family by
family, together with an independent verifier for the time independence
of the Cauchy invariants and of det(d phi).
"""
from .families import build_flowmap, get, list_families
from .flowmap import FlowMap
from .temporal import gauge_transform, solve_time_component
from .verify import (alpha, cauchy_invariants, constancy_report, eulerian_velocity,
                     eulerian_vorticity, pressure_gradient, velocity)

__all__ = ["FlowMap", "alpha", "build_flowmap", "cauchy_invariants", "constancy_report",
           "eulerian_velocity", "eulerian_vorticity", "gauge_transform", "get",
           "list_families", "pressure_gradient", "solve_time_component", "velocity"]
__version__ = "0.1.0"
