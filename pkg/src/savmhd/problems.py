"""Test problems on the unit square.

All field callbacks are vectorized: they accept coordinate arrays
``(x, y, t)`` and return arrays (tuples of arrays for vector fields).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np


@dataclass
class ProblemDefinition:
    """Data bundle consumed by the time steppers.

    Exact fields are present only for the manufactured accuracy problem;
    forcing callbacks may be None (treated as zero).
    """

    name: str
    re: float
    kappa: float
    b3: Callable | float
    initial_velocity: Callable
    velocity_bc: Optional[Callable] = None        # None means homogeneous
    current_flux_bc: Optional[Callable] = None    # vector J_b; None means 0
    f_u: Optional[Callable] = None
    f_j: Optional[Callable] = None
    exact_u: Optional[Callable] = None
    exact_p: Optional[Callable] = None
    exact_j: Optional[Callable] = None
    exact_phi: Optional[Callable] = None
    t_final: float = 1.0

    @property
    def has_exact(self) -> bool:
        return self.exact_u is not None


def accuracy_problem_2d(re: float = 1.0, kappa: float = 1.0,
                        t_final: float = 1.0) -> ProblemDefinition:
    """Manufactured smooth-in-time solution, linear or constant in space.

    Spatial interpolation reproduces the exact fields, so all observed
    errors come from the time discretization.
    """

    def exact_u(x, y, t):
        return y * np.exp(-t), x * np.cos(t)

    def exact_p(x, y, t):
        return np.sin(t) * np.ones_like(x)

    def exact_j(x, y, t):
        one = np.ones_like(x)
        return np.sin(t) * one, np.cos(t) * one

    def exact_phi(x, y, t):
        return np.cos(t) * np.ones_like(x)

    def f_u(x, y, t):
        et, ct, st = np.exp(-t), np.cos(t), np.sin(t)
        return (-y * et + x * et * ct - kappa * ct,
                -x * st + y * et * ct + kappa * st)

    def f_j(x, y, t):
        return np.sin(t) - x * np.cos(t), np.cos(t) + y * np.exp(-t)

    return ProblemDefinition(
        name="accuracy2d",
        re=re,
        kappa=kappa,
        b3=1.0,
        initial_velocity=lambda x, y: exact_u(x, y, 0.0),
        velocity_bc=exact_u,
        current_flux_bc=exact_j,
        f_u=f_u,
        f_j=f_j,
        exact_u=exact_u,
        exact_p=exact_p,
        exact_j=exact_j,
        exact_phi=exact_phi,
        t_final=t_final,
    )


def stability_problem_2d(re: float = 20.0, kappa: float = 20.0,
                         t_final: float = 3.0) -> ProblemDefinition:
    """Decaying vortex with homogeneous boundary data and zero forcing."""

    def u0(x, y):
        return (np.sin(np.pi * x) * np.cos(np.pi * y),
                -np.cos(np.pi * x) * np.sin(np.pi * y))

    return ProblemDefinition(
        name="stability2d",
        re=re,
        kappa=kappa,
        b3=1.0,
        initial_velocity=u0,
        t_final=t_final,
    )


def cavity_problem_2d(re: float = 200.0, kappa: float = 10.0,
                      ramp_width: float = 1.0 / 32.0,
                      t_final: float = 2.0) -> ProblemDefinition:
    """Driven cavity with a regularized lid.

    The lid velocity is (g1(x), 0) on the top edge with g1 = 1 away from
    the corners and a linear drop to 0 within ``ramp_width`` of each
    corner, keeping the boundary data continuous.
    """

    def g1(x):
        return np.clip(np.minimum(x, 1.0 - x) / ramp_width, 0.0, 1.0)

    def velocity_bc(x, y, t):
        on_lid = np.isclose(y, 1.0)
        return np.where(on_lid, g1(x), 0.0), np.zeros_like(x)

    return ProblemDefinition(
        name="cavity2d",
        re=re,
        kappa=kappa,
        b3=1.0,
        initial_velocity=lambda x, y: velocity_bc(x, y, 0.0),
        velocity_bc=velocity_bc,
        t_final=t_final,
    )
