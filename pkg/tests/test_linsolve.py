"""Prepared saddle-point solves against the dense reference solver."""

import numpy as np
import pytest
import scipy.sparse as sp

from savmhd import reference
from savmhd.fem import Assembler, build_dof_layout
from savmhd.linsolve import (RESIDUAL_TOL, SaddleSystem, SingularSystemError,
                             prepare_matrix)
from savmhd.mesh import build_unit_square_mesh


def make_stokes(n=2, coeff=10.0):
    mesh = build_unit_square_mesh(n)
    layout = build_dof_layout(mesh)
    asm = Assembler(mesh, layout)
    sys = SaddleSystem(
        a_block=coeff * asm.velocity_mass() + asm.velocity_stiffness(),
        b_block=asm.velocity_pressure_div(),
        mean_weights=asm.mean_weights("pressure"),
        constrained_dofs=layout.boundary_velocity_dofs,
    )
    return mesh, layout, asm, sys


def make_darcy(n=2):
    mesh = build_unit_square_mesh(n)
    layout = build_dof_layout(mesh)
    asm = Assembler(mesh, layout)
    sys = SaddleSystem(
        a_block=asm.rt0_mass(),
        b_block=asm.rt0_div(),
        mean_weights=asm.mean_weights("potential"),
        constrained_dofs=layout.boundary_current_dofs,
    )
    return mesh, layout, asm, sys


def test_prepare_is_idempotent():
    _, _, _, sys = make_stokes()
    h1 = sys.prepare()
    h2 = sys.prepare()
    assert h1 is h2


@pytest.mark.parametrize("ordering", ["colamd", "symmetric"])
def test_orderings_agree(ordering):
    _, layout, _, sys = make_stokes()
    rng = np.random.default_rng(0)
    rhs = rng.standard_normal(sys.dimension)
    solver = prepare_matrix(sys.constrained_operator, ordering)
    x = solver.solve(rhs)
    res = np.linalg.norm(sys.constrained_operator @ x - rhs) / np.linalg.norm(rhs)
    assert res <= RESIDUAL_TOL


def test_unknown_ordering_rejected():
    _, _, _, sys = make_stokes()
    with pytest.raises(ValueError):
        prepare_matrix(sys.constrained_operator, "fastest")


def test_zero_rhs_gives_zero_solution():
    _, layout, _, sys = make_stokes()
    sol = sys.solve_fields(np.zeros(layout.n_velocity))
    assert np.all(sol.primal == 0.0)
    assert np.all(sol.scalar == 0.0)
    assert sol.residual == 0.0


def test_singular_system_detected():
    # a pure mass system with a redundant extra constraint row is singular
    a = sp.identity(3, format="csc")
    singular = sp.bmat([[a, None], [None, sp.csc_matrix((1, 1))]],
                       format="csc")
    with pytest.raises(SingularSystemError):
        prepare_matrix(singular)


@pytest.mark.parametrize("maker", [make_stokes, make_darcy])
def test_matches_dense_reference(maker):
    mesh, layout, asm, sys = maker()
    rng = np.random.default_rng(5)
    rhs = rng.standard_normal(sys.n_primal)
    sol = sys.solve_fields(rhs)
    primal, scalar, mult = reference.dense_saddle_solve(
        sys.a_block, sys.b_block, sys.mean_weights, sys.constrained_dofs,
        rhs)
    scale = max(np.max(np.abs(primal)), 1.0)
    assert np.max(np.abs(sol.primal - primal)) <= 1e-9 * scale
    assert np.max(np.abs(sol.scalar - scalar)) <= 1e-9 * scale
    assert abs(sol.multiplier - mult) <= 1e-9 * max(abs(mult), 1.0)


def test_inhomogeneous_constraints_match_dense():
    mesh, layout, asm, sys = make_stokes()
    rng = np.random.default_rng(9)
    rhs = rng.standard_normal(sys.n_primal)
    bc = rng.standard_normal(layout.boundary_velocity_dofs.size)
    sol = sys.solve_fields(rhs, bc)
    assert np.allclose(sol.primal[layout.boundary_velocity_dofs], bc)
    primal, scalar, _ = reference.dense_saddle_solve(
        sys.a_block, sys.b_block, sys.mean_weights, sys.constrained_dofs,
        rhs, bc)
    scale = max(np.max(np.abs(primal)), 1.0)
    assert np.max(np.abs(sol.primal - primal)) <= 1e-9 * scale
    assert np.max(np.abs(sol.scalar - scalar)) <= 1e-9 * scale


@pytest.mark.parametrize("maker", [make_stokes, make_darcy])
def test_scalar_solution_has_zero_mean(maker):
    _, _, _, sys = maker()
    rng = np.random.default_rng(2)
    sol = sys.solve_fields(rng.standard_normal(sys.n_primal))
    assert abs(sys.mean_weights @ sol.scalar) <= 1e-10


def test_solves_are_deterministic():
    _, _, _, sys = make_stokes()
    rng = np.random.default_rng(4)
    rhs = rng.standard_normal(sys.n_primal)
    a = sys.solve_fields(rhs)
    b = sys.solve_fields(rhs)
    assert np.array_equal(a.primal, b.primal)
    assert np.array_equal(a.scalar, b.scalar)


def test_residual_reported_within_contract():
    _, _, _, sys = make_darcy(3)
    rng = np.random.default_rng(8)
    for _ in range(5):
        sol = sys.solve_fields(rng.standard_normal(sys.n_primal))
        assert sol.residual <= RESIDUAL_TOL


def test_rhs_length_validated():
    _, _, _, sys = make_stokes()
    handle = sys.prepare()
    with pytest.raises(ValueError):
        handle.solve(np.zeros(3))
