"""Time steppers: scalar recursions, identities and coupled residuals."""

import math

import numpy as np
import pytest

from savmhd import reference
from savmhd.mesh import build_unit_square_mesh
from savmhd.problems import (ProblemDefinition, accuracy_problem_2d,
                             cavity_problem_2d, stability_problem_2d)
from savmhd.stepper import (DenominatorError, SavRunError, SavStepper,
                            SchemeConfig, run)


def zero_problem(t_final=1.0):
    return ProblemDefinition(
        name="rest",
        re=1.0,
        kappa=1.0,
        b3=1.0,
        initial_velocity=lambda x, y: (np.zeros_like(x), np.zeros_like(x)),
        t_final=t_final,
    )


def test_config_validation():
    with pytest.raises(ValueError):
        SchemeConfig(order=3, tau=0.1, t_final=1.0, re=1.0, kappa=1.0)
    with pytest.raises(ValueError):
        SchemeConfig(order=1, tau=-0.1, t_final=1.0, re=1.0, kappa=1.0)
    with pytest.raises(ValueError):
        SchemeConfig(order=1, tau=0.3, t_final=1.0, re=1.0, kappa=1.0)
    cfg = SchemeConfig(order=2, tau=0.125, t_final=1.0, re=1.0, kappa=1.0)
    assert cfg.n_steps == 8


def test_first_order_zero_data_q_recursion():
    # at rest the scalar equation reduces to q_new = q * T / (T + tau)
    mesh = build_unit_square_mesh(2)
    T, tau = 1.0, 0.1
    cfg = SchemeConfig(order=1, tau=tau, t_final=T, re=1.0, kappa=1.0)
    stepper = SavStepper(mesh, cfg, zero_problem(T))
    state = stepper.init_state()
    q = 1.0
    for _ in range(cfg.n_steps):
        state, report = stepper.step(state)
        q = q * T / (T + tau)
        assert state.q == pytest.approx(q, rel=1e-13)
        assert np.max(np.abs(state.u)) <= 1e-14
        assert report.denominator > 0


def test_second_order_zero_data_q_recursion():
    # after the Euler bootstrap, BDF2 gives
    # q_new = T*(4q - q_prev) / (3T + 2 tau)
    mesh = build_unit_square_mesh(2)
    T, tau = 1.0, 0.1
    cfg = SchemeConfig(order=2, tau=tau, t_final=T, re=1.0, kappa=1.0)
    stepper = SavStepper(mesh, cfg, zero_problem(T))
    state = stepper.init_state()
    state, _ = stepper.step(state)
    q_prev, q = 1.0, 1.0 * T / (T + tau)
    assert state.q == pytest.approx(q, rel=1e-13)
    for _ in range(cfg.n_steps - 1):
        state, _ = stepper.step(state)
        q_prev, q = q, T * (4.0 * q - q_prev) / (3.0 * T + 2.0 * tau)
        assert state.q == pytest.approx(q, rel=1e-13)


def test_bdf2_first_step_is_backward_euler():
    mesh = build_unit_square_mesh(3)
    prob = accuracy_problem_2d()
    cfg1 = SchemeConfig(order=1, tau=0.25, t_final=1.0, re=1.0, kappa=1.0)
    cfg2 = SchemeConfig(order=2, tau=0.25, t_final=1.0, re=1.0, kappa=1.0)
    s1 = SavStepper(mesh, cfg1, prob)
    s2 = SavStepper(mesh, cfg2, prob)
    a, _ = s1.step(s1.init_state())
    b, _ = s2.step(s2.init_state())
    assert np.max(np.abs(a.u - b.u)) <= 1e-12
    assert np.max(np.abs(a.j - b.j)) <= 1e-12
    assert a.q == pytest.approx(b.q, abs=1e-13)


def test_init_state_manufactured_current():
    # exact J(0) = (0, 1) is spatially constant, which RT0 reproduces
    mesh = build_unit_square_mesh(4)
    prob = accuracy_problem_2d()
    cfg = SchemeConfig(order=1, tau=0.1, t_final=1.0, re=1.0, kappa=1.0)
    stepper = SavStepper(mesh, cfg, prob)
    state = stepper.init_state()
    assert state.q == 1.0 and state.n == 0 and state.t == 0.0
    jq = stepper.asm.current_at_quad(state.j)
    assert np.max(np.abs(jq[..., 0])) <= 1e-10
    assert np.max(np.abs(jq[..., 1] - 1.0)) <= 1e-10
    assert np.max(np.abs(stepper.asm.current_div(state.j))) <= 1e-10


def test_init_state_vortex_current_solenoidal():
    mesh = build_unit_square_mesh(8)
    prob = stability_problem_2d()
    cfg = SchemeConfig(order=1, tau=0.1, t_final=3.0, re=20.0, kappa=20.0)
    stepper = SavStepper(mesh, cfg, prob)
    state = stepper.init_state()
    assert np.max(np.abs(stepper.asm.current_div(state.j))) <= 1e-10
    # the vortex velocity interpolates with zero normal trace, so the
    # velocity part carries the full kinetic energy
    assert stepper.energy(state) > 0.5  # 0.5*q^2 alone


def test_denominator_matches_reported_terms():
    mesh = build_unit_square_mesh(4)
    prob = stability_problem_2d(t_final=1.0)
    cfg = SchemeConfig(order=1, tau=0.1, t_final=1.0, re=20.0, kappa=20.0)
    stepper = SavStepper(mesh, cfg, prob)
    state = stepper.init_state()
    T = cfg.t_final
    for _ in range(5):
        state, r = stepper.step(state)
        c_q = (T + cfg.tau) / (T * cfg.tau)
        assert r.denominator == pytest.approx(
            c_q - math.exp(2.0 * r.t / T) * r.a2, rel=1e-13)
        assert r.denominator > 0
        assert r.a2 <= 0  # solvability: the quadratic form is nonpositive
        assert r.a2_identity_residual <= 1e-10


def test_energy_identity_first_order():
    mesh = build_unit_square_mesh(8)
    prob = stability_problem_2d(t_final=1.0)
    cfg = SchemeConfig(order=1, tau=0.05, t_final=1.0, re=20.0, kappa=20.0)
    result = run(cfg, mesh, prob, store_states=False)
    for r in result.reports:
        assert abs(r.energy_identity_residual) <= 1e-8


def test_energy_monotone_both_orders():
    mesh = build_unit_square_mesh(8)
    prob = stability_problem_2d(t_final=1.0)
    for order in (1, 2):
        cfg = SchemeConfig(order=order, tau=0.1, t_final=1.0,
                           re=20.0, kappa=20.0)
        result = run(cfg, mesh, prob, store_states=False)
        energies = [result.initial_energy] + [r.energy for r in result.reports]
        assert all(b <= a + 1e-12 for a, b in zip(energies, energies[1:]))
        if order == 2:
            bdf = [r.bdf_energy for r in result.reports]
            assert all(b <= a + 1e-12 for a, b in zip(bdf, bdf[1:]))


def test_charge_conservation_every_step():
    mesh = build_unit_square_mesh(8)
    prob = stability_problem_2d(t_final=1.0)
    cfg = SchemeConfig(order=2, tau=0.1, t_final=1.0, re=20.0, kappa=20.0)
    result = run(cfg, mesh, prob, store_states=False)
    assert all(r.div_j_max <= 1e-9 for r in result.reports)


def test_unused_darcy_stage_stays_zero():
    # without boundary flux or current forcing the first Darcy stage is
    # identically zero, so the reconstructed current is S times stage two
    mesh = build_unit_square_mesh(4)
    prob = stability_problem_2d(t_final=1.0)
    cfg = SchemeConfig(order=1, tau=0.25, t_final=1.0, re=20.0, kappa=20.0)
    stepper = SavStepper(mesh, cfg, prob)
    assert stepper._darcy1_trivial
    j1, phi1, res = stepper._solve_darcy1(0.25)
    assert np.all(j1 == 0.0) and np.all(phi1 == 0.0) and res == 0.0
    state = stepper.init_state()
    new_state, report = stepper.step(state)
    crs = stepper.asm.cross_rhs(state.u, prob.b3, 0.25)
    sol2 = stepper.darcy.solve_fields(crs)
    assert np.max(np.abs(new_state.j - report.s * sol2.primal)) <= 1e-13


def test_boundary_correction_zero_for_tangential_data():
    mesh = build_unit_square_mesh(4)
    cfg = SchemeConfig(order=1, tau=0.1, t_final=2.0, re=200.0, kappa=10.0)
    stepper = SavStepper(mesh, cfg, cavity_problem_2d())
    assert abs(stepper._boundary_correction(0.5)) <= 1e-14
    cfg = SchemeConfig(order=1, tau=0.1, t_final=1.0, re=1.0, kappa=1.0)
    stepper = SavStepper(mesh, cfg, accuracy_problem_2d())
    assert stepper._boundary_correction(0.5) != 0.0


def test_coupled_residuals_first_order():
    mesh = build_unit_square_mesh(3)
    prob = accuracy_problem_2d()
    cfg = SchemeConfig(order=1, tau=0.2, t_final=1.0, re=1.0, kappa=1.0)
    stepper = SavStepper(mesh, cfg, prob)
    state = stepper.init_state()
    for _ in range(cfg.n_steps):
        new_state, report = stepper.step(state)
        res = reference.coupled_step_residuals(stepper, state, new_state,
                                               report)
        assert all(v <= 1e-8 for v in res.values()), res
        state = new_state


def test_coupled_residuals_second_order():
    mesh = build_unit_square_mesh(3)
    prob = accuracy_problem_2d()
    cfg = SchemeConfig(order=2, tau=0.125, t_final=1.0, re=1.0, kappa=1.0)
    stepper = SavStepper(mesh, cfg, prob)
    state = stepper.init_state()
    for _ in range(cfg.n_steps):
        new_state, report = stepper.step(state)
        res = reference.coupled_step_residuals(stepper, state, new_state,
                                               report)
        assert all(v <= 1e-8 for v in res.values()), res
        state = new_state


def test_wrong_stokes2_coefficient_breaks_consistency():
    # replacing the second-stage mass coefficient 3/(2 tau) by 1/tau
    # destroys the BDF2 reconstruction: the coupled momentum residual
    # blows up far beyond the contract
    mesh = build_unit_square_mesh(3)
    prob = accuracy_problem_2d()
    cfg = SchemeConfig(order=2, tau=0.125, t_final=1.0, re=1.0, kappa=1.0)
    stepper = SavStepper(mesh, cfg, prob)
    stepper.stokes2 = stepper._build_stokes(1.0 / cfg.tau)
    state = stepper.init_state()
    state, _ = stepper.step(state)  # Euler bootstrap is unaffected
    worst = 0.0
    for _ in range(3):
        new_state, report = stepper.step(state)
        res = reference.coupled_step_residuals(stepper, state, new_state,
                                               report)
        worst = max(worst, res["momentum"])
        state = new_state
    assert worst > 1e-4


def test_run_wraps_step_failures(monkeypatch):
    mesh = build_unit_square_mesh(2)
    prob = stability_problem_2d(t_final=1.0)
    cfg = SchemeConfig(order=1, tau=0.25, t_final=1.0, re=20.0, kappa=20.0)
    calls = {"n": 0}
    original = SavStepper.step_first_order

    def failing(self, state, stokes_sys=None):
        calls["n"] += 1
        if calls["n"] >= 3:
            raise DenominatorError("forced failure")
        return original(self, state, stokes_sys)

    monkeypatch.setattr(SavStepper, "step_first_order", failing)
    with pytest.raises(SavRunError) as info:
        run(cfg, mesh, prob)
    # the partial trajectory is preserved on the error
    result = info.value.result
    assert len(result.reports) == 2
    assert result.final_state.n == 2
    assert isinstance(info.value.__cause__, DenominatorError)


def test_state_history_fields():
    mesh = build_unit_square_mesh(2)
    prob = stability_problem_2d(t_final=1.0)
    cfg = SchemeConfig(order=2, tau=0.25, t_final=1.0, re=20.0, kappa=20.0)
    stepper = SavStepper(mesh, cfg, prob)
    s0 = stepper.init_state()
    assert s0.prev_u is None and s0.prev_q is None
    s1, _ = stepper.step(s0)
    assert np.array_equal(s1.prev_u, s0.u)
    assert s1.prev_q == s0.q
    s2, _ = stepper.step(s1)
    assert np.array_equal(s2.prev_u, s1.u)
    assert s2.t == pytest.approx(0.5)
