"""Command-line entry point for the experiments and self checks.

Exit codes: 0 success, 1 operational failure, 2 invariant violation
(non-monotone energy or a nonpositive solvability denominator).
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import diagnostics, problems, reference
from .fem import Assembler, build_dof_layout
from .mesh import build_unit_square_mesh
from .stepper import (DenominatorError, SavRunError, SavStepper,
                      SchemeConfig, run)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_VIOLATION = 2

DEFAULT_ACCURACY_TAUS = (0.2, 0.1, 0.05, 0.025, 0.0125)
DEFAULT_STABILITY_TAUS = (0.5, 0.2, 0.1, 0.01)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_accuracy(args) -> int:
    out = _out_dir(args)
    mesh = build_unit_square_mesh(args.mesh_n)
    taus = args.tau or list(DEFAULT_ACCURACY_TAUS)
    problem = problems.accuracy_problem_2d(re=args.re, kappa=args.kappa,
                                           t_final=args.t_final)
    asm = Assembler(mesh)
    records = []
    failed = None
    for tau in taus:
        config = SchemeConfig(order=args.order, tau=tau,
                              t_final=args.t_final, re=args.re,
                              kappa=args.kappa)
        try:
            result = run(config, mesh, problem, store_states=False)
        except SavRunError as exc:
            failed = exc
            break
        rec = diagnostics.compute_errors(result.final_state, asm, problem,
                                         t=args.t_final, tau=tau)
        records.append(rec)
    table = diagnostics.convergence_table(records)
    path = out / f"accuracy_order{args.order}.csv"
    if table:
        diagnostics.emit_csv(table, path)
        print(f"wrote {path}")
        for rec in table:
            rate = "" if rec.rate_u_l2 is None else f" rate {rec.rate_u_l2:.2f}"
            print(f"  tau={rec.tau:<8g} err_u_l2={rec.err_u_l2:.3e}{rate}")
    if failed is not None:
        print(f"accuracy run failed: {failed}", file=sys.stderr)
        return (EXIT_VIOLATION
                if isinstance(failed.__cause__, DenominatorError)
                else EXIT_FAILURE)
    return EXIT_OK


def cmd_stability(args) -> int:
    out = _out_dir(args)
    mesh = build_unit_square_mesh(args.mesh_n)
    taus = args.tau or list(DEFAULT_STABILITY_TAUS)
    re_values = [args.re] if args.re is not None else [20.0, 100.0]
    status = EXIT_OK
    for re in re_values:
        kappa = args.kappa if args.kappa is not None else re
        csv_names = []
        for tau in taus:
            problem = problems.stability_problem_2d(re=re, kappa=kappa,
                                                    t_final=args.t_final)
            config = SchemeConfig(order=args.order, tau=tau,
                                  t_final=args.t_final, re=re, kappa=kappa)
            try:
                result = run(config, mesh, problem, store_states=False)
            except SavRunError as exc:
                print(f"stability run tau={tau} failed: {exc}",
                      file=sys.stderr)
                return (EXIT_VIOLATION
                        if isinstance(exc.__cause__, DenominatorError)
                        else EXIT_FAILURE)
            trace = diagnostics.energy_trace(result)
            name = f"energy_order{args.order}_re{re:g}_tau{tau:g}.csv"
            diagnostics.emit_csv(trace, out / name)
            csv_names.append(name)
            monotone = trace.is_monotone(use_bdf=(args.order == 2))
            print(f"Re=kappa={re:g} tau={tau:<6g} "
                  f"E0={trace.energies[0]:.6f} "
                  f"EN={trace.energies[-1]:.3e} "
                  f"monotone={monotone}")
            if not monotone:
                status = EXIT_VIOLATION
        diagnostics.emit_energy_plot_script(
            csv_names, out / f"energy_order{args.order}_re{re:g}.gp")
    return status


def cmd_cavity2d(args) -> int:
    out = _out_dir(args)
    mesh = build_unit_square_mesh(args.mesh_n)
    problem = problems.cavity_problem_2d(re=args.re, kappa=args.kappa,
                                         ramp_width=1.0 / args.mesh_n,
                                         t_final=args.t_final)
    config = SchemeConfig(order=args.order, tau=args.tau,
                          t_final=args.t_final, re=args.re, kappa=args.kappa)
    stepper = SavStepper(mesh, config, problem)
    state = stepper.init_state()
    sample_times = [t for t in (0.1, 1.0, 2.0) if t <= args.t_final + 1e-12]
    scal = mesh.num_vertices + mesh.num_triangles

    def write_snapshot(state, label):
        path = out / f"cavity_velocity_t{label}.csv"
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["x", "y", "u1", "u2"])
            for v in range(mesh.num_vertices):
                writer.writerow([f"{mesh.vertices[v, 0]:.12g}",
                                 f"{mesh.vertices[v, 1]:.12g}",
                                 f"{state.u[v]:.12g}",
                                 f"{state.u[scal + v]:.12g}"])
        print(f"wrote {path}")

    steady = np.inf
    try:
        for _ in range(config.n_steps):
            prev_u = state.u
            state, report = stepper.step(state)
            if report.denominator <= 0:
                return EXIT_VIOLATION
            steady = (np.sqrt(stepper.u_norm_sq(state.u - prev_u))
                      / config.tau)
            for ts in sample_times:
                if abs(state.t - ts) < 0.5 * config.tau:
                    write_snapshot(state, f"{ts:g}")
    except DenominatorError as exc:
        print(f"cavity run failed: {exc}", file=sys.stderr)
        return EXIT_VIOLATION
    except Exception as exc:
        print(f"cavity run failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE

    # centerline velocity profile along x = 0.5
    on_line = np.isclose(mesh.vertices[:, 0], 0.5)
    order = np.argsort(mesh.vertices[on_line, 1])
    idx = np.nonzero(on_line)[0][order]
    path = out / "cavity_centerline.csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["y", "u1", "u2"])
        for v in idx:
            writer.writerow([f"{mesh.vertices[v, 1]:.12g}",
                             f"{state.u[v]:.12g}",
                             f"{state.u[scal + v]:.12g}"])
    print(f"wrote {path}")
    print(f"final steady-state residual ||u_new - u_old||/tau = {steady:.3e}")
    return EXIT_OK


def selftest_suites(mesh_sizes=(1, 2, 3), seed: int = 1234) -> dict:
    """Run the oracle-equivalence and identity suites; True means pass."""
    rng = np.random.default_rng(seed)
    results = {}

    ok = True
    for n in mesh_sizes:
        mesh = build_unit_square_mesh(n)
        layout = build_dof_layout(mesh)
        asm = Assembler(mesh, layout)
        pairs = [
            (asm.velocity_mass(), reference.dense_velocity_mass(mesh, layout)),
            (asm.velocity_stiffness(),
             reference.dense_velocity_stiffness(mesh, layout)),
            (asm.velocity_pressure_div(),
             reference.dense_velocity_pressure_div(mesh, layout)),
            (asm.rt0_mass(), reference.dense_rt0_mass(mesh, layout)),
            (asm.rt0_div(), reference.dense_rt0_div(mesh, layout)),
        ]
        for sparse_mat, dense_mat in pairs:
            diff = np.max(np.abs(sparse_mat.toarray() - dense_mat))
            scale = max(np.max(np.abs(dense_mat)), 1.0)
            ok = ok and diff <= 1e-13 * scale
    results["dense_vs_sparse"] = ok

    mesh = build_unit_square_mesh(2)
    layout = build_dof_layout(mesh)
    asm = Assembler(mesh, layout)
    ok = True
    for _ in range(100):
        u = rng.standard_normal(layout.n_velocity)
        j = rng.standard_normal(layout.n_current)
        lhs = j @ asm.cross_rhs(u) + u @ asm.lorentz_rhs(j)
        scale = max(np.linalg.norm(u) * np.linalg.norm(j), 1.0)
        ok = ok and abs(lhs) <= 1e-12 * scale
    results["duality"] = ok

    mesh = build_unit_square_mesh(8)
    problem = problems.stability_problem_2d(re=20.0, kappa=20.0, t_final=3.0)
    config = SchemeConfig(order=1, tau=0.1, t_final=3.0, re=20.0, kappa=20.0)
    try:
        result = run(config, mesh, problem, store_states=False)
        reports = result.reports
        results["a2_identity"] = all(r.a2_identity_residual <= 1e-10
                                     for r in reports)
        results["energy_identity"] = all(
            abs(r.energy_identity_residual) <= 1e-8 for r in reports)
        results["charge_conservation"] = all(r.div_j_max <= 1e-9
                                             for r in reports)
    except SavRunError:
        results["a2_identity"] = False
        results["energy_identity"] = False
        results["charge_conservation"] = False

    mesh = build_unit_square_mesh(3)
    problem = problems.accuracy_problem_2d()
    config = SchemeConfig(order=2, tau=0.125, t_final=1.0, re=1.0, kappa=1.0)
    stepper = SavStepper(mesh, config, problem)
    state = stepper.init_state()
    ok = True
    try:
        for _ in range(config.n_steps):
            new_state, report = stepper.step(state)
            res = reference.coupled_step_residuals(stepper, state, new_state,
                                                   report)
            ok = ok and all(v <= 1e-8 for v in res.values())
            state = new_state
    except Exception:
        ok = False
    results["coupled_residual"] = ok
    return results


def cmd_selftest(args) -> int:
    results = selftest_suites()
    status = EXIT_OK
    for name, passed in results.items():
        print(f"{name}: {'PASS' if passed else 'FAIL'}")
        if not passed:
            status = EXIT_VIOLATION
    return status


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="savmhd",
        description="Energy-stable decoupled 2D inductionless MHD solver")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, order=1, mesh_n=6, t_final=1.0, re=1.0, kappa=1.0):
        p.add_argument("--order", type=int, choices=(1, 2), default=order)
        p.add_argument("--mesh-n", type=int, default=mesh_n)
        p.add_argument("--tau", type=float, action="append")
        p.add_argument("--re", type=float, default=re)
        p.add_argument("--kappa", type=float, default=kappa)
        p.add_argument("--t-final", type=float, default=t_final)
        p.add_argument("--out", default=".")

    p = sub.add_parser("accuracy", help="temporal convergence study")
    common(p)
    p.set_defaults(func=cmd_accuracy)

    p = sub.add_parser("stability", help="energy-decay study")
    common(p, mesh_n=64, t_final=3.0)
    p.set_defaults(re=None, kappa=None)
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("cavity2d", help="driven-cavity demo")
    common(p, order=2, mesh_n=32, t_final=2.0, re=200.0, kappa=10.0)
    p.set_defaults(func=cmd_cavity2d)

    p = sub.add_parser("selftest", help="oracle and identity suites")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "command", None) == "cavity2d" and args.tau:
        args.tau = args.tau[0]
    elif getattr(args, "command", None) == "cavity2d":
        args.tau = 0.01
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
