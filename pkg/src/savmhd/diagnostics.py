"""Error norms, convergence tables, energy traces and CSV/plot output."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, fields
from typing import Optional

import numpy as np

from .fem import Assembler
from .problems import ProblemDefinition
from .stepper import RunResult, SavState


@dataclass
class ErrorRecord:
    """Terminal-time errors of one run against the exact solution."""

    tau: float
    err_u_l2: float
    err_u_h1: float
    err_p_l2: float
    err_j_div: float
    err_phi_l2: float
    err_q_abs: float
    rate_u_l2: Optional[float] = None
    rate_u_h1: Optional[float] = None
    rate_p_l2: Optional[float] = None
    rate_j_div: Optional[float] = None
    rate_phi_l2: Optional[float] = None
    rate_q_abs: Optional[float] = None


ERROR_COLUMNS = ("err_u_l2", "err_u_h1", "err_p_l2",
                 "err_j_div", "err_phi_l2", "err_q_abs")


@dataclass
class EnergyTrace:
    """Time series of the discrete energy 0.5*||u||^2 + 0.5*|q|^2."""

    times: np.ndarray
    energies: np.ndarray
    bdf_energies: np.ndarray

    def is_monotone(self, use_bdf: bool = False, tol: float = 1e-12) -> bool:
        e = self.bdf_energies if use_bdf else self.energies
        return bool(np.all(np.diff(e) <= tol))


class MissingExactSolutionError(ValueError):
    """Raised when errors are requested for a problem without exact fields."""


def compute_errors(state: SavState, assembler: Assembler,
                   problem: ProblemDefinition, t: float,
                   tau: float) -> ErrorRecord:
    """Quadrature-based error norms at time t.

    Pressure and potential are compared against the zero-mean
    representatives of the exact fields, since the discrete unknowns
    live in the zero-mean spaces.  The current-density error uses the
    H(div) norm and the auxiliary-variable error is |q - exp(-t/T)|.
    """
    if not problem.has_exact:
        raise MissingExactSolutionError(
            f"problem {problem.name!r} has no exact solution")
    asm = assembler
    w = asm.quad.weights
    area2 = 2.0 * asm.area

    def integrate(vals):
        return float(np.einsum("t,q,tq->", area2, w, vals))

    x, y = asm.x_quad[..., 0], asm.x_quad[..., 1]

    ue1, ue2 = problem.exact_u(x, y, t)
    uq = asm.velocity_at_quad(state.u)
    du = np.stack([uq[..., 0] - ue1, uq[..., 1] - ue2], axis=-1)
    err_u_l2 = math.sqrt(max(integrate(np.einsum("tqc->tq", du ** 2)), 0.0))

    # exact gradient by central differences of the closed form
    eps = 1e-6

    def exact_grad(comp):
        up = problem.exact_u(x + eps, y, t)[comp]
        um = problem.exact_u(x - eps, y, t)[comp]
        vp = problem.exact_u(x, y + eps, t)[comp]
        vm = problem.exact_u(x, y - eps, t)[comp]
        return (up - um) / (2 * eps), (vp - vm) / (2 * eps)

    gq = asm.velocity_grad_at_quad(state.u)
    acc = np.zeros(x.shape)
    for c in range(2):
        gx, gy = exact_grad(c)
        acc += (gq[..., c, 0] - gx) ** 2 + (gq[..., c, 1] - gy) ** 2
    err_u_h1 = math.sqrt(max(integrate(acc), 0.0))

    pe = np.broadcast_to(problem.exact_p(x, y, t), x.shape)
    pe_mean = integrate(np.asarray(pe) * np.ones_like(x))  # domain area is 1
    dp = asm.pressure_at_quad(state.p) - (pe - pe_mean)
    err_p_l2 = math.sqrt(max(integrate(dp ** 2), 0.0))

    je1, je2 = problem.exact_j(x, y, t)
    jq = asm.current_at_quad(state.j)
    dj = (jq[..., 0] - je1) ** 2 + (jq[..., 1] - je2) ** 2
    div_h = asm.current_div(state.j)  # exact divergence is zero
    err_j_div = math.sqrt(max(integrate(dj), 0.0)
                          + float(np.sum(asm.area * div_h ** 2)))

    phie = np.broadcast_to(problem.exact_phi(x, y, t), x.shape)
    phie_mean = integrate(np.asarray(phie) * np.ones_like(x))
    dphi = state.phi[:, None] - (phie - phie_mean)
    err_phi_l2 = math.sqrt(max(integrate(dphi ** 2), 0.0))

    err_q_abs = abs(state.q - math.exp(-t / problem.t_final))

    return ErrorRecord(
        tau=tau,
        err_u_l2=err_u_l2,
        err_u_h1=err_u_h1,
        err_p_l2=err_p_l2,
        err_j_div=err_j_div,
        err_phi_l2=err_phi_l2,
        err_q_abs=err_q_abs,
    )


def convergence_table(records: list[ErrorRecord]) -> list[ErrorRecord]:
    """Attach rates log2(e(2*tau)/e(tau)) to successive rows."""
    out = []
    prev = None
    for rec in records:
        rec = ErrorRecord(**{f.name: getattr(rec, f.name)
                             for f in fields(ErrorRecord)})
        if prev is not None:
            for col in ERROR_COLUMNS:
                e_prev, e_cur = getattr(prev, col), getattr(rec, col)
                if e_prev > 0.0 and e_cur > 0.0:
                    setattr(rec, "rate_" + col[4:],
                            math.log2(e_prev / e_cur))
        out.append(rec)
        prev = rec
    return out


def energy_trace(result: RunResult) -> EnergyTrace:
    """Energy per step including t = 0."""
    times = [0.0] + [r.t for r in result.reports]
    energies = [result.initial_energy] + [r.energy for r in result.reports]
    bdf = [result.initial_energy] + [r.bdf_energy for r in result.reports]
    return EnergyTrace(times=np.asarray(times),
                       energies=np.asarray(energies),
                       bdf_energies=np.asarray(bdf))


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.12g}"
    return str(value)


def emit_csv(rows, path) -> None:
    """Write records as UTF-8 CSV, 12 significant digits, LF endings.

    Accepts a list of dataclass records or an EnergyTrace.
    """
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            if isinstance(rows, EnergyTrace):
                writer.writerow(["t", "energy", "bdf_energy"])
                for t, e, eb in zip(rows.times, rows.energies,
                                    rows.bdf_energies):
                    writer.writerow([_fmt(float(t)), _fmt(float(e)),
                                     _fmt(float(eb))])
            else:
                names = [f.name for f in fields(rows[0])]
                writer.writerow(names)
                for rec in rows:
                    writer.writerow([_fmt(getattr(rec, n)) for n in names])
    except OSError as exc:
        raise OSError(f"failed writing {path}: {exc}") from exc


def emit_energy_plot_script(csv_names: list[str], path) -> None:
    """Generate a gnuplot script plotting energy traces from CSV files."""
    lines = [
        "set datafile separator ','",
        "set xlabel 't'",
        "set ylabel 'energy'",
        "set key autotitle columnhead",
        "set logscale y",
    ]
    plots = ", ".join(f"'{name}' using 1:2 with lines title '{name}'"
                      for name in csv_names)
    lines.append(f"plot {plots}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")
