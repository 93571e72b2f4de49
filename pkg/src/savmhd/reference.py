"""Dense, loop-based reference computations for verification.

Everything here is deliberately written independently of the assembly
module: basis functions are reconstructed per element from vertex
coordinates, and integration uses a collapsed-square Gauss rule instead
of the symmetric triangle rule.  Agreement between the two paths is a
genuine cross-check, not a tautology.
"""

from __future__ import annotations

import numpy as np

from .fem import DofLayout
from .mesh import Mesh, triangle_areas


def duffy_rule(n: int = 6):
    """Gauss rule on the reference triangle via the Duffy transform.

    Exact for bivariate polynomials of degree up to 2n - 2; n = 6 covers
    everything assembled here with margin.
    """
    nodes, wts = np.polynomial.legendre.leggauss(n)
    xi = 0.5 * (nodes + 1.0)
    wx = 0.5 * wts
    pts = []
    w = []
    for i in range(n):
        for k in range(n):
            x = xi[i]
            y = xi[k] * (1.0 - xi[i])
            pts.append((x, y))
            w.append(wx[i] * wx[k] * (1.0 - xi[i]))
    return np.asarray(pts), np.asarray(w)


class ElementBasis:
    """Scalar (P1 + bubble) and RT0 bases on one physical triangle."""

    def __init__(self, mesh: Mesh, t: int):
        tri = mesh.triangles[t]
        self.pts = mesh.vertices[tri]
        ones = np.ones(3)
        vander = np.column_stack([ones, self.pts[:, 0], self.pts[:, 1]])
        self.bary_coef = np.linalg.inv(vander)   # columns: lambda_k coefs
        self.area = float(triangle_areas(mesh)[t])
        self.signs = mesh.triangle_edge_signs[t].astype(float)
        self.edges = mesh.triangle_edges[t]

    def lambdas(self, x, y):
        return self.bary_coef.T @ np.array([1.0, x, y])

    def grad_lambdas(self):
        return self.bary_coef[1:, :].T     # (3, 2)

    def scalar_vals(self, x, y):
        lam = self.lambdas(x, y)
        return np.append(lam, 27.0 * lam.prod())

    def scalar_grads(self, x, y):
        lam = self.lambdas(x, y)
        gl = self.grad_lambdas()
        gb = 27.0 * (lam[1] * lam[2] * gl[0]
                     + lam[0] * lam[2] * gl[1]
                     + lam[0] * lam[1] * gl[2])
        return np.vstack([gl, gb])          # (4, 2)

    def rt0_vals(self, x, y):
        p = np.array([x, y])
        return (self.signs[:, None] * (p - self.pts) / (2.0 * self.area))

    def rt0_divs(self):
        return self.signs / self.area

    def quad_points(self, pts):
        """Map reference-triangle points to physical coordinates."""
        p0, p1, p2 = self.pts
        return (p0[None, :] + pts[:, :1] * (p1 - p0)[None, :]
                + pts[:, 1:] * (p2 - p0)[None, :])


def _elements(mesh):
    return [ElementBasis(mesh, t) for t in range(mesh.num_triangles)]


def _scalar_gdofs(mesh, t):
    nv = mesh.num_vertices
    return list(mesh.triangles[t]) + [nv + t]


def dense_velocity_mass(mesh: Mesh, layout: DofLayout) -> np.ndarray:
    return _dense_scalar_pair(mesh, layout, grad=False)


def dense_velocity_stiffness(mesh: Mesh, layout: DofLayout) -> np.ndarray:
    return _dense_scalar_pair(mesh, layout, grad=True)


def _dense_scalar_pair(mesh, layout, grad):
    pts, wts = duffy_rule()
    out = np.zeros((layout.n_velocity, layout.n_velocity))
    scal = mesh.num_vertices + mesh.num_triangles
    for t, el in enumerate(_elements(mesh)):
        gd = _scalar_gdofs(mesh, t)
        phys = el.quad_points(pts)
        loc = np.zeros((4, 4))
        for (x, y), w in zip(phys, wts):
            v = el.scalar_grads(x, y) if grad else el.scalar_vals(x, y)
            loc += 2.0 * el.area * w * (v @ v.T if grad else np.outer(v, v))
        for c in range(2):
            idx = [c * scal + g for g in gd]
            out[np.ix_(idx, idx)] += loc
    return out


def dense_velocity_pressure_div(mesh: Mesh, layout: DofLayout) -> np.ndarray:
    pts, wts = duffy_rule()
    out = np.zeros((layout.n_pressure, layout.n_velocity))
    scal = mesh.num_vertices + mesh.num_triangles
    for t, el in enumerate(_elements(mesh)):
        gd = _scalar_gdofs(mesh, t)
        phys = el.quad_points(pts)
        for (x, y), w in zip(phys, wts):
            lam = el.lambdas(x, y)
            grads = el.scalar_grads(x, y)
            for r_loc, r in enumerate(mesh.triangles[t]):
                for c in range(2):
                    for i_loc, g in enumerate(gd):
                        out[r, c * scal + g] += (2.0 * el.area * w
                                                 * lam[r_loc]
                                                 * grads[i_loc, c])
    return out


def dense_rt0_mass(mesh: Mesh, layout: DofLayout) -> np.ndarray:
    pts, wts = duffy_rule()
    out = np.zeros((layout.n_current, layout.n_current))
    for el in _elements(mesh):
        phys = el.quad_points(pts)
        loc = np.zeros((3, 3))
        for (x, y), w in zip(phys, wts):
            v = el.rt0_vals(x, y)
            loc += 2.0 * el.area * w * (v @ v.T)
        out[np.ix_(el.edges, el.edges)] += loc
    return out


def dense_rt0_div(mesh: Mesh, layout: DofLayout) -> np.ndarray:
    out = np.zeros((mesh.num_triangles, layout.n_current))
    for t, el in enumerate(_elements(mesh)):
        out[t, el.edges] += el.area * el.rt0_divs()
    return out


def _velocity_at(el, gd_vals, x, y):
    v = el.scalar_vals(x, y)
    return gd_vals @ v                       # (2,)


def dense_convection_rhs(mesh, layout, u) -> np.ndarray:
    pts, wts = duffy_rule()
    out = np.zeros(layout.n_velocity)
    scal = mesh.num_vertices + mesh.num_triangles
    for t, el in enumerate(_elements(mesh)):
        gd = _scalar_gdofs(mesh, t)
        loc = np.array([[u[c * scal + g] for g in gd] for c in range(2)])
        phys = el.quad_points(pts)
        for (x, y), w in zip(phys, wts):
            uval = _velocity_at(el, loc, x, y)
            grads = el.scalar_grads(x, y)      # (4, 2)
            gu = loc @ grads                   # (2, 2): d u_c / d x_d
            conv = gu @ uval                   # (u . grad) u
            v = el.scalar_vals(x, y)
            for c in range(2):
                for i_loc, g in enumerate(gd):
                    out[c * scal + g] += 2.0 * el.area * w * conv[c] * v[i_loc]
    return out


def dense_lorentz_rhs(mesh, layout, j, b3=1.0) -> np.ndarray:
    pts, wts = duffy_rule()
    out = np.zeros(layout.n_velocity)
    scal = mesh.num_vertices + mesh.num_triangles
    for t, el in enumerate(_elements(mesh)):
        gd = _scalar_gdofs(mesh, t)
        jloc = j[el.edges]
        phys = el.quad_points(pts)
        for (x, y), w in zip(phys, wts):
            jv = jloc @ el.rt0_vals(x, y)
            force = np.array([jv[1] * b3, -jv[0] * b3])
            v = el.scalar_vals(x, y)
            for c in range(2):
                for i_loc, g in enumerate(gd):
                    out[c * scal + g] += 2.0 * el.area * w * force[c] * v[i_loc]
    return out


def dense_cross_rhs(mesh, layout, u, b3=1.0) -> np.ndarray:
    pts, wts = duffy_rule()
    out = np.zeros(layout.n_current)
    scal = mesh.num_vertices + mesh.num_triangles
    for t, el in enumerate(_elements(mesh)):
        gd = _scalar_gdofs(mesh, t)
        loc = np.array([[u[c * scal + g] for g in gd] for c in range(2)])
        phys = el.quad_points(pts)
        for (x, y), w in zip(phys, wts):
            uval = _velocity_at(el, loc, x, y)
            force = np.array([uval[1] * b3, -uval[0] * b3])
            kv = el.rt0_vals(x, y)
            out[el.edges] += 2.0 * el.area * w * (kv @ force)
    return out


def dense_mean_weights(mesh, layout, space) -> np.ndarray:
    pts, wts = duffy_rule()
    areas = triangle_areas(mesh)
    if space == "potential":
        return areas.copy()
    out = np.zeros(layout.n_pressure)
    for t, el in enumerate(_elements(mesh)):
        phys = el.quad_points(pts)
        for (x, y), w in zip(phys, wts):
            out[mesh.triangles[t]] += 2.0 * el.area * w * el.lambdas(x, y)
    return out


def dense_saddle_solve(a_block, b_block, mean_weights, constrained_dofs,
                       rhs_primal, bc_values=None):
    """Direct dense solve of the bordered saddle system for comparison."""
    a = np.asarray(a_block.todense() if hasattr(a_block, "todense") else a_block)
    b = np.asarray(b_block.todense() if hasattr(b_block, "todense") else b_block)
    n = a.shape[0]
    m = b.shape[0]
    mask = np.ones(n, dtype=bool)
    mask[constrained_dofs] = False
    free = np.nonzero(mask)[0]
    if bc_values is None:
        bc_values = np.zeros(len(constrained_dofs))
    nf = free.size
    dim = nf + m + 1
    mat = np.zeros((dim, dim))
    mat[:nf, :nf] = a[np.ix_(free, free)]
    mat[:nf, nf:nf + m] = -b[:, free].T
    mat[nf:nf + m, :nf] = -b[:, free]
    mat[nf:nf + m, -1] = mean_weights
    mat[-1, nf:nf + m] = mean_weights
    rhs = np.zeros(dim)
    rhs[:nf] = rhs_primal[free] - a[np.ix_(free, constrained_dofs)] @ bc_values
    rhs[nf:nf + m] = b[:, constrained_dofs] @ bc_values
    x = np.linalg.solve(mat, rhs)
    primal = np.zeros(n)
    primal[free] = x[:nf]
    primal[constrained_dofs] = bc_values
    return primal, x[nf:nf + m], x[-1]


def coupled_step_residuals(stepper, old_state, new_state, report) -> dict:
    """Residuals of the coupled fully discrete equations at a
    reconstructed solution.

    For a second-order step the extrapolated transports are used; the
    first step (and any first-order step) is checked against the
    backward Euler form.  Returns max-norm residuals per equation.
    """
    cfg = stepper.config
    tau, kappa, T = cfg.tau, cfg.kappa, cfg.t_final
    t1 = new_state.t
    asm = stepper.asm
    problem = stepper.problem

    second = cfg.order == 2 and old_state.prev_u is not None
    if second:
        u_star = 2.0 * old_state.u - old_state.prev_u
        j_star = 2.0 * old_state.j - old_state.prev_j
        dt_u = (3.0 * new_state.u - 4.0 * old_state.u
                + old_state.prev_u) / (2.0 * tau)
        dt_q = (3.0 * new_state.q - 4.0 * old_state.q
                + old_state.prev_q) / (2.0 * tau)
    else:
        u_star, j_star = old_state.u, old_state.j
        dt_u = (new_state.u - old_state.u) / tau
        dt_q = (new_state.q - old_state.q) / tau

    conv = asm.convection_rhs(u_star)
    lor = asm.lorentz_rhs(j_star, problem.b3, t1)
    crs = asm.cross_rhs(u_star, problem.b3, t1)
    s = report.s

    r_mom = (stepper.mass_u @ dt_u
             + stepper.stiff_u @ new_state.u / cfg.re
             - stepper.div_u.T @ new_state.p
             + s * (conv - kappa * lor))
    if problem.f_u is not None:
        r_mom -= asm.velocity_function_load(problem.f_u, t1)
    free_v = np.setdiff1d(np.arange(stepper.layout.n_velocity),
                          stepper.layout.boundary_velocity_dofs)
    momentum = float(np.max(np.abs(r_mom[free_v])))

    div_u = stepper.div_u @ new_state.u
    w = stepper.mean_p
    div_u = div_u - w * (w @ div_u) / (w @ w)
    continuity = float(np.max(np.abs(div_u)))

    r_j = (stepper.mass_j @ new_state.j
           - stepper.div_j.T @ new_state.phi
           - s * crs)
    if problem.f_j is not None:
        r_j -= asm.current_function_load(problem.f_j, t1)
    free_e = np.setdiff1d(np.arange(stepper.layout.n_current),
                          stepper.layout.boundary_current_dofs)
    current = float(np.max(np.abs(r_j[free_e])))

    div_j = stepper.div_j @ new_state.j
    wp = stepper.mean_phi
    div_j = div_j - wp * (wp @ div_j) / (wp @ wp)
    charge = float(np.max(np.abs(div_j)))

    bracket = (conv @ new_state.u
               - kappa * (crs @ new_state.j)
               - kappa * (lor @ new_state.u))
    bracket -= stepper._boundary_correction(t1)
    r_q = dt_q + new_state.q / T - np.exp(t1 / T) * bracket

    return {
        "momentum": momentum,
        "continuity": continuity,
        "current": current,
        "charge": charge,
        "auxiliary": abs(float(r_q)),
    }
