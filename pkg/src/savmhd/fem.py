"""Discrete spaces and assembly on unit-square triangulations.

Four spaces are used throughout:

* velocity  -- continuous piecewise linears enriched with one cubic
  bubble per triangle (Mini element), two components;
* pressure  -- continuous piecewise linears with zero mean;
* current   -- lowest-order Raviart-Thomas, one normal-flux dof per
  edge, the dof being the integrated flux across the edge with respect
  to the global low-to-high edge orientation;
* potential -- piecewise constants with zero mean.

All integrals use a single symmetric 12-point triangle rule exact for
bivariate polynomials of degree 6, which covers the bubble-times-bubble
mass integrands and keeps the planar cross-product duality identity
exact to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh, triangle_areas

VELOCITY = "velocity"
PRESSURE = "pressure"
CURRENT = "current"
POTENTIAL = "potential"


@dataclass(frozen=True)
class QuadratureRule:
    """Symmetric triangle rule in barycentric coordinates.

    Weights refer to the reference triangle of area 1/2, so a physical
    integral over a triangle K is ``2 * area(K) * sum(w * f(x_q))``.
    """

    points: np.ndarray   # (nq, 3) barycentric
    weights: np.ndarray  # (nq,), sums to 1/2


def triangle_quadrature() -> QuadratureRule:
    """12-point rule exact for polynomials of degree 6 (Dunavant)."""
    groups = [
        (0.116786275726379, (0.501426509658179, 0.249286745170910)),
        (0.050844906370207, (0.873821971016996, 0.063089014491502)),
    ]
    points = []
    weights = []
    for w, (a, b) in groups:
        for perm in ((a, b, b), (b, a, b), (b, b, a)):
            points.append(perm)
            weights.append(w)
    w6 = 0.082851075618374
    a, b, c = 0.053145049844816, 0.310352451033785, 0.636502499121399
    for perm in ((a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)):
        points.append(perm)
        weights.append(w6)
    points = np.asarray(points)
    weights = 0.5 * np.asarray(weights)
    return QuadratureRule(points=points, weights=weights)


@dataclass(frozen=True)
class DofLayout:
    """Degree-of-freedom maps for the four discrete spaces.

    Velocity dofs are ordered component-major: component c occupies
    ``[c*(V+T), (c+1)*(V+T))`` with vertex dofs first, then bubbles.
    """

    n_velocity: int
    n_pressure: int
    n_current: int
    n_potential: int
    boundary_velocity_dofs: np.ndarray
    boundary_current_dofs: np.ndarray

    def size(self, space: str) -> int:
        return {
            VELOCITY: self.n_velocity,
            PRESSURE: self.n_pressure,
            CURRENT: self.n_current,
            POTENTIAL: self.n_potential,
        }[space]


@dataclass
class FieldVector:
    """Coefficient vector tagged with its discrete space."""

    space: str
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)


def _coeffs(u, space: str, layout: DofLayout) -> np.ndarray:
    if isinstance(u, FieldVector):
        if u.space != space:
            raise ValueError(f"expected a {space} field, got {u.space}")
        u = u.coeffs
    u = np.asarray(u, dtype=float)
    if u.shape != (layout.size(space),):
        raise ValueError(f"{space} vector has length {u.shape}, "
                         f"expected ({layout.size(space)},)")
    return u


def build_dof_layout(mesh: Mesh) -> DofLayout:
    nv, nt, ne = mesh.num_vertices, mesh.num_triangles, mesh.num_edges
    scal = nv + nt
    bverts = np.nonzero(mesh.boundary_vertex)[0]
    bvel = np.concatenate([bverts, scal + bverts])
    return DofLayout(
        n_velocity=2 * scal,
        n_pressure=nv,
        n_current=ne,
        n_potential=nt,
        boundary_velocity_dofs=np.sort(bvel),
        boundary_current_dofs=np.nonzero(mesh.boundary_edge)[0],
    )


class Assembler:
    """Precomputed geometry and basis tables for one mesh.

    Construction is single-threaded; the resulting object is
    effectively immutable and can be shared read-only.
    """

    def __init__(self, mesh: Mesh, layout: DofLayout | None = None,
                 quad: QuadratureRule | None = None):
        self.mesh = mesh
        self.layout = layout if layout is not None else build_dof_layout(mesh)
        self.quad = quad if quad is not None else triangle_quadrature()

        tri_pts = mesh.vertices[mesh.triangles]          # (T, 3, 2)
        self.tri_pts = tri_pts
        self.area = triangle_areas(mesh)                 # (T,)

        # gradient of barycentric coordinate k: rotate opposite edge by +90deg
        edge_vec = tri_pts[:, [2, 0, 1]] - tri_pts[:, [1, 2, 0]]   # (T, 3, 2)
        rot = np.empty_like(edge_vec)
        rot[..., 0] = -edge_vec[..., 1]
        rot[..., 1] = edge_vec[..., 0]
        self.grad_lambda = rot / (2.0 * self.area)[:, None, None]  # (T, 3, 2)

        lam = self.quad.points                            # (nq, 3)
        self.x_quad = np.einsum("qk,tkd->tqd", lam, tri_pts)  # (T, nq, 2)

        bubble = 27.0 * lam[:, 0] * lam[:, 1] * lam[:, 2]
        self.scal_vals = np.column_stack([lam, bubble])   # (nq, 4)

        nq = lam.shape[0]
        nt = mesh.num_triangles
        grads = np.empty((nt, nq, 4, 2))
        grads[:, :, :3, :] = self.grad_lambda[:, None, :, :]
        coef = 27.0 * np.stack([lam[:, 1] * lam[:, 2],
                                lam[:, 0] * lam[:, 2],
                                lam[:, 0] * lam[:, 1]], axis=1)  # (nq, 3)
        grads[:, :, 3, :] = np.einsum("qk,tkd->tqd", coef, self.grad_lambda)
        self.scal_grads = grads                           # (T, nq, 4, 2)

        # RT0 basis on the oriented global edge dofs
        signs = mesh.triangle_edge_signs.astype(float)    # (T, 3)
        diff = self.x_quad[:, :, None, :] - tri_pts[:, None, :, :]  # (T,nq,3,2)
        self.rt0_vals = (signs[:, None, :, None] * diff
                         / (2.0 * self.area)[:, None, None, None])
        self.rt0_div_el = signs / self.area[:, None]      # (T, 3)

        nv = mesh.num_vertices
        self.scal_gdof = np.column_stack(
            [mesh.triangles, nv + np.arange(nt)])         # (T, 4)
        scal = nv + nt
        self.vel_gdof = np.stack(
            [self.scal_gdof, scal + self.scal_gdof], axis=1)  # (T, 2, 4)

        midpts = 0.5 * (mesh.vertices[mesh.edges[:, 0]]
                        + mesh.vertices[mesh.edges[:, 1]])
        tangent = mesh.vertices[mesh.edges[:, 1]] - mesh.vertices[mesh.edges[:, 0]]
        self.edge_midpoints = midpts
        self.edge_lengths = np.hypot(tangent[:, 0], tangent[:, 1])
        self.edge_normals = (np.column_stack([tangent[:, 1], -tangent[:, 0]])
                             / self.edge_lengths[:, None])

    # ------------------------------------------------------------------
    # matrices
    # ------------------------------------------------------------------

    def _scatter(self, local, rows, cols, shape) -> sp.csr_matrix:
        mat = sp.coo_matrix(
            (local.ravel(), (rows.ravel(), cols.ravel())), shape=shape)
        mat = mat.tocsr()
        mat.sum_duplicates()
        mat.sort_indices()
        return mat

    def _scalar_elem_pairs(self, local):
        """Scatter (T, 4, 4) element blocks into both velocity components."""
        n = self.layout.n_velocity
        gd = self.vel_gdof  # (T, 2, 4)
        rows = np.broadcast_to(gd[:, :, :, None], gd.shape + (4,))
        cols = np.broadcast_to(gd[:, :, None, :], gd.shape[:3] + (4,))
        vals = np.broadcast_to(local[:, None, :, :], rows.shape)
        return self._scatter(vals, rows, cols, (n, n))

    def velocity_mass(self) -> sp.csr_matrix:
        w = self.quad.weights
        mref = np.einsum("q,qi,qj->ij", w, self.scal_vals, self.scal_vals)
        local = 2.0 * self.area[:, None, None] * mref
        return self._scalar_elem_pairs(local)

    def velocity_stiffness(self) -> sp.csr_matrix:
        w = self.quad.weights
        local = 2.0 * self.area[:, None, None] * np.einsum(
            "q,tqid,tqjd->tij", w, self.scal_grads, self.scal_grads)
        return self._scalar_elem_pairs(local)

    def velocity_pressure_div(self) -> sp.csr_matrix:
        """B with B[r, v] = integral of r * div(v)."""
        w = self.quad.weights
        lam = self.quad.points
        # (T, 3, 2, 4): pressure test r, component c, velocity shape i
        local = 2.0 * self.area[:, None, None, None] * np.einsum(
            "q,qr,tqic->trci", w, lam, self.scal_grads)
        rows = np.broadcast_to(
            self.mesh.triangles[:, :, None, None], local.shape)
        cols = np.broadcast_to(self.vel_gdof[:, None, :, :], local.shape)
        return self._scatter(local, rows, cols,
                             (self.layout.n_pressure, self.layout.n_velocity))

    def rt0_mass(self) -> sp.csr_matrix:
        w = self.quad.weights
        local = 2.0 * self.area[:, None, None] * np.einsum(
            "q,tqid,tqjd->tij", w, self.rt0_vals, self.rt0_vals)
        te = self.mesh.triangle_edges
        rows = np.broadcast_to(te[:, :, None], local.shape)
        cols = np.broadcast_to(te[:, None, :], local.shape)
        n = self.layout.n_current
        return self._scatter(local, rows, cols, (n, n))

    def rt0_div(self) -> sp.csr_matrix:
        """D with D[K, e] = integral over K of div(basis_e) = +-1."""
        nt = self.mesh.num_triangles
        rows = np.repeat(np.arange(nt), 3)
        cols = self.mesh.triangle_edges.ravel()
        vals = self.mesh.triangle_edge_signs.astype(float).ravel()
        return self._scatter(vals, rows, cols, (nt, self.layout.n_current))

    def mean_weights(self, space: str) -> np.ndarray:
        """Weights w with w @ coeffs = integral of the field."""
        if space == PRESSURE:
            w = np.zeros(self.layout.n_pressure)
            np.add.at(w, self.mesh.triangles.ravel(),
                      np.repeat(self.area / 3.0, 3))
            return w
        if space == POTENTIAL:
            return self.area.copy()
        raise ValueError(f"no mean constraint for space {space!r}")

    # ------------------------------------------------------------------
    # field evaluation at quadrature points
    # ------------------------------------------------------------------

    def velocity_at_quad(self, u) -> np.ndarray:
        """(T, nq, 2) values of a velocity field."""
        u = _coeffs(u, VELOCITY, self.layout)
        loc = u[self.vel_gdof]                      # (T, 2, 4)
        return np.einsum("tci,qi->tqc", loc, self.scal_vals, optimize=True)

    def velocity_grad_at_quad(self, u) -> np.ndarray:
        """(T, nq, 2, 2) with entry [..., c, d] = d u_c / d x_d."""
        u = _coeffs(u, VELOCITY, self.layout)
        loc = u[self.vel_gdof]
        return np.einsum("tci,tqid->tqcd", loc, self.scal_grads, optimize=True)

    def pressure_at_quad(self, p) -> np.ndarray:
        p = _coeffs(p, PRESSURE, self.layout)
        return np.einsum("tr,qr->tq", p[self.mesh.triangles], self.quad.points, optimize=True)

    def current_at_quad(self, j) -> np.ndarray:
        j = _coeffs(j, CURRENT, self.layout)
        loc = j[self.mesh.triangle_edges]           # (T, 3)
        return np.einsum("te,tqed->tqd", loc, self.rt0_vals, optimize=True)

    def current_div(self, j) -> np.ndarray:
        """Elementwise-constant divergence, (T,)."""
        j = _coeffs(j, CURRENT, self.layout)
        return np.einsum("te,te->t", j[self.mesh.triangle_edges],
                         self.rt0_div_el)

    def b3_at_quad(self, b3, t: float) -> np.ndarray:
        """Out-of-plane magnetic field sampled at quadrature points."""
        if np.isscalar(b3):
            return np.full(self.x_quad.shape[:2], float(b3))
        x, y = self.x_quad[..., 0], self.x_quad[..., 1]
        return np.broadcast_to(np.asarray(b3(x, y, t), dtype=float),
                               x.shape).copy()

    # ------------------------------------------------------------------
    # load vectors
    # ------------------------------------------------------------------

    def velocity_load(self, vals: np.ndarray) -> np.ndarray:
        """Load vector of ``(f, v)`` from values f at quadrature points."""
        w = self.quad.weights
        local = 2.0 * self.area[:, None, None] * np.einsum(
            "q,tqc,qi->tci", w, vals, self.scal_vals, optimize=True)
        out = np.zeros(self.layout.n_velocity)
        np.add.at(out, self.vel_gdof.ravel(), local.ravel())
        return out

    def current_load(self, vals: np.ndarray) -> np.ndarray:
        """Load vector of ``(g, K)`` against the RT0 basis."""
        w = self.quad.weights
        local = 2.0 * self.area[:, None] * np.einsum(
            "q,tqd,tqed->te", w, vals, self.rt0_vals, optimize=True)
        out = np.zeros(self.layout.n_current)
        np.add.at(out, self.mesh.triangle_edges.ravel(), local.ravel())
        return out

    def velocity_function_load(self, f, t: float) -> np.ndarray:
        x, y = self.x_quad[..., 0], self.x_quad[..., 1]
        f1, f2 = f(x, y, t)
        vals = np.stack([np.broadcast_to(f1, x.shape),
                         np.broadcast_to(f2, x.shape)], axis=-1).astype(float)
        return self.velocity_load(vals)

    def current_function_load(self, f, t: float) -> np.ndarray:
        x, y = self.x_quad[..., 0], self.x_quad[..., 1]
        f1, f2 = f(x, y, t)
        vals = np.stack([np.broadcast_to(f1, x.shape),
                         np.broadcast_to(f2, x.shape)], axis=-1).astype(float)
        return self.current_load(vals)

    def convection_rhs(self, u) -> np.ndarray:
        """Load vector of ``(u . grad u, v)``."""
        uq = self.velocity_at_quad(u)
        gq = self.velocity_grad_at_quad(u)
        conv = np.einsum("tqd,tqcd->tqc", uq, gq, optimize=True)
        return self.velocity_load(conv)

    def lorentz_rhs(self, j, b3=1.0, t: float = 0.0) -> np.ndarray:
        """Load vector of ``(J x B, v)`` with B = (0, 0, b3)."""
        jq = self.current_at_quad(j)
        b3q = self.b3_at_quad(b3, t)
        vals = np.stack([jq[..., 1] * b3q, -jq[..., 0] * b3q], axis=-1)
        return self.velocity_load(vals)

    def cross_rhs(self, u, b3=1.0, t: float = 0.0) -> np.ndarray:
        """Load vector of ``(u x B, K)`` with B = (0, 0, b3)."""
        uq = self.velocity_at_quad(u)
        b3q = self.b3_at_quad(b3, t)
        vals = np.stack([uq[..., 1] * b3q, -uq[..., 0] * b3q], axis=-1)
        return self.current_load(vals)

    # ------------------------------------------------------------------
    # interpolation and boundary data
    # ------------------------------------------------------------------

    def interpolate_velocity(self, f, t: float) -> np.ndarray:
        """Vertex interpolation onto the Mini space (bubbles zero)."""
        x, y = self.mesh.vertices[:, 0], self.mesh.vertices[:, 1]
        f1, f2 = f(x, y, t)
        out = np.zeros(self.layout.n_velocity)
        nv = self.mesh.num_vertices
        scal = nv + self.mesh.num_triangles
        out[:nv] = np.broadcast_to(f1, (nv,))
        out[scal:scal + nv] = np.broadcast_to(f2, (nv,))
        return out

    def interpolate_current(self, f, t: float) -> np.ndarray:
        """Edge-flux interpolation onto RT0 (midpoint flux times length)."""
        x, y = self.edge_midpoints[:, 0], self.edge_midpoints[:, 1]
        f1, f2 = f(x, y, t)
        flux = (np.broadcast_to(f1, x.shape) * self.edge_normals[:, 0]
                + np.broadcast_to(f2, x.shape) * self.edge_normals[:, 1])
        return flux * self.edge_lengths

    def velocity_boundary_values(self, g, t: float) -> np.ndarray:
        """Values on ``layout.boundary_velocity_dofs`` interpolating g."""
        bverts = np.nonzero(self.mesh.boundary_vertex)[0]
        x = self.mesh.vertices[bverts, 0]
        y = self.mesh.vertices[bverts, 1]
        g1, g2 = g(x, y, t)
        full = np.zeros(self.layout.n_velocity)
        scal = self.mesh.num_vertices + self.mesh.num_triangles
        full[bverts] = np.broadcast_to(g1, x.shape)
        full[scal + bverts] = np.broadcast_to(g2, x.shape)
        return full[self.layout.boundary_velocity_dofs]

    def current_boundary_values(self, flux, t: float) -> np.ndarray:
        """Values on ``layout.boundary_current_dofs`` from a normal flux.

        ``flux(x, y, t)`` returns J . n at edge midpoints with respect to
        the oriented (low-to-high) edge normal; the dof is flux times
        edge length.
        """
        be = self.layout.boundary_current_dofs
        x = self.edge_midpoints[be, 0]
        y = self.edge_midpoints[be, 1]
        vals = np.broadcast_to(np.asarray(flux(x, y, t), dtype=float), x.shape)
        return vals * self.edge_lengths[be]

    def boundary_flux_cubed(self, g, t: float, npts: int = 3) -> float:
        """Boundary integral ``0.5 * \\oint (g . n) |g|^2 ds``.

        Uses ``npts``-point Gauss on each boundary edge with the outward
        normal of the unit square.
        """
        be = np.nonzero(self.mesh.boundary_edge)[0]
        a = self.mesh.vertices[self.mesh.edges[be, 0]]
        b = self.mesh.vertices[self.mesh.edges[be, 1]]
        nodes, wts = np.polynomial.legendre.leggauss(npts)
        s = 0.5 * (nodes + 1.0)           # map to [0, 1]
        wts = 0.5 * wts
        pts = a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]
        x, y = pts[..., 0], pts[..., 1]
        g1, g2 = g(x, y, t)
        g1 = np.broadcast_to(g1, x.shape)
        g2 = np.broadcast_to(g2, x.shape)
        # outward normal of the unit square
        nx = np.where(np.isclose(x, 1.0), 1.0, np.where(np.isclose(x, 0.0), -1.0, 0.0))
        ny = np.where(np.isclose(y, 1.0), 1.0, np.where(np.isclose(y, 0.0), -1.0, 0.0))
        integrand = (g1 * nx + g2 * ny) * (g1 ** 2 + g2 ** 2)
        lengths = self.edge_lengths[be]
        return 0.5 * float(np.einsum("es,s,e->", integrand, wts, lengths))


# ----------------------------------------------------------------------
# module-level assembly API
# ----------------------------------------------------------------------

def assemble_velocity_mass(mesh: Mesh, layout: DofLayout) -> sp.csr_matrix:
    return Assembler(mesh, layout).velocity_mass()


def assemble_velocity_stiffness(mesh: Mesh, layout: DofLayout) -> sp.csr_matrix:
    return Assembler(mesh, layout).velocity_stiffness()


def assemble_velocity_pressure_div(mesh: Mesh, layout: DofLayout) -> sp.csr_matrix:
    return Assembler(mesh, layout).velocity_pressure_div()


def assemble_rt0_mass(mesh: Mesh, layout: DofLayout) -> sp.csr_matrix:
    return Assembler(mesh, layout).rt0_mass()


def assemble_rt0_div(mesh: Mesh, layout: DofLayout) -> sp.csr_matrix:
    return Assembler(mesh, layout).rt0_div()


def assemble_convection_rhs(u, mesh: Mesh, layout: DofLayout) -> np.ndarray:
    return Assembler(mesh, layout).convection_rhs(u)


def assemble_lorentz_rhs(j, mesh: Mesh, layout: DofLayout, b3=1.0,
                         t: float = 0.0) -> np.ndarray:
    return Assembler(mesh, layout).lorentz_rhs(j, b3, t)


def assemble_cross_rhs(u, mesh: Mesh, layout: DofLayout, b3=1.0,
                       t: float = 0.0) -> np.ndarray:
    return Assembler(mesh, layout).cross_rhs(u, b3, t)


def zero_mean_constraint(mesh: Mesh, layout: DofLayout, space: str) -> np.ndarray:
    return Assembler(mesh, layout).mean_weights(space)


def eliminate_dofs(matrix: sp.spmatrix, rhs: np.ndarray, dofs: np.ndarray,
                   values: np.ndarray) -> tuple[sp.csr_matrix, np.ndarray]:
    """Symmetric elimination of constrained dofs from a square system.

    Known columns move to the right-hand side, constrained rows become
    identity rows with the prescribed value on the right.
    """
    matrix = matrix.tocsr()
    n = matrix.shape[0]
    full = np.zeros(n)
    full[dofs] = values
    rhs = rhs - matrix @ full
    mask = np.ones(n, dtype=bool)
    mask[dofs] = False
    keep = sp.diags(mask.astype(float))
    out = keep @ matrix @ keep
    out = out.tolil()
    out[dofs, dofs] = 1.0
    rhs = rhs * mask
    rhs[dofs] = values
    return out.tocsr(), rhs


def apply_velocity_dirichlet(matrix: sp.spmatrix, rhs: np.ndarray,
                             assembler: Assembler, g, t: float):
    """Constrain boundary vertex velocity dofs to interpolated data."""
    dofs = assembler.layout.boundary_velocity_dofs
    values = assembler.velocity_boundary_values(g, t)
    return eliminate_dofs(matrix, rhs, dofs, values)


def apply_current_normal_trace(matrix: sp.spmatrix, rhs: np.ndarray,
                               assembler: Assembler, flux, t: float):
    """Constrain boundary edge dofs to a prescribed normal flux."""
    dofs = assembler.layout.boundary_current_dofs
    values = assembler.current_boundary_values(flux, t)
    return eliminate_dofs(matrix, rhs, dofs, values)
