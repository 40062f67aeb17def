"""Quadrature tables and assembly of all variational forms.

A :class:`Discretization` precomputes, once per mesh, the physical quadrature
points/weights, basis value and gradient tables, the trace tables on the
bottom wall, and the sparse index maps.  All assemblies loop over cells in a
fixed order with a deterministic accumulation, so two assemblies of identical
inputs are bit-identical.
"""

import numpy as np
import scipy.sparse as sp

from .elements import p1_basis, p2_basis, simplex_quadrature
from .mesh import TAG_BOTTOM, TAG_LATERAL, TAG_TOP
from .spaces import build_pressure_space, build_temperature_space, build_velocity_space


class Discretization:
    """Mesh + spaces + quadrature tables for form assembly."""

    def __init__(self, mesh, quad_degree=6):
        self.mesh = mesh
        self.quad_degree = int(quad_degree)
        d = mesh.dim
        self.velocity = build_velocity_space(mesh)
        self.pressure = build_pressure_space(mesh)
        self.temperature = build_temperature_space(mesh)

        ref_pts, ref_w = simplex_quadrature(d, self.quad_degree)
        self.num_qp = len(ref_pts)
        self.p1_vals, p1_grads = p1_basis(d, ref_pts)
        self.p2_vals, p2_grads = p2_basis(d, ref_pts)

        v0 = mesh.vertices[mesh.cells[:, 0]]
        jac = np.stack(
            [mesh.vertices[mesh.cells[:, k + 1]] - v0 for k in range(d)], axis=-1
        )  # (nc, d, d), columns are edge vectors
        det = np.linalg.det(jac)
        inv = np.linalg.inv(jac)
        self.qp = v0[:, None, :] + np.einsum("qk,ckl->cql", ref_pts, np.swapaxes(jac, 1, 2))
        self.qw = np.abs(det)[:, None] * ref_w[None, :]
        # physical gradients: grad_x = inv(J)^T grad_ref
        self.p1_grad = np.einsum("iqk,ckl->ciql", p1_grads, inv)
        self.p2_grad = np.einsum("iqk,ckl->ciql", p2_grads, inv)

        self._gamma0_tables()
        self._index_maps()
        self._constant_matrices()

    # ------------------------------------------------------------------ setup

    def _gamma0_tables(self):
        mesh = self.mesh
        d = mesh.dim
        self.facet_quadratures = {}
        for tag in (TAG_BOTTOM, TAG_TOP, TAG_LATERAL):
            sel = np.where(mesh.facet_tags == tag)[0]
            facets = mesh.facets[sel]
            fref_pts, fref_w = simplex_quadrature(d - 1, self.quad_degree)
            tr2, _ = p2_basis(d - 1, fref_pts)
            tr1, _ = p1_basis(d - 1, fref_pts)
            pts = mesh.vertices[facets]  # (nf, d, d_coords)
            base = pts[:, 0, :]
            span = pts[:, 1:, :] - base[:, None, :]  # (nf, d-1, d)
            fqp = base[:, None, :] + np.einsum("qk,fkl->fql", fref_pts, span)
            gram = np.einsum("fkl,fml->fkm", span, span)
            measure = np.sqrt(np.abs(np.linalg.det(gram)))
            fqw = measure[:, None] * fref_w[None, :]
            self.facet_quadratures[tag] = {
                "facet_ids": sel,
                "qp": fqp,
                "qw": fqw,
                "trace_p2": tr2,
                "trace_p1": tr1,
                "vel_nodes": self.velocity.facet_nodes[tag],
                "vertex_nodes": facets,
                "normals": mesh.facet_normals[sel],
            }

    def _index_maps(self):
        d = self.mesh.dim
        cn = self.velocity.cell_nodes  # (nc, nloc2)
        nloc = cn.shape[1]
        # vector dofs per cell, interleaved components: (nc, nloc*d)
        self.vel_cell_dofs = (cn[:, :, None] * d + np.arange(d)[None, None, :]).reshape(len(cn), -1)
        vd = self.vel_cell_dofs
        self._jac_rows = np.repeat(vd, vd.shape[1], axis=1).ravel()
        self._jac_cols = np.tile(vd, (1, vd.shape[1])).ravel()
        pn = self.mesh.cells
        self._div_rows = np.repeat(pn, vd.shape[1], axis=1).ravel()
        self._div_cols = np.tile(vd, (1, pn.shape[1])).ravel()
        self._scal_rows = np.repeat(pn, pn.shape[1], axis=1).ravel()
        self._scal_cols = np.tile(pn, (1, pn.shape[1])).ravel()

    def _constant_matrices(self):
        d = self.mesh.dim
        # divergence: Bmat[j, dof(i,a)] = int psi_j d_a(phi_i)
        loc = np.einsum("cq,jq,ciqa->cjia", self.qw, self.p1_vals, self.p2_grad)
        self.divergence_matrix = sp.coo_matrix(
            (loc.ravel(), (self._div_rows, self._div_cols)),
            shape=(self.pressure.num_dofs, self.velocity.num_dofs),
        ).tocsr()
        self.pressure_integral = self.scalar_load(np.ones_like(self.qw))
        self.volume = float(np.sum(self.qw))

    # ----------------------------------------------------------- field values

    def velocity_values(self, coeffs):
        c = np.asarray(coeffs, dtype=float).reshape(-1, self.mesh.dim)
        nodal = c[self.velocity.cell_nodes]  # (nc, nloc, d)
        return np.einsum("iq,cia->cqa", self.p2_vals, nodal)

    def velocity_gradients(self, coeffs):
        c = np.asarray(coeffs, dtype=float).reshape(-1, self.mesh.dim)
        nodal = c[self.velocity.cell_nodes]
        return np.einsum("ciql,cia->cqal", self.p2_grad, nodal)

    def strains(self, coeffs):
        g = self.velocity_gradients(coeffs)
        return 0.5 * (g + np.swapaxes(g, -1, -2))

    def scalar_values(self, coeffs):
        nodal = np.asarray(coeffs, dtype=float)[self.mesh.cells]
        return np.einsum("iq,ci->cq", self.p1_vals, nodal)

    def scalar_gradients(self, coeffs):
        nodal = np.asarray(coeffs, dtype=float)[self.mesh.cells]
        return np.einsum("ciql,ci->cql", self.p1_grad, nodal)

    def gamma0_velocity_values(self, coeffs, tag=TAG_BOTTOM):
        tab = self.facet_quadratures[tag]
        c = np.asarray(coeffs, dtype=float).reshape(-1, self.mesh.dim)
        nodal = c[tab["vel_nodes"]]  # (nf, nlocf, d)
        return np.einsum("iq,fia->fqa", tab["trace_p2"], nodal)

    def gamma0_scalar_values(self, coeffs, tag=TAG_BOTTOM):
        tab = self.facet_quadratures[tag]
        nodal = np.asarray(coeffs, dtype=float)[tab["vertex_nodes"]]
        return np.einsum("iq,fi->fq", tab["trace_p1"], nodal)

    # ------------------------------------------------------------- assemblies

    def stress_divergence_vector(self, stress):
        """R_i = int S : D(phi_i) for a symmetric stress table (nc, nq, d, d)."""
        loc = np.einsum("cq,cqab,ciqb->cia", self.qw, stress, self.p2_grad)
        out = np.zeros(self.velocity.num_dofs)
        np.add.at(out, self.vel_cell_dofs, loc.reshape(len(loc), -1))
        return out

    def vector_load(self, values):
        """L_i = int f . phi_i for a vector table (nc, nq, d)."""
        loc = np.einsum("cq,cqa,iq->cia", self.qw, values, self.p2_vals)
        out = np.zeros(self.velocity.num_dofs)
        np.add.at(out, self.vel_cell_dofs, loc.reshape(len(loc), -1))
        return out

    def scalar_load(self, values):
        """L_j = int v psi_j for a scalar table (nc, nq)."""
        loc = np.einsum("cq,cq,iq->ci", self.qw, values, self.p1_vals)
        out = np.zeros(self.pressure.num_dofs)
        np.add.at(out, self.mesh.cells, loc)
        return out

    def scalar_gradient_pairing(self, table):
        """R_j = int T . grad psi_j for a vector table (nc, nq, d)."""
        loc = np.einsum("cq,cql,cjql->cj", self.qw, table, self.p1_grad)
        out = np.zeros(self.pressure.num_dofs)
        np.add.at(out, self.mesh.cells, loc)
        return out

    def gamma0_scalar_load(self, values, tag=TAG_BOTTOM):
        """L_j = int_boundary v psi_j for a facet table (nf, nq)."""
        tab = self.facet_quadratures[tag]
        loc = np.einsum("fq,fq,iq->fi", tab["qw"], values, tab["trace_p1"])
        out = np.zeros(self.pressure.num_dofs)
        np.add.at(out, tab["vertex_nodes"], loc)
        return out

    def gamma0_vector_load(self, values, tag=TAG_BOTTOM):
        """L_i = int_boundary v . phi_i for a facet vector table (nf, nq, d)."""
        tab = self.facet_quadratures[tag]
        d = self.mesh.dim
        loc = np.einsum("fq,fqa,iq->fia", tab["qw"], values, tab["trace_p2"])
        dofs = (tab["vel_nodes"][:, :, None] * d + np.arange(d)[None, None, :]).reshape(
            len(tab["vel_nodes"]), -1
        )
        out = np.zeros(self.velocity.num_dofs)
        np.add.at(out, dofs, loc.reshape(len(loc), -1))
        return out

    def flow_jacobian(self, iso_coef, rank_one_coef, direction):
        """Sparse d(stress residual)/d(velocity).

        The stress derivative has the form
        ``dS[E] = iso_coef * sym(E) + rank_one_coef * (direction : E) direction``
        per quadrature point; both coefficient tables are (nc, nq) and
        ``direction`` is (nc, nq, d, d).
        """
        d = self.mesh.dim
        nc = len(self.mesh.cells)
        grads = self.p2_grad  # (nc, nloc, nq, d)
        # iso part: 1/2 c1 (delta_ab grad_i . grad_j + d_b phi_i d_a phi_j)
        w1 = 0.5 * self.qw * iso_coef
        gdot = np.einsum("cq,ciql,cjql->cij", w1, grads, grads)
        local = np.einsum("cq,ciqb,cjqa->ciajb", w1, grads, grads)
        # rank-one part: c2 (direction grad_i)_a (direction grad_j)_b
        gdir = np.einsum("cqab,ciqb->ciqa", direction, grads)
        local += np.einsum("cq,ciqa,cjqb->ciajb", self.qw * rank_one_coef, gdir, gdir)
        for a in range(d):
            local[:, :, a, :, a] += gdot
        data = local.reshape(nc, -1).ravel()
        J = sp.coo_matrix(
            (data, (self._jac_rows, self._jac_cols)),
            shape=(self.velocity.num_dofs, self.velocity.num_dofs),
        )
        return J.tocsr()

    def scalar_matrix(self, kind, table=None):
        """P1 x P1 matrices: 'mass', 'stiffness' (K table or identity) or
        'convection' (velocity table (nc, nq, d), unsymmetrized)."""
        if kind == "mass":
            loc = np.einsum("cq,iq,jq->cij", self.qw, self.p1_vals, self.p1_vals)
        elif kind == "stiffness":
            if table is None:
                loc = np.einsum("cq,ciql,cjql->cij", self.qw, self.p1_grad, self.p1_grad)
            else:
                K = np.asarray(table, dtype=float)
                loc = np.einsum("cq,ciql,lm,cjqm->cij", self.qw, self.p1_grad, K, self.p1_grad)
        elif kind == "convection":
            loc = np.einsum("cq,iq,cqa,cjqa->cij", self.qw, self.p1_vals, table, self.p1_grad)
        else:
            raise ValueError(f"unknown scalar matrix kind {kind!r}")
        M = sp.coo_matrix(
            (loc.ravel(), (self._scal_rows, self._scal_cols)),
            shape=(self.pressure.num_dofs, self.pressure.num_dofs),
        )
        return M.tocsr()

    def boundary_mass_matrix(self, tags=(TAG_BOTTOM, TAG_TOP, TAG_LATERAL)):
        """P1 x P1 mass matrix over the selected boundary parts."""
        n = self.pressure.num_dofs
        out = sp.csr_matrix((n, n))
        for tag in tags:
            tab = self.facet_quadratures[tag]
            if len(tab["facet_ids"]) == 0:
                continue
            loc = np.einsum("fq,iq,jq->fij", tab["qw"], tab["trace_p1"], tab["trace_p1"])
            vn = tab["vertex_nodes"]
            rows = np.repeat(vn, vn.shape[1], axis=1).ravel()
            cols = np.tile(vn, (1, vn.shape[1])).ravel()
            out = out + sp.coo_matrix((loc.ravel(), (rows, cols)), shape=(n, n)).tocsr()
        return out

    def velocity_gram(self, kind):
        """P2-vector Gram matrices: 'gradient', 'strain' or 'mass' (p = 2)."""
        d = self.mesh.dim
        nc = len(self.mesh.cells)
        nloc = self.velocity.cell_nodes.shape[1]
        if kind == "mass":
            blk = np.einsum("cq,iq,jq->cij", self.qw, self.p2_vals, self.p2_vals)
            local = np.zeros((nc, nloc, d, nloc, d))
            for a in range(d):
                local[:, :, a, :, a] = blk
        elif kind == "gradient":
            blk = np.einsum("cq,ciql,cjql->cij", self.qw, self.p2_grad, self.p2_grad)
            local = np.zeros((nc, nloc, d, nloc, d))
            for a in range(d):
                local[:, :, a, :, a] = blk
        elif kind == "strain":
            # D(phi_i^a) : D(phi_j^b) = 1/2 (delta_ab grad_i . grad_j + d_b phi_i d_a phi_j)
            gdot = np.einsum("cq,ciql,cjql->cij", 0.5 * self.qw, self.p2_grad, self.p2_grad)
            local = np.einsum("cq,ciqb,cjqa->ciajb", 0.5 * self.qw, self.p2_grad, self.p2_grad)
            for a in range(d):
                local[:, :, a, :, a] += gdot
        else:
            raise ValueError(f"unknown velocity gram kind {kind!r}")
        J = sp.coo_matrix(
            (local.reshape(nc, -1).ravel(), (self._jac_rows, self._jac_cols)),
            shape=(self.velocity.num_dofs, self.velocity.num_dofs),
        )
        return J.tocsr()

    # ------------------------------------------------------------------ norms

    def gradient_norm(self, coeffs, power, kind="velocity"):
        """(int |grad field|^power)^(1/power) by quadrature."""
        if kind == "velocity":
            g = self.velocity_gradients(coeffs)
            mod = np.sqrt(np.sum(g * g, axis=(-2, -1)))
        else:
            g = self.scalar_gradients(coeffs)
            mod = np.linalg.norm(g, axis=-1)
        return float(np.sum(self.qw * mod**power) ** (1.0 / power))

    def strain_norm(self, coeffs, power):
        D = self.strains(coeffs)
        mod = np.sqrt(np.sum(D * D, axis=(-2, -1)))
        return float(np.sum(self.qw * mod**power) ** (1.0 / power))

    def value_norm(self, coeffs, power, kind="velocity"):
        if kind == "velocity":
            v = self.velocity_values(coeffs)
            mod = np.linalg.norm(v, axis=-1)
        else:
            mod = np.abs(self.scalar_values(coeffs))
        return float(np.sum(self.qw * mod**power) ** (1.0 / power))
