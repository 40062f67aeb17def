"""Discrete spaces: P2 vector velocity, P1 pressure, P1 temperature.

The velocity space enforces zero values on the top and lateral boundaries and
a zero wall-normal component on the (flat) bottom wall by eliminating the
corresponding nodal degrees of freedom; the temperature space enforces zero
values on the top and lateral boundaries.  Degrees of freedom are interleaved
per node for the vector space: dof(node, comp) = node * dim + comp.
"""

from dataclasses import dataclass, field

import numpy as np

from .elements import EDGE_PAIRS, p2_node_count
from .mesh import TAG_BOTTOM, TAG_LATERAL, TAG_TOP


def _facet_edges(facet):
    """Sorted vertex pairs of a boundary facet, lexicographic order."""
    k = len(facet)
    return [tuple(sorted((facet[i], facet[j]))) for i in range(k) for j in range(i + 1, k)]


@dataclass
class VelocitySpace:
    """Continuous piecewise-quadratic vector field space with slip constraints."""

    mesh: object
    node_coords: np.ndarray
    cell_nodes: np.ndarray
    dirichlet_nodes: np.ndarray  # zero trace on top + lateral boundary
    slip_nodes: np.ndarray  # zero normal component on the bottom wall
    facet_nodes: dict  # tag -> (nfacet, nloc_facet) trace connectivity

    @property
    def dim(self):
        return self.mesh.dim

    @property
    def num_nodes(self):
        return len(self.node_coords)

    @property
    def num_dofs(self):
        return self.num_nodes * self.dim

    def dof_indices(self, nodes, comp):
        return np.asarray(nodes, dtype=np.int64) * self.dim + comp

    @property
    def fixed_mask(self):
        mask = np.zeros(self.num_dofs, dtype=bool)
        for comp in range(self.dim):
            mask[self.dof_indices(np.where(self.dirichlet_nodes)[0], comp)] = True
        mask[self.dof_indices(np.where(self.slip_nodes)[0], self.dim - 1)] = True
        return mask

    @property
    def free_dofs(self):
        return np.where(~self.fixed_mask)[0]

    def interpolate(self, fn):
        """Nodal interpolation of a callable x -> R^dim (vectorized over rows)."""
        values = np.asarray(fn(self.node_coords), dtype=float)
        if values.shape != (self.num_nodes, self.dim):
            raise ValueError(f"interpolant returned shape {values.shape}")
        return values.reshape(-1)

    def apply_constraints(self, coeffs):
        out = np.array(coeffs, dtype=float)
        out[self.fixed_mask] = 0.0
        return out


@dataclass
class ScalarSpace:
    """Continuous piecewise-linear scalar space on mesh vertices."""

    mesh: object
    dirichlet_nodes: np.ndarray = None  # None: unconstrained (pressure)

    @property
    def num_dofs(self):
        return self.mesh.num_vertices

    @property
    def fixed_mask(self):
        if self.dirichlet_nodes is None:
            return np.zeros(self.num_dofs, dtype=bool)
        return self.dirichlet_nodes

    @property
    def free_dofs(self):
        return np.where(~self.fixed_mask)[0]

    def interpolate(self, fn):
        return np.asarray(fn(self.mesh.vertices), dtype=float)

    def apply_constraints(self, coeffs):
        out = np.array(coeffs, dtype=float)
        out[self.fixed_mask] = 0.0
        return out


def _mark_boundary_nodes(mesh, edge_lookup, num_nodes):
    """Per-tag boolean masks over P2 nodes (vertices + edge midpoints)."""
    nv = mesh.num_vertices
    marks = {tag: np.zeros(num_nodes, dtype=bool) for tag in (TAG_BOTTOM, TAG_TOP, TAG_LATERAL)}
    for facet, tag in zip(mesh.facets, mesh.facet_tags):
        marks[tag][facet] = True
        if mesh.dim == 2:
            marks[tag][nv + edge_lookup[tuple(sorted(facet))]] = True
        else:
            for pair in _facet_edges(facet):
                marks[tag][nv + edge_lookup[pair]] = True
    return marks


def build_velocity_space(mesh):
    edges, cell_edges = mesh.edges()
    nv = mesh.num_vertices
    midpoints = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
    node_coords = np.vstack([mesh.vertices, midpoints])
    cell_nodes = np.hstack([mesh.cells, nv + cell_edges])
    assert cell_nodes.shape[1] == p2_node_count(mesh.dim)
    edge_lookup = {tuple(e): i for i, e in enumerate(map(tuple, edges))}
    marks = _mark_boundary_nodes(mesh, edge_lookup, len(node_coords))
    dirichlet = marks[TAG_TOP] | marks[TAG_LATERAL]
    slip = marks[TAG_BOTTOM] & ~dirichlet
    facet_nodes = {}
    for tag in (TAG_BOTTOM, TAG_TOP, TAG_LATERAL):
        sel = mesh.facet_tags == tag
        rows = []
        for facet in mesh.facets[sel]:
            mids = [nv + edge_lookup[pair] for pair in _facet_edges(facet)]
            rows.append(list(facet) + mids)
        facet_nodes[tag] = np.asarray(rows, dtype=np.int64).reshape(len(rows), -1)
    return VelocitySpace(
        mesh=mesh,
        node_coords=node_coords,
        cell_nodes=cell_nodes,
        dirichlet_nodes=dirichlet,
        slip_nodes=slip,
        facet_nodes=facet_nodes,
    )


def build_temperature_space(mesh):
    mask = np.zeros(mesh.num_vertices, dtype=bool)
    for facet, tag in zip(mesh.facets, mesh.facet_tags):
        if tag in (TAG_TOP, TAG_LATERAL):
            mask[facet] = True
    return ScalarSpace(mesh=mesh, dirichlet_nodes=mask)


def build_pressure_space(mesh):
    return ScalarSpace(mesh=mesh, dirichlet_nodes=None)
