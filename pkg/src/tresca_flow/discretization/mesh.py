"""Simplicial meshes of the channel domain {0 < x_d < h(x')} over a box.

The bottom wall (x_d = 0, where the slip condition lives) is tagged 0, the
top surface x_d = h(x') is tagged 1 and the lateral boundary is tagged 2.
2D meshes split a terrain-following structured quad grid into triangles; 3D
meshes split each hexahedral cell into six tetrahedra along a common main
diagonal, which keeps the triangulation conforming across cells.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .elements import EDGE_PAIRS

TAG_BOTTOM = 0
TAG_TOP = 1
TAG_LATERAL = 2

_KUHN_PERMUTATIONS = (
    (0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0),
)


@dataclass
class Mesh:
    """Conforming simplicial mesh with tagged boundary facets.

    ``facets`` are (dim)-vertex boundary simplices; ``facet_normals`` are unit
    outward normals and ``facet_cells`` the adjacent cell of each facet.
    """

    dim: int
    vertices: np.ndarray
    cells: np.ndarray
    facets: np.ndarray
    facet_tags: np.ndarray
    facet_normals: np.ndarray
    facet_cells: np.ndarray
    _edges: np.ndarray = field(default=None, repr=False)
    _cell_edges: np.ndarray = field(default=None, repr=False)

    @property
    def num_vertices(self):
        return len(self.vertices)

    @property
    def num_cells(self):
        return len(self.cells)

    def cell_volumes(self):
        v0 = self.vertices[self.cells[:, 0]]
        mats = np.stack(
            [self.vertices[self.cells[:, k + 1]] - v0 for k in range(self.dim)], axis=-1
        )
        return np.abs(np.linalg.det(mats)) / math.factorial(self.dim)

    def facet_measures(self, tag=None):
        facets = self.facets if tag is None else self.facets[self.facet_tags == tag]
        pts = self.vertices[facets]
        e = pts[:, 1:, :] - pts[:, :1, :]
        if self.dim == 2:
            return np.linalg.norm(e[:, 0, :], axis=1)
        cross = np.cross(e[:, 0, :], e[:, 1, :])
        return 0.5 * np.linalg.norm(cross, axis=1)

    def omega_measure(self):
        return float(self.cell_volumes().sum())

    def gamma0_measure(self):
        return float(self.facet_measures(TAG_BOTTOM).sum())

    def edges(self):
        """Unique vertex-pair edges and the cell -> edge connectivity."""
        if self._edges is None:
            pairs = EDGE_PAIRS[self.dim]
            raw = np.concatenate([np.sort(self.cells[:, pair], axis=1) for pair in pairs])
            uniq, inverse = np.unique(raw, axis=0, return_inverse=True)
            self._edges = uniq
            self._cell_edges = inverse.reshape(len(pairs), self.num_cells).T.copy()
        return self._edges, self._cell_edges


def _orient_cells(vertices, cells, dim):
    v0 = vertices[cells[:, 0]]
    mats = np.stack([vertices[cells[:, k + 1]] - v0 for k in range(dim)], axis=-1)
    flip = np.linalg.det(mats) < 0
    cells = cells.copy()
    cells[flip, -1], cells[flip, -2] = cells[flip, -2].copy(), cells[flip, -1].copy()
    return cells


def _outward_normals(vertices, facets, facet_cells, cells, dim):
    pts = vertices[facets]
    if dim == 2:
        t = pts[:, 1, :] - pts[:, 0, :]
        n = np.stack([t[:, 1], -t[:, 0]], axis=1)
    else:
        n = np.cross(pts[:, 1, :] - pts[:, 0, :], pts[:, 2, :] - pts[:, 0, :])
    n = n / np.linalg.norm(n, axis=1)[:, None]
    facet_mid = pts.mean(axis=1)
    cell_mid = vertices[cells[facet_cells]].mean(axis=1)
    inward = np.sum(n * (facet_mid - cell_mid), axis=1) < 0
    n[inward] *= -1.0
    return n


def _boundary_faces(cells, dim):
    """Faces appearing in exactly one cell, with their parent cell index."""
    nloc = dim + 1
    local_faces = [tuple(j for j in range(nloc) if j != k) for k in range(nloc)]
    faces = np.concatenate([cells[:, lf] for lf in local_faces])
    owners = np.tile(np.arange(len(cells)), nloc)
    key = np.sort(faces, axis=1)
    uniq, first, counts = np.unique(key, axis=0, return_index=True, return_counts=True)
    sel = first[counts == 1]
    order = np.sort(sel)
    return faces[order], owners[order]


def build_channel_mesh(dim, omega, height, resolution):
    """Structured channel mesh with tagged boundary.

    ``omega`` is ``(a, b)`` in 2D or ``((a1, b1), (a2, b2))`` in 3D;
    ``height`` maps in-plane coordinates to the channel height and must stay
    strictly positive on the sampled grid.  ``resolution`` is the cell count
    per direction.
    """
    if dim not in (2, 3):
        raise ValueError("dimension must be 2 or 3")
    if resolution < 1:
        raise ValueError("resolution must be >= 1")
    n = int(resolution)
    if dim == 2:
        a, b = omega
        xs = np.linspace(a, b, n + 1)
        hs = np.asarray(height(xs), dtype=float) * np.ones_like(xs)
        if np.any(hs <= 0):
            raise ValueError("channel height must be strictly positive on the domain")
        levels = np.linspace(0.0, 1.0, n + 1)
        verts = np.empty(((n + 1) * (n + 1), 2))
        vid = lambda i, j: i * (n + 1) + j
        for i in range(n + 1):
            for j in range(n + 1):
                verts[vid(i, j)] = (xs[i], levels[j] * hs[i])
        cells = []
        for i in range(n):
            for j in range(n):
                v00, v10 = vid(i, j), vid(i + 1, j)
                v11, v01 = vid(i + 1, j + 1), vid(i, j + 1)
                cells.append((v00, v10, v11))
                cells.append((v00, v11, v01))
        cells = _orient_cells(verts, np.asarray(cells, dtype=np.int64), 2)
        grid_idx = np.empty(((n + 1) * (n + 1), 2), dtype=np.int64)
        for i in range(n + 1):
            for j in range(n + 1):
                grid_idx[vid(i, j)] = (i, j)
        level_axis, lateral_axes = 1, (0,)
    else:
        (a1, b1), (a2, b2) = omega
        xs = np.linspace(a1, b1, n + 1)
        ys = np.linspace(a2, b2, n + 1)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        hs = np.asarray(height(X, Y), dtype=float) * np.ones_like(X)
        if np.any(hs <= 0):
            raise ValueError("channel height must be strictly positive on the domain")
        levels = np.linspace(0.0, 1.0, n + 1)
        vid = lambda i, j, k: (i * (n + 1) + j) * (n + 1) + k
        verts = np.empty(((n + 1) ** 3, 3))
        grid_idx = np.empty(((n + 1) ** 3, 3), dtype=np.int64)
        for i in range(n + 1):
            for j in range(n + 1):
                for k in range(n + 1):
                    verts[vid(i, j, k)] = (xs[i], ys[j], levels[k] * hs[i, j])
                    grid_idx[vid(i, j, k)] = (i, j, k)
        cells = []
        for i in range(n):
            for j in range(n):
                for k in range(n):
                    corner = np.array([i, j, k])
                    for perm in _KUHN_PERMUTATIONS:
                        path = [corner.copy()]
                        for axis in perm:
                            nxt = path[-1].copy()
                            nxt[axis] += 1
                            path.append(nxt)
                        cells.append([vid(*pt) for pt in path])
        cells = _orient_cells(verts, np.asarray(cells, dtype=np.int64), 3)
        level_axis, lateral_axes = 2, (0, 1)

    facets, owners = _boundary_faces(cells, dim)
    fidx = grid_idx[facets]
    tags = np.full(len(facets), TAG_LATERAL, dtype=np.int64)
    on_bottom = np.all(fidx[:, :, level_axis] == 0, axis=1)
    on_top = np.all(fidx[:, :, level_axis] == n, axis=1)
    tags[on_bottom] = TAG_BOTTOM
    tags[on_top] = TAG_TOP
    lateral = ~(on_bottom | on_top)
    on_side = np.zeros(len(facets), dtype=bool)
    for ax in lateral_axes:
        on_side |= np.all(fidx[:, :, ax] == 0, axis=1) | np.all(fidx[:, :, ax] == n, axis=1)
    if not np.all(on_side[lateral]):
        raise RuntimeError("boundary facet neither on a wall nor on the lateral frame")
    normals = _outward_normals(verts, facets, owners, cells, dim)
    return Mesh(
        dim=dim,
        vertices=verts,
        cells=cells,
        facets=facets,
        facet_tags=tags,
        facet_normals=normals,
        facet_cells=owners,
    )


def write_vtk(path, mesh, point_data=None, title="tresca-flow mesh"):
    """Legacy ASCII VTK unstructured-grid export.

    Boundary facets are appended as extra cells carrying the integer tag in
    the ``boundary_tag`` cell array (volume cells get -1); point data entries
    may be scalar arrays or (n, dim) vector arrays.
    """
    pts3 = np.zeros((mesh.num_vertices, 3))
    pts3[:, : mesh.dim] = mesh.vertices
    vol_type = 5 if mesh.dim == 2 else 10
    facet_type = 3 if mesh.dim == 2 else 5
    lines = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.num_vertices} double",
    ]
    lines += [" ".join(repr(float(c)) for c in p) for p in pts3]
    ncell = mesh.num_cells + len(mesh.facets)
    size = mesh.num_cells * (mesh.dim + 2) + len(mesh.facets) * (mesh.dim + 1)
    lines.append(f"CELLS {ncell} {size}")
    for cell in mesh.cells:
        lines.append(f"{mesh.dim + 1} " + " ".join(str(int(v)) for v in cell))
    for facet in mesh.facets:
        lines.append(f"{mesh.dim} " + " ".join(str(int(v)) for v in facet))
    lines.append(f"CELL_TYPES {ncell}")
    lines += [str(vol_type)] * mesh.num_cells
    lines += [str(facet_type)] * len(mesh.facets)
    lines.append(f"CELL_DATA {ncell}")
    lines.append("SCALARS boundary_tag int 1")
    lines.append("LOOKUP_TABLE default")
    lines += ["-1"] * mesh.num_cells
    lines += [str(int(t)) for t in mesh.facet_tags]
    if point_data:
        lines.append(f"POINT_DATA {mesh.num_vertices}")
        for name, arr in point_data.items():
            arr = np.asarray(arr, dtype=float)
            if arr.ndim == 2:
                vec3 = np.zeros((mesh.num_vertices, 3))
                vec3[:, : arr.shape[1]] = arr
                lines.append(f"VECTORS {name} double")
                lines += [" ".join(repr(float(c)) for c in row) for row in vec3]
            else:
                lines.append(f"SCALARS {name} double 1")
                lines.append("LOOKUP_TABLE default")
                lines += [repr(float(v)) for v in arr]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
