"""Reference simplex bases (P1, P2) and conical-product quadrature.

The quadrature is a Stroud conical product rule on the unit simplex
{x >= 0, sum(x) <= 1}: Gauss-Jacobi nodes absorb the collapsed-coordinate
Jacobian, so the rule with n points per axis integrates polynomials of total
degree <= 2n - 1 exactly, in any dimension, with positive weights.
"""

import numpy as np
from scipy.special import roots_jacobi

# local edge numbering shared by P2 spaces and mesh edge extraction
EDGE_PAIRS = {
    1: ((0, 1),),
    2: ((0, 1), (0, 2), (1, 2)),
    3: ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)),
}


def _gauss_jacobi_01(n, alpha):
    """Nodes/weights on [0, 1] for the weight (1 - x)^alpha."""
    x, w = roots_jacobi(n, alpha, 0.0)
    return 0.5 * (x + 1.0), w / 2.0 ** (alpha + 1.0)


def simplex_quadrature(dim, degree):
    """Quadrature exact for total degree <= ``degree`` on the unit simplex."""
    if dim < 1:
        raise ValueError("dimension must be >= 1")
    if degree < 0:
        raise ValueError("degree must be nonnegative")
    n = degree // 2 + 1
    axes = [_gauss_jacobi_01(n, float(dim - 1 - k)) for k in range(dim)]
    pts_1d = np.stack(np.meshgrid(*[a[0] for a in axes], indexing="ij"), axis=-1).reshape(-1, dim)
    wts_1d = np.stack(np.meshgrid(*[a[1] for a in axes], indexing="ij"), axis=-1).reshape(-1, dim)
    weights = np.prod(wts_1d, axis=1)
    # collapse [0,1]^dim onto the simplex: x_k = t_k * prod_{j<k} (1 - t_j)
    points = np.empty_like(pts_1d)
    shrink = np.ones(len(pts_1d))
    for k in range(dim):
        points[:, k] = pts_1d[:, k] * shrink
        shrink = shrink * (1.0 - pts_1d[:, k])
    return points, weights


def p1_basis(dim, points):
    """P1 barycentric basis values and gradients at reference points.

    Returns ``(vals, grads)`` with shapes ``(dim+1, nq)`` and
    ``(dim+1, nq, dim)``; gradients are constant but replicated per point so
    downstream tables stay uniform.
    """
    points = np.asarray(points, dtype=float)
    nq = len(points)
    vals = np.empty((dim + 1, nq))
    vals[0] = 1.0 - points.sum(axis=1)
    for i in range(dim):
        vals[i + 1] = points[:, i]
    grads = np.zeros((dim + 1, nq, dim))
    grads[0] = -1.0
    for i in range(dim):
        grads[i + 1, :, i] = 1.0
    return vals, grads


def p2_basis(dim, points):
    """P2 basis (vertices then lexicographic edge midpoints) at reference points."""
    lam, dlam = p1_basis(dim, points)
    nv = dim + 1
    edges = EDGE_PAIRS[dim]
    nloc = nv + len(edges)
    nq = lam.shape[1]
    vals = np.empty((nloc, nq))
    grads = np.empty((nloc, nq, dim))
    for i in range(nv):
        vals[i] = lam[i] * (2.0 * lam[i] - 1.0)
        grads[i] = (4.0 * lam[i] - 1.0)[:, None] * dlam[i]
    for e, (i, j) in enumerate(edges):
        vals[nv + e] = 4.0 * lam[i] * lam[j]
        grads[nv + e] = 4.0 * (lam[i][:, None] * dlam[j] + lam[j][:, None] * dlam[i])
    return vals, grads


def p2_node_count(dim):
    return dim + 1 + len(EDGE_PAIRS[dim])
