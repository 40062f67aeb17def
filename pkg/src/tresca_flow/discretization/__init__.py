"""Channel meshes, finite element spaces and variational form assembly."""

from .mesh import TAG_BOTTOM, TAG_LATERAL, TAG_TOP, Mesh, build_channel_mesh
from .elements import p1_basis, p2_basis, simplex_quadrature
from .assemble import Discretization

__all__ = [
    "TAG_BOTTOM",
    "TAG_TOP",
    "TAG_LATERAL",
    "Mesh",
    "build_channel_mesh",
    "simplex_quadrature",
    "p1_basis",
    "p2_basis",
    "Discretization",
]
