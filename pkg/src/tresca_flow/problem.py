"""Discrete problem setup: config-bound quadrature data shared by the solvers.

A :class:`ProblemSetup` owns the mesh, the quadrature/assembly context, the
interpolated lift field, the data tables at quadrature points and the
constant matrices.  Solvers share one setup, so the context tables and the
estimated constants are built once.
"""

import hashlib
import math

import numpy as np

from .config import ProblemConfig, parse_config
from .discretization import TAG_BOTTOM
from .discretization.assemble import Discretization
from .exponents import EstimateConstants
from .estimates import estimate_functional_constants


class ProblemSetup:
    def __init__(self, config):
        if not isinstance(config, ProblemConfig):
            config = parse_config(config)
        self.config = config
        self.mesh = config.mesh
        p = config.p
        degree = config.solver.quad_degree or max(6, int(math.ceil(p)) + 2)
        if degree < math.ceil(p) + 1:
            raise ValueError(f"quadrature degree {degree} too low for p = {p}")
        self.ctx = Discretization(self.mesh, quad_degree=degree)
        d = self.mesh.dim

        vs = self.ctx.velocity
        if config.lift is None:
            self.lift_coeffs = np.zeros(vs.num_dofs)
        else:
            self.lift_coeffs = vs.interpolate(
                lambda X: np.stack([e(X) for e in config.lift], axis=-1)
            )

        self.force_values = np.stack([f(self.ctx.qp) for f in config.body_force], axis=-1)
        self.force_load = self.ctx.vector_load(self.force_values)

        bottom = self.ctx.facet_quadratures[TAG_BOTTOM]
        xprime = bottom["qp"][..., : d - 1]
        self.friction_values = config.friction_threshold(xprime)
        self.wall_velocity_values = np.zeros(bottom["qp"].shape)
        for a, s in enumerate(config.wall_velocity):
            self.wall_velocity_values[..., a] = s(xprime)
        self.boundary_flux_values = config.boundary_flux(xprime)

        self.divergence = self.ctx.divergence_matrix
        self.pressure_integral = self.ctx.pressure_integral

        self.velocity_scale = max(
            1.0,
            float(np.max(np.abs(self.wall_velocity_values))),
            float(np.max(np.abs(self.lift_coeffs))) if self.lift_coeffs.size else 0.0,
        )
        self.strain_regularization = config.solver.strain_regularization * self.velocity_scale

        self._constants = None
        self._constants_seed = None

    # -------------------------------------------------------------- shortcuts

    @property
    def p(self):
        return self.config.p

    @property
    def q(self):
        return self.config.q

    @property
    def viscosity(self):
        return self.config.viscosity

    @property
    def solver(self):
        return self.config.solver

    @property
    def tol_stick(self):
        smax = float(np.max(np.abs(self.wall_velocity_values))) if self.wall_velocity_values.size else 0.0
        return 1e-6 * max(1.0, smax)

    def total_velocity(self, upsilon):
        return np.asarray(upsilon, dtype=float) + self.lift_coeffs

    def friction_functional_at_zero(self):
        """Psi(0) = int_wall k |lift_tangential - wall velocity|."""
        bottom = self.ctx.facet_quadratures[TAG_BOTTOM]
        g_tau = self.ctx.gamma0_velocity_values(self.lift_coeffs)
        g_tau = g_tau.copy()
        g_tau[..., -1] = 0.0
        gap = np.linalg.norm(g_tau - self.wall_velocity_values, axis=-1)
        return float(np.sum(bottom["qw"] * self.friction_values * gap))

    def data_norms(self):
        """Norms entering the a-priori flow bound."""
        pp = self.p / (self.p - 1.0)
        fmod = np.linalg.norm(self.force_values, axis=-1)
        f_dual = float(np.sum(self.ctx.qw * fmod**pp) ** (1.0 / pp))
        lift = self.ctx.gradient_norm(self.lift_coeffs, self.p)
        lift_strain = self.ctx.strain_norm(self.lift_coeffs, self.p)
        return {
            "f_dual": f_dual,
            "lift": lift,
            "lift_strain": lift_strain,
            "friction_at_zero": self.friction_functional_at_zero(),
        }

    def constants(self, seed=None):
        """Estimated functional constants with the material bounds filled in."""
        seed = self.config.seed if seed is None else seed
        if self._constants is None or self._constants_seed != seed:
            base = estimate_functional_constants(self.ctx, self.p, self.q, seed=seed)
            self._constants = base.with_material(
                mu_lower=self.viscosity.mu_lower,
                mu_upper=self.viscosity.mu_upper,
                k0=self.config.k0,
            )
            self._constants_seed = seed
        return self._constants

    def zero_velocity(self):
        return np.zeros(self.ctx.velocity.num_dofs)

    def zero_temperature(self):
        return np.zeros(self.ctx.temperature.num_dofs)

    def state_hash(self, *arrays):
        h = hashlib.sha256()
        for arr in arrays:
            h.update(np.ascontiguousarray(arr, dtype=float).tobytes())
        return h.hexdigest()
