"""Assembly of the flow operator, friction term and heat system.

``assemble_flow`` evaluates the stress with the exact bounded viscosity but a
regularized strain modulus inside the power-law factor: |D|^2 is replaced by
|D|^2 + eps^2 there, because the exact law has a singular (p < 2) or
degenerate (p > 2) linearization at D = 0.  The Jacobian is the exact
derivative of the regularized residual.  The viscosity's temperature and
velocity slots are frozen at given fields; its shear-modulus slot stays live.
"""

import math

import numpy as np
import scipy.sparse as sp

from .discretization import TAG_BOTTOM


class InvariantViolation(RuntimeError):
    """A verified discrete invariant failed."""


def _frozen_tables(setup, theta, upsilon_frozen):
    theta_q = setup.ctx.scalar_values(theta)
    u_frozen_q = setup.ctx.velocity_values(setup.total_velocity(upsilon_frozen))
    return theta_q, u_frozen_q


def flow_stress_tables(setup, theta_q, u_frozen_q, upsilon, with_derivative=False, p=None):
    """Stress table S (nc, nq, d, d) and its linearization coefficients.

    ``S = 2 mu(theta, u_frozen, |D|) m_eps^(p-2) D`` with
    ``m_eps = sqrt(|D|^2 + eps^2)`` and D the strain of (upsilon + lift).
    The derivative coefficients define dS[E] = iso * sym(E)
    + rank_one * (D : E) D.  ``p`` overrides the problem exponent (used by
    the quadratic initializer of cold Newton starts).
    """
    p = setup.p if p is None else p
    eps = setup.strain_regularization
    model = setup.viscosity
    D = setup.ctx.strains(setup.total_velocity(upsilon))
    mod = np.sqrt(np.sum(D * D, axis=(-2, -1)))
    mod_eps = np.sqrt(mod**2 + eps**2)
    mu = model(theta_q, u_frozen_q, mod)
    iso = 2.0 * mu * mod_eps ** (p - 2.0)
    stress = iso[..., None, None] * D
    if not with_derivative:
        return stress, None, None
    dmu = model.d_derivative(theta_q, u_frozen_q, mod)
    with np.errstate(divide="ignore", invalid="ignore"):
        rank_one = 2.0 * mu * (p - 2.0) * mod_eps ** (p - 4.0) + np.where(
            mod > 0, 2.0 * dmu * mod_eps ** (p - 2.0) / np.maximum(mod, 1e-300), 0.0
        )
    return stress, iso, rank_one


def assemble_flow(setup, theta, upsilon_frozen, upsilon, jacobian=True):
    """Flow residual (stress pairing minus force load) and its Jacobian.

    The residual over velocity dofs is R_i = int S : D(phi_i) - int f . phi_i
    with the frozen-argument stress; pressure and friction terms are added by
    the solver.  Requires quadrature degree >= ceil(p) + 1.
    """
    if setup.ctx.quad_degree < math.ceil(setup.p) + 1:
        raise ValueError(
            f"quadrature degree {setup.ctx.quad_degree} too low for p = {setup.p}"
        )
    theta_q, u_frozen_q = _frozen_tables(setup, theta, upsilon_frozen)
    stress, iso, rank_one = flow_stress_tables(
        setup, theta_q, u_frozen_q, upsilon, with_derivative=jacobian
    )
    residual = setup.ctx.stress_divergence_vector(stress) - setup.force_load
    if not jacobian:
        return residual, None
    D = setup.ctx.strains(setup.total_velocity(upsilon))
    J = setup.ctx.flow_jacobian(iso, rank_one, D)
    return residual, J


def assemble_divergence(setup, upsilon):
    """Constraint residual: integrals of div(upsilon) against the pressure basis."""
    return setup.divergence @ np.asarray(upsilon, dtype=float)


def assemble_friction(setup, multiplier):
    """Boundary force int_wall multiplier . phi_tangential.

    The multiplier realizes the friction subdifferential and must satisfy
    |multiplier| <= k at every wall quadrature point.
    """
    lam = np.asarray(multiplier, dtype=float)
    bottom = setup.ctx.facet_quadratures[TAG_BOTTOM]
    if lam.shape != bottom["qp"].shape:
        raise ValueError(f"multiplier table must have shape {bottom['qp'].shape}")
    mag = np.linalg.norm(lam, axis=-1)
    slack = 1e-12 * max(1.0, float(np.max(setup.friction_values, initial=0.0)))
    if np.any(mag > setup.friction_values + slack):
        worst = np.unravel_index(np.argmax(mag - setup.friction_values), mag.shape)
        raise InvariantViolation(
            f"friction multiplier exceeds the threshold at wall point {worst}: "
            f"|lambda| = {mag[worst]:.6g} > k = {setup.friction_values[worst]:.6g}"
        )
    lam = lam.copy()
    lam[..., -1] = 0.0  # tangent plane on the flat wall
    return setup.ctx.gamma0_vector_load(lam)


def assemble_heat(setup, u_coeffs, delta, theta_prev, extra_source=None, flux_values=None):
    """Heat matrix (skew convection + diffusion) and truncated load.

    The convection block is assembled in skew-symmetric form, so its
    quadratic form vanishes identically and the matrix inherits the diffusion
    coercivity.  The load integrates the truncated dissipation source
    (evaluated at theta_prev and the given transport velocity), the bounded
    source r(theta_prev) and the truncated wall flux.  ``extra_source`` (a
    (nc, nq) table) and ``flux_values`` (a wall table overriding the config
    flux) serve manufactured-solution studies.
    """
    if not delta > 0:
        raise ValueError("truncation parameter delta must be positive")
    ctx = setup.ctx
    u_q = ctx.velocity_values(u_coeffs)
    convection_raw = ctx.scalar_matrix("convection", u_q)
    convection = 0.5 * (convection_raw - convection_raw.T)
    diffusion = ctx.scalar_matrix("stiffness", setup.config.conductivity)
    matrix = (convection + diffusion).tocsr()

    theta_prev_q = ctx.scalar_values(theta_prev)
    D = ctx.strains(u_coeffs)
    mod = np.sqrt(np.sum(D * D, axis=(-2, -1)))
    mu = setup.viscosity(theta_prev_q, u_q, mod)
    dissipation = 2.0 * mu * mod**setup.p
    g_delta = dissipation / (1.0 + delta * dissipation)
    source = g_delta + setup.config.heat_source(theta_prev_q)
    if extra_source is not None:
        source = source + extra_source
    load = ctx.scalar_load(source)
    flux = setup.boundary_flux_values if flux_values is None else flux_values
    flux_delta = flux / (1.0 + delta * np.abs(flux))
    load = load + ctx.gamma0_scalar_load(flux_delta)
    return {
        "matrix": matrix,
        "load": load,
        "convection": convection,
        "diffusion": diffusion,
        "g_delta": g_delta,
        "dissipation": dissipation,
    }
