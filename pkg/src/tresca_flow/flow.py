"""Flow variational-inequality solver.

Outer loop: projected multiplier (Uzawa) iteration on the wall friction
multiplier, constrained pointwise to the ball |lambda| <= k.  Inner loop:
damped Newton on the smooth saddle system (velocity, pressure, pressure-mean
multiplier) with the friction multiplier frozen.  The viscosity's temperature
and velocity slots are frozen at the given fields throughout a solve; only
the shear-modulus slot is live, matching the frozen-argument operator the
fixed-point coupling iterates.
"""

import hashlib
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .discretization import TAG_BOTTOM
from .operators import InvariantViolation, assemble_friction, flow_stress_tables


class FlowSolveError(RuntimeError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass
class FlowState:
    """Converged flow unknowns: velocity, pressure, wall friction multiplier."""

    upsilon: np.ndarray
    pressure: np.ndarray
    multiplier: np.ndarray
    diagnostics: dict = field(default_factory=dict)


def uzawa_project(lam_trial, k_value):
    """Euclidean projection onto the tangent-plane ball of radius k."""
    k = np.asarray(k_value, dtype=float)
    if np.any(k < 0):
        raise ValueError("friction threshold must be nonnegative")
    lam = np.array(lam_trial, dtype=float)
    lam[..., -1] = 0.0
    mag = np.linalg.norm(lam, axis=-1)
    k = np.broadcast_to(k, mag.shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        factor = np.where(mag > k, np.where(mag > 0, k / np.maximum(mag, 1e-300), 0.0), 1.0)
    return lam * factor[..., None]


def compute_traction(sigma, normal):
    """Split boundary stress samples into normal and tangential parts.

    ``sigma`` has shape (..., d, d) and ``normal`` a broadcastable (..., d)
    unit vector.  Returns ``(sigma_n, sigma_tau)`` with sigma_tau . n = 0.
    """
    sigma = np.asarray(sigma, dtype=float)
    normal = np.asarray(normal, dtype=float)
    norms = np.linalg.norm(normal, axis=-1)
    if np.any(np.abs(norms - 1.0) > 1e-8):
        raise ValueError("boundary normal must have unit length")
    traction = np.einsum("...ab,...b->...a", sigma, normal)
    sigma_n = np.einsum("...a,...a->...", traction, normal)
    sigma_tau = traction - sigma_n[..., None] * normal
    return sigma_n, sigma_tau


class _NewtonSolver:
    """Damped Newton for the saddle system at a frozen friction multiplier."""

    def __init__(self, setup, theta, upsilon_frozen):
        self.setup = setup
        ctx = setup.ctx
        self.theta_q = ctx.scalar_values(theta)
        self.u_frozen_q = ctx.velocity_values(setup.total_velocity(upsilon_frozen))
        self.free = ctx.velocity.free_dofs
        self.B_free = setup.divergence[:, self.free].tocsr()
        self.c = setup.pressure_integral
        self.n_u = len(self.free)
        self.n_p = setup.ctx.pressure.num_dofs
        self._lu_key = None
        self._lu = None

    def residual(self, ups_free, pressure, mean_mult, friction_free, p=None):
        setup = self.setup
        ups = np.zeros(setup.ctx.velocity.num_dofs)
        ups[self.free] = ups_free
        stress, _, _ = flow_stress_tables(
            setup, self.theta_q, self.u_frozen_q, ups, with_derivative=False, p=p
        )
        visc = setup.ctx.stress_divergence_vector(stress)[self.free]
        mom = visc - (self.B_free.T @ pressure) - friction_free - setup.force_load[self.free]
        cont = self.B_free @ ups_free + self.c * mean_mult
        mean = np.array([self.c @ pressure])
        return np.concatenate([mom, cont, mean])

    def _system(self, ups_free, p=None):
        setup = self.setup
        ups = np.zeros(setup.ctx.velocity.num_dofs)
        ups[self.free] = ups_free
        _, iso, rank_one = flow_stress_tables(
            setup, self.theta_q, self.u_frozen_q, ups, with_derivative=True, p=p
        )
        D = setup.ctx.strains(setup.total_velocity(ups))
        J = setup.ctx.flow_jacobian(iso, rank_one, D)
        J_ff = J[self.free][:, self.free]
        c_col = sp.csc_matrix(self.c.reshape(-1, 1))
        system = sp.bmat(
            [
                [J_ff, -self.B_free.T, None],
                [self.B_free, None, c_col],
                [None, c_col.T, None],
            ],
            format="csc",
        )
        return system

    def _factor(self, system):
        key = hashlib.sha256(system.data.tobytes()).digest()
        if key != self._lu_key:
            self._lu = spla.splu(system)
            self._lu_key = key
        return self._lu

    def solve(self, friction_vec, init=None, p=None):
        setup = self.setup
        params = setup.solver
        friction_free = friction_vec[self.free]
        scale = max(np.linalg.norm(setup.force_load[self.free] + friction_free), 1e-30)
        if init is None:
            z = np.zeros(self.n_u + self.n_p + 1)
        else:
            z = init.copy()
        res = self.residual(z[: self.n_u], z[self.n_u : -1], z[-1], friction_free, p=p)
        res_norm = np.linalg.norm(res)
        history = [res_norm]
        for _ in range(params.max_newton):
            if res_norm <= params.tol_flow * scale:
                return z, history
            system = self._system(z[: self.n_u], p=p)
            lu = self._factor(system)
            step = lu.solve(-res)
            alpha = 1.0
            for _ in range(params.max_line_search):
                z_trial = z + alpha * step
                res_trial = self.residual(
                    z_trial[: self.n_u], z_trial[self.n_u : -1], z_trial[-1], friction_free, p=p
                )
                trial_norm = np.linalg.norm(res_trial)
                if trial_norm < res_norm:
                    break
                alpha *= 0.5
            else:
                raise FlowSolveError(
                    "Newton line search stagnated",
                    {"residuals": history, "scale": scale},
                )
            z, res, res_norm = z_trial, res_trial, trial_norm
            history.append(res_norm)
        if res_norm <= params.tol_flow * scale:
            return z, history
        raise FlowSolveError(
            f"Newton did not converge in {params.max_newton} iterations",
            {"residuals": history, "scale": scale},
        )


def solve_flow_vi(setup, theta, upsilon_frozen=None, warm_start=None):
    """Solve the frozen-argument flow inequality with wall friction.

    Returns a :class:`FlowState` whose multiplier satisfies the pointwise
    ball constraint exactly (it is a projection output) and whose velocity
    satisfies the discrete divergence constraint to solver tolerance.
    """
    params = setup.solver
    ctx = setup.ctx
    if upsilon_frozen is None:
        upsilon_frozen = warm_start.upsilon if warm_start is not None else setup.zero_velocity()
    theta = np.asarray(theta, dtype=float)
    newton = _NewtonSolver(setup, theta, upsilon_frozen)
    bottom = ctx.facet_quadratures[TAG_BOTTOM]
    k_vals = setup.friction_values
    frictionless = float(np.max(k_vals, initial=0.0)) == 0.0

    if warm_start is not None:
        lam = uzawa_project(warm_start.multiplier, k_vals)
        z = np.concatenate(
            [warm_start.upsilon[newton.free], warm_start.pressure, [0.0]]
        )
        cold = False
    else:
        lam = np.zeros(bottom["qp"].shape)
        z = None
        cold = True

    if cold and setup.p != 2.0:
        # initialize away from the degenerate/singular zero state via the
        # quadratic problem with the same viscosity bounds
        z, _ = newton.solve(assemble_friction(setup, lam), init=None, p=2.0)

    scale_k = max(1.0, float(np.max(k_vals, initial=0.0)), float(np.max(np.abs(setup.wall_velocity_values))))
    rho = params.uzawa_step
    gap_prev = np.inf
    newton_iters = 0
    uzawa_history = []
    for it in range(1 if frictionless else params.max_uzawa):
        z, hist = newton.solve(assemble_friction(setup, lam), init=z)
        newton_iters += len(hist) - 1
        ups = np.zeros(ctx.velocity.num_dofs)
        ups[newton.free] = z[: newton.n_u]
        u_tau = ctx.gamma0_velocity_values(setup.total_velocity(ups))
        u_tau[..., -1] = 0.0
        slip_gap = u_tau - setup.wall_velocity_values
        lam_new = uzawa_project(lam - rho * slip_gap, k_vals)
        gap = float(np.max(np.abs(lam_new - lam))) if lam.size else 0.0
        uzawa_history.append(gap)
        if frictionless or gap <= params.tol_uzawa * scale_k * min(1.0, rho):
            lam = lam_new
            break
        if gap >= gap_prev:
            rho *= 0.5
            if rho < params.uzawa_step * 2.0**-40:
                raise FlowSolveError(
                    "friction multiplier iteration stagnated",
                    {"uzawa_gaps": uzawa_history},
                )
        gap_prev = gap
        lam = lam_new
    else:
        raise FlowSolveError(
            f"friction multiplier iteration did not converge in {params.max_uzawa} steps",
            {"uzawa_gaps": uzawa_history},
        )

    # final consistent solve with the converged multiplier
    z, hist = newton.solve(assemble_friction(setup, lam), init=z)
    newton_iters += len(hist) - 1
    upsilon = np.zeros(ctx.velocity.num_dofs)
    upsilon[newton.free] = z[: newton.n_u]
    pressure = z[newton.n_u : -1]
    div_residual = float(np.max(np.abs(setup.divergence @ upsilon)))
    if div_residual > params.tol_div * max(1.0, setup.velocity_scale):
        raise FlowSolveError(f"divergence residual {div_residual:.3e} above tolerance")
    state = FlowState(
        upsilon=upsilon,
        pressure=pressure,
        multiplier=lam,
        diagnostics={
            "newton_iterations": newton_iters,
            "uzawa_iterations": len(uzawa_history),
            "uzawa_gap": uzawa_history[-1] if uzawa_history else 0.0,
            "uzawa_step_final": rho,
            "newton_residual": hist[-1],
            "divergence_residual": div_residual,
            "velocity_norm": ctx.gradient_norm(upsilon, setup.p),
            "init_hash": setup.state_hash(theta, upsilon_frozen),
        },
    )
    return state


def recover_pressure(setup, state, theta, upsilon_frozen=None):
    """Recover the zero-mean pressure from a converged velocity.

    Solves the least-squares consistency system B B^T pi = B g where g is the
    converged momentum defect, with the zero-mean constraint appended; for a
    velocity solving the discrete inequality this reproduces the saddle-point
    pressure up to solver tolerance.
    """
    ctx = setup.ctx
    if upsilon_frozen is None:
        upsilon_frozen = state.upsilon
    theta_q = ctx.scalar_values(np.asarray(theta, dtype=float))
    u_frozen_q = ctx.velocity_values(setup.total_velocity(upsilon_frozen))
    stress, _, _ = flow_stress_tables(setup, theta_q, u_frozen_q, state.upsilon)
    free = ctx.velocity.free_dofs
    g = (
        ctx.stress_divergence_vector(stress)
        - assemble_friction(setup, state.multiplier)
        - setup.force_load
    )[free]
    B_free = setup.divergence[:, free].tocsr()
    normal = (B_free @ B_free.T).tocsc()
    c_col = sp.csc_matrix(setup.pressure_integral.reshape(-1, 1))
    system = sp.bmat([[normal, c_col], [c_col.T, None]], format="csc")
    rhs = np.concatenate([B_free @ g, [0.0]])
    try:
        sol = spla.splu(system).solve(rhs)
    except RuntimeError as exc:
        raise FlowSolveError(f"pressure consistency system is singular: {exc}") from exc
    pressure = sol[:-1]
    defect = float(np.linalg.norm(B_free.T @ pressure - g))
    scale = max(1.0, float(np.linalg.norm(g)))
    return pressure, {"consistency_defect": defect, "relative_defect": defect / scale}


def gamma0_stress_samples(setup, state, theta):
    """Total stress sigma = F - pi I at the wall quadrature points.

    Evaluated from the adjacent cell of each wall facet (gradients have no
    trace table, so reference coordinates are reconstructed per facet).
    """
    ctx = setup.ctx
    mesh = setup.mesh
    d = mesh.dim
    bottom = ctx.facet_quadratures[TAG_BOTTOM]
    from .discretization.elements import p2_basis, p1_basis

    u_total = setup.total_velocity(state.upsilon).reshape(-1, d)
    theta = np.asarray(theta, dtype=float)
    sigma = np.zeros(bottom["qp"].shape[:2] + (d, d))
    for row, fid in enumerate(bottom["facet_ids"]):
        cell = mesh.facet_cells[fid]
        v0 = mesh.vertices[mesh.cells[cell][0]]
        jac = np.stack(
            [mesh.vertices[mesh.cells[cell][k + 1]] - v0 for k in range(d)], axis=-1
        )
        ref = np.linalg.solve(jac, (bottom["qp"][row] - v0).T).T
        _, grads = p2_basis(d, ref)
        inv = np.linalg.inv(jac)
        phys_grads = np.einsum("iqk,kl->iql", grads, inv)
        nodal = u_total[ctx.velocity.cell_nodes[cell]]
        grad_u = np.einsum("iql,ia->qal", phys_grads, nodal)
        D = 0.5 * (grad_u + np.swapaxes(grad_u, -1, -2))
        p1_vals, _ = p1_basis(d, ref)
        theta_vals = np.einsum("iq,i->q", p1_vals, theta[mesh.cells[cell]])
        press_vals = np.einsum("iq,i->q", p1_vals, state.pressure[mesh.cells[cell]])
        u_vals = np.einsum("iq,ia->qa", p2_basis(d, ref)[0], nodal)
        mod = np.sqrt(np.sum(D * D, axis=(-2, -1)))
        mu = setup.viscosity(theta_vals, u_vals, mod)
        with np.errstate(divide="ignore", invalid="ignore"):
            coef = np.where(mod > 0, 2.0 * mu * np.maximum(mod, 1e-300) ** (setup.p - 2.0), 0.0)
        sigma[row] = coef[:, None, None] * D
        sigma[row] -= press_vals[:, None, None] * np.eye(d)
    return sigma


def complementarity_report(setup, state, tol_uzawa=None):
    """Pointwise friction-law check of a converged state.

    stick points (|lambda| <= k - 10 tol): wall velocity matches the moving
    wall; slip points (|u_tau - s| > tol_stick): the multiplier sits on the
    ball boundary, antiparallel to the relative slip.
    """
    ctx = setup.ctx
    params = setup.solver
    tol_uzawa = params.tol_uzawa if tol_uzawa is None else tol_uzawa
    k = setup.friction_values
    lam = state.multiplier
    u_tau = ctx.gamma0_velocity_values(setup.total_velocity(state.upsilon))
    u_tau = u_tau.copy()
    u_tau[..., -1] = 0.0
    gap = u_tau - setup.wall_velocity_values
    gap_mag = np.linalg.norm(gap, axis=-1)
    lam_mag = np.linalg.norm(lam, axis=-1)

    bound_ok = bool(np.all(lam_mag <= k + 1e-8))
    stick = lam_mag <= k - 10.0 * tol_uzawa
    slip = gap_mag > setup.tol_stick
    stick_ok = bool(np.all(gap_mag[stick] <= setup.tol_stick)) if stick.any() else True
    if slip.any():
        lam_s = lam[slip]
        gap_s = gap[slip]
        cosang = -np.sum(lam_s * gap_s, axis=-1) / np.maximum(
            np.linalg.norm(lam_s, axis=-1) * np.linalg.norm(gap_s, axis=-1), 1e-300
        )
        angles = np.arccos(np.clip(cosang, -1.0, 1.0))
        angle_ok = bool(np.all(angles <= 1e-4))
        cap_ok = bool(np.all(np.abs(lam_mag[slip] - k[slip]) <= 1e-6 * np.maximum(k[slip], 1e-300)))
        max_angle = float(np.max(angles))
    else:
        angle_ok = cap_ok = True
        max_angle = 0.0
    return {
        "ok": bound_ok and stick_ok and angle_ok and cap_ok,
        "bound_ok": bound_ok,
        "stick_ok": stick_ok,
        "slip_angle_ok": angle_ok,
        "slip_cap_ok": cap_ok,
        "num_stick": int(np.sum(stick)),
        "num_slip": int(np.sum(slip)),
        "max_multiplier_excess": float(np.max(lam_mag - k, initial=-np.inf)),
        "max_stick_gap": float(np.max(gap_mag[stick], initial=0.0)),
        "max_slip_angle": max_angle,
    }
