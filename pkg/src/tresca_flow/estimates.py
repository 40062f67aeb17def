"""Numerical estimation of the functional-inequality constants.

For exponent 2 the constants are smallest/largest generalized eigenvalues of
quadratic-form pairs on the constrained discrete spaces and are computed by a
dense (small meshes) or Lanczos eigensolve.  For other exponents the
Rayleigh-type ratios are optimized by multistart local descent with analytic
gradients.  Either way the results are estimates on the *discrete* spaces:
downstream bound checks that consume them are sanity checks, not
certificates.
"""

import numpy as np
import scipy.linalg
import scipy.optimize
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .discretization.assemble import Discretization
from .exponents import EstimateConstants, truncation_exponents

_DENSE_LIMIT = 3000
_POWER_FLOOR = 1e-30


class EigenEstimateError(RuntimeError):
    pass


def _generalized_extreme(A, B, which):
    """Extreme eigenvalue of A x = lambda B x with SPD B on the same dofs."""
    n = A.shape[0]
    if n == 0:
        raise EigenEstimateError("constrained space is empty")
    try:
        if n <= _DENSE_LIMIT:
            idx = 0 if which == "smallest" else n - 1
            vals = scipy.linalg.eigh(
                A.toarray(), B.toarray(), eigvals_only=True, subset_by_index=[idx, idx]
            )
            return float(vals[0])
        v0 = np.ones(n)
        if which == "smallest":
            vals = spla.eigsh(A, k=1, M=B, sigma=0.0, which="LM", v0=v0)[0]
        else:
            vals = spla.eigsh(A, k=1, M=B, which="LA", v0=v0)[0]
        return float(vals[0])
    except Exception as exc:  # pragma: no cover - solver-dependent failure path
        raise EigenEstimateError(f"generalized eigensolve failed: {exc}") from exc


def _restrict(mat, dofs):
    return mat[dofs][:, dofs].tocsc()


def _ratio_descent(objective, gradient, starts, minimize=True, maxiter=300):
    """Multistart L-BFGS on a scale-invariant log-ratio objective."""
    sign = 1.0 if minimize else -1.0

    def fun(x):
        return sign * objective(x), sign * gradient(x)

    best = None
    for x0 in starts:
        res = scipy.optimize.minimize(
            fun, x0, jac=True, method="L-BFGS-B", options={"maxiter": maxiter, "ftol": 1e-14}
        )
        val = sign * res.fun
        if best is None or (minimize and val < best) or (not minimize and val > best):
            best = val
    return best


def _korn_estimate(ctx, p, free, seed):
    """inf |D(u)|_p / |grad u|_p over the constrained velocity space."""
    strain = _restrict(ctx.velocity_gram("strain"), free)
    grad = _restrict(ctx.velocity_gram("gradient"), free)
    lam = _generalized_extreme(strain, grad, "smallest")
    korn2 = float(np.sqrt(max(lam, 0.0)))
    if p == 2.0:
        return korn2
    eigvec = _eigvec_for(strain, grad, "smallest")

    def expand(x):
        full = np.zeros(ctx.velocity.num_dofs)
        full[free] = x
        return full

    def parts(x):
        full = expand(x)
        D = ctx.strains(full)
        G = ctx.velocity_gradients(full)
        mD = np.sqrt(np.maximum(np.sum(D * D, axis=(-2, -1)), _POWER_FLOOR))
        mG = np.sqrt(np.maximum(np.sum(G * G, axis=(-2, -1)), _POWER_FLOOR))
        num = float(np.sum(ctx.qw * mD**p))
        den = float(np.sum(ctx.qw * mG**p))
        dnum = p * ctx.stress_divergence_vector(mD[..., None, None] ** (p - 2.0) * D)[free]
        dden = p * ctx.stress_divergence_vector(mG[..., None, None] ** (p - 2.0) * G)[free]
        return num, den, dnum, dden

    def objective(x):
        num, den, _, _ = parts(x)
        return np.log(num) - np.log(den)

    def gradient(x):
        num, den, dnum, dden = parts(x)
        return dnum / num - dden / den

    rng = np.random.default_rng(seed)
    starts = [eigvec] + [rng.standard_normal(len(free)) for _ in range(4)]
    best = _ratio_descent(objective, gradient, starts, minimize=True)
    return float(np.exp(best / p))


def _eigvec_for(A, B, which):
    n = A.shape[0]
    if n <= _DENSE_LIMIT:
        idx = 0 if which == "smallest" else n - 1
        vals, vecs = scipy.linalg.eigh(A.toarray(), B.toarray(), subset_by_index=[idx, idx])
        return vecs[:, 0]
    v0 = np.ones(n)
    if which == "smallest":
        _, vecs = spla.eigsh(A, k=1, M=B, sigma=0.0, which="LM", v0=v0)
    else:
        _, vecs = spla.eigsh(A, k=1, M=B, which="LA", v0=v0)
    return vecs[:, 0]


def _poincare_velocity(ctx, p, free, seed):
    """sup |u|_{L^p} / |grad u|_{L^p} over the constrained velocity space."""
    mass = _restrict(ctx.velocity_gram("mass"), free)
    grad = _restrict(ctx.velocity_gram("gradient"), free)
    lam = _generalized_extreme(mass, grad, "largest")
    c2 = float(np.sqrt(max(lam, 0.0)))
    if p == 2.0:
        return c2
    eigvec = _eigvec_for(mass, grad, "largest")

    def expand(x):
        full = np.zeros(ctx.velocity.num_dofs)
        full[free] = x
        return full

    def parts(x):
        full = expand(x)
        v = ctx.velocity_values(full)
        G = ctx.velocity_gradients(full)
        mv = np.sqrt(np.maximum(np.sum(v * v, axis=-1), _POWER_FLOOR))
        mG = np.sqrt(np.maximum(np.sum(G * G, axis=(-2, -1)), _POWER_FLOOR))
        num = float(np.sum(ctx.qw * mv**p))
        den = float(np.sum(ctx.qw * mG**p))
        dnum = p * ctx.vector_load(mv[..., None] ** (p - 2.0) * v)[free]
        dden = p * ctx.stress_divergence_vector(mG[..., None, None] ** (p - 2.0) * G)[free]
        return num, den, dnum, dden

    def objective(x):
        num, den, _, _ = parts(x)
        return np.log(num) - np.log(den)

    def gradient(x):
        num, den, dnum, dden = parts(x)
        return dnum / num - dden / den

    rng = np.random.default_rng(seed + 1)
    starts = [eigvec] + [rng.standard_normal(len(free)) for _ in range(4)]
    best = _ratio_descent(objective, gradient, starts, minimize=False)
    return float(np.exp(best / p))


def _embedding_estimate(ctx, q, free, seed):
    """sup |w|_{L^{q*}} / |grad w|_{L^q} over the temperature space."""
    q_star = truncation_exponents(q).q_star
    mass = _restrict(ctx.scalar_matrix("mass"), free)
    stiff = _restrict(ctx.scalar_matrix("stiffness"), free)
    eigvec = _eigvec_for(mass, stiff, "largest")

    def expand(x):
        full = np.zeros(ctx.pressure.num_dofs)
        full[free] = x
        return full

    def parts(x):
        full = expand(x)
        v = ctx.scalar_values(full)
        g = ctx.scalar_gradients(full)
        mv = np.maximum(np.abs(v), _POWER_FLOOR)
        mg = np.sqrt(np.maximum(np.sum(g * g, axis=-1), _POWER_FLOOR))
        num = float(np.sum(ctx.qw * mv**q_star))
        den = float(np.sum(ctx.qw * mg**q))
        dnum = q_star * ctx.scalar_load(mv ** (q_star - 2.0) * v)[free]
        dden = q * ctx.scalar_gradient_pairing(mg[..., None] ** (q - 2.0) * g)[free]
        return num, den, dnum, dden

    def objective(x):
        num, den, _, _ = parts(x)
        return np.log(num) / q_star - np.log(den) / q

    def gradient(x):
        num, den, dnum, dden = parts(x)
        return dnum / (q_star * num) - dden / (q * den)

    rng = np.random.default_rng(seed + 2)
    starts = [eigvec] + [rng.standard_normal(len(free)) for _ in range(5)]
    best = _ratio_descent(objective, gradient, starts, minimize=False)
    return float(np.exp(best))


def estimate_functional_constants(mesh, p, q, seed=0, quad_degree=None):
    """Estimate Korn / Poincare / trace / embedding constants on a mesh.

    Deterministic for a fixed seed.  Exponent-2 constants are generalized
    eigenvalues (exact on the discrete space up to solver tolerance); p != 2
    and the W^{1,q} embedding come from multistart descent and may slightly
    overestimate infima / underestimate suprema.
    """
    if quad_degree is None:
        quad_degree = max(6, int(np.ceil(max(p, 2))) + 2)
    ctx = mesh if isinstance(mesh, Discretization) else Discretization(mesh, quad_degree)
    vfree = ctx.velocity.free_dofs
    tfree = ctx.temperature.free_dofs

    korn = _korn_estimate(ctx, float(p), vfree, seed)
    poincare = _poincare_velocity(ctx, float(p), vfree, seed)

    mass_t = _restrict(ctx.scalar_matrix("mass"), tfree)
    stiff_t = _restrict(ctx.scalar_matrix("stiffness"), tfree)
    poincare_l2 = float(np.sqrt(max(_generalized_extreme(mass_t, stiff_t, "largest"), 0.0)))
    bmass = _restrict(ctx.boundary_mass_matrix(), tfree)
    trace = float(np.sqrt(max(_generalized_extreme(bmass, stiff_t, "largest"), 0.0)))
    embedding = _embedding_estimate(ctx, float(q), tfree, seed)

    return EstimateConstants(
        korn=korn,
        poincare=poincare,
        poincare_l2=poincare_l2,
        trace=trace,
        embedding=embedding,
        omega_measure=ctx.mesh.omega_measure(),
        gamma0_measure=ctx.mesh.gamma0_measure(),
        p=float(p),
        q=float(q),
        certified=False,
    )


def dense_korn_oracle(mesh, quad_degree=4):
    """Dense generalized-eigenvalue reference for the exponent-2 Korn constant."""
    ctx = mesh if isinstance(mesh, Discretization) else Discretization(mesh, quad_degree)
    free = ctx.velocity.free_dofs
    A = _restrict(ctx.velocity_gram("strain"), free).toarray()
    B = _restrict(ctx.velocity_gram("gradient"), free).toarray()
    vals = scipy.linalg.eigh(A, B, eigvals_only=True, subset_by_index=[0, 0])
    return float(np.sqrt(max(vals[0], 0.0)))
