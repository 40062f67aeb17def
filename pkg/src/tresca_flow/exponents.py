"""Exponent arithmetic and a-priori bounds for the coupled flow/heat problem.

Two ingredients live here.  First, the admissibility arithmetic: the heat
unknown is sought in W^{1,q} with q in [1, 3/2), which forces a compatibility
window between the flow exponent p and q (the convection term must be
integrable), together with the truncation exponents used by the uniform
temperature estimate.  Second, the quantitative a-priori bounds: the flow
bound is the sign-change threshold of a scalar gap function Lambda, and the
heat bound is an explicit function of the dissipation energy and an embedding
constant.  Functional-inequality constants are *numerical estimates* computed
on the discrete spaces; every downstream bound check is a sanity check, not a
certificate.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

Q_SUP = 1.5  # open upper end of the admissible temperature exponent window


class AdmissibilityError(ValueError):
    """Raised when (p, q) data cannot support the coupled problem."""


def conjugate_threshold(t):
    """t -> 3t / (4t - 3), the p-threshold paired with a temperature exponent.

    Decreasing on [1, +inf): the more regular the temperature, the less
    regular the velocity needs to be.
    """
    t = np.asarray(t, dtype=float)
    return 3.0 * t / (4.0 * t - 3.0)


@dataclass(frozen=True)
class CompatibilityWindow:
    """Admissible temperature exponents q for a given flow exponent p."""

    p: float
    q_min: float
    q_max: float = Q_SUP
    q_min_included: bool = True

    def contains(self, q):
        if q >= self.q_max:
            return False
        if self.q_min_included:
            return q >= self.q_min
        return q > self.q_min


def valid_q_range(p):
    """Admissible q window for flow exponent p; empty (error) for p <= 3/2."""
    if not p > 1.5:
        raise AdmissibilityError(f"flow exponent p = {p} admits no temperature exponent (need p > 3/2)")
    if p > 3.0:
        return CompatibilityWindow(p=p, q_min=1.0, q_min_included=True)
    if p == 3.0:
        return CompatibilityWindow(p=p, q_min=1.0, q_min_included=False)
    return CompatibilityWindow(p=p, q_min=float(conjugate_threshold(p)), q_min_included=True)


def min_p_for_q(q):
    """Minimal flow exponent for temperature exponent q.

    Returns ``(threshold, strict)``: q = 1 requires p > 3 (strict), while
    q in (1, 3/2) requires p >= 3q/(4q-3).
    """
    if not 1.0 <= q < Q_SUP:
        raise AdmissibilityError(f"temperature exponent q = {q} outside [1, 3/2)")
    if q == 1.0:
        return 3.0, True
    return float(conjugate_threshold(q)), False


def pair_is_admissible(p, q):
    threshold, strict = min_p_for_q(q)
    return p > threshold if strict else p >= threshold


@dataclass(frozen=True)
class TruncationExponents:
    """Exponent bundle of the uniform W^{1,q} temperature estimate.

    ``zeta`` is the decay exponent of the truncation test function
    t -> sg(t) (1 - (1+|t|)^(-zeta)); ``q_star = 3q/(3-q)`` is the Sobolev
    embedding target, ``rho = (zeta+1) q / (2-q)`` the compact-embedding
    exponent used by the convergence monitor, and ``alpha = q_star (2-q)/(2q)``
    the interpolation fraction, always in (0, 1).
    """

    q: float
    zeta: float
    q_star: float
    rho: float
    alpha: float


def default_zeta(q):
    """The largest admissible decay exponent, (3 - 2q) / (3 - q)."""
    return (3.0 - 2.0 * q) / (3.0 - q)


def truncation_exponents(q, zeta=None):
    """Fill the exponent bundle for q in [1, 3/2); with the default zeta the
    compact-embedding exponent rho coincides with q_star."""
    if not 1.0 <= q < Q_SUP:
        raise AdmissibilityError(f"temperature exponent q = {q} outside [1, 3/2)")
    zeta_max = default_zeta(q)
    if zeta is None:
        zeta = zeta_max
    elif not 0.0 < zeta <= zeta_max + 1e-15:
        raise AdmissibilityError(f"decay exponent zeta = {zeta} outside (0, {zeta_max}]")
    q_star = 3.0 * q / (3.0 - q)
    rho = (zeta + 1.0) * q / (2.0 - q)
    alpha = q_star * (2.0 - q) / (2.0 * q)
    return TruncationExponents(q=q, zeta=float(zeta), q_star=q_star, rho=rho, alpha=alpha)


@dataclass(frozen=True)
class EstimateConstants:
    """Viscosity/conductivity bounds plus estimated functional constants.

    ``korn``: |D(u)|_p >= korn |u|_{1,p} on the constrained velocity space.
    ``poincare``: |u|_{L^p} <= poincare |u|_{1,p} (vector fields, exponent p).
    ``poincare_l2``: same on the scalar W^{1,2} temperature space.
    ``trace``: L^2 boundary trace norm of the scalar W^{1,2} space.
    ``embedding``: W^{1,q} -> L^{q_star} embedding norm of the scalar space.

    All functional constants are non-certified numerical estimates on the
    discrete spaces (``certified`` stays False).
    """

    mu_lower: float = 1.0
    mu_upper: float = 1.0
    k0: float = 1.0
    korn: float = 1.0
    poincare: float = 1.0
    poincare_l2: float = 1.0
    trace: float = 1.0
    embedding: float = 1.0
    omega_measure: float = 1.0
    gamma0_measure: float = 1.0
    p: float = 2.0
    q: float = 1.0
    certified: bool = False

    def with_material(self, mu_lower, mu_upper, k0):
        return replace(self, mu_lower=mu_lower, mu_upper=mu_upper, k0=k0)


def flow_bound_gap(t, p, consts, norms):
    """Gap function Lambda(t) whose negativity certifies |upsilon|_{1,p} <= t.

    ``norms`` carries the data norms: ``f_dual`` = |f|_{p'}, ``lift`` =
    |G|_{1,p}, ``lift_strain`` = |D(G)|_p and ``friction_at_zero`` = Psi(0).
    Lambda tends to -korn as t -> +inf, so a threshold always exists for
    admissible data.
    """
    t = np.asarray(t, dtype=float)
    f_dual = norms["f_dual"]
    lift = norms["lift"]
    lift_strain = norms["lift_strain"]
    psi0 = norms["friction_at_zero"]
    with np.errstate(divide="ignore", over="ignore"):
        bracket = (
            consts.poincare * f_dual * t ** (1.0 - p)
            + psi0 * t ** (-p)
            + 2.0 * consts.mu_upper * lift * (1.0 + lift / t) ** (p - 1.0) / t
        )
        gap = (bracket / (2.0 * consts.mu_lower)) ** (1.0 / p) + lift_strain / t - consts.korn
    return gap


# Geometric bracketing grid 2^j, j = -20..40 (upper end ~1.1e12).
_GRID_EXPONENTS = range(-20, 41)


def c_flow_bound(consts, p, norms, rel_tol=1e-8):
    """Smallest threshold t* with Lambda(t) < 0 beyond it, by bracketing.

    Scans the geometric grid {2^j} from above for the sign change and
    bisects the bracketing interval to ``rel_tol``.  Zero data yields 0; a
    gap that stays nonnegative up to 2^40 means the data is inadmissible.
    """
    if all(norms[k] == 0.0 for k in ("f_dual", "lift", "lift_strain", "friction_at_zero")):
        return 0.0
    grid = [2.0**j for j in _GRID_EXPONENTS]
    values = [float(flow_bound_gap(t, p, consts, norms)) for t in grid]
    if values[-1] >= 0.0:
        raise AdmissibilityError("no admissible velocity bound below 1e12: data inadmissible")
    # last grid index with a nonnegative gap; everything beyond is negative
    nonneg = [i for i, v in enumerate(values) if v >= 0.0]
    if not nonneg:
        return grid[0]
    lo = grid[nonneg[-1]]
    hi = grid[nonneg[-1] + 1]
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if float(flow_bound_gap(mid, p, consts, norms)) >= 0.0:
            lo = mid
        else:
            hi = mid
    return hi


def c_heat_bound(consts, q, energy_term):
    """Uniform-in-delta W^{1,q} temperature bound from the dissipation energy.

    ``energy_term`` is 2 mu_upper |D(u)|_p^p + |Omega| |r|_inf + |theta_b|_L1.
    The bound is max(1, C1^(2(3-q)/q) 2^((4q-3)(2-q)/q^2)
    (|Omega|^((2-q)/(2q)) + C_q^alpha)^(2(3-q)/q)) with
    C1 = (k0 zeta)^(-1/2) energy^(1/2) and the default zeta.
    """
    if energy_term < 0:
        raise ValueError("energy term must be nonnegative")
    exps = truncation_exponents(q)
    c1 = math.sqrt(energy_term / (consts.k0 * exps.zeta))
    if c1 == 0.0:
        return 1.0
    outer = 2.0 * (3.0 - q) / q
    two_pow = 2.0 ** ((4.0 * q - 3.0) * (2.0 - q) / q**2)
    paren = consts.omega_measure ** ((2.0 - q) / (2.0 * q)) + consts.embedding**exps.alpha
    return max(1.0, c1**outer * two_pow * paren**outer)


def r_delta_bound(consts, delta, r_sup):
    """W^{1,2} bound for the truncated heat solve at truncation level delta."""
    if not delta > 0:
        raise ValueError("truncation parameter delta must be positive")
    return (
        consts.poincare_l2 * (1.0 / delta + r_sup) * math.sqrt(consts.omega_measure)
        + consts.trace * (1.0 / delta) * math.sqrt(consts.gamma0_measure)
    ) / consts.k0


def estimate_constants(mesh, p, q, seed=0, quad_degree=None, refine_check=False):
    """Numerically estimate the functional constants on the discrete spaces.

    p = 2 / q = 2 constants come from generalized eigenvalue problems; other
    exponents from multistart minimization of the Rayleigh-type ratios over
    random discrete fields refined by local descent.  Values are estimates,
    never certificates.  Implemented in :mod:`tresca_flow.estimates` to keep
    the discretization dependency out of the exponent arithmetic.
    """
    from .estimates import estimate_functional_constants

    return estimate_functional_constants(mesh, p, q, seed=seed, quad_degree=quad_degree)
