"""Pointwise constitutive law of the flow and its truncated couplings.

The deviatoric stress is ``2 mu(theta, u, |D|) |D|^(p-2) D`` where ``D`` is a
symmetric strain-rate tensor and ``mu`` is a bounded viscosity with a monotone
dependence on the shear modulus ``|D|``.  This module evaluates the exact law
(no solver regularization), the truncated dissipation source and boundary
flux, and provides sampling oracles for the monotonicity inequalities the
solver's uniqueness and convergence arguments rest on.

All functions are pure and accept either a single tensor of shape ``(d, d)``
or a batch ``(..., d, d)``.
"""

from dataclasses import dataclass

import numpy as np

VISCOSITY_KINDS = ("constant", "bounded-shear-thickening", "temperature-coupled")

#: Magnitude scales probed by the random-sampling oracles, covering the
#: nearly-degenerate, unit and large-strain regimes.
SAMPLING_SCALES = (1e-6, 1.0, 1e3)

REL_SLACK = 1e-12
ABS_SLACK = 1e-14


def frobenius(tensor):
    """Frobenius norm over the trailing two axes."""
    tensor = np.asarray(tensor, dtype=float)
    return np.sqrt(np.sum(tensor * tensor, axis=(-2, -1)))


def as_sym_tensor(entries, tol=1e-12):
    """Validate and return a symmetric d x d tensor (d in {2, 3})."""
    t = np.asarray(entries, dtype=float)
    if t.ndim < 2 or t.shape[-1] != t.shape[-2] or t.shape[-1] not in (2, 3):
        raise ValueError(f"expected (..., d, d) with d in {{2, 3}}, got {t.shape}")
    skew = np.max(np.abs(t - np.swapaxes(t, -1, -2)))
    scale = max(1.0, float(np.max(np.abs(t))) if t.size else 0.0)
    if skew > tol * scale:
        raise ValueError(f"tensor is not symmetric (asymmetry {skew:.3e})")
    return 0.5 * (t + np.swapaxes(t, -1, -2))


@dataclass(frozen=True)
class ViscosityModel:
    """Bounded viscosity mu(theta, u, d), nondecreasing in the shear modulus d.

    Shipped families:

    - ``constant``: mu = mu_min everywhere.
    - ``bounded-shear-thickening``: mu_min + (mu_max - mu_min) d^a / (1 + d^a)
      with shape exponent ``a >= 1``.
    - ``temperature-coupled``: the shear-thickening profile multiplied by the
      positive bounded factor 1 + theta_amplitude * tanh(theta / theta_scale).

    ``mu_lower`` / ``mu_upper`` are the effective global bounds of the family
    (they absorb the temperature factor for the coupled variant).
    """

    kind: str
    mu_min: float = 1.0
    mu_max: float = 1.0
    shear_exponent: float = 1.0
    theta_amplitude: float = 0.0
    theta_scale: float = 1.0

    def __post_init__(self):
        if self.kind not in VISCOSITY_KINDS:
            raise ValueError(f"unknown viscosity kind {self.kind!r}")
        if not self.mu_min > 0:
            raise ValueError("viscosity lower bound must be positive")
        if self.mu_max < self.mu_min:
            raise ValueError("viscosity bounds must satisfy mu_min <= mu_max")
        if self.kind != "constant" and self.shear_exponent < 1:
            raise ValueError("shear exponent must be >= 1 for monotonicity")
        if self.kind == "temperature-coupled":
            if not 0 <= self.theta_amplitude < 1:
                raise ValueError("temperature amplitude must lie in [0, 1)")
            if not self.theta_scale > 0:
                raise ValueError("temperature scale must be positive")

    @property
    def mu_lower(self):
        if self.kind == "temperature-coupled":
            return self.mu_min * (1.0 - self.theta_amplitude)
        return self.mu_min

    @property
    def mu_upper(self):
        if self.kind == "temperature-coupled":
            return self.mu_max * (1.0 + self.theta_amplitude)
        return self.mu_max

    def _shear_profile(self, d):
        if self.kind == "constant":
            return np.full_like(np.asarray(d, dtype=float), self.mu_min)
        da = np.power(np.asarray(d, dtype=float), self.shear_exponent)
        return self.mu_min + (self.mu_max - self.mu_min) * da / (1.0 + da)

    def _shear_profile_derivative(self, d):
        if self.kind == "constant":
            return np.zeros_like(np.asarray(d, dtype=float))
        d = np.asarray(d, dtype=float)
        a = self.shear_exponent
        da = np.power(d, a)
        # a * d^(a-1) / (1 + d^a)^2; at d = 0 the limit is a for a = 1, 0 for a > 1
        with np.errstate(divide="ignore", invalid="ignore"):
            dda = np.where(d > 0, a * da / np.maximum(d, 1e-300), a if a == 1 else 0.0)
        return (self.mu_max - self.mu_min) * dda / (1.0 + da) ** 2

    def _theta_factor(self, theta):
        if self.kind != "temperature-coupled":
            return np.ones_like(np.asarray(theta, dtype=float))
        return 1.0 + self.theta_amplitude * np.tanh(np.asarray(theta, dtype=float) / self.theta_scale)

    def __call__(self, theta, u, d):
        """mu(theta, u, d); the velocity slot is part of the interface but no
        shipped family reads it."""
        theta = np.asarray(theta, dtype=float)
        return self._shear_profile(d) * self._theta_factor(theta)

    def d_derivative(self, theta, u, d):
        """Partial derivative of mu with respect to the shear modulus slot."""
        return self._shear_profile_derivative(d) * self._theta_factor(theta)


def eval_viscosity(model, theta, u, d):
    """Evaluate mu(theta, u, d); rejects negative shear modulus."""
    d = np.asarray(d, dtype=float)
    if np.any(d < 0):
        raise ValueError("shear modulus must be nonnegative")
    return model(theta, u, d)


def eval_F(model, p, theta, u, D):
    """Deviatoric stress 2 mu(theta, u, |D|) |D|^(p-2) D; zero at D = 0.

    The result satisfies |eval_F| <= 2 mu_upper |D|^(p-1).
    """
    if not p > 1:
        raise ValueError("power-law exponent must satisfy p > 1")
    D = np.asarray(D, dtype=float)
    mod = frobenius(D)
    mu = model(theta, u, mod)
    with np.errstate(divide="ignore", invalid="ignore"):
        coef = np.where(mod > 0, 2.0 * mu * np.power(np.maximum(mod, 1e-300), p - 2.0), 0.0)
    return coef[..., None, None] * D


def monotonicity_gap(model, p, theta, u, D, Dp):
    """(F(D) - F(D')) : (D - D'), nonnegative for admissible models."""
    diff = eval_F(model, p, theta, u, D) - eval_F(model, p, theta, u, Dp)
    step = np.asarray(D, dtype=float) - np.asarray(Dp, dtype=float)
    return np.sum(diff * step, axis=(-2, -1))


def _plap_bracket(p, D, Dp):
    """(|D|^(p-2) D - |D'|^(p-2) D') : (D - D') with the zero branch."""
    D = np.asarray(D, dtype=float)
    Dp = np.asarray(Dp, dtype=float)
    nD = frobenius(D)
    nDp = frobenius(Dp)
    with np.errstate(divide="ignore", invalid="ignore"):
        cD = np.where(nD > 0, np.power(np.maximum(nD, 1e-300), p - 2.0), 0.0)
        cDp = np.where(nDp > 0, np.power(np.maximum(nDp, 1e-300), p - 2.0), 0.0)
    diff = cD[..., None, None] * D - cDp[..., None, None] * Dp
    return np.sum(diff * (D - Dp), axis=(-2, -1)), nD, nDp


def strong_monotonicity_check(p, D, Dp, rel_tol=REL_SLACK, abs_tol=ABS_SLACK):
    """Lower-bound inequality for the pure power-law part of the stress.

    For p >= 2:
        lhs = (|D|^(p-2) D - |D'|^(p-2) D') : (D - D'),  rhs = 2^(1-p) |D - D'|^p.
    For 1 < p < 2:
        lhs = (|D| + |D'|)^(2-p) * (same bracket),        rhs = (p-1) |D - D'|^2.

    Returns a dict with ``lhs``, ``rhs`` and ``holds`` (lhs >= rhs up to a
    relative slack with an absolute floor).  Raises for p <= 1.
    """
    if not p > 1:
        raise ValueError("power-law exponent must satisfy p > 1")
    bracket, nD, nDp = _plap_bracket(p, D, Dp)
    step = frobenius(np.asarray(D, dtype=float) - np.asarray(Dp, dtype=float))
    if p >= 2:
        lhs = bracket
        rhs = 2.0 ** (1.0 - p) * step**p
    else:
        lhs = (nD + nDp) ** (2.0 - p) * bracket
        rhs = (p - 1.0) * step**2
    slack = np.maximum(abs_tol, rel_tol * np.maximum(np.abs(lhs), np.abs(rhs)))
    return {"lhs": lhs, "rhs": rhs, "holds": lhs >= rhs - slack}


def eval_g_delta(model, p, theta, u, D_total, delta):
    """Truncated dissipation source 2 mu |D|^p / (1 + 2 delta mu |D|^p).

    ``D_total`` is the strain rate of the full velocity (flow unknown plus
    boundary lift) at the evaluation point.  The value lies in [0, 1/delta)
    and below the untruncated dissipation 2 mu_upper |D|^p.
    """
    if not delta > 0:
        raise ValueError("truncation parameter delta must be positive")
    D_total = np.asarray(D_total, dtype=float)
    mod = frobenius(D_total)
    dissipation = 2.0 * model(theta, u, mod) * mod**p
    return dissipation / (1.0 + delta * dissipation)


def eval_theta_b_delta(theta_b_value, delta):
    """Truncated boundary flux value / (1 + delta |value|); identity at delta = 0."""
    if delta < 0:
        raise ValueError("truncation parameter delta must be nonnegative")
    v = np.asarray(theta_b_value, dtype=float)
    return v / (1.0 + delta * np.abs(v))


def sample_strain_pairs(rng, count, dim=3, scales=SAMPLING_SCALES):
    """Random symmetric tensor pairs for the inequality oracles.

    Entries are i.i.d. uniform on [-1, 1], symmetrized, then each tensor is
    independently rescaled by a magnitude drawn from ``scales``.
    """
    def one_batch():
        raw = rng.uniform(-1.0, 1.0, size=(count, dim, dim))
        sym = 0.5 * (raw + np.swapaxes(raw, -1, -2))
        mags = rng.choice(np.asarray(scales, dtype=float), size=count)
        return sym * mags[:, None, None]

    return one_batch(), one_batch()


def monotonicity_sample_report(model, p, count, seed=0, dim=3):
    """Sample the monotonicity gap; reports the worst gap relative to scale.

    The gap is normalized by |F(D) - F(D')| |D - D'| (with the absolute floor)
    so the check is meaningful across magnitude regimes.
    """
    rng = np.random.default_rng(seed)
    D, Dp = sample_strain_pairs(rng, count, dim=dim)
    theta = rng.uniform(-2.0, 2.0, size=count)
    u = rng.uniform(-1.0, 1.0, size=(count, dim))
    FD = eval_F(model, p, theta, u, D)
    FDp = eval_F(model, p, theta, u, Dp)
    step = D - Dp
    gap = np.sum((FD - FDp) * step, axis=(-2, -1))
    scale = frobenius(FD - FDp) * frobenius(step)
    rel = gap / np.maximum(scale, ABS_SLACK)
    return {"count": count, "min_gap": float(np.min(gap)), "min_relative_gap": float(np.min(rel))}


def strong_monotonicity_sample_report(p, count, seed=0, dim=3, rel_tol=1e-10):
    """Sample the strong-monotonicity inequality; reports the failure count."""
    rng = np.random.default_rng(seed)
    D, Dp = sample_strain_pairs(rng, count, dim=dim)
    out = strong_monotonicity_check(p, D, Dp, rel_tol=rel_tol)
    margin = out["lhs"] - out["rhs"]
    denom = np.maximum(np.abs(out["rhs"]), ABS_SLACK)
    return {
        "count": count,
        "failures": int(np.sum(~out["holds"])),
        "min_relative_margin": float(np.min(margin / denom)),
    }


def shipped_models():
    """The three viscosity families exercised by the verification suite."""
    return (
        ViscosityModel("constant", mu_min=1.0, mu_max=1.0),
        ViscosityModel("bounded-shear-thickening", mu_min=1.0, mu_max=2.0, shear_exponent=1.0),
        ViscosityModel(
            "temperature-coupled",
            mu_min=1.0,
            mu_max=2.0,
            shear_exponent=2.0,
            theta_amplitude=0.3,
            theta_scale=1.0,
        ),
    )
