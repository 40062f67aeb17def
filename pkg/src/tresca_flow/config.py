"""Problem configuration: JSON parsing and data-assumption validation.

Every rejected configuration cites exactly one assumption label from the
fixed set {(eqG), (eqfk), (sdf), (rop), (m5), (mlo), (TEM2), (TEM2bis), (Cr),
(thetab), (compa1), (compa2)} so a failure can be traced to the hypothesis it
violates.  Spatial data are analytic expressions (see
:mod:`tresca_flow.expressions`); the lift field G, when present, is checked
for its required structure (exactly divergence-free, vanishing on the top
boundary, tangential on the bottom wall) with symbolic derivatives evaluated
at quadrature points.
"""

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .discretization import TAG_BOTTOM, TAG_LATERAL, TAG_TOP, build_channel_mesh
from .discretization.assemble import Discretization
from .constitutive import ViscosityModel
from .exponents import AdmissibilityError, Q_SUP, min_p_for_q
from .expressions import Expression, ExpressionError, parse_expression

ASSUMPTION_LABELS = (
    "(eqG)", "(eqfk)", "(sdf)", "(rop)", "(m5)", "(mlo)",
    "(TEM2)", "(TEM2bis)", "(Cr)", "(thetab)", "(compa1)", "(compa2)",
)

_DATA_TOL = 1e-8


class ConfigError(ValueError):
    """Malformed configuration (missing keys, bad JSON, bad expressions)."""


class ValidationError(ConfigError):
    """Configuration violating declared data assumptions."""

    def __init__(self, violations):
        self.violations = list(violations)
        lines = [f"{label} violated: {msg}" for label, msg in self.violations]
        super().__init__("; ".join(lines))


@dataclass
class SolverParams:
    tol_flow: float = 1e-9
    tol_uzawa: float = 1e-8
    tol_div: float = 1e-9
    uzawa_step: float = 1.0
    max_newton: int = 60
    max_uzawa: int = 4000
    max_line_search: int = 30
    strain_regularization: float = 1e-8
    quad_degree: int = 0  # 0: pick from p
    heat_linear_tol: float = 1e-12
    fp_tolerance: float = 1e-8
    max_fixed_point: int = 80
    relaxation: float = 1.0


@dataclass
class HeatSource:
    """Bounded temperature-dependent volumetric source r(theta)."""

    kind: str
    value: float = 0.0
    cap: float = 0.0
    scale: float = 1.0
    offset: float = 0.0

    def __call__(self, theta):
        theta = np.asarray(theta, dtype=float)
        if self.kind == "constant":
            return np.full_like(theta, self.value)
        return self.offset + self.cap * np.tanh(theta / self.scale)

    @property
    def sup_norm(self):
        if self.kind == "constant":
            return abs(self.value)
        return abs(self.offset) + abs(self.cap)


@dataclass
class ProblemConfig:
    raw: dict
    dimension: int
    omega: object
    height: Expression
    resolution: int
    p: float
    q: float
    viscosity: ViscosityModel
    body_force: list
    lift: list  # None entries mean zero lift
    wall_velocity: list
    friction_threshold: Expression
    conductivity: np.ndarray
    k0: float
    heat_source: HeatSource
    boundary_flux: Expression
    solver: SolverParams
    schedule: list
    seed: int
    mesh: object = field(default=None, repr=False)

    @property
    def config_hash(self):
        return config_hash(self.raw)


def config_hash(raw):
    blob = json.dumps(raw, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def _require(raw, key, kind=None):
    if key not in raw:
        raise ConfigError(f"missing config key {key!r}")
    val = raw[key]
    if kind is not None and not isinstance(val, kind):
        raise ConfigError(f"config key {key!r} has type {type(val).__name__}")
    return val


def _finite(x):
    return np.all(np.isfinite(np.asarray(x, dtype=float)))


def parse_config(path_or_dict):
    """Load, parse and validate a configuration.

    Accepts a file path or an already-loaded dict.  Builds the mesh (needed by
    the quadrature-level data checks) and attaches it to the returned config.
    Raises :class:`ValidationError` naming the violated assumption labels, or
    :class:`ConfigError` for structural problems.
    """
    if isinstance(path_or_dict, dict):
        raw = path_or_dict
    else:
        with open(path_or_dict) as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"invalid JSON in {path_or_dict}: {exc}") from exc

    violations = []
    dim = _require(raw, "dimension", int)
    if dim not in (2, 3):
        raise ConfigError("dimension must be 2 or 3")
    dview = _require(raw, "domain", dict)
    omega = _require(dview, "omega")
    resolution = int(_require(dview, "resolution"))

    try:
        height = parse_expression(_require(dview, "height", str), dim - 1)
    except ExpressionError as exc:
        raise ConfigError(f"bad height expression: {exc}") from exc

    p = float(_require(raw, "p"))
    q = float(_require(raw, "q"))
    if not 1.0 <= q < Q_SUP:
        violations.append(("(compa1)", f"temperature exponent q = {q} outside [1, 3/2)"))
    else:
        try:
            threshold, strict = min_p_for_q(q)
            ok = p > threshold if strict else p >= threshold
            if not ok:
                rel = ">" if strict else ">="
                violations.append(("(compa2)", f"q = {q} demands p {rel} {threshold:g}, got p = {p}"))
        except AdmissibilityError as exc:
            violations.append(("(compa2)", str(exc)))

    vis_raw = _require(raw, "viscosity", dict)
    viscosity = None
    try:
        kind = _require(vis_raw, "kind", str)
        if kind not in ("constant", "bounded-shear-thickening", "temperature-coupled"):
            violations.append(("(rop)", f"unknown viscosity family {kind!r}"))
        params = {k: float(v) for k, v in vis_raw.items() if k != "kind"}
        if not _finite(list(params.values())):
            violations.append(("(rop)", "viscosity parameters must be finite"))
        else:
            mu_min = params.get("mu_min", 1.0)
            mu_max = params.get("mu_max", mu_min)
            if not mu_min > 0 or mu_max < mu_min:
                violations.append(("(mlo)", f"need 0 < mu_min <= mu_max, got ({mu_min}, {mu_max})"))
            elif params.get("shear_exponent", 1.0) < 1:
                violations.append(("(m5)", "shear exponent below 1 breaks monotonicity in the shear slot"))
            elif not 0 <= params.get("theta_amplitude", 0.0) < 1:
                violations.append(("(mlo)", "temperature amplitude outside [0, 1) breaks the positive bounds"))
            elif kind in ("constant", "bounded-shear-thickening", "temperature-coupled"):
                viscosity = ViscosityModel(kind=kind, **params)
    except (TypeError, ValueError) as exc:
        if not any(lbl in ("(mlo)", "(m5)", "(rop)") for lbl, _ in violations):
            violations.append(("(rop)", f"viscosity family rejected: {exc}"))

    K = np.asarray(_require(raw, "conductivity"), dtype=float)
    k0 = float(_require(raw, "k0"))
    if K.shape != (dim, dim) or not _finite(K):
        violations.append(("(TEM2)", f"conductivity must be a finite {dim}x{dim} matrix"))
    elif not np.allclose(K, K.T, rtol=0, atol=1e-14 * max(1.0, float(np.abs(K).max()))):
        violations.append(("(TEM2)", "conductivity matrix must be symmetric"))
    else:
        rng = np.random.default_rng(0)
        xi = rng.standard_normal((256, dim))
        xi /= np.linalg.norm(xi, axis=1)[:, None]
        quad_min = float(np.min(np.einsum("ni,ij,nj->n", xi, K, xi)))
        if not k0 > 0 or quad_min < k0 - 1e-12:
            violations.append(
                ("(TEM2bis)", f"declared coercivity k0 = {k0} exceeds sampled minimum {quad_min:.6g}")
            )

    hs_raw = _require(raw, "heat_source", dict)
    heat_source = None
    hs_kind = hs_raw.get("kind")
    if hs_kind not in ("constant", "saturating"):
        violations.append(("(Cr)", f"unknown heat source family {hs_kind!r}"))
    else:
        hs_params = {k: float(v) for k, v in hs_raw.items() if k != "kind"}
        if not _finite(list(hs_params.values())):
            violations.append(("(Cr)", "heat source parameters must be finite (source must stay bounded)"))
        else:
            heat_source = HeatSource(kind=hs_kind, **hs_params)

    def _parse_exprs(key, count, nvars, required=True):
        vals = raw.get(key)
        if vals is None:
            if required:
                raise ConfigError(f"missing config key {key!r}")
            return None
        if not isinstance(vals, list) or len(vals) != count:
            raise ConfigError(f"{key} must be a list of {count} expressions")
        return [parse_expression(v, nvars) for v in vals]

    try:
        body_force = _parse_exprs("body_force", dim, dim)
        lift = _parse_exprs("lift", dim, dim, required=False)
        wall_velocity = _parse_exprs("wall_velocity", dim - 1, dim - 1)
        friction = parse_expression(_require(raw, "friction_threshold", str), dim - 1)
        boundary_flux = parse_expression(_require(raw, "boundary_flux", str), dim - 1)
    except ExpressionError as exc:
        raise ConfigError(f"bad expression: {exc}") from exc

    try:
        solver = SolverParams(**raw.get("solver", {}))
    except TypeError as exc:
        raise ConfigError(f"bad solver options: {exc}") from exc
    schedule = [int(m) for m in raw.get("schedule", [2**j for j in range(11)])]
    if any(m <= 0 for m in schedule) or any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise ConfigError("schedule must be strictly increasing positive integers")
    seed = int(raw.get("seed", 0))

    # mesh build and quadrature-level data checks
    if dim == 2:
        height_fn = lambda x: height(x)
        omega_arg = tuple(float(v) for v in omega)
    else:
        height_fn = lambda x, y: height(x, y)
        omega_arg = tuple((float(a), float(b)) for a, b in omega)
    mesh = build_channel_mesh(dim, omega_arg, height_fn, resolution)
    ctx = Discretization(mesh, quad_degree=4)

    bottom = ctx.facet_quadratures[TAG_BOTTOM]
    xprime = bottom["qp"][..., : dim - 1]
    k_vals = friction(xprime)
    if not _finite(k_vals) or np.any(k_vals < 0):
        violations.append(("(eqfk)", "friction threshold must be finite and nonnegative on the bottom wall"))
    s_vals = np.stack([s(xprime) for s in wall_velocity], axis=-1)
    if not _finite(s_vals):
        violations.append(("(eqfk)", "wall velocity must be finite on the bottom wall"))
    f_vals = np.stack([f(ctx.qp) for f in body_force], axis=-1)
    if not _finite(f_vals):
        violations.append(("(eqfk)", "body force must be finite on the domain"))
    tb_vals = boundary_flux(xprime)
    if not _finite(tb_vals):
        violations.append(("(thetab)", "boundary heat flux must be integrable (finite) on the bottom wall"))

    if lift is not None:
        violations.extend(_check_lift(ctx, lift, dim))

    if violations:
        raise ValidationError(violations)

    return ProblemConfig(
        raw=raw,
        dimension=dim,
        omega=omega_arg,
        height=height,
        resolution=resolution,
        p=p,
        q=q,
        viscosity=viscosity,
        body_force=body_force,
        lift=lift,
        wall_velocity=wall_velocity,
        friction_threshold=friction,
        conductivity=K,
        k0=k0,
        heat_source=heat_source,
        boundary_flux=boundary_flux,
        solver=solver,
        schedule=schedule,
        seed=seed,
        mesh=mesh,
    )


def _check_lift(ctx, lift, dim):
    """Structure checks of the boundary lift: zero net lateral flux,
    divergence-free (weakly, with exact derivatives), zero on the top
    boundary, tangential on the bottom wall."""
    out = []
    scale = max(1.0, max(float(np.max(np.abs(e(ctx.qp)))) for e in lift))

    lateral = ctx.facet_quadratures[TAG_LATERAL]
    if len(lateral["facet_ids"]):
        g_lat = np.stack([e(lateral["qp"]) for e in lift], axis=-1)
        flux = float(np.sum(lateral["qw"] * np.einsum("fqa,fa->fq", g_lat, lateral["normals"])))
        if abs(flux) > _DATA_TOL * scale:
            out.append(("(sdf)", f"net lateral flux of the lift is {flux:.3e}, not 0"))

    div_vals = sum(lift[a].derivative(a)(ctx.qp) for a in range(dim))
    weak_div = ctx.scalar_load(div_vals)
    if float(np.max(np.abs(weak_div))) > _DATA_TOL * scale:
        out.append(("(eqG)", f"lift is not divergence-free (weak residual {np.max(np.abs(weak_div)):.3e})"))

    top = ctx.facet_quadratures[TAG_TOP]
    g_top = np.stack([e(top["qp"]) for e in lift], axis=-1)
    if float(np.max(np.abs(g_top))) > _DATA_TOL * scale:
        out.append(("(eqG)", "lift does not vanish on the top boundary"))

    bottom = ctx.facet_quadratures[TAG_BOTTOM]
    g_bot_n = lift[dim - 1](bottom["qp"])
    if float(np.max(np.abs(g_bot_n))) > _DATA_TOL * scale:
        out.append(("(eqG)", "lift has a normal component on the bottom wall"))
    return out
