"""Volume-renormalized mass, renormalized Einstein-Hilbert action and their checks.

Everything is evaluated in the aligned coordinate rhat = r + beta, where the
metric and the background share their leading asymptotics. The boundary term
and the volume difference are always combined at the same radius before any
limit is taken: only the combination converges.
"""

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from . import metric as M
from .spectral import panel_quad

QUAD_ATOL = 1e-10
QUAD_RTOL = 1e-13
_ROUNDOFF = 64 * np.finfo(float).eps


@dataclass(frozen=True)
class MassSample:
    R: float
    adm: float
    rv: float
    n: int

    @property
    def combined(self):
        return self.adm + 2.0 * (self.n - 1) * self.rv


@dataclass(frozen=True)
class Extrapolation:
    limit: float
    error: float
    rate: float
    model: str


@dataclass
class MassReport:
    n: int
    reference: str
    beta: float
    samples: list
    m_vr: float
    err_estimate: float
    s_action: float
    s_err: float
    scal_defect_integral: float
    defect_err: float
    extrapolation_model: str
    defect_rate: float
    flags: list = field(default_factory=list)
    defect_samples: list = field(default_factory=list)

    @property
    def divergent(self):
        return "divergent" in self.flags

    def to_json(self):
        out = {
            "n": self.n, "reference": self.reference, "beta": self.beta,
            "samples": [{"R": s.R, "adm": s.adm, "rv": s.rv, "combined": s.combined} for s in self.samples],
            "m_vr": _jsonable(self.m_vr), "err_estimate": _jsonable(self.err_estimate),
            "s_action": _jsonable(self.s_action), "scal_defect_integral": _jsonable(self.scal_defect_integral),
            "extrapolation_model": self.extrapolation_model, "flags": list(self.flags),
        }
        return json.dumps(out, indent=2)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["R", "adm", "rv", "combined"])
            for s in self.samples:
                w.writerow([repr(s.R), repr(s.adm), repr(s.rv), repr(s.combined)])


def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


@dataclass(frozen=True)
class RadialPerturbation:
    """Symmetric two-tensor h = p g_rr dr^2 + q s^2 sigma, given by the relative profiles p and q."""
    p: object
    q: object

    def scaled(self, t):
        return RadialPerturbation(lambda x: t * self.p(x), lambda x: t * self.q(x))


# ============================================================================
# pointwise pieces

def _omega(n):
    return M.sphere_volume(n)


def adm_integrand(g, bg, beta, rhat):
    """Boundary term of the mass at the aligned radii rhat."""
    n = g.n
    loc = M.aligned_fields(g, bg, beta, rhat, 0.0)
    bracket = (loc.coth_bg * (np.expm1(2.0 * loc.alpha) - np.expm1(2.0 * loc.lam))
               - 2.0 * loc.lam1 * np.exp(2.0 * loc.lam))
    return _omega(n) * (n - 1) * np.exp((n - 1) * loc.log_s_bg) * bracket


def adm_boundary_term(g, ref, align, R):
    _check_radius(g, ref, align.beta, R)
    return float(adm_integrand(g, M.reference_metric(ref), align.beta, np.atleast_1d(float(R)))[0])


def _volume_excess(g, bg, beta):
    n = g.n

    def f(rhat):
        loc = M.aligned_fields(g, bg, beta, rhat, 0.0)
        return np.exp((n - 1) * loc.log_s_bg) * np.expm1(loc.alpha + (n - 1) * loc.lam)
    return f


def _density(m):
    def f(r):
        return M.geometry(m, r).dens
    return f


def _defect_density(m):
    def f(r):
        G = M.geometry(m, r)
        return G.defect * G.dens
    return f


def _core_volume(g, bg, beta):
    """Volume difference of the two balls up to the split radius rhat_1."""
    r1h = max(beta, 0.0) + 1.0
    vg, eg = panel_quad(_density(g), 0.0, r1h - beta, atol=1e-14, rtol=QUAD_RTOL)
    vb, eb = panel_quad(_density(bg), 0.0, r1h, atol=1e-14, rtol=QUAD_RTOL)
    return r1h, vg - vb, eg + eb


def renormalized_volume(g, ref, align, R):
    """Volume of the metric ball minus the background ball, both of aligned radius R."""
    _check_radius(g, ref, align.beta, R)
    bg = M.reference_metric(ref)
    r1h, core, _ = _core_volume(g, bg, align.beta)
    tail, _ = panel_quad(_volume_excess(g, bg, align.beta), r1h, float(R), atol=QUAD_ATOL, rtol=QUAD_RTOL)
    return _omega(g.n) * (core + tail)


def scal_defect_integral(g, R_g):
    """int over the coordinate ball r <= R_g of (scal + n(n-1)) dV."""
    val, _ = panel_quad(_defect_density(g), 0.0, float(R_g), atol=QUAD_ATOL, rtol=QUAD_RTOL)
    return _omega(g.n) * val


def _check_radius(g, ref, beta, R):
    bg = M.reference_metric(ref)
    if not (max(beta, 0.0) + 1.0 <= R <= min(g.r_model + beta, bg.r_model)):
        raise M.MetricError(f"radius {R} outside the aligned common domain")


# ============================================================================
# limits

def default_schedule(g, bg, beta, count=24, lo=0.35, hi=0.95):
    top = hi * min(g.r_model + beta, bg.r_model)
    bottom = max(lo * top, max(beta, 0.0) + 1.5)
    return np.geomspace(bottom, top, count)


def extrapolate(R, y, kappa_min=0.05, tail=12):
    """Limit of y(R) under the model y = L + C exp(-kappa R), kappa >= kappa_min."""
    R = np.asarray(R, dtype=float)[-tail:]
    y = np.asarray(y, dtype=float)[-tail:]
    spread = abs(y[-1] - y[-2])
    scale = max(np.max(np.abs(y)), 1e-300)
    if np.max(np.abs(y - y[-1])) <= 1e-13 * scale:
        return Extrapolation(float(y[-1]), float(spread), math.inf, "constant")
    x = R - R[-1]
    d = np.diff(y)
    k0 = kappa_min * 2.0
    ok = (d[:-1] * d[1:] > 0) & (np.abs(d[1:]) > 0)
    if np.any(ok):
        ratios = np.abs(d[1:][ok] / d[:-1][ok])
        steps = np.diff(R)[1:][ok]
        est = -np.log(ratios) / steps
        est = est[np.isfinite(est) & (est > 0)]
        if est.size:
            k0 = max(float(np.median(est)), kappa_min * 1.01)

    def resid(p):
        L, C, k = p
        return (L + C * np.exp(-k * x) - y) / scale

    C0 = (y[0] - y[-1]) / max(np.expm1(k0 * (R[-1] - R[0])), 1e-300)
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            sol = least_squares(resid, [y[-1], C0, k0], bounds=([-np.inf, -np.inf, kappa_min], [np.inf, np.inf, 50.0]),
                                x_scale=[scale, scale, 1.0], xtol=1e-15, ftol=1e-15, gtol=1e-15,
                                max_nfev=2000)
        if not sol.success or not np.all(np.isfinite(sol.x)):
            raise ValueError
        L, C, k = sol.x
        rms = float(np.sqrt(np.mean((sol.fun * scale) ** 2)))
        # the fitted limit must stay within a few spreads of the data
        if abs(L - y[-1]) > 10.0 * np.max(np.abs(y - y[-1])) + 1e-300:
            raise ValueError
        return Extrapolation(float(L), float(max(rms, spread)), float(k), "exponential")
    except ValueError:
        return Extrapolation(float(y[-1]), float(max(spread, np.max(np.abs(y - y[-1])))), math.nan, "last-value")


def volume_renormalized_mass(g, ref, schedule=None, window=(0.6, 0.95), align=None):
    """Mass, action and defect integral of g relative to the background ref."""
    if g.origin != "smooth":
        raise M.MetricError("mass needs a metric with a regular origin")
    bg = M.reference_metric(ref)
    if align is None:
        align = M.align_to_reference(g, ref, window)
    beta = align.beta
    n = g.n
    R = default_schedule(g, bg, beta) if schedule is None else np.asarray(schedule, dtype=float)
    if np.any(np.diff(R) <= 0):
        raise ValueError("R-schedule must be increasing")
    for Rk in (R[0], R[-1]):
        _check_radius(g, ref, beta, Rk)
    om = _omega(n)

    r1h, core, core_err = _core_volume(g, bg, beta)
    excess = _volume_excess(g, bg, beta)
    ddens = _defect_density(g)
    adm = adm_integrand(g, bg, beta, R)
    rv, dint = np.empty_like(R), np.empty_like(R)
    acc_v, prev, err_v = 0.0, r1h, core_err
    acc_d, err_d = panel_quad(ddens, 0.0, R[0] - beta, atol=QUAD_ATOL, rtol=QUAD_RTOL)
    prev_d = R[0]
    for k, Rk in enumerate(R):
        v, e = panel_quad(excess, prev, Rk, atol=QUAD_ATOL, rtol=QUAD_RTOL)
        acc_v, err_v = acc_v + v, err_v + e
        if k > 0:
            v, e = panel_quad(ddens, prev_d - beta, Rk - beta, atol=QUAD_ATOL, rtol=QUAD_RTOL)
            acc_d, err_d = acc_d + v, err_d + e
        prev = prev_d = Rk
        rv[k] = om * (core + acc_v)
        dint[k] = om * acc_d
    samples = [MassSample(float(Rk), float(a), float(v), n) for Rk, a, v in zip(R, adm, rv)]
    combined = np.array([s.combined for s in samples])
    s_seq = dint - combined
    # boundary and volume terms cancel: quadrature error plus round-off on their size
    floor_m = om * 2.0 * (n - 1) * err_v + _ROUNDOFF * (abs(adm[-1]) + 2.0 * (n - 1) * abs(rv[-1]))
    floor_d = om * err_d + _ROUNDOFF * abs(dint[-1])

    flags = list(align.flags)
    rate = align.residual_rate.rate
    k_quad = 2.0 * rate - (n - 1)
    # defect decay decides integrability
    dfit = M.defect_decay(g, window)
    k_lin = dfit.rate - (n - 1)
    kappa_min = float(np.clip(min(k_quad, k_lin), 0.05, 4.0)) if math.isfinite(min(k_quad, k_lin)) else 4.0

    ex_d = extrapolate(R, dint, kappa_min=max(0.05, min(k_lin, 4.0)) if math.isfinite(k_lin) else 4.0)
    ex_s = extrapolate(R, s_seq, kappa_min=0.05)
    if not dfit.sentinel and dfit.rate <= n - 1:
        flags.append("conditionally_convergent")
        grid = np.linspace(1e-3, 0.95 * g.r_model, 2000)
        d = M.geometry(g, grid).defect
        big = np.abs(d) > 1e-14
        signs = np.sign(d[big])
        if signs.size and np.all(signs == signs[0]):
            flags.append("divergent")
            m_vr, m_err = float(signs[0]) * math.inf, math.inf
            return MassReport(n, _ref_label(ref), beta, samples, m_vr, m_err, ex_s.limit, ex_s.error,
                              float(signs[0]) * math.inf, math.inf, "divergent", dfit.rate, flags, list(dint))
    ex_m = extrapolate(R, combined, kappa_min=kappa_min)
    if ex_m.model == "last-value" or ex_d.model == "last-value":
        flags.append("extrapolation_fallback")
    s_val = ex_d.limit - ex_m.limit
    m_err, d_err = ex_m.error + floor_m, ex_d.error + floor_d
    return MassReport(n, _ref_label(ref), beta, samples, ex_m.limit, m_err, s_val,
                      d_err + m_err, ex_d.limit, d_err, ex_m.model, dfit.rate, flags, list(dint))


def _ref_label(ref):
    if isinstance(ref, M.ReferenceModel):
        return f"hyperbolic(n={ref.n}, cone_factor={ref.cone_factor:g})"
    return ref.label or "metric"


def eh_action(g, ref, **kw):
    return volume_renormalized_mass(g, ref, **kw).s_action


def check_additivity(g, g_mid, ref, **kw):
    """|m(g; ref) - m(g; g_mid) - m(g_mid; ref)|."""
    a = volume_renormalized_mass(g, ref, **kw).m_vr
    b = volume_renormalized_mass(g, g_mid, **kw).m_vr
    c = volume_renormalized_mass(g_mid, ref, **kw).m_vr
    return abs(a - b - c)


def mass_identity_2d(g, omega):
    """(m + 2(2 pi - omega), int (scal + 2) dV) for a 2-D metric with a regular origin."""
    if g.n != 2:
        raise M.MetricError("the two-dimensional identity needs n = 2")
    f0 = g.fields(np.zeros(1))
    if abs(float(f0.psi[0] - f0.alpha[0])) > 1e-12:
        raise M.MetricError("the two-dimensional identity needs a regular origin (no cone point)")
    rep = volume_renormalized_mass(g, M.ReferenceModel(2, omega / (2.0 * math.pi)))
    euler = 2.0
    return rep.m_vr + 2.0 * (2.0 * math.pi - omega), rep.scal_defect_integral + 4.0 * math.pi * (2.0 - euler)


# ============================================================================
# first variation

def pairing_S(g, h):
    """Integrand (per unit coordinate radius) of the derivative of the action along h."""
    n = g.n

    def f(r):
        G = M.geometry(g, r)
        x = M.Jet.variable(np.maximum(r, M.R_EVAL_MIN))
        p, q = h.p(x).v, h.q(x).v
        return -((G.E_rad - 0.5 * G.defect) * p + (n - 1) * (G.E_th - 0.5 * G.defect) * q) * G.dens
    return f


def first_variation_S(g, h, ref, t0=1e-3, support=None):
    """(analytic, finite-difference) derivative of the action along h at g.

    The finite difference is a central difference at +-t0 and +-t0/2 combined
    by one Richardson step.
    """
    top = g.r_model if support is None else support
    val, _ = panel_quad(pairing_S(g, h), 0.0, top, atol=1e-13, rtol=1e-13)
    analytic = _omega(g.n) * val

    def S(t):
        return eh_action(M.perturbed(g, h.p, h.q, t), ref)
    d1 = (S(t0) - S(-t0)) / (2.0 * t0)
    d2 = (S(t0 / 2) - S(-t0 / 2)) / t0
    return analytic, (4.0 * d2 - d1) / 3.0
