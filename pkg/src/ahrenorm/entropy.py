"""Renormalized expander entropy: the W functional, its minimizer and its variations."""

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import mass as MS
from . import metric as M
from . import jet as J
from . import profiles as P
from .bvp import NewtonFailure, WeightedGrid, laplacian, newton
from .jet import Jet
from .spectral import ChebGrid, panel_quad


class BoundViolation(RuntimeError):
    pass


@dataclass
class EntropySolution:
    wgrid: WeightedGrid
    v_nodes: np.ndarray
    mu: float
    residual_norm: float
    bound_lo: float
    bound_hi: float
    decay_fit: M.DecayFit
    s_action_used: float
    mass_report: object = None
    uniqueness_gap: float = math.nan
    flags: list = field(default_factory=list)

    @property
    def grid(self):
        return self.wgrid.grid

    @property
    def f_nodes(self):
        return self.wgrid.values(self.v_nodes)

    @property
    def u_nodes(self):
        return np.expm1(-0.5 * self.f_nodes)

    @property
    def f(self):
        return self.wgrid.profile(self.v_nodes)

    def to_json(self):
        d = self.decay_fit
        return json.dumps({
            "r_nodes": self.grid.r.tolist(), "f_nodes": self.f_nodes.tolist(), "u_nodes": self.u_nodes.tolist(),
            "mu": self.mu, "residual": self.residual_norm, "bounds": {"lo": self.bound_lo, "hi": self.bound_hi},
            "decay": {"rate": d.rate if math.isfinite(d.rate) else str(d.rate), "amplitude": d.amplitude,
                      "window": list(d.window), "residual": d.regression_residual},
            "s_action": self.s_action_used, "uniqueness_gap": self.uniqueness_gap, "flags": self.flags,
        }, indent=2)


def G_function(x, n):
    """2(n-1)((log((x+1)^2) - 1)(x+1)^2 + 1), nonnegative with zeros at x = 0 and x = -2."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        two_log = np.where(np.abs(x) < 0.5, 2.0 * np.log1p(np.clip(x, -0.5, 0.5)), np.log((1.0 + x) ** 2))
        out = 2.0 * (n - 1) * ((1.0 + x) ** 2 * two_log - x * (2.0 + x))
    return np.where(x == -1.0, 2.0 * (n - 1), out)


def entropy_decay_rate(n):
    """Decay rate of solutions of the linearized Euler-Lagrange equation at the hyperbolic metric."""
    return 0.5 * ((n - 1) + math.sqrt((n - 1) * (n + 3)))


# ============================================================================
# the functional

def w_functional(g, ref, u, s_action=None, upper=None):
    """S(g) + int [4|du|^2 + d u^2 + 2 d u + G(u)] dV_g for a radial weight u > -1.

    `u` is a profile (callable on jets). The action is computed unless given.
    """
    n = g.n
    if s_action is None:
        s_action = MS.volume_renormalized_mass(g, ref).s_action
    top = g.r_model if upper is None else upper
    if isinstance(u, P.ChebProfile):
        top = min(top, u.grid.L)
    probe = u(Jet.variable(np.linspace(0.0, top, 2001)))
    if np.any(probe.v <= -1.0):
        raise ValueError("the weight must satisfy u > -1")

    def integrand(r):
        G = M.geometry(g, r)
        v = u(Jet.variable(np.maximum(r, M.R_EVAL_MIN)))
        return (4.0 * G.A * v.d ** 2 + G.defect * v.v * (v.v + 2.0) + G_function(v.v, n)) * G.dens
    val, _ = panel_quad(integrand, 0.0, top, atol=1e-13, rtol=1e-13)
    return s_action + M.sphere_volume(n) * val


def _w_on_grid(g, wg, v, G):
    """Integral part of the functional at u = e^(-f/2) - 1 by Clenshaw-Curtis on the grid."""
    f = wg.S * v
    u = np.expm1(-0.5 * f)
    u1 = -0.5 * (u + 1.0) * (wg.D1 @ v)
    integrand = (4.0 * G.A * u1 ** 2 + G.defect * u * (u + 2.0) + G_function(u, g.n)) * G.dens
    return M.sphere_volume(g.n) * wg.grid.integrate(integrand)


# ============================================================================
# the minimizer

def _solve_el(g, wg, v0, tol):
    n = g.n
    Lap, G = laplacian(g, wg)
    d = G.defect
    A = G.A
    S = np.diag(wg.S)

    def system(v):
        f1 = wg.D1 @ v
        res = 2.0 * (Lap @ v) + A * f1 ** 2 - d + 2.0 * (n - 1) * wg.S * v
        jac = 2.0 * Lap + 2.0 * (A * f1)[:, None] * wg.D1 + 2.0 * (n - 1) * S
        return res, jac
    return newton(wg, system, v0, tol=tol), G


def solve_entropy_minimizer(g, ref, nodes=193, r_max=None, tol=1e-10, mass_report=None, two_start=True):
    """Solve the Euler-Lagrange equation with f'(0) = 0, f(r_max) = 0 and evaluate the entropy."""
    n = g.n
    L = min(g.r_model, 30.0) if r_max is None else float(r_max)
    # half the decay rate: the full rate lets v = f cosh^k grow to 1e3+ in the tail, and that
    # round-off reaches f'(0) through the coth term
    wg = WeightedGrid(ChebGrid(L, nodes - 1), 0.5 * min(entropy_decay_rate(n), M.defect_decay(g).rate))
    dense = M.geometry(g, np.linspace(0.0, L, 4001)).defect
    G0 = M.geometry(g, wg.r)
    lo = min(0.0, float(min(dense.min(), G0.defect.min()))) / (2.0 * (n - 1))
    hi = max(0.0, float(max(dense.max(), G0.defect.max()))) / (2.0 * (n - 1))

    out, G = _solve_el(g, wg, np.zeros(wg.size), tol)
    v = out.u
    f = wg.S * v
    flags = []
    gap = math.nan
    if two_start:
        # f = bound_hi on the bulk, tapered like sech^k once that is 1e-3 small
        top = hi if hi > 0 else lo
        start = np.minimum(1.0 / wg.S, 1e3) * top
        try:
            other, _ = _solve_el(g, wg, start, tol)
            gap = float(np.max(np.abs(wg.S * other.u - f)))
        except NewtonFailure:
            flags.append("second_start_failed")
    slack = 1e-10 + 1e-8 * max(abs(lo), abs(hi))
    if np.any(f < lo - slack) or np.any(f > hi + slack):
        raise BoundViolation(f"minimizer leaves the envelope [{lo:.3e}, {hi:.3e}]: "
                             f"range [{f.min():.3e}, {f.max():.3e}]")
    rep = mass_report if mass_report is not None else MS.volume_renormalized_mass(g, ref)
    mu = rep.s_action + _w_on_grid(g, wg, v, G)
    fit = _minimizer_decay(wg, v, G.defect)
    return EntropySolution(wg, v, mu, out.residual, lo, hi, fit, rep.s_action, rep, gap, flags)


def _minimizer_decay(wg, v, d):
    grid = wg.grid
    f = wg.S * v
    big = np.abs(d) >= 1e-6 * max(np.max(np.abs(d)), 1e-300)
    r_d = float(grid.r[big].max()) if np.any(big) else 0.0
    lo, hi = max(r_d, 0.1 * grid.L), 0.8 * grid.L
    if hi - lo < 1.0 or not np.any(f != 0):
        return M.fit_decay_rate((np.linspace(0.3 * grid.L, 0.8 * grid.L, 16), np.zeros(16)))
    rr = np.linspace(lo, hi, 32)
    vals = wg.profile(v)(Jet.variable(rr)).v
    return M.fit_decay_rate((rr, vals), floor=1e-300)


def entropy(g, ref, **kw):
    return solve_entropy_minimizer(g, ref, **kw).mu


# ============================================================================
# variations

def first_variation_entropy(g, h, ref, t0=1e-3, solution=None, support=None):
    """(analytic, finite-difference) derivative of the entropy along h at g."""
    n = g.n
    sol = solve_entropy_minimizer(g, ref, two_start=False) if solution is None else solution
    fp = sol.f
    top = min(g.r_model, sol.grid.L) if support is None else support

    def integrand(r):
        G = M.geometry(g, r)
        F = G.f
        x = Jet.variable(np.maximum(r, M.R_EVAL_MIN))
        fv = fp(Jet.variable(G.rc))
        p, q = h.p(x).v, h.q(x).v
        f_uu = G.A * (fv.dd - F.alpha1 * fv.d)
        f_sph = G.A * G.H * fv.d
        return -((G.E_rad + f_uu) * p + (n - 1) * (G.E_th + f_sph) * q) * np.exp(-fv.v) * G.dens
    val, _ = panel_quad(integrand, 0.0, top, atol=1e-13, rtol=1e-13)
    analytic = M.sphere_volume(n) * val

    def mu(t):
        return entropy(M.perturbed(g, h.p, h.q, t), ref, two_start=False)
    d1 = (mu(t0) - mu(-t0)) / (2.0 * t0)
    d2 = (mu(t0 / 2) - mu(-t0 / 2)) / t0
    return analytic, (4.0 * d2 - d1) / 3.0


@dataclass
class SecondVariationReport:
    v: object
    analytic: float
    finite_diff: float
    aux_solution: np.ndarray
    aux_residual: float
    bound: float
    grid: ChebGrid


def conformal_second_variation(ref, v, nodes=193, r_max=20.0, t0=2e-2, finite_diff=True):
    """Second derivative of the entropy along the conformal direction v at the hyperbolic metric.

    analytic = -(n-1) int (Delta + n)(v - z/2) v dV with (Delta + n - 1) z = Delta v,
    Delta the nonnegative Laplacian.
    """
    if isinstance(ref, M.ReferenceModel) and abs(ref.cone_factor - 1.0) > 0:
        raise M.MetricError("the second variation is taken at the smooth hyperbolic metric")
    n = ref.n
    h = M.RadialMetric(n, r_model=r_max)
    grid = ChebGrid(r_max, nodes - 1)
    wz = WeightedGrid(grid, entropy_decay_rate(n))
    Lap_z, G = laplacian(h, wz)
    # v is used through its exact derivatives: differentiating round-off on the
    # grid would be amplified by the volume growth
    rc = np.maximum(grid.r, M.R_ORIGIN_FLOOR)
    jv = v(Jet.variable(rc))
    vv = v(Jet.variable(grid.r)).v
    lap_v = -(jv.dd + (n - 1) / np.tanh(rc) * jv.d)
    lap_v[0] = -n * jv.dd[0]
    K = Lap_z + (n - 1) * np.diag(wz.S)
    K = K / wz.S[:, None]
    rhs = lap_v / wz.S
    K[0] = grid.D[0]
    rhs[0] = 0.0
    K[-1] = 0.0
    K[-1, -1] = 1.0
    rhs[-1] = 0.0
    zv = np.linalg.solve(K, rhs)
    z = wz.S * zv
    resid = (Lap_z @ zv + (n - 1) * z - lap_v)[1:-1]
    aux_residual = float(np.max(np.abs(resid)))
    om = M.sphere_volume(n)
    dens = G.dens
    y_op = (lap_v + n * vv) - 0.5 * (Lap_z @ zv + n * z)
    analytic = -(n - 1) * om * grid.integrate(y_op * vv * dens)
    v1 = jv.d
    bound = -0.5 * (n - 1) * om * grid.integrate((v1 ** 2 + n * vv ** 2) * dens)
    fd = math.nan
    if finite_diff:
        fd = _second_difference(ref, v, t0)
    return SecondVariationReport(v, analytic, fd, z, aux_residual, bound, grid)


def conformal_perturbation(base, v, t):
    """(1 + t v) base, as lapse and warp exponents."""
    b_alpha = base.alpha

    def half_log(x):
        return 0.5 * J.log1p(t * v(x))

    def alpha(x):
        return half_log(x) if b_alpha is None else b_alpha(x) + half_log(x)

    def psi_tail(x):
        return base.psi_tail(x) + half_log(x)
    return replace(base, alpha=alpha, psi_tail=psi_tail)


def _second_difference(ref, v, t0):
    n = ref.n
    base = M.RadialMetric(n, r_model=30.0)

    def mu(t):
        return entropy(conformal_perturbation(base, v, t), ref, two_start=False)
    m0 = mu(0.0)

    def dd(t):
        return (mu(t) - 2.0 * m0 + mu(-t)) / (t * t)
    return (4.0 * dd(t0 / 2) - dd(t0)) / 3.0
